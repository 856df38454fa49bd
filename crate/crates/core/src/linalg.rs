use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `A X = B` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`; each entry of `rhs` is one right-hand side.
pub(crate) fn solve_dense<T: Scalar>(n: usize, mut a: Vec<T>, rhs: &mut [Vec<T>]) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        let pv = a[pivot * n + col];
        if pv.abs() <= T::epsilon() || !pv.is_finite() {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            for b in rhs.iter_mut() {
                b.swap(pivot, col);
            }
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / pv;
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                a[row * n + k] = a[row * n + k] - factor * a[col * n + k];
            }
            for b in rhs.iter_mut() {
                b[row] = b[row] - factor * b[col];
            }
        }
    }
    for b in rhs.iter_mut() {
        for row in (0..n).rev() {
            let tail: T = (row + 1..n).map(|k| a[row * n + k] * b[k]).sum();
            b[row] = (b[row] - tail) / a[row * n + row];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_with_pivoting() {
        // [0 1; 2 1] x = [1; 4] -> x = [1.5, 1]
        let mut rhs = vec![vec![1.0, 4.0]];
        solve_dense(2, vec![0.0, 1.0, 2.0, 1.0], &mut rhs).unwrap();
        assert!((rhs[0][0] - 1.5f64).abs() < 1e-15);
        assert!((rhs[0][1] - 1.0f64).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut rhs = vec![vec![1.0, 1.0]];
        assert!(matches!(
            solve_dense(2, vec![1.0, 1.0, 1.0, 1.0f64], &mut rhs),
            Err(Error::Singular)
        ));
    }
}
