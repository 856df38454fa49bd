//! Information-limited solver: iterates the free-energy backup
//! `B[F](x) = (1/β) log Σ_u ρ(u|x) exp(β Q_F(x,u))` to its fixed point and
//! extracts the softmax policy `π*(u|x) = ρ(u|x) exp(β Q*_F(x,u)) / Z*(x)`.

use crate::error::{Error, Result};
use crate::exact::evaluate_policy;
use crate::mdp::{FiniteMdp, QTable, StochasticPolicy, ValueTable};
use crate::report::SolveReport;
use crate::scalar::{sup_distance, Scalar};

/// Default sup-norm tolerance of the fixed-point iteration.
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Resource parameter β: positive and finite. Unbounded resources are
/// expressed by a large value (100 reproduces the rational limit on the
/// grid-world scale) or by calling the exact solver directly.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BetaParam<T>(T);

impl<T: Scalar> BetaParam<T> {
    pub fn new(beta: T) -> Result<Self> {
        if beta > T::zero() && beta.is_finite() {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidBeta(beta.as_f64()))
        }
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct FreeEnergySolution<T> {
    /// `F*(x;β) = log_z(x) / β`.
    pub f: ValueTable<T>,
    pub q_f: QTable<T>,
    pub log_z: Vec<T>,
    pub policy: StochasticPolicy<T>,
    pub report: SolveReport<T>,
}

/// `(1/β) log Σ_i w_i exp(β q_i)` over entries with `w_i > 0`.
///
/// Uses a max shift when the exponents spread by more than one unit and a
/// weighted-mean shift with `ln_1p`/`exp_m1` otherwise, which keeps full
/// precision as β → 0 where the plain form loses `ε/β`.
pub(crate) fn soft_value<T: Scalar>(
    terms: impl Iterator<Item = (T, T)> + Clone,
    beta: T,
) -> Option<T> {
    let mut mass = T::zero();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    let mut weighted = T::zero();
    for (w, q) in terms.clone() {
        if w > T::zero() {
            mass = mass + w;
            lo = lo.min(q);
            hi = hi.max(q);
            weighted = weighted + w * q;
        }
    }
    if mass <= T::zero() {
        return None;
    }
    if beta * (hi - lo) <= T::one() {
        let mean = weighted / mass;
        let excess: T = terms
            .filter(|(w, _)| *w > T::zero())
            .map(|(w, q)| w * (beta * (q - mean)).exp_m1())
            .sum();
        Some(mean + (mass.ln() + (excess / mass).ln_1p()) / beta)
    } else {
        let total: T = terms
            .filter(|(w, _)| *w > T::zero())
            .map(|(w, q)| w * (beta * (q - hi)).exp())
            .sum();
        Some(hi + total.ln() / beta)
    }
}

fn check_prior<T: Scalar>(mdp: &FiniteMdp<T>, prior: &StochasticPolicy<T>) -> Result<()> {
    prior.check_for(mdp, false)?;
    for x in 0..mdp.n_states() {
        if !mdp.admissible(x).iter().any(|&u| prior[(x, u)] > T::zero()) {
            return Err(Error::SupportCollapse { state: x });
        }
    }
    Ok(())
}

fn backup_into<T: Scalar>(
    mdp: &FiniteMdp<T>,
    prior: &StochasticPolicy<T>,
    beta: T,
    f: &[T],
    out: &mut [T],
) -> Result<()> {
    for (x, slot) in out.iter_mut().enumerate() {
        let terms = mdp
            .admissible(x)
            .iter()
            .map(|&u| (prior[(x, u)], mdp.backup(x, u, f)));
        let value = soft_value(terms, beta).ok_or(Error::SupportCollapse { state: x })?;
        if !value.is_finite() {
            return Err(Error::NumericOverflow { state: x });
        }
        *slot = value;
    }
    Ok(())
}

/// One application of the free-energy backup operator.
pub fn fe_backup<T: Scalar>(
    mdp: &FiniteMdp<T>,
    prior: &StochasticPolicy<T>,
    beta: BetaParam<T>,
    f: &ValueTable<T>,
) -> Result<ValueTable<T>> {
    let mut out = vec![T::zero(); mdp.n_states()];
    backup_into(mdp, prior, beta.get(), f.as_slice(), &mut out)?;
    Ok(ValueTable(out))
}

/// Softmax policy of the free energy `f` under `prior`.
pub fn policy_from_f<T: Scalar>(
    mdp: &FiniteMdp<T>,
    prior: &StochasticPolicy<T>,
    beta: BetaParam<T>,
    f: &ValueTable<T>,
) -> Result<StochasticPolicy<T>> {
    let q = crate::exact::q_from_v(mdp, f);
    softmax_policy(mdp, prior, beta.get(), &q)
}

pub(crate) fn softmax_policy<T: Scalar>(
    mdp: &FiniteMdp<T>,
    prior: &StochasticPolicy<T>,
    beta: T,
    q: &QTable<T>,
) -> Result<StochasticPolicy<T>> {
    let mut pi = StochasticPolicy::zeros(mdp.n_states(), mdp.n_actions());
    for x in 0..mdp.n_states() {
        let adm = mdp.admissible(x);
        let hi = adm
            .iter()
            .filter(|&&u| prior[(x, u)] > T::zero())
            .map(|&u| q[(x, u)])
            .fold(T::neg_infinity(), T::max);
        if !hi.is_finite() {
            return Err(if hi == T::neg_infinity() {
                Error::SupportCollapse { state: x }
            } else {
                Error::NumericOverflow { state: x }
            });
        }
        let mut total = T::zero();
        for &u in adm {
            let w = prior[(x, u)];
            if w > T::zero() {
                let e = w * (beta * (q[(x, u)] - hi)).exp();
                pi[(x, u)] = e;
                total = total + e;
            }
        }
        if total.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) || !total.is_finite()
        {
            return Err(Error::NumericOverflow { state: x });
        }
        for &u in adm {
            pi[(x, u)] = pi[(x, u)] / total;
        }
    }
    Ok(pi)
}

/// Fixed point `F* = B[F*]` from `F ≡ 0`, with the optimal softmax policy.
pub fn fe_solve<T: Scalar>(
    mdp: &FiniteMdp<T>,
    prior: &StochasticPolicy<T>,
    beta: BetaParam<T>,
    tol: T,
    max_iters: usize,
) -> Result<FreeEnergySolution<T>> {
    fe_solve_from(
        mdp,
        prior,
        beta,
        tol,
        max_iters,
        ValueTable::zeros(mdp.n_states()),
    )
}

/// As [`fe_solve`], starting the iteration at `init`.
pub fn fe_solve_from<T: Scalar>(
    mdp: &FiniteMdp<T>,
    prior: &StochasticPolicy<T>,
    beta: BetaParam<T>,
    tol: T,
    max_iters: usize,
    init: ValueTable<T>,
) -> Result<FreeEnergySolution<T>> {
    check_prior(mdp, prior)?;
    if init.len() != mdp.n_states() {
        return Err(Error::Invalid(
            "initial free energy has the wrong length".into(),
        ));
    }
    let b = beta.get();
    let mut f = init.0;
    let mut next = vec![T::zero(); f.len()];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        backup_into(mdp, prior, b, &f, &mut next)?;
        let residual = sup_distance(&next, &f);
        std::mem::swap(&mut f, &mut next);
        history.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: max_iters,
            residual: history.last().map_or(f64::INFINITY, |r| r.as_f64()),
        });
    }
    let q_f = crate::exact::q_from_v(mdp, &ValueTable(f));
    let mut f_star = vec![T::zero(); mdp.n_states()];
    for (x, slot) in f_star.iter_mut().enumerate() {
        let terms = mdp
            .admissible(x)
            .iter()
            .map(|&u| (prior[(x, u)], q_f[(x, u)]));
        *slot = soft_value(terms, b).ok_or(Error::SupportCollapse { state: x })?;
    }
    let log_z = f_star.iter().map(|&v| v * b).collect();
    let policy = softmax_policy(mdp, prior, b, &q_f)?;
    Ok(FreeEnergySolution {
        f: ValueTable(f_star),
        q_f,
        log_z,
        policy,
        report: SolveReport::from_history(history, true),
    })
}

/// `F^π = V^π − D^π / β` for an arbitrary feasible policy.
pub fn free_energy_of_policy<T: Scalar>(
    mdp: &FiniteMdp<T>,
    pi: &StochasticPolicy<T>,
    prior: &StochasticPolicy<T>,
    beta: BetaParam<T>,
) -> Result<ValueTable<T>> {
    let (v, d) = evaluate_policy(mdp, pi, prior)?;
    let b = beta.get();
    Ok(ValueTable(
        v.0.iter().zip(&d.0).map(|(&v, &d)| v - d / b).collect(),
    ))
}
