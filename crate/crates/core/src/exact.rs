//! Perfectly rational baseline: value iteration, greedy extraction, and
//! analytic / Monte Carlo policy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::mdp::{FiniteMdp, QTable, StochasticPolicy, ValueTable};
use crate::report::SolveReport;
use crate::scalar::{sup_distance, Scalar};

/// Above this many states policy evaluation iterates instead of factorizing.
pub const DIRECT_SOLVE_MAX_STATES: usize = 2000;
/// Residual target of the iterative policy evaluation path.
pub const EVALUATION_TOL: f64 = 1e-10;
/// Rollouts drawn from one random stream.
const ROLLOUT_BATCH: usize = 4096;
/// Number of sample trajectories returned by [`simulate_rollouts`].
pub const SAMPLE_TRAJECTORIES: usize = 8;

/// Bellman optimality iteration from `V ≡ 0` until the sup-norm residual is `≤ tol`.
pub fn value_iteration<T: Scalar>(
    mdp: &FiniteMdp<T>,
    tol: T,
    max_iters: usize,
) -> Result<(ValueTable<T>, SolveReport<T>)> {
    let n = mdp.n_states();
    let mut v = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut history = Vec::new();
    for _ in 0..max_iters {
        for (x, slot) in next.iter_mut().enumerate() {
            *slot = mdp
                .admissible(x)
                .iter()
                .map(|&u| mdp.backup(x, u, &v))
                .fold(T::neg_infinity(), T::max);
        }
        let residual = sup_distance(&next, &v);
        std::mem::swap(&mut v, &mut next);
        history.push(residual);
        if residual <= tol {
            return Ok((ValueTable(v), SolveReport::from_history(history, true)));
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: history.last().map_or(f64::INFINITY, |r| r.as_f64()),
    })
}

/// `Q(x,u) = Σ_{x'} P(x'|x,u)[R(x',x,u) + γ v(x')]` over admissible pairs.
pub fn q_from_v<T: Scalar>(mdp: &FiniteMdp<T>, v: &ValueTable<T>) -> QTable<T> {
    let mut q = QTable::undefined(mdp.n_states(), mdp.n_actions());
    for x in 0..mdp.n_states() {
        for &u in mdp.admissible(x) {
            q[(x, u)] = mdp.backup(x, u, v.as_slice());
        }
    }
    q
}

/// Deterministic policy on `argmax_u Q(x,u)`; ties go to the lowest action index.
pub fn greedy_policy<T: Scalar>(mdp: &FiniteMdp<T>, q: &QTable<T>) -> StochasticPolicy<T> {
    let mut pi = StochasticPolicy::zeros(mdp.n_states(), mdp.n_actions());
    for x in 0..mdp.n_states() {
        let mut best: Option<usize> = None;
        for &u in mdp.admissible(x) {
            match best {
                Some(b) if q[(x, u)] <= q[(x, b)] => {}
                _ => best = Some(u),
            }
        }
        if let Some(u) = best {
            pi[(x, u)] = T::one();
        }
    }
    pi
}

/// Value `V^π` and discounted information cost `D^π` of `pi` relative to `prior`.
///
/// Both solve `(I − γ P_π) y = c` with `c` the expected reward and the
/// per-state KL divergence respectively.
pub fn evaluate_policy<T: Scalar>(
    mdp: &FiniteMdp<T>,
    pi: &StochasticPolicy<T>,
    prior: &StochasticPolicy<T>,
) -> Result<(ValueTable<T>, ValueTable<T>)> {
    let n = mdp.n_states();
    if pi.n_states() != n
        || prior.n_states() != n
        || pi.n_actions() != mdp.n_actions()
        || prior.n_actions() != mdp.n_actions()
    {
        return Err(Error::Invalid("policy shape does not match the MDP".into()));
    }
    let gamma = mdp.discount();
    let mut p_pi = vec![T::zero(); n * n];
    let mut reward = vec![T::zero(); n];
    let mut info = vec![T::zero(); n];
    for x in 0..n {
        let row = pi.row(x);
        if let Some(u) =
            (0..mdp.n_actions()).find(|&u| row[u] != T::zero() && !mdp.is_admissible(x, u))
        {
            return Err(Error::Invalid(format!(
                "state {x}: policy puts mass on inadmissible action {u}"
            )));
        }
        for &u in mdp.admissible(x) {
            let w = row[u];
            if w == T::zero() {
                continue;
            }
            let rho = prior[(x, u)];
            if rho <= T::zero() {
                return Err(Error::AbsoluteContinuity {
                    state: Some(x),
                    action: u,
                });
            }
            reward[x] = reward[x] + w * mdp.expected_reward(x, u);
            info[x] = info[x] + w * (w / rho).ln();
            for (y, &p) in mdp.transition_row(x, u).iter().enumerate() {
                p_pi[x * n + y] = p_pi[x * n + y] + w * p;
            }
        }
    }
    if n <= DIRECT_SOLVE_MAX_STATES {
        let mut a = vec![T::zero(); n * n];
        for x in 0..n {
            for y in 0..n {
                let id = if x == y { T::one() } else { T::zero() };
                a[x * n + y] = id - gamma * p_pi[x * n + y];
            }
        }
        let mut rhs = vec![reward, info];
        solve_dense(n, a, &mut rhs)?;
        let info = rhs.pop().expect("two right-hand sides");
        let value = rhs.pop().expect("two right-hand sides");
        Ok((ValueTable(value), ValueTable(info)))
    } else {
        let value = iterate_linear(n, &p_pi, &reward, gamma)?;
        let info = iterate_linear(n, &p_pi, &info, gamma)?;
        Ok((ValueTable(value), ValueTable(info)))
    }
}

fn iterate_linear<T: Scalar>(n: usize, p_pi: &[T], c: &[T], gamma: T) -> Result<Vec<T>> {
    let tol = T::lit(EVALUATION_TOL);
    let mut y = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let max_iters = 1_000_000;
    let mut residual = T::infinity();
    for _ in 0..max_iters {
        for x in 0..n {
            let future: T = p_pi[x * n..(x + 1) * n]
                .iter()
                .zip(&y)
                .map(|(&p, &v)| p * v)
                .sum();
            next[x] = c[x] + gamma * future;
        }
        residual = sup_distance(&next, &y);
        std::mem::swap(&mut y, &mut next);
        if residual <= tol {
            return Ok(y);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: residual.as_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<T> {
    pub state: usize,
    pub action: usize,
    pub next: usize,
    pub reward: T,
}

/// Sampled path; each step's action is admissible and its transition has positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub start: usize,
    pub steps: Vec<Step<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn discounted_return(&self, gamma: T) -> T {
        let mut discount = T::one();
        let mut total = T::zero();
        for s in &self.steps {
            total = total + discount * s.reward;
            discount = discount * gamma;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSummary<T> {
    pub mean: T,
    pub std_error: T,
    pub n_rollouts: usize,
    /// The first few sampled trajectories, in rollout order.
    pub samples: Vec<Trajectory<T>>,
}

/// Running mean / sum of squared deviations (Welford), mergeable across batches.
#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Self = Self {
        count: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0.0 {
            return other;
        }
        if other.count == 0.0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

fn sample_index<T: Scalar>(weights: impl Iterator<Item = (usize, T)>, draw: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights {
        let w = w.as_f64();
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if draw < acc {
            return Some(i);
        }
    }
    last
}

/// Monte Carlo estimate of `V^π(start)` over `n_rollouts` paths truncated at `horizon`.
///
/// Rollouts are drawn in fixed-size batches; batch `b` uses stream `b` of a
/// ChaCha generator seeded with `seed`, so results do not depend on thread count.
/// A path stops early once it enters a terminal state (all later rewards are zero).
pub fn simulate_rollouts<T: Scalar>(
    mdp: &FiniteMdp<T>,
    pi: &StochasticPolicy<T>,
    start: usize,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<RolloutSummary<T>> {
    if start >= mdp.n_states() {
        return Err(Error::Invalid(format!("start state {start} out of range")));
    }
    pi.check_for(mdp, true)?;
    let gamma = mdp.discount().as_f64();
    let n_batches = n_rollouts.div_ceil(ROLLOUT_BATCH);
    let batches: Vec<(Moments, Vec<Trajectory<T>>)> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let first = b * ROLLOUT_BATCH;
            let count = ROLLOUT_BATCH.min(n_rollouts - first);
            let mut moments = Moments::EMPTY;
            let mut samples = Vec::new();
            for i in 0..count {
                let keep = first + i < SAMPLE_TRAJECTORIES;
                let mut steps = Vec::new();
                let mut x = start;
                let mut discount = 1.0;
                let mut total = 0.0;
                for _ in 0..horizon {
                    if mdp.is_terminal(x) {
                        break;
                    }
                    let row = pi.row(x);
                    let u = sample_index(
                        mdp.admissible(x).iter().map(|&u| (u, row[u])),
                        rng.gen::<f64>(),
                    )
                    .expect("validated policy has mass on U(x)");
                    let next = sample_index(
                        mdp.transition_row(x, u).iter().copied().enumerate(),
                        rng.gen::<f64>(),
                    )
                    .expect("validated transition row");
                    let reward = mdp.r(x, u, next);
                    total += discount * reward.as_f64();
                    discount *= gamma;
                    if keep {
                        steps.push(Step {
                            state: x,
                            action: u,
                            next,
                            reward,
                        });
                    }
                    x = next;
                }
                moments.push(total);
                if keep {
                    samples.push(Trajectory { start, steps });
                }
            }
            (moments, samples)
        })
        .collect();
    let mut moments = Moments::EMPTY;
    let mut samples = Vec::new();
    for (m, s) in batches {
        moments = moments.merge(m);
        samples.extend(s);
    }
    let std_error = if moments.count > 1.0 {
        (moments.m2 / (moments.count - 1.0) / moments.count).sqrt()
    } else {
        0.0
    };
    Ok(RolloutSummary {
        mean: T::lit(moments.mean),
        std_error: T::lit(std_error),
        n_rollouts,
        samples,
    })
}
