//! Finite MDP data model and the policy/value containers shared by every solver.
//!
//! Tables are dense and indexed `(state, action, next_state)`. Entries for
//! actions outside a state's admissible set are never read by the solvers;
//! [`validate_mdp`] flags any probability mass stored there.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Label of the synthetic self-loop action carried by absorbing states.
pub const NOOP_LABEL: &str = "NOOP";

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp<T> {
    state_labels: Vec<String>,
    action_labels: Vec<String>,
    admissible: Vec<Vec<usize>>,
    transition: Vec<T>,
    reward: Vec<T>,
    expected_reward: Vec<T>,
    discount: T,
    terminal: Vec<bool>,
}

impl<T: Scalar> FiniteMdp<T> {
    /// Assembles an MDP from raw tables. Only shapes and index ranges are
    /// checked here; semantic invariants are reported by [`validate_mdp`].
    pub fn from_parts(
        state_labels: Vec<String>,
        action_labels: Vec<String>,
        admissible: Vec<Vec<usize>>,
        transition: Vec<T>,
        reward: Vec<T>,
        discount: T,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let n = state_labels.len();
        let a = action_labels.len();
        if n == 0 || a == 0 {
            return Err(Error::Invalid(
                "MDP needs at least one state and one action".into(),
            ));
        }
        if admissible.len() != n || terminal.len() != n {
            return Err(Error::Invalid(format!(
                "expected {n} admissible sets and terminal flags, got {} and {}",
                admissible.len(),
                terminal.len()
            )));
        }
        if transition.len() != n * a * n || reward.len() != n * a * n {
            return Err(Error::Invalid(format!(
                "transition/reward tables must have {} entries",
                n * a * n
            )));
        }
        let mut admissible = admissible;
        for (x, set) in admissible.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&u) = set.iter().find(|&&u| u >= a) {
                return Err(Error::Invalid(format!(
                    "state {x}: action index {u} out of range"
                )));
            }
        }
        let expected_reward = (0..n * a)
            .map(|xu| {
                let row = xu * n..(xu + 1) * n;
                transition[row.clone()]
                    .iter()
                    .zip(&reward[row])
                    .map(|(&p, &r)| if p == T::zero() { T::zero() } else { p * r })
                    .sum()
            })
            .collect();
        Ok(Self {
            state_labels,
            action_labels,
            admissible,
            transition,
            reward,
            expected_reward,
            discount,
            terminal,
        })
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn action_labels(&self) -> &[String] {
        &self.action_labels
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|s| s == label)
    }

    pub fn action_index(&self, label: &str) -> Option<usize> {
        self.action_labels.iter().position(|s| s == label)
    }

    /// Admissible action indices `U(x)`, sorted ascending.
    #[inline]
    pub fn admissible(&self, x: usize) -> &[usize] {
        &self.admissible[x]
    }

    pub fn is_admissible(&self, x: usize, u: usize) -> bool {
        self.admissible[x].binary_search(&u).is_ok()
    }

    #[inline]
    pub fn discount(&self) -> T {
        self.discount
    }

    #[inline]
    pub fn is_terminal(&self, x: usize) -> bool {
        self.terminal[x]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    /// `P(·|x,u)` as a slice over next states.
    #[inline]
    pub fn transition_row(&self, x: usize, u: usize) -> &[T] {
        let n = self.n_states();
        let start = (x * self.n_actions() + u) * n;
        &self.transition[start..start + n]
    }

    /// `R(·,x,u)` as a slice over next states.
    #[inline]
    pub fn reward_row(&self, x: usize, u: usize) -> &[T] {
        let n = self.n_states();
        let start = (x * self.n_actions() + u) * n;
        &self.reward[start..start + n]
    }

    #[inline]
    pub fn p(&self, x: usize, u: usize, next: usize) -> T {
        self.transition_row(x, u)[next]
    }

    #[inline]
    pub fn r(&self, x: usize, u: usize, next: usize) -> T {
        self.reward_row(x, u)[next]
    }

    /// `Σ_{x'} P(x'|x,u) R(x',x,u)`.
    #[inline]
    pub fn expected_reward(&self, x: usize, u: usize) -> T {
        self.expected_reward[x * self.n_actions() + u]
    }

    /// `Σ_{x'} P(x'|x,u) [R(x',x,u) + γ v(x')]`.
    #[inline]
    pub fn backup(&self, x: usize, u: usize, v: &[T]) -> T {
        let future: T = self
            .transition_row(x, u)
            .iter()
            .zip(v)
            .filter(|(&p, _)| p != T::zero())
            .map(|(&p, &vy)| p * vy)
            .sum();
        self.expected_reward(x, u) + self.discount * future
    }

    /// Largest absolute reward on any admissible transition with positive probability.
    pub fn max_abs_reward(&self) -> T {
        let mut best = T::zero();
        for x in 0..self.n_states() {
            for &u in self.admissible(x) {
                for (&p, &r) in self.transition_row(x, u).iter().zip(self.reward_row(x, u)) {
                    if p > T::zero() {
                        best = best.max(r.abs());
                    }
                }
            }
        }
        best
    }
}

/// Incremental construction of a [`FiniteMdp`] with zero-initialized tables.
#[derive(Debug, Clone)]
pub struct MdpBuilder<T> {
    state_labels: Vec<String>,
    action_labels: Vec<String>,
    admissible: Vec<Vec<usize>>,
    transition: Vec<T>,
    reward: Vec<T>,
    discount: T,
    terminal: Vec<bool>,
}

impl<T: Scalar> MdpBuilder<T> {
    pub fn new(state_labels: Vec<String>, action_labels: Vec<String>, discount: T) -> Self {
        let n = state_labels.len();
        let a = action_labels.len();
        Self {
            state_labels,
            action_labels,
            admissible: vec![Vec::new(); n],
            transition: vec![T::zero(); n * a * n],
            reward: vec![T::zero(); n * a * n],
            discount,
            terminal: vec![false; n],
        }
    }

    /// Numbered states `"0".."n-1"` and actions `"a0".."a{k-1}"`.
    pub fn numbered(n_states: usize, n_actions: usize, discount: T) -> Self {
        Self::new(
            (0..n_states).map(|x| x.to_string()).collect(),
            (0..n_actions).map(|u| format!("a{u}")).collect(),
            discount,
        )
    }

    fn offset(&self, x: usize, u: usize, next: usize) -> usize {
        let n = self.state_labels.len();
        (x * self.action_labels.len() + u) * n + next
    }

    pub fn admit(&mut self, x: usize, u: usize) -> &mut Self {
        if !self.admissible[x].contains(&u) {
            self.admissible[x].push(u);
        }
        self
    }

    /// Adds `p` to `P(next|x,u)` and marks `u` admissible at `x`.
    pub fn add_transition(&mut self, x: usize, u: usize, next: usize, p: T) -> &mut Self {
        self.admit(x, u);
        let i = self.offset(x, u, next);
        self.transition[i] = self.transition[i] + p;
        self
    }

    pub fn set_transition(&mut self, x: usize, u: usize, next: usize, p: T) -> &mut Self {
        let i = self.offset(x, u, next);
        self.transition[i] = p;
        self
    }

    pub fn set_reward(&mut self, x: usize, u: usize, next: usize, r: T) -> &mut Self {
        let i = self.offset(x, u, next);
        self.reward[i] = r;
        self
    }

    /// Makes `x` absorbing through action `noop`: self-loop with probability 1, reward 0.
    pub fn absorbing(&mut self, x: usize, noop: usize) -> &mut Self {
        self.terminal[x] = true;
        self.admissible[x] = vec![noop];
        self.add_transition(x, noop, x, T::one());
        self
    }

    pub fn build(self) -> Result<FiniteMdp<T>> {
        FiniteMdp::from_parts(
            self.state_labels,
            self.action_labels,
            self.admissible,
            self.transition,
            self.reward,
            self.discount,
            self.terminal,
        )
    }
}

/// A single broken invariant found by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyAdmissible {
        state: usize,
    },
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        p: f64,
    },
    InadmissibleMass {
        state: usize,
        action: usize,
        mass: f64,
    },
    NonFinite {
        state: usize,
        action: usize,
        next: usize,
    },
    Discount {
        gamma: f64,
    },
    TerminalNotAbsorbing {
        state: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::EmptyAdmissible { state } => {
                write!(f, "state {state}: admissible action set is empty")
            }
            Violation::RowSum { state, action, sum } => {
                write!(
                    f,
                    "state {state}, action {action}: transition row sums to {sum}"
                )
            }
            Violation::NegativeProbability {
                state,
                action,
                next,
                p,
            } => write!(
                f,
                "state {state}, action {action}: negative probability {p} to state {next}"
            ),
            Violation::InadmissibleMass {
                state,
                action,
                mass,
            } => write!(
                f,
                "state {state}, action {action}: inadmissible action carries transition mass {mass}"
            ),
            Violation::NonFinite {
                state,
                action,
                next,
            } => write!(
                f,
                "state {state}, action {action}, next {next}: non-finite probability or reward"
            ),
            Violation::Discount { gamma } => {
                write!(f, "discount factor {gamma} outside [0, 1)")
            }
            Violation::TerminalNotAbsorbing { state } => write!(
                f,
                "terminal state {state} is not a single zero-reward self-loop"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of `mdp`; an empty report means the MDP is usable.
pub fn validate_mdp<T: Scalar>(mdp: &FiniteMdp<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let tol = T::prob_tol();
    let gamma = mdp.discount();
    if !(gamma >= T::zero() && gamma < T::one()) {
        violations.push(Violation::Discount {
            gamma: gamma.as_f64(),
        });
    }
    for x in 0..mdp.n_states() {
        if mdp.admissible(x).is_empty() {
            violations.push(Violation::EmptyAdmissible { state: x });
        }
        for u in 0..mdp.n_actions() {
            let row = mdp.transition_row(x, u);
            let rewards = mdp.reward_row(x, u);
            if mdp.is_admissible(x, u) {
                let mut sum = T::zero();
                for (next, (&p, &r)) in row.iter().zip(rewards).enumerate() {
                    if !p.is_finite() || !r.is_finite() {
                        violations.push(Violation::NonFinite {
                            state: x,
                            action: u,
                            next,
                        });
                    } else if p < T::zero() {
                        violations.push(Violation::NegativeProbability {
                            state: x,
                            action: u,
                            next,
                            p: p.as_f64(),
                        });
                    }
                    sum = sum + p;
                }
                if (sum - T::one()).abs() > tol || !sum.is_finite() {
                    violations.push(Violation::RowSum {
                        state: x,
                        action: u,
                        sum: sum.as_f64(),
                    });
                }
            } else {
                let mass: T = row.iter().map(|p| p.abs()).sum();
                if mass != T::zero() {
                    violations.push(Violation::InadmissibleMass {
                        state: x,
                        action: u,
                        mass: mass.as_f64(),
                    });
                }
            }
        }
        if mdp.is_terminal(x) {
            let ok = match mdp.admissible(x) {
                [u] => {
                    (mdp.p(x, *u, x) - T::one()).abs() <= tol
                        && mdp.reward_row(x, *u)[x] == T::zero()
                }
                _ => false,
            };
            if !ok {
                violations.push(Violation::TerminalNotAbsorbing { state: x });
            }
        }
    }
    ValidationReport { violations }
}

/// Conditional action distribution, one row per state over the full action alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy<T> {
    n_states: usize,
    n_actions: usize,
    probs: Vec<T>,
}

impl<T: Scalar> StochasticPolicy<T> {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![T::zero(); n_states * n_actions],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::Invalid("policy rows have unequal lengths".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    /// Repeats one action distribution at every state.
    pub fn broadcast(n_states: usize, row: &[T]) -> Self {
        let probs = (0..n_states).flat_map(|_| row.iter().copied()).collect();
        Self {
            n_states,
            n_actions: row.len(),
            probs,
        }
    }

    /// Probability 1 on `actions[x]` at every state `x`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut pi = Self::zeros(actions.len(), n_actions);
        for (x, &u) in actions.iter().enumerate() {
            pi[(x, u)] = T::one();
        }
        pi
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[T] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, x: usize) -> &mut [T] {
        &mut self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.probs.chunks(self.n_actions.max(1))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    /// Most probable action at `x`; ties go to the lowest index.
    pub fn mode(&self, x: usize) -> usize {
        let row = self.row(x);
        (1..row.len()).fold(0, |best, u| if row[u] > row[best] { u } else { best })
    }

    /// Largest total-variation distance between corresponding rows.
    pub fn max_total_variation(&self, other: &Self) -> T {
        (0..self.n_states)
            .map(|x| {
                let tv: T = self
                    .row(x)
                    .iter()
                    .zip(other.row(x))
                    .map(|(&a, &b)| (a - b).abs())
                    .sum();
                tv * T::lit(0.5)
            })
            .fold(T::zero(), T::max)
    }

    /// Sup-norm distance over all entries.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        crate::scalar::sup_distance(&self.probs, &other.probs)
    }

    /// Checks shape against `mdp`, row sums, and (when `strict_support`) exact
    /// zeros outside the admissible sets.
    pub fn check_for(&self, mdp: &FiniteMdp<T>, strict_support: bool) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::Invalid(format!(
                "policy is {}x{}, MDP has {} states and {} actions",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        let tol = T::prob_tol();
        for x in 0..self.n_states {
            let row = self.row(x);
            if let Some(u) = row.iter().position(|p| !p.is_finite() || *p < T::zero()) {
                return Err(Error::Invalid(format!(
                    "state {x}, action {u}: invalid probability"
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::Invalid(format!(
                    "state {x}: probabilities sum to {sum}"
                )));
            }
            if strict_support {
                if let Some(u) =
                    (0..self.n_actions).find(|&u| row[u] != T::zero() && !mdp.is_admissible(x, u))
                {
                    return Err(Error::Invalid(format!(
                        "state {x}: mass on inadmissible action {u}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for StochasticPolicy<T> {
    type Output = T;
    #[inline]
    fn index(&self, (x, u): (usize, usize)) -> &T {
        &self.probs[x * self.n_actions + u]
    }
}

impl<T> IndexMut<(usize, usize)> for StochasticPolicy<T> {
    #[inline]
    fn index_mut(&mut self, (x, u): (usize, usize)) -> &mut T {
        &mut self.probs[x * self.n_actions + u]
    }
}

/// One value per state (V, F or D).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<T>(pub Vec<T>);

impl<T: Scalar> ValueTable<T> {
    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        crate::scalar::sup_distance(&self.0, &other.0)
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl<T> Index<usize> for ValueTable<T> {
    type Output = T;
    #[inline]
    fn index(&self, x: usize) -> &T {
        &self.0[x]
    }
}

/// One value per `(state, action)`; entries outside `U(x)` hold NaN and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    n_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn undefined(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            values: vec![T::nan(); n_states * n_actions],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let n_actions = rows.first().map_or(0, Vec::len);
        Self {
            n_actions,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_actions.max(1)
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[T] {
        &self.values[x * self.n_actions..(x + 1) * self.n_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, x: usize) -> &mut [T] {
        &mut self.values[x * self.n_actions..(x + 1) * self.n_actions]
    }
}

impl<T> Index<(usize, usize)> for QTable<T> {
    type Output = T;
    #[inline]
    fn index(&self, (x, u): (usize, usize)) -> &T {
        &self.values[x * self.n_actions + u]
    }
}

impl<T> IndexMut<(usize, usize)> for QTable<T> {
    #[inline]
    fn index_mut(&mut self, (x, u): (usize, usize)) -> &mut T {
        &mut self.values[x * self.n_actions + u]
    }
}

/// `Σ_u p(u) log(p(u)/q(u))` in nats, with `0 log(0/q) = 0`.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::Invalid(format!(
            "distributions have different lengths ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    let mut total = T::zero();
    for (u, (&pu, &qu)) in p.iter().zip(q).enumerate() {
        if pu > T::zero() {
            if qu <= T::zero() {
                return Err(Error::AbsoluteContinuity {
                    state: None,
                    action: u,
                });
            }
            total = total + pu * (pu / qu).ln();
        }
    }
    // Rounding can push an identical pair a hair below zero.
    Ok(total.max(T::zero()))
}

/// Uniform distribution over `U(x)` at every state, zero elsewhere.
pub fn uniform_policy<T: Scalar>(mdp: &FiniteMdp<T>) -> StochasticPolicy<T> {
    let mut pi = StochasticPolicy::zeros(mdp.n_states(), mdp.n_actions());
    for x in 0..mdp.n_states() {
        let adm = mdp.admissible(x);
        if adm.is_empty() {
            continue;
        }
        let share = T::one() / T::from_usize(adm.len()).expect("small count");
        for &u in adm {
            pi[(x, u)] = share;
        }
    }
    pi
}
