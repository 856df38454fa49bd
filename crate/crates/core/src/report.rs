//! Convergence diagnostics and the scalar summary reported for a solved policy.

use serde::Serialize;

use crate::blahut_arimoto::{mutual_information, StateWeights};
use crate::error::Result;
use crate::exact::evaluate_policy;
use crate::free_energy::BetaParam;
use crate::mdp::{FiniteMdp, StochasticPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub iterations: usize,
    pub residual: T,
    /// Sup-norm residual after each sweep.
    pub residual_history: Vec<T>,
    pub converged: bool,
    /// Non-fatal observations, e.g. objective decreases in the modified BA loop.
    pub diagnostics: Vec<String>,
}

impl<T: Scalar> SolveReport<T> {
    pub(crate) fn from_history(history: Vec<T>, converged: bool) -> Self {
        Self {
            iterations: history.len(),
            residual: history.last().copied().unwrap_or_else(T::zero),
            residual_history: history,
            converged,
            diagnostics: Vec::new(),
        }
    }
}

/// Value, information cost, free energy and mutual information of a policy,
/// evaluated at the start state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicySummary {
    pub v_x0: f64,
    pub d_x0: f64,
    pub f_x0: f64,
    pub mutual_info: f64,
}

/// Evaluates `pi` against `prior` from `start`. `beta = None` stands for an
/// unbounded resource parameter, where the free energy equals the value.
pub fn summarize<T: Scalar>(
    mdp: &FiniteMdp<T>,
    pi: &StochasticPolicy<T>,
    prior: &StochasticPolicy<T>,
    beta: Option<BetaParam<T>>,
    weights: &StateWeights<T>,
    start: usize,
) -> Result<PolicySummary> {
    let (v, d) = evaluate_policy(mdp, pi, prior)?;
    let f = match beta {
        Some(b) => v[start] - d[start] / b.get(),
        None => v[start],
    };
    Ok(PolicySummary {
        v_x0: v[start].as_f64(),
        d_x0: d[start].as_f64(),
        f_x0: f.as_f64(),
        mutual_info: mutual_information(pi, weights).as_f64(),
    })
}
