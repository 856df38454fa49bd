//! Building blocks behind the `infolim` binary: algorithm dispatch, β sweeps
//! and their CSV rendering, policy evaluation reports.
//!
//! Every command measures at state index 0, which is cell 1 in the grid world.

use std::fmt::Write as _;
use std::str::FromStr;

use clap::ValueEnum;
use infolim::{
    ba_solve, evaluate_policy, fe_solve, greedy_policy, modified_ba_solve, q_from_v,
    simulate_rollouts, summarize, uniform_policy, value_iteration, BetaParam, Error, Mdp, Penalty,
    Policy, PolicySummary, Weights,
};
use rayon::prelude::*;
use serde::Serialize;

pub const START_STATE: usize = 0;
pub const DEFAULT_HORIZON: usize = 200;
pub const CSV_HEADER: &str = "beta,algorithm,v_x0,d_x0,f_x0,mutual_info,iterations";

/// Exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// A solver ran and failed.
    Solver = 1,
    /// Bad input files, flags or configurations.
    Input = 2,
}

pub fn exit_kind(err: &Error) -> ExitKind {
    match err {
        Error::NotConverged { .. }
        | Error::NumericOverflow { .. }
        | Error::SupportCollapse { .. }
        | Error::Singular => ExitKind::Solver,
        _ => ExitKind::Input,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exact,
    Il,
    Ba,
    Mba,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Exact => "exact",
            Algorithm::Il => "il",
            Algorithm::Ba => "ba",
            Algorithm::Mba => "mba",
        }
    }
}

/// Resource parameter as given on the command line; `inf` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaArg(pub Option<f64>);

impl BetaArg {
    pub const INFINITE: Self = Self(None);

    /// Sort key: finite values ascending, then `inf`.
    fn key(self) -> f64 {
        self.0.unwrap_or(f64::INFINITY)
    }

    fn param(self) -> Result<Option<BetaParam<f64>>, Error> {
        self.0.map(BetaParam::new).transpose()
    }
}

impl FromStr for BetaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Self::INFINITE);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| format!("not a number or `inf`: {s:?}"))?;
        if v.is_finite() && v > 0.0 {
            Ok(Self(Some(v)))
        } else if v == f64::INFINITY {
            Ok(Self::INFINITE)
        } else {
            Err(format!("beta must be positive, got {s}"))
        }
    }
}

impl std::fmt::Display for BetaArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("inf"),
        }
    }
}

/// Comma separated β list. An empty or blank string is an empty list.
pub fn parse_beta_list(s: &str) -> Result<Vec<BetaArg>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(BetaArg::from_str)
        .collect()
}

/// Inputs shared by every solver call.
#[derive(Debug, Clone)]
pub struct SolveInputs {
    /// Prior for `il`; uniform over `U(x)` when absent.
    pub prior: Option<Policy>,
    /// State weights for `ba`/`mba` and for the reported mutual information;
    /// uniform over non-terminal states when absent.
    pub weights: Option<Weights>,
    /// Penalty for `mba`; ±100 when absent.
    pub penalty: Option<Penalty>,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveInputs {
    fn default() -> Self {
        Self {
            prior: None,
            weights: None,
            penalty: None,
            tol: infolim::free_energy::DEFAULT_TOL,
            max_iters: infolim::free_energy::DEFAULT_MAX_ITERS,
        }
    }
}

impl SolveInputs {
    fn prior_for(&self, mdp: &Mdp) -> Policy {
        self.prior.clone().unwrap_or_else(|| uniform_policy(mdp))
    }

    fn weights_for(&self, mdp: &Mdp) -> Weights {
        self.weights
            .clone()
            .unwrap_or_else(|| Weights::uniform_non_terminal(mdp))
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub policy: Policy,
    /// Prior the policy is measured against.
    pub prior: Policy,
    pub summary: PolicySummary,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

pub fn run_algorithm(
    mdp: &Mdp,
    alg: Algorithm,
    beta: BetaArg,
    inputs: &SolveInputs,
) -> Result<SolveOutcome, Error> {
    let weights = inputs.weights_for(mdp);
    let param = beta.param()?;
    let needs_beta = |param: Option<BetaParam<f64>>| {
        param.ok_or_else(|| {
            Error::Invalid(format!("algorithm `{}` needs a finite beta", alg.as_str()))
        })
    };
    let (policy, prior, report) = match alg {
        Algorithm::Exact => {
            let (v, report) = value_iteration(mdp, inputs.tol, inputs.max_iters)?;
            let policy = greedy_policy(mdp, &q_from_v(mdp, &v));
            (policy, inputs.prior_for(mdp), report)
        }
        Algorithm::Il => {
            let prior = inputs.prior_for(mdp);
            let sol = fe_solve(
                mdp,
                &prior,
                needs_beta(param)?,
                inputs.tol,
                inputs.max_iters,
            )?;
            (sol.policy, prior, sol.report)
        }
        Algorithm::Ba => {
            let sol = ba_solve(
                mdp,
                needs_beta(param)?,
                &weights,
                inputs.tol,
                inputs.max_iters,
            )?;
            let prior = sol.prior.to_conditional(mdp);
            (sol.policy, prior, sol.report)
        }
        Algorithm::Mba => {
            let default_penalty;
            let penalty = match &inputs.penalty {
                Some(p) => p,
                None => {
                    default_penalty = Penalty::standard(mdp);
                    &default_penalty
                }
            };
            let sol = modified_ba_solve(
                mdp,
                needs_beta(param)?,
                &weights,
                penalty,
                inputs.tol,
                inputs.max_iters,
            )?;
            let prior = sol.prior.to_conditional(mdp);
            (sol.policy, prior, sol.report)
        }
    };
    let summary = summarize(mdp, &policy, &prior, param, &weights, START_STATE)?;
    Ok(SolveOutcome {
        policy,
        prior,
        summary,
        iterations: report.iterations,
        residual: report.residual,
        converged: report.converged,
        diagnostics: report.diagnostics,
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub beta: BetaArg,
    pub algorithm: Algorithm,
    pub outcome: Result<(PolicySummary, usize), String>,
}

impl SweepRow {
    pub fn summary(&self) -> Option<&PolicySummary> {
        self.outcome.as_ref().ok().map(|(s, _)| s)
    }
}

/// Runs every (algorithm, β) pair, in parallel, and returns rows sorted by
/// algorithm then β.
pub fn sweep(
    mdp: &Mdp,
    algorithms: &[Algorithm],
    betas: &[BetaArg],
    inputs: &SolveInputs,
) -> Vec<SweepRow> {
    let mut algs = algorithms.to_vec();
    algs.sort();
    algs.dedup();
    let mut betas = betas.to_vec();
    betas.sort_by(|a, b| a.key().total_cmp(&b.key()));
    betas.dedup();
    let jobs: Vec<(Algorithm, BetaArg)> = algs
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    jobs.into_par_iter()
        .map(|(algorithm, beta)| SweepRow {
            beta,
            algorithm,
            outcome: run_algorithm(mdp, algorithm, beta, inputs)
                .map(|o| (o.summary, o.iterations))
                .map_err(|e| e.to_string()),
        })
        .collect()
}

/// CSV rendering of sweep rows. Floats use the shortest representation that
/// parses back to the same value. A trailing `error` column appears only when
/// some row failed.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let with_errors = rows.iter().any(|r| r.outcome.is_err());
    let mut out = String::from(CSV_HEADER);
    if with_errors {
        out.push_str(",error");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{},{}", row.beta, row.algorithm.as_str());
        match &row.outcome {
            Ok((s, iterations)) => {
                let _ = write!(
                    out,
                    ",{},{},{},{},{}",
                    s.v_x0, s.d_x0, s.f_x0, s.mutual_info, iterations
                );
                if with_errors {
                    out.push(',');
                }
            }
            Err(message) => {
                let _ = write!(
                    out,
                    ",,,,,,\"{}\"",
                    message.replace('"', "\"\"").replace('\n', " ")
                );
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReportJson {
    pub algorithm: Algorithm,
    pub beta: String,
    pub v_x0: f64,
    pub d_x0: f64,
    pub f_x0: f64,
    pub mutual_info: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub prior: String,
    pub weights: String,
    pub diagnostics: Vec<String>,
}

impl SolveReportJson {
    pub fn new(
        alg: Algorithm,
        beta: BetaArg,
        outcome: &SolveOutcome,
        prior: String,
        weights: String,
    ) -> Self {
        Self {
            algorithm: alg,
            beta: beta.to_string(),
            v_x0: outcome.summary.v_x0,
            d_x0: outcome.summary.d_x0,
            f_x0: outcome.summary.f_x0,
            mutual_info: outcome.summary.mutual_info,
            iterations: outcome.iterations,
            residual: outcome.residual,
            converged: outcome.converged,
            prior,
            weights,
            diagnostics: outcome.diagnostics.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloJson {
    pub mean: f64,
    pub std_error: f64,
    pub n_rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
    /// `|mean − v_x0| / std_error`, or 0 when both coincide exactly.
    pub z_score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub beta: String,
    pub v: Vec<f64>,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
    pub v_x0: f64,
    pub d_x0: f64,
    pub f_x0: f64,
    pub monte_carlo: Option<MonteCarloJson>,
}

/// Analytic evaluation of `pi` against `prior`, with an optional rollout check.
pub fn evaluate(
    mdp: &Mdp,
    pi: &Policy,
    prior: &Policy,
    beta: BetaArg,
    rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalReport, Error> {
    let param = beta.param()?;
    let (v, d) = evaluate_policy(mdp, pi, prior)?;
    let f: Vec<f64> = match param {
        Some(b) => {
            v.0.iter()
                .zip(&d.0)
                .map(|(&v, &d)| v - d / b.get())
                .collect()
        }
        None => v.0.clone(),
    };
    let monte_carlo = if rollouts > 0 {
        let mc = simulate_rollouts(mdp, pi, START_STATE, horizon, rollouts, seed)?;
        let gap = (mc.mean - v[START_STATE]).abs();
        let z_score = if gap == 0.0 { 0.0 } else { gap / mc.std_error };
        Some(MonteCarloJson {
            mean: mc.mean,
            std_error: mc.std_error,
            n_rollouts: mc.n_rollouts,
            horizon,
            seed,
            z_score,
        })
    } else {
        None
    };
    Ok(EvalReport {
        beta: beta.to_string(),
        v_x0: v[START_STATE],
        d_x0: d[START_STATE],
        f_x0: f[START_STATE],
        v: v.0,
        d: d.0,
        f,
        monte_carlo,
    })
}
