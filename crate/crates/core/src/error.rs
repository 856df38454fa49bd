use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// `p(u) > 0` where `q(u) = 0`. `state` is `None` for bare distributions.
    #[error("absolute continuity violated at {}action {action}: mass where the reference has none", state_prefix(*.state))]
    AbsoluteContinuity { state: Option<usize>, action: usize },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-finite intermediate value at state {state}")]
    NumericOverflow { state: usize },

    #[error(
        "prior support collapsed at state {state}: no admissible action keeps prior mass; \
         the modified Blahut-Arimoto update handles state-dependent action sets"
    )]
    SupportCollapse { state: usize },

    #[error("resource parameter must be positive and finite, got {0}")]
    InvalidBeta(f64),

    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("policy evaluation system is singular")]
    Singular,

    #[error("MDP failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn state_prefix(state: Option<usize>) -> String {
    match state {
        Some(x) => format!("state {x}, "),
        None => String::new(),
    }
}
