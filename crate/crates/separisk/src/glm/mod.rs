//! Discrete-time hazard models: formula parsing and pooled logistic fitting.

pub mod fit;
pub mod formula;

pub use fit::{
    expit, fit_pooled_logistic, log_likelihood, logit, score, BoundFit, HazardModelSet,
    LogisticFit, MAX_ITERATIONS, MAX_STEP_HALVINGS, MEAN_SCORE_TOL, SEPARATION_LP_BOUND,
};
pub use formula::{parse_formula, DesignSpec, OutcomeRole, Term};

#[derive(Debug, thiserror::Error)]
pub enum GlmError {
    #[error("formula error at offset {offset}: {message}")]
    ParseError { offset: usize, message: String },
    #[error("unsupported time power k^{power} at offset {offset}; only k, k^2, k^3 are available")]
    UnknownExponent { offset: usize, power: u32 },
    #[error("design matrix is rank deficient: {detail}")]
    RankDeficient { detail: String },
    #[error("maximum likelihood estimate does not exist: {detail}")]
    Separation { detail: String },
    #[error("no person-intervals remain in the {role} risk set")]
    EmptyRiskSet { role: formula::OutcomeRole },
    #[error("covariate `{0}` is not in the table schema")]
    MissingCovariate(String),
}
