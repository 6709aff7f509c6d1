//! Cohort simulation with two treatment components acting on separate
//! discrete-time hazards, exact counterfactual risk of every component
//! pair, named scenario presets, and a coverage harness that grades
//! bootstrap intervals against the analytic truth.

pub mod coverage;
pub mod dgp;
pub mod presets;

pub use coverage::{run_coverage, CoverageCell, CoverageTable};
pub use dgp::{
    empirical_risk, simulate_cohort, true_risk, write_truth_curves_csv, ArmDesign, DgpCoefficients,
    HazardIndex, SimulatedCohort,
};
pub use presets::{canonical_graph, coverage_scenario, illustrative_scenario, ScenarioPreset};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid data-generating process: {detail}")]
    InvalidDgp { detail: String },
    #[error("unknown {family} scenario {id}")]
    PresetUnknown { family: &'static str, id: u8 },
    #[error("invalid request: {detail}")]
    InvalidRequest { detail: String },
    #[error("no simulated subjects with components a_y={a_y}, a_d={a_d}")]
    EmptyCell { a_y: u8, a_d: u8 },
    #[error("coverage replicate {replicate} failed: {detail}")]
    Replicate { replicate: u32, detail: String },
    #[error(transparent)]
    History(#[from] crate::event_history::EventHistoryError),
    #[error(transparent)]
    Curve(#[from] crate::gformula::GformulaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
