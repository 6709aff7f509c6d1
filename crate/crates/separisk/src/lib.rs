//! Estimation of separable direct and indirect treatment effects on a
//! time-to-event outcome subject to competing events, in discrete time.
//!
//! The treatment is conceptually split into a component acting on the event
//! of interest and a component acting on the competing event. Counterfactual
//! risks under the four joint assignments of those components are estimated
//! by three interchangeable routes: a parametric g-formula standardizing
//! fitted discrete-time hazards over the baseline covariate distribution,
//! and two inverse-probability-weighted estimators that reweight one
//! observed arm by hazard ratios of the competing event or of the event of
//! interest. Identifiability of the component effects can be audited on a
//! causal DAG via the dismissible component conditions.
//!
//! Pipeline: subject-level records expand into a person-interval table
//! ([`event_history`]), pooled logistic hazard models are fit on role
//! specific risk sets ([`glm`]), estimators turn fitted hazards into risk
//! curves ([`gformula`], [`ipw`], [`nonparam`]), contrasts and percentile
//! bootstrap intervals come from [`effects`] and [`bootstrap`], identifiability
//! screening on a DAG lives in [`causal_graph`], and simulation-based
//! validation lives in [`simulate`].

pub mod bootstrap;
pub mod causal_graph;
pub mod cli;
pub mod effects;
pub mod event_history;
pub mod gformula;
pub mod glm;
pub mod ingest_prostate;
pub mod ipw;
pub mod nonparam;
pub mod seeds;
pub mod simulate;
