//! Parametric g-formula: standardizes products of fitted discrete-time
//! hazards over the empirical baseline covariate distribution, evaluating
//! the event-of-interest hazard under one treatment component and the
//! competing-event hazard under the other.

use std::io::Write;

use serde::Serialize;

use crate::event_history::{format_float, PersonTimeTable};
use crate::glm::{HazardModelSet, OutcomeRole};

/// Inclusive tolerance for float excursions outside [0,1] or below the
/// previous value; anything larger is a real invariant violation.
const CURVE_SLACK: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum GformulaError {
    #[error("the {0} hazard model did not converge")]
    UnconvergedModel(OutcomeRole),
    #[error("models were fitted on a different covariate schema than this table")]
    CovariateSchemaMismatch,
    #[error("models cover {models} intervals but the table has {table}")]
    HorizonMismatch { models: u32, table: u32 },
    #[error("no subjects in the standardization set (arm {0})")]
    EmptyStandardizationSet(u8),
    #[error("risk curve invariant violated at k={k}: {detail}")]
    InvalidCurve { k: u32, detail: String },
    #[error(transparent)]
    Glm(#[from] crate::glm::GlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which estimator produced a risk curve. Curves from different estimators
/// are never contrasted against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Gformula,
    Ipw1,
    Ipw2,
    Nonparam,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Gformula => "gformula",
            EstimatorKind::Ipw1 => "ipw1",
            EstimatorKind::Ipw2 => "ipw2",
            EstimatorKind::Nonparam => "nonparam",
        })
    }
}

/// Whose baseline covariates the standardization averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Standardization {
    /// Every subject, matching the marginal covariate distribution.
    AllSubjects,
    /// Subjects with the given observed arm only.
    Arm(u8),
}

/// Estimated cumulative risk Pr(event of interest by end of interval k)
/// under the component intervention (a_y, a_d), indexed k = 1..=K+1.
#[derive(Debug, Clone, Serialize)]
pub struct RiskCurve {
    pub estimator: EstimatorKind,
    pub a_y: u8,
    pub a_d: u8,
    values: Vec<f64>,
}

impl RiskCurve {
    /// Validates range and monotonicity, absorbing float excursions up to
    /// 1e-9 by clamping.
    pub fn new(
        estimator: EstimatorKind,
        a_y: u8,
        a_d: u8,
        values: Vec<f64>,
    ) -> Result<RiskCurve, GformulaError> {
        let mut clamped = Vec::with_capacity(values.len());
        let mut prev = 0.0f64;
        for (i, &v) in values.iter().enumerate() {
            let k = i as u32 + 1;
            if !v.is_finite() {
                return Err(GformulaError::InvalidCurve {
                    k,
                    detail: format!("non-finite value {v}"),
                });
            }
            if v > 1.0 + CURVE_SLACK {
                return Err(GformulaError::InvalidCurve {
                    k,
                    detail: format!("{v} exceeds 1"),
                });
            }
            if v < prev - CURVE_SLACK {
                return Err(GformulaError::InvalidCurve {
                    k,
                    detail: format!("{v} decreases below {prev}"),
                });
            }
            let v = v.max(prev).min(1.0);
            clamped.push(v);
            prev = v;
        }
        Ok(RiskCurve {
            estimator,
            a_y,
            a_d,
            values: clamped,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_intervals(&self) -> u32 {
        self.values.len() as u32
    }

    /// Value at interval `k` (1-based). Panics when k is off the grid.
    pub fn at(&self, k: u32) -> f64 {
        self.values[(k - 1) as usize]
    }

    /// Writes `k,estimate` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), GformulaError> {
        writeln!(out, "k,estimate")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, format_float(*v))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("risk curve serialization cannot fail")
    }
}

/// G-formula risk curve under event-hazard component `a_y` and
/// competing-hazard component `a_d`.
pub fn estimate_gformula_risk(
    models: &HazardModelSet,
    table: &PersonTimeTable,
    a_y: u8,
    a_d: u8,
    standardization: Standardization,
) -> Result<RiskCurve, GformulaError> {
    if models.schema != *table.schema() {
        return Err(GformulaError::CovariateSchemaMismatch);
    }
    if models.n_intervals != table.n_intervals() {
        return Err(GformulaError::HorizonMismatch {
            models: models.n_intervals,
            table: table.n_intervals(),
        });
    }
    // Censoring enters only through the fitted hazards' risk sets; the
    // estimand conditions on no censoring, so fit_c plays no role here.
    if !models.fit_y.converged {
        return Err(GformulaError::UnconvergedModel(OutcomeRole::EventY));
    }
    if !models.fit_d.converged {
        return Err(GformulaError::UnconvergedModel(OutcomeRole::CompetingD));
    }
    let bound_y = models.fit_y.bind(&models.schema)?;
    let bound_d = models.fit_d.bind(&models.schema)?;

    let subjects: Vec<usize> = match standardization {
        Standardization::AllSubjects => (0..table.n_subjects()).collect(),
        Standardization::Arm(a) => table.subjects_in_arm(a).collect(),
    };
    if subjects.is_empty() {
        let arm = match standardization {
            Standardization::Arm(a) => a,
            Standardization::AllSubjects => 0,
        };
        return Err(GformulaError::EmptyStandardizationSet(arm));
    }

    let n_intervals = table.n_intervals() as usize;
    let mut sums = vec![0.0f64; n_intervals];
    for &subject in &subjects {
        let cov = table.covariates(subject);
        let mut surv = 1.0;
        let mut acc = 0.0;
        for s in 0..n_intervals {
            let k = s as u32 + 1;
            let hy = bound_y.hazard(a_y, k, cov);
            let hd = bound_d.hazard(a_d, k, cov);
            acc += surv * (1.0 - hd) * hy;
            surv *= (1.0 - hd) * (1.0 - hy);
            sums[s] += acc;
        }
    }
    let n = subjects.len() as f64;
    let values: Vec<f64> = sums.into_iter().map(|v| v / n).collect();
    RiskCurve::new(EstimatorKind::Gformula, a_y, a_d, values)
}
