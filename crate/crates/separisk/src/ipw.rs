//! Inverse-probability-weighted risk estimators. Both reweight observed
//! event histories in one arm so the other treatment component's hazard
//! process is swapped in: the first keeps the recipient's event-of-interest
//! process and reweights the competing-event process, the second keeps the
//! competing-event process and reweights the event of interest. Censoring
//! is handled by inverse-probability-of-censoring factors in either case.

use std::io::Write;

use crate::bootstrap::quantile_type7;
use crate::event_history::{format_float, PersonTimeTable};
use crate::gformula::{EstimatorKind, GformulaError, RiskCurve};
use crate::glm::{HazardModelSet, OutcomeRole};

/// Denominators (hazards or their complements) at or below this are
/// positivity violations.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum IpwError {
    #[error("the {0} hazard model did not converge")]
    UnconvergedModel(OutcomeRole),
    #[error("table contains censoring but no censoring hazard model was fitted")]
    MissingCensoringModel,
    #[error("models were fitted on a different covariate schema than this table")]
    CovariateSchemaMismatch,
    #[error("models cover {models} intervals but the table has {table}")]
    HorizonMismatch { models: u32, table: u32 },
    #[error("positivity violation for subject {id} at s={s}: {quantity} is 0 within 1e-12")]
    ZeroDenominator {
        id: String,
        s: u32,
        quantity: String,
    },
    #[error("no subjects in recipient arm {0}")]
    ArmEmpty(u8),
    #[error("weight table was computed for {expected} but {got} was requested")]
    KindMismatch {
        expected: WeightKind,
        got: WeightKind,
    },
    #[error("weight table does not align with this table's person-time rows")]
    WeightTableMismatch,
    #[error(transparent)]
    Curve(#[from] GformulaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which estimating equation the weights feed. The first keeps the
/// recipient arm a_y and reweights the competing-event and censoring
/// processes; the second keeps arm a_d and reweights the event-of-interest
/// and censoring processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    ForNu1,
    ForNu2,
}

impl WeightKind {
    pub fn estimator(self) -> EstimatorKind {
        match self {
            WeightKind::ForNu1 => EstimatorKind::Ipw1,
            WeightKind::ForNu2 => EstimatorKind::Ipw2,
        }
    }

    /// Observed arm whose subjects carry the estimating equation.
    pub fn recipient_arm(self, a_y: u8, a_d: u8) -> u8 {
        match self {
            WeightKind::ForNu1 => a_y,
            WeightKind::ForNu2 => a_d,
        }
    }
}

impl std::fmt::Display for WeightKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightKind::ForNu1 => "nu1",
            WeightKind::ForNu2 => "nu2",
        })
    }
}

/// One subject-interval's weight factors. Factors a kind does not use
/// stay at exactly 1.
#[derive(Debug, Clone)]
pub struct WeightRow {
    pub subject: u32,
    /// Weight index: multiplies the event indicator of interval s+1.
    pub s: u32,
    pub w_d: f64,
    pub w_c: f64,
    pub w_y: f64,
}

impl WeightRow {
    pub fn combined(&self) -> f64 {
        self.w_d * self.w_c * self.w_y
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightDiagnostics {
    pub mean: f64,
    pub max: f64,
    pub p99: f64,
}

/// Weights for every person-interval of the recipient arm, in subject-major
/// interval order.
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub kind: WeightKind,
    pub a_y: u8,
    pub a_d: u8,
    rows: Vec<WeightRow>,
}

impl WeightTable {
    pub fn rows(&self) -> &[WeightRow] {
        &self.rows
    }

    /// Mean, max, and 99th percentile of the combined weights.
    pub fn diagnostics(&self) -> WeightDiagnostics {
        if self.rows.is_empty() {
            return WeightDiagnostics {
                mean: 0.0,
                max: 0.0,
                p99: 0.0,
            };
        }
        let mut combined: Vec<f64> = self.rows.iter().map(WeightRow::combined).collect();
        let mean = combined.iter().sum::<f64>() / combined.len() as f64;
        combined.sort_by(|a, b| a.partial_cmp(b).expect("weights are finite"));
        let max = *combined.last().expect("nonempty");
        WeightDiagnostics {
            mean,
            max,
            p99: quantile_type7(&combined, 0.99),
        }
    }

    /// Writes `id,s,w_d,w_c,w_y` rows; `table` must be the table the
    /// weights were computed from.
    pub fn write_csv<W: Write>(&self, table: &PersonTimeTable, mut out: W) -> Result<(), IpwError> {
        writeln!(out, "id,s,w_d,w_c,w_y")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                table.id(row.subject as usize),
                row.s,
                format_float(row.w_d),
                format_float(row.w_c),
                format_float(row.w_y),
            )?;
        }
        Ok(())
    }
}

fn check_positive(
    value: f64,
    table: &PersonTimeTable,
    subject: usize,
    s: u32,
    quantity: &str,
) -> Result<f64, IpwError> {
    if value <= DENOMINATOR_FLOOR {
        return Err(IpwError::ZeroDenominator {
            id: table.id(subject).to_string(),
            s,
            quantity: quantity.to_string(),
        });
    }
    Ok(value)
}

/// Weight products for the recipient arm of `kind`, by forward recursion
/// over each subject's observed intervals.
pub fn compute_weights(
    models: &HazardModelSet,
    table: &PersonTimeTable,
    a_y: u8,
    a_d: u8,
    kind: WeightKind,
) -> Result<WeightTable, IpwError> {
    if models.schema != *table.schema() {
        return Err(IpwError::CovariateSchemaMismatch);
    }
    if models.n_intervals != table.n_intervals() {
        return Err(IpwError::HorizonMismatch {
            models: models.n_intervals,
            table: table.n_intervals(),
        });
    }
    if !models.fit_y.converged {
        return Err(IpwError::UnconvergedModel(OutcomeRole::EventY));
    }
    if !models.fit_d.converged {
        return Err(IpwError::UnconvergedModel(OutcomeRole::CompetingD));
    }
    if let Some(fit_c) = &models.fit_c {
        if !fit_c.converged {
            return Err(IpwError::UnconvergedModel(OutcomeRole::CensorC));
        }
    }
    if table.has_censoring() && models.fit_c.is_none() {
        return Err(IpwError::MissingCensoringModel);
    }

    let bound_y = models
        .fit_y
        .bind(&models.schema)
        .map_err(GformulaError::Glm)?;
    let bound_d = models
        .fit_d
        .bind(&models.schema)
        .map_err(GformulaError::Glm)?;
    let bound_c = match &models.fit_c {
        Some(f) => Some(f.bind(&models.schema).map_err(GformulaError::Glm)?),
        None => None,
    };
    // Censoring is modeled under the recipient arm's component.
    let censor_arm = kind.recipient_arm(a_y, a_d);

    let mut rows = Vec::new();
    for subject in table.subjects_in_arm(censor_arm) {
        let cov = table.covariates(subject);
        let mut cum_d = 1.0f64;
        let mut cum_y_prefix = 1.0f64;
        let mut cum_c = 1.0f64;
        for row in table.subject_rows(subject) {
            let k = row.k;
            let s = k - 1;
            let (w_d, w_y) = match kind {
                WeightKind::ForNu1 => {
                    let num = 1.0 - bound_d.hazard(a_d, k, cov);
                    let den = check_positive(
                        1.0 - bound_d.hazard(a_y, k, cov),
                        table,
                        subject,
                        s,
                        "competing-hazard complement under the recipient component",
                    )?;
                    cum_d *= num / den;
                    (cum_d, 1.0)
                }
                WeightKind::ForNu2 => {
                    let hy_num = bound_y.hazard(a_y, k, cov);
                    let hy_den = check_positive(
                        bound_y.hazard(a_d, k, cov),
                        table,
                        subject,
                        s,
                        "event hazard under the recipient component",
                    )?;
                    let w_y = (hy_num / hy_den) * cum_y_prefix;
                    let comp_den = check_positive(
                        1.0 - hy_den,
                        table,
                        subject,
                        s,
                        "event-hazard complement under the recipient component",
                    )?;
                    cum_y_prefix *= (1.0 - hy_num) / comp_den;
                    (1.0, w_y)
                }
            };
            let w_c = match &bound_c {
                Some(bc) => {
                    let den = check_positive(
                        1.0 - bc.hazard(censor_arm, k, cov),
                        table,
                        subject,
                        s,
                        "censoring-hazard complement",
                    )?;
                    cum_c *= den;
                    if row.c {
                        0.0
                    } else {
                        1.0 / cum_c
                    }
                }
                None => 1.0,
            };
            rows.push(WeightRow {
                subject: subject as u32,
                s,
                w_d,
                w_c,
                w_y,
            });
        }
    }
    Ok(WeightTable {
        kind,
        a_y,
        a_d,
        rows,
    })
}

/// Weighted risk curve: each interest event at interval s+1 contributes its
/// subject's combined weight at s, averaged over the recipient arm.
pub fn estimate_ipw_risk(
    table: &PersonTimeTable,
    weights: &WeightTable,
    kind: WeightKind,
) -> Result<RiskCurve, IpwError> {
    if weights.kind != kind {
        return Err(IpwError::KindMismatch {
            expected: weights.kind,
            got: kind,
        });
    }
    let arm = kind.recipient_arm(weights.a_y, weights.a_d);
    let n_arm = table.subjects_in_arm(arm).count();
    if n_arm == 0 {
        return Err(IpwError::ArmEmpty(arm));
    }

    let n_intervals = table.n_intervals() as usize;
    let mut increments = vec![0.0f64; n_intervals];
    for wrow in &weights.rows {
        let subject = wrow.subject as usize;
        if subject >= table.n_subjects() {
            return Err(IpwError::WeightTableMismatch);
        }
        let rows = table.subject_rows(subject);
        let idx = wrow.s as usize;
        if idx >= rows.len() || table.arm(subject) != arm {
            return Err(IpwError::WeightTableMismatch);
        }
        let row = &rows[idx];
        if row.y {
            increments[idx] += wrow.combined();
        }
    }
    let mut values = Vec::with_capacity(n_intervals);
    let mut acc = 0.0;
    for inc in increments {
        acc += inc;
        values.push(acc / n_arm as f64);
    }
    Ok(RiskCurve::new(
        kind.estimator(),
        weights.a_y,
        weights.a_d,
        values,
    )?)
}
