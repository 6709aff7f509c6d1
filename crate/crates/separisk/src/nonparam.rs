//! Nonparametric discrete-time Aalen-Johansen cumulative incidence, one arm
//! at a time. Serves as the model-free comparator for the standardized and
//! weighted estimators.
//!
//! Within an interval censoring is resolved first, then the competing
//! event, then the event of interest: subjects censored in interval k are
//! out of the interval-k risk set, and interval-k competing events shrink
//! the denominator of the interest-event hazard.

use std::io::Write;

use crate::event_history::{format_float, PersonTimeTable};

#[derive(Debug, thiserror::Error)]
pub enum NonparamError {
    #[error("no subjects with arm {0} in the table")]
    EmptyArm(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Cumulative incidence for both event types in one arm, indexed by
/// interval (entry i is the value at the end of interval i+1).
#[derive(Debug, Clone)]
pub struct CifPair {
    pub arm: u8,
    pub cif_y: Vec<f64>,
    pub cif_d: Vec<f64>,
    /// Subjects still under observation when each interval starts,
    /// net of same-interval censoring.
    pub risk_set_sizes: Vec<u32>,
}

impl CifPair {
    pub fn n_intervals(&self) -> u32 {
        self.cif_y.len() as u32
    }

    /// Writes `k,cif_y,cif_d,n_at_risk` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), NonparamError> {
        writeln!(out, "k,cif_y,cif_d,n_at_risk")?;
        for (i, ((y, d), n)) in self
            .cif_y
            .iter()
            .zip(&self.cif_d)
            .zip(&self.risk_set_sizes)
            .enumerate()
        {
            writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                format_float(*y),
                format_float(*d),
                n
            )?;
        }
        Ok(())
    }
}

/// Aalen-Johansen estimate over the subjects with the given arm.
pub fn aalen_johansen(table: &PersonTimeTable, arm: u8) -> Result<CifPair, NonparamError> {
    let subjects: Vec<usize> = table.subjects_in_arm(arm).collect();
    if subjects.is_empty() {
        return Err(NonparamError::EmptyArm(arm));
    }
    let n_intervals = table.n_intervals() as usize;
    let mut at_risk = vec![0u32; n_intervals];
    let mut d_events = vec![0u32; n_intervals];
    let mut y_events = vec![0u32; n_intervals];
    for &subject in &subjects {
        for row in table.subject_rows(subject) {
            let i = (row.k - 1) as usize;
            if row.c {
                continue;
            }
            at_risk[i] += 1;
            if row.d {
                d_events[i] += 1;
            } else if row.y {
                y_events[i] += 1;
            }
        }
    }

    let mut cif_y = Vec::with_capacity(n_intervals);
    let mut cif_d = Vec::with_capacity(n_intervals);
    let mut surv = 1.0;
    let (mut acc_y, mut acc_d) = (0.0, 0.0);
    for i in 0..n_intervals {
        let n = at_risk[i] as f64;
        let lambda_d = if at_risk[i] > 0 {
            d_events[i] as f64 / n
        } else {
            0.0
        };
        let after_d = at_risk[i] - d_events[i];
        let lambda_y = if after_d > 0 {
            y_events[i] as f64 / after_d as f64
        } else {
            0.0
        };
        acc_d += surv * lambda_d;
        acc_y += surv * (1.0 - lambda_d) * lambda_y;
        surv *= (1.0 - lambda_d) * (1.0 - lambda_y);
        cif_d.push(acc_d);
        cif_y.push(acc_y);
    }
    Ok(CifPair {
        arm,
        cif_y,
        cif_d,
        risk_set_sizes: at_risk,
    })
}
