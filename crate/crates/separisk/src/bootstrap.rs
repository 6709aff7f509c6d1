//! Subject-level nonparametric percentile bootstrap.
//!
//! The engine is generic over the per-replicate estimator: it hands each
//! replicate a deterministic RNG stream (seed and replicate index fix the
//! stream, so results do not depend on thread scheduling), collects the
//! replicate curves, and takes pointwise empirical quantiles. Replicates
//! that fail for data-dependent reasons (separation, positivity) are
//! dropped and counted; more than 10% of them is an error.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::event_history::{format_float, SubjectRecord};
use crate::seeds::{stream_rng, PURPOSE_BOOTSTRAP};

/// Failures above this fraction of B abort instead of being dropped.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("confidence level must be strictly between 0 and 1, got {0}")]
    InvalidLevel(f64),
    #[error("at least 2 bootstrap replicates are required, got {0}")]
    InvalidReplicates(u32),
    #[error("{failed} of {b} bootstrap replicates failed (more than 10%); last failure: {last}")]
    TooManyFailures { failed: u32, b: u32, last: String },
    #[error("bootstrap replicate {replicate} hit a non-recoverable error: {detail}")]
    ReplicateAborted { replicate: u32, detail: String },
    #[error("replicate curves have inconsistent lengths")]
    LengthMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What one replicate produced: an estimate, or a data-dependent failure
/// (separation, positivity violation) that is dropped and counted.
pub enum ReplicateOutcome {
    Estimate(Vec<f64>),
    Failed(String),
}

/// Point estimate with pointwise percentile bounds.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub b: u32,
    pub level: f64,
    pub seed: u64,
    pub replicate_failures: u32,
}

#[derive(Serialize)]
struct IntervalRow {
    k: u32,
    estimate: f64,
    lower: f64,
    upper: f64,
}

impl BootstrapResult {
    /// JSON array of `{k, estimate, lower, upper}` records.
    pub fn to_json(&self) -> String {
        let rows: Vec<IntervalRow> = (0..self.point.len())
            .map(|i| IntervalRow {
                k: i as u32 + 1,
                estimate: self.point[i],
                lower: self.lower[i],
                upper: self.upper[i],
            })
            .collect();
        serde_json::to_string(&rows).expect("interval serialization cannot fail")
    }

    /// Writes `k,estimate,lower,upper` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), BootstrapError> {
        writeln!(out, "k,estimate,lower,upper")?;
        for i in 0..self.point.len() {
            writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                format_float(self.point[i]),
                format_float(self.lower[i]),
                format_float(self.upper[i]),
            )?;
        }
        Ok(())
    }
}

/// Linear-interpolation empirical quantile (type 7) of an ascending slice.
pub(crate) fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// A with-replacement copy of the subject list. Clones get fresh ids so
/// repeated draws of one subject stay distinct records.
pub fn resample_subjects<R: Rng>(subjects: &[SubjectRecord], rng: &mut R) -> Vec<SubjectRecord> {
    (0..subjects.len())
        .map(|i| {
            let mut s = subjects[rng.random_range(0..subjects.len())].clone();
            s.id = format!("b{}", i);
            s
        })
        .collect()
}

/// Percentile bootstrap around `point`. `replicate` is called once per
/// replicate with (index, its own RNG stream) and runs in parallel when a
/// rayon pool is configured; per-replicate streams keep the output
/// identical either way.
pub fn percentile_engine<F>(
    point: Vec<f64>,
    b: u32,
    level: f64,
    seed: u64,
    replicate: F,
) -> Result<BootstrapResult, BootstrapError>
where
    F: Fn(u32, &mut ChaCha12Rng) -> Result<ReplicateOutcome, String> + Sync,
{
    if !(level > 0.0 && level < 1.0) {
        return Err(BootstrapError::InvalidLevel(level));
    }
    if b < 2 {
        return Err(BootstrapError::InvalidReplicates(b));
    }

    let outcomes: Vec<Result<ReplicateOutcome, String>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, PURPOSE_BOOTSTRAP, 0, r);
            replicate(r, &mut rng)
        })
        .collect();

    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(b as usize);
    let mut failures = 0u32;
    let mut last_failure = String::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(ReplicateOutcome::Estimate(v)) => {
                if v.len() != point.len() {
                    return Err(BootstrapError::LengthMismatch);
                }
                curves.push(v);
            }
            Ok(ReplicateOutcome::Failed(detail)) => {
                failures += 1;
                last_failure = detail;
            }
            Err(detail) => {
                return Err(BootstrapError::ReplicateAborted {
                    replicate: r as u32,
                    detail,
                });
            }
        }
    }
    if f64::from(failures) > MAX_FAILURE_FRACTION * f64::from(b) {
        return Err(BootstrapError::TooManyFailures {
            failed: failures,
            b,
            last: last_failure,
        });
    }

    let alpha = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(point.len());
    let mut upper = Vec::with_capacity(point.len());
    let mut column = vec![0.0; curves.len()];
    for k in 0..point.len() {
        for (slot, curve) in column.iter_mut().zip(&curves) {
            *slot = curve[k];
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("replicate estimates are ordered"));
        lower.push(quantile_type7(&column, alpha));
        upper.push(quantile_type7(&column, 1.0 - alpha));
    }

    Ok(BootstrapResult {
        point,
        lower,
        upper,
        b,
        level,
        seed,
        replicate_failures: failures,
    })
}
