//! Coverage harness: replicate two-arm experiments from a preset, estimate
//! every component target with every applicable estimator, bootstrap
//! percentile intervals, and tally how often they cover the exact truth.
//!
//! Within a replicate all targets and estimators are computed from the
//! same fitted models, and every bootstrap draw resamples the cohort once
//! and refits once for all of them, so the intervals are graded on a
//! common resampling path.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bootstrap::{percentile_engine, resample_subjects, ReplicateOutcome};
use crate::event_history::{format_float, validate_and_expand, PersonTimeTable};
use crate::gformula::{estimate_gformula_risk, EstimatorKind, RiskCurve, Standardization};
use crate::glm::{fit_pooled_logistic, parse_formula, DesignSpec, HazardModelSet, OutcomeRole};
use crate::ipw::{compute_weights, estimate_ipw_risk, WeightKind};
use crate::nonparam::aalen_johansen;
use crate::seeds::derive_seed;

use super::dgp::{simulate_cohort, true_risk, ArmDesign};
use super::presets::coverage_scenario;
use super::SimError;

const TAG_COHORT: u8 = 1;
const TAG_BOOT: u8 = 2;

/// Component targets in fixed reporting order.
const TARGETS: [(u8, u8); 4] = [(1, 1), (0, 0), (1, 0), (0, 1)];

#[derive(Debug, Clone, Copy)]
struct Coord {
    a_y: u8,
    a_d: u8,
    estimator: EstimatorKind,
    k: u32,
}

/// The model-free estimator only targets component pairs an actual arm
/// received.
fn estimators_for(a_y: u8, a_d: u8) -> Vec<EstimatorKind> {
    let mut v = vec![
        EstimatorKind::Gformula,
        EstimatorKind::Ipw1,
        EstimatorKind::Ipw2,
    ];
    if a_y == a_d {
        v.push(EstimatorKind::Nonparam);
    }
    v
}

fn build_coords(ks: &[u32]) -> Vec<Coord> {
    let mut coords = Vec::new();
    for &(a_y, a_d) in &TARGETS {
        for estimator in estimators_for(a_y, a_d) {
            for &k in ks {
                coords.push(Coord {
                    a_y,
                    a_d,
                    estimator,
                    k,
                });
            }
        }
    }
    coords
}

/// One full estimation pass, emitting values in `build_coords` order.
fn estimate_coords(
    table: &PersonTimeTable,
    y_spec: &DesignSpec,
    d_spec: &DesignSpec,
    ks: &[u32],
) -> Result<Vec<f64>, String> {
    let fit_y = fit_pooled_logistic(table, y_spec).map_err(|e| e.to_string())?;
    let fit_d = fit_pooled_logistic(table, d_spec).map_err(|e| e.to_string())?;
    let models = HazardModelSet {
        fit_y,
        fit_d,
        fit_c: None,
        schema: table.schema().clone(),
        n_intervals: table.n_intervals(),
    };
    let mut out = Vec::new();
    for &(a_y, a_d) in &TARGETS {
        for estimator in estimators_for(a_y, a_d) {
            match estimator {
                EstimatorKind::Gformula => {
                    let curve = estimate_gformula_risk(
                        &models,
                        table,
                        a_y,
                        a_d,
                        Standardization::AllSubjects,
                    )
                    .map_err(|e| e.to_string())?;
                    out.extend(ks.iter().map(|&k| curve.at(k)));
                }
                EstimatorKind::Ipw1 | EstimatorKind::Ipw2 => {
                    let kind = if estimator == EstimatorKind::Ipw1 {
                        WeightKind::ForNu1
                    } else {
                        WeightKind::ForNu2
                    };
                    let weights = compute_weights(&models, table, a_y, a_d, kind)
                        .map_err(|e| e.to_string())?;
                    let curve =
                        estimate_ipw_risk(table, &weights, kind).map_err(|e| e.to_string())?;
                    out.extend(ks.iter().map(|&k| curve.at(k)));
                }
                EstimatorKind::Nonparam => {
                    let cif = aalen_johansen(table, a_y).map_err(|e| e.to_string())?;
                    out.extend(ks.iter().map(|&k| cif.cif_y[(k - 1) as usize]));
                }
            }
        }
    }
    Ok(out)
}

/// Coverage tally for one (target, estimator, grid point) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageCell {
    pub a_y: u8,
    pub a_d: u8,
    pub estimator: EstimatorKind,
    pub k: u32,
    /// Exact risk under the generating process.
    pub truth: f64,
    /// Replicates whose interval contained the truth.
    pub covered: u32,
    /// Replicates contributing to the tally.
    pub replicates: u32,
}

impl CoverageCell {
    pub fn coverage(&self) -> f64 {
        f64::from(self.covered) / f64::from(self.replicates)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageTable {
    pub scenario: u8,
    pub n: u32,
    pub reps: u32,
    pub b: u32,
    pub nominal: f64,
    pub seed: u64,
    pub cells: Vec<CoverageCell>,
}

impl CoverageTable {
    /// Coverage fraction of one cell, if present.
    pub fn coverage(&self, a_y: u8, a_d: u8, estimator: EstimatorKind, k: u32) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.a_y == a_y && c.a_d == a_d && c.estimator == estimator && c.k == k)
            .map(CoverageCell::coverage)
    }

    /// Writes `a_y,a_d,estimator,k,truth,covered,replicates,coverage` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SimError> {
        writeln!(out, "a_y,a_d,estimator,k,truth,covered,replicates,coverage")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.a_y,
                c.a_d,
                c.estimator,
                c.k,
                format_float(c.truth),
                c.covered,
                c.replicates,
                format_float(c.coverage()),
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("coverage table serialization cannot fail")
    }
}

/// Runs the coverage study for one scenario: `reps` independent two-arm
/// cohorts of size `n`, each graded at the `ks` grid points with
/// `nominal`-level percentile intervals from `b` bootstrap resamples.
/// Replicates run in parallel; every random stage is keyed by (seed,
/// replicate, draw), so the tally is identical under any thread schedule.
/// A replicate whose point estimation fails aborts the whole run; only
/// bootstrap refits are dropped-and-counted, under the engine's ceiling.
pub fn run_coverage(
    scenario: u8,
    n: u32,
    reps: u32,
    b: u32,
    ks: &[u32],
    nominal: f64,
    seed: u64,
) -> Result<CoverageTable, SimError> {
    let preset = coverage_scenario(scenario)?;
    let dgp = &preset.dgp;
    let bad = |detail: String| Err(SimError::InvalidRequest { detail });
    if n == 0 {
        return bad("cohort size must be at least 1".into());
    }
    if reps == 0 {
        return bad("at least one replicate is required".into());
    }
    if b < 2 {
        return bad(format!("bootstrap needs at least 2 replicates, got {b}"));
    }
    if !(nominal > 0.0 && nominal < 1.0) {
        return bad(format!("nominal level {nominal} must lie in (0, 1)"));
    }
    if ks.is_empty() {
        return bad("at least one grid point k is required".into());
    }
    for &k in ks {
        if k < 1 || k > dgp.n_intervals() {
            return bad(format!("k = {k} is off the grid 1..={}", dgp.n_intervals()));
        }
    }
    let y_spec = parse_formula(preset.y_formula, OutcomeRole::EventY).map_err(|e| {
        SimError::InvalidRequest {
            detail: e.to_string(),
        }
    })?;
    let d_spec = parse_formula(preset.d_formula, OutcomeRole::CompetingD).map_err(|e| {
        SimError::InvalidRequest {
            detail: e.to_string(),
        }
    })?;

    let coords = build_coords(ks);
    let truth_curves: Vec<RiskCurve> = TARGETS
        .iter()
        .map(|&(a_y, a_d)| true_risk(dgp, a_y, a_d))
        .collect::<Result<_, _>>()?;
    let truth: Vec<f64> = coords
        .iter()
        .map(|c| {
            let i = TARGETS
                .iter()
                .position(|&t| t == (c.a_y, c.a_d))
                .expect("coords are built from TARGETS");
            truth_curves[i].at(c.k)
        })
        .collect();

    let summaries: Result<Vec<Vec<bool>>, SimError> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let fail = |detail: String| SimError::Replicate {
                replicate: r,
                detail,
            };
            let cohort = simulate_cohort(
                dgp,
                n,
                derive_seed(seed, TAG_COHORT, u64::from(r)),
                ArmDesign::TwoArm,
            )
            .map_err(|e| fail(e.to_string()))?;
            let table = validate_and_expand(&cohort.subjects, dgp.k_horizon)
                .map_err(|e| fail(e.to_string()))?;
            let point = estimate_coords(&table, &y_spec, &d_spec, ks).map_err(&fail)?;
            let boot = percentile_engine(
                point,
                b,
                nominal,
                derive_seed(seed, TAG_BOOT, u64::from(r)),
                |_, rng| {
                    let resampled = resample_subjects(&cohort.subjects, rng);
                    // Re-expanding records that already expanded once can
                    // only fail on a logic error, so that aborts the run;
                    // estimation failures are statistical and are dropped
                    // under the engine's counted ceiling.
                    let table = validate_and_expand(&resampled, dgp.k_horizon)
                        .map_err(|e| e.to_string())?;
                    Ok(match estimate_coords(&table, &y_spec, &d_spec, ks) {
                        Ok(v) => ReplicateOutcome::Estimate(v),
                        Err(detail) => ReplicateOutcome::Failed(detail),
                    })
                },
            )
            .map_err(|e| fail(e.to_string()))?;
            Ok((0..truth.len())
                .map(|i| boot.lower[i] <= truth[i] && truth[i] <= boot.upper[i])
                .collect::<Vec<bool>>())
        })
        .collect();
    let summaries = summaries?;

    let mut covered = vec![0u32; coords.len()];
    for indicators in &summaries {
        for (c, &hit) in covered.iter_mut().zip(indicators) {
            *c += u32::from(hit);
        }
    }
    let cells = coords
        .iter()
        .zip(covered)
        .zip(&truth)
        .map(|((c, cov), &t)| CoverageCell {
            a_y: c.a_y,
            a_d: c.a_d,
            estimator: c.estimator,
            k: c.k,
            truth: t,
            covered: cov,
            replicates: reps,
        })
        .collect();

    Ok(CoverageTable {
        scenario,
        n,
        reps,
        b,
        nominal,
        seed,
        cells,
    })
}
