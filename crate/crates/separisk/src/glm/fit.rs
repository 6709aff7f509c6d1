//! Pooled logistic regression by damped Newton iteration.
//!
//! Each outcome role fits on its own risk set of person-intervals:
//! the event-of-interest hazard conditions on no competing event in the same
//! interval, the competing-event hazard on surviving the previous interval,
//! and the censoring hazard on being under observation when the interval
//! starts (censoring is resolved before either event within an interval).
//!
//! The Newton step solves the Fisher system via a Jacobi-scaled Cholesky
//! factorization, halving the step (at most 20 times) whenever it fails the
//! acceptance rule: likelihood ascent far from the optimum, score descent
//! once likelihood differences fall below f64 rounding of the summed
//! log-likelihood. Convergence is declared when the sup-norm of the mean
//! score (score over risk-set rows) drops below 1e-10 at a point the next
//! full Newton step would barely move, which screens out separated fits
//! whose score vanishes along a diverging coefficient path.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::event_history::{CovariateSchema, PersonTimeTable};

use super::formula::{parse_formula, DesignSpec, OutcomeRole, Term};
use super::GlmError;

pub const MEAN_SCORE_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: u32 = 100;
pub const MAX_STEP_HALVINGS: u32 = 20;
/// |linear predictor| at which the fitted probability is within 1e-12 of
/// 0 or 1 (= ln(1e12)). Iterates beyond this are treated as diverging.
pub const SEPARATION_LP_BOUND: f64 = 27.631021115928547;
/// Below this mean score the likelihood gain of a Newton step falls under
/// the f64 rounding floor of the summed log-likelihood, so step acceptance
/// switches from likelihood ascent to score descent.
const LIKELIHOOD_GUARD_FLOOR: f64 = 1e-6;
/// At a finite maximum one further Newton step barely moves any linear
/// predictor (~1e-6); under separation it keeps adding O(1) per iteration.
/// Distinguishes a true MLE from a score that vanished along a divergence.
const DIVERGENT_LP_STEP: f64 = 0.1;

/// Numerically stable logistic function.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

// log(1 + e^x) without overflow
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// A fitted hazard model. Serializes to JSON as
/// `{terms, coefficients, converged, iterations}`.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub spec: DesignSpec,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: u32,
    /// Sup-norm of the mean score at exit.
    pub max_abs_score: f64,
    pub n_rows: usize,
    pub n_events: usize,
}

#[derive(Serialize, Deserialize)]
struct FitJson {
    terms: Vec<String>,
    coefficients: Vec<f64>,
    converged: bool,
    iterations: u32,
}

impl LogisticFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&FitJson {
            terms: self.spec.term_strings(),
            coefficients: self.coefficients.clone(),
            converged: self.converged,
            iterations: self.iterations,
        })
        .expect("fit serialization cannot fail")
    }

    /// Rebuild a fit from its JSON form. Risk-set counts and the exit score
    /// are not part of the serialized contract and come back as zero/NaN.
    pub fn from_json(json: &str, role: OutcomeRole) -> Result<LogisticFit, GlmError> {
        let parsed: FitJson = serde_json::from_str(json).map_err(|e| GlmError::ParseError {
            offset: 0,
            message: e.to_string(),
        })?;
        let spec = parse_formula(&parsed.terms.join(" + "), role)?;
        if spec.n_terms() != parsed.coefficients.len() {
            return Err(GlmError::ParseError {
                offset: 0,
                message: "coefficient count does not match terms".into(),
            });
        }
        Ok(LogisticFit {
            spec,
            coefficients: parsed.coefficients,
            converged: parsed.converged,
            iterations: parsed.iterations,
            max_abs_score: f64::NAN,
            n_rows: 0,
            n_events: 0,
        })
    }

    /// Resolve covariate names against a schema once; the result evaluates
    /// hazards without further lookups.
    pub fn bind(&self, schema: &CovariateSchema) -> Result<BoundFit, GlmError> {
        let terms = bind_terms(&self.spec.terms, schema)?;
        Ok(BoundFit {
            terms,
            coefficients: self.coefficients.clone(),
        })
    }

    /// Fitted hazard at treatment `a`, interval `k`, covariates `values`
    /// (aligned with `schema`).
    pub fn predict_hazard(
        &self,
        a: u8,
        k: u32,
        schema: &CovariateSchema,
        values: &[f64],
    ) -> Result<f64, GlmError> {
        Ok(self.bind(schema)?.hazard(a, k, values))
    }
}

#[derive(Debug, Clone)]
struct BoundTerm {
    a_pow: u8,
    k_pow: u8,
    cov_idx: Vec<usize>,
}

fn bind_terms(terms: &[Term], schema: &CovariateSchema) -> Result<Vec<BoundTerm>, GlmError> {
    terms
        .iter()
        .map(|t| {
            let cov_idx = t
                .covariates
                .iter()
                .map(|name| {
                    schema
                        .index_of(name)
                        .ok_or_else(|| GlmError::MissingCovariate(name.clone()))
                })
                .collect::<Result<Vec<usize>, GlmError>>()?;
            Ok(BoundTerm {
                a_pow: t.a_pow,
                k_pow: t.k_pow,
                cov_idx,
            })
        })
        .collect()
}

/// Schema-resolved fit for fast repeated prediction.
#[derive(Debug, Clone)]
pub struct BoundFit {
    terms: Vec<BoundTerm>,
    coefficients: Vec<f64>,
}

impl BoundFit {
    pub fn linear_predictor(&self, a: u8, k: u32, values: &[f64]) -> f64 {
        let af = a as f64;
        let kf = k as f64;
        let mut lp = 0.0;
        for (t, b) in self.terms.iter().zip(&self.coefficients) {
            let mut x = 1.0;
            for _ in 0..t.a_pow {
                x *= af;
            }
            for _ in 0..t.k_pow {
                x *= kf;
            }
            for &i in &t.cov_idx {
                x *= values[i];
            }
            lp += b * x;
        }
        lp
    }

    pub fn hazard(&self, a: u8, k: u32, values: &[f64]) -> f64 {
        expit(self.linear_predictor(a, k, values))
    }
}

/// A fitted model triple sharing one table schema. `fit_c` is absent only
/// when the table had no censoring at all.
#[derive(Debug, Clone)]
pub struct HazardModelSet {
    pub fit_y: LogisticFit,
    pub fit_d: LogisticFit,
    pub fit_c: Option<LogisticFit>,
    pub schema: CovariateSchema,
    pub n_intervals: u32,
}

// Risk-set design grouped by distinct covariate pattern: `x` holds one
// row per pattern (first-appearance order, so sums are deterministic),
// with event and person-interval counts. Grouping makes each IRLS pass
// cost proportional to the number of patterns, not person-intervals.
struct RiskSetDesign {
    x: Vec<f64>,
    events: Vec<f64>,
    trials: Vec<f64>,
    n_rows: usize,
    groups: usize,
    p: usize,
}

fn build_design(table: &PersonTimeTable, spec: &DesignSpec) -> Result<RiskSetDesign, GlmError> {
    let bound = bind_terms(&spec.terms, table.schema())?;
    let p = bound.len();
    let mut x: Vec<f64> = Vec::new();
    let mut events: Vec<f64> = Vec::new();
    let mut trials: Vec<f64> = Vec::new();
    let mut n_rows = 0usize;
    let mut index: HashMap<Box<[u64]>, usize> = HashMap::new();
    let mut xrow = vec![0.0f64; p];
    for row in table.rows() {
        let (include, outcome) = match spec.role {
            OutcomeRole::EventY => (!row.c && !row.d, row.y),
            OutcomeRole::CompetingD => (!row.c, row.d),
            OutcomeRole::CensorC => (true, row.c),
        };
        if !include {
            continue;
        }
        let af = table.arm(row.subject as usize) as f64;
        let kf = row.k as f64;
        let values = table.covariates(row.subject as usize);
        for (t, slot) in bound.iter().zip(xrow.iter_mut()) {
            let mut v = 1.0;
            for _ in 0..t.a_pow {
                v *= af;
            }
            for _ in 0..t.k_pow {
                v *= kf;
            }
            for &i in &t.cov_idx {
                v *= values[i];
            }
            *slot = v;
        }
        let key: Box<[u64]> = xrow.iter().map(|v| v.to_bits()).collect();
        let g = *index.entry(key).or_insert_with(|| {
            x.extend_from_slice(&xrow);
            events.push(0.0);
            trials.push(0.0);
            events.len() - 1
        });
        trials[g] += 1.0;
        if outcome {
            events[g] += 1.0;
        }
        n_rows += 1;
    }
    let groups = trials.len();
    Ok(RiskSetDesign {
        x,
        events,
        trials,
        n_rows,
        groups,
        p,
    })
}

fn loglik_score(design: &RiskSetDesign, beta: &[f64]) -> (f64, Vec<f64>, f64) {
    let p = design.p;
    let mut ll = 0.0;
    let mut score = vec![0.0; p];
    let mut max_abs_lp = 0.0f64;
    for g in 0..design.groups {
        let xg = &design.x[g * p..(g + 1) * p];
        let lp: f64 = xg.iter().zip(beta).map(|(a, b)| a * b).sum();
        max_abs_lp = max_abs_lp.max(lp.abs());
        ll += design.events[g] * lp - design.trials[g] * log1p_exp(lp);
        let resid = design.events[g] - design.trials[g] * expit(lp);
        for j in 0..p {
            score[j] += xg[j] * resid;
        }
    }
    (ll, score, max_abs_lp)
}

// Fisher information X' W X at the current probabilities.
fn information(design: &RiskSetDesign, beta: &[f64]) -> DMatrix<f64> {
    let p = design.p;
    let mut h = DMatrix::zeros(p, p);
    for g in 0..design.groups {
        let xg = &design.x[g * p..(g + 1) * p];
        let lp: f64 = xg.iter().zip(beta).map(|(a, b)| a * b).sum();
        let pi = expit(lp);
        let w = design.trials[g] * pi * (1.0 - pi);
        for j in 0..p {
            let wxj = w * xg[j];
            for l in j..p {
                h[(j, l)] += wxj * xg[l];
            }
        }
    }
    for j in 0..p {
        for l in 0..j {
            h[(j, l)] = h[(l, j)];
        }
    }
    h
}

// Largest change any pattern's linear predictor would see from step `delta`.
fn max_lp_step(design: &RiskSetDesign, delta: &[f64]) -> f64 {
    let p = design.p;
    let mut m = 0.0f64;
    for g in 0..design.groups {
        let xg = &design.x[g * p..(g + 1) * p];
        let s: f64 = xg.iter().zip(delta).map(|(a, b)| a * b).sum();
        m = m.max(s.abs());
    }
    m
}

// Solve H d = g with Jacobi scaling; reports singularity.
fn solve_newton(h: &DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let p = g.len();
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let d = h[(j, j)];
        if !(d.is_finite() && d > 0.0) {
            return None;
        }
        scale[j] = d.sqrt();
    }
    let mut hs = DMatrix::zeros(p, p);
    for j in 0..p {
        for l in 0..p {
            hs[(j, l)] = h[(j, l)] / (scale[j] * scale[l]);
        }
    }
    let gs = DVector::from_iterator(p, g.iter().zip(&scale).map(|(v, s)| v / s));
    let chol = Cholesky::new(hs)?;
    let d = chol.solve(&gs);
    Some(d.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

/// Fit a hazard model on the table rows selected by the spec's outcome role.
pub fn fit_pooled_logistic(
    table: &PersonTimeTable,
    spec: &DesignSpec,
) -> Result<LogisticFit, GlmError> {
    let design = build_design(table, spec)?;
    if design.n_rows == 0 {
        return Err(GlmError::EmptyRiskSet { role: spec.role });
    }
    let n_events = design.events.iter().sum::<f64>() as usize;
    if n_events == 0 || n_events == design.n_rows {
        return Err(GlmError::Separation {
            detail: format!(
                "outcome is constant ({} events in {} rows) on the {} risk set",
                n_events, design.n_rows, spec.role
            ),
        });
    }
    if design.n_rows < design.p {
        return Err(GlmError::RankDeficient {
            detail: format!("{} rows cannot identify {} terms", design.n_rows, design.p),
        });
    }

    let p = design.p;
    let nf = design.n_rows as f64;
    let mut beta = vec![0.0; p];
    let (mut ll, mut score, mut max_lp) = loglik_score(&design, &beta);
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let mean_sup = score.iter().fold(0.0f64, |m, v| m.max(v.abs())) / nf;
        if mean_sup < MEAN_SCORE_TOL {
            // The score also vanishes along a separating direction, so a
            // small score alone does not certify a finite maximum.
            let h = information(&design, &beta);
            match solve_newton(&h, &score) {
                Some(delta) if max_lp_step(&design, &delta) < DIVERGENT_LP_STEP => {
                    converged = true;
                    // The first iterate under the tolerance can still sit a
                    // full tolerance-width from the optimum. Keep taking the
                    // already-certified Newton steps while they strictly
                    // shrink the score, leaving the solution at the
                    // floating-point floor instead of just under the gate.
                    let mut best = mean_sup;
                    let mut polish = delta;
                    while iterations < MAX_ITERATIONS {
                        let cand: Vec<f64> = beta.iter().zip(&polish).map(|(b, d)| b + d).collect();
                        let (_, cand_score, _) = loglik_score(&design, &cand);
                        let cand_sup = cand_score.iter().fold(0.0f64, |m, v| m.max(v.abs())) / nf;
                        if !cand_sup.is_finite() || cand_sup >= best {
                            break;
                        }
                        beta = cand;
                        score = cand_score;
                        best = cand_sup;
                        iterations += 1;
                        match solve_newton(&information(&design, &beta), &score) {
                            Some(d) if max_lp_step(&design, &d) < DIVERGENT_LP_STEP => {
                                polish = d;
                            }
                            _ => break,
                        }
                    }
                }
                _ if iterations == 0 => {
                    return Err(GlmError::RankDeficient {
                        detail: format!("singular information matrix for formula `{}`", spec),
                    });
                }
                _ => {
                    return Err(GlmError::Separation {
                        detail: format!(
                            "score vanished while coefficients diverge on the {} risk set",
                            spec.role
                        ),
                    });
                }
            }
            break;
        }
        if max_lp > SEPARATION_LP_BOUND {
            return Err(GlmError::Separation {
                detail: format!(
                    "fitted probabilities within 1e-12 of 0 or 1 (|lp| = {:.1}) on the {} risk set",
                    max_lp, spec.role
                ),
            });
        }
        if iterations >= MAX_ITERATIONS {
            break;
        }

        let h = information(&design, &beta);
        let delta = match solve_newton(&h, &score) {
            Some(d) => d,
            None => {
                return if iterations == 0 {
                    Err(GlmError::RankDeficient {
                        detail: format!("singular information matrix for formula `{}`", spec),
                    })
                } else {
                    Err(GlmError::Separation {
                        detail: format!(
                            "information matrix collapsed during iteration on the {} risk set",
                            spec.role
                        ),
                    })
                };
            }
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_STEP_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let (cand_ll, cand_score, cand_lp) = loglik_score(&design, &cand);
            let cand_sup = cand_score.iter().fold(0.0f64, |m, v| m.max(v.abs())) / nf;
            let ok = if mean_sup > LIKELIHOOD_GUARD_FLOOR {
                cand_ll.is_finite() && cand_ll >= ll - 1e-12
            } else {
                // likelihood differences are below f64 rounding here
                cand_sup < mean_sup
            };
            if ok {
                accepted = Some((cand, cand_ll, cand_score, cand_lp));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((b, l, s, m)) => {
                beta = b;
                ll = l;
                score = s;
                max_lp = m;
            }
            None => break, // stalled: no direction or length makes progress
        }
        iterations += 1;
    }

    let max_abs_score = score.iter().fold(0.0f64, |m, v| m.max(v.abs())) / nf;
    Ok(LogisticFit {
        spec: spec.clone(),
        coefficients: beta,
        converged,
        iterations,
        max_abs_score,
        n_rows: design.n_rows,
        n_events,
    })
}

/// Log-likelihood of the risk set selected by `spec` at coefficients `beta`.
/// Exposed for numerical diagnostics (finite-difference score checks).
pub fn log_likelihood(
    table: &PersonTimeTable,
    spec: &DesignSpec,
    beta: &[f64],
) -> Result<f64, GlmError> {
    let design = build_design(table, spec)?;
    check_beta_len(&design, beta)?;
    Ok(loglik_score(&design, beta).0)
}

/// Score vector (gradient of the log-likelihood) at `beta`.
pub fn score(
    table: &PersonTimeTable,
    spec: &DesignSpec,
    beta: &[f64],
) -> Result<Vec<f64>, GlmError> {
    let design = build_design(table, spec)?;
    check_beta_len(&design, beta)?;
    Ok(loglik_score(&design, beta).1)
}

fn check_beta_len(design: &RiskSetDesign, beta: &[f64]) -> Result<(), GlmError> {
    if beta.len() != design.p {
        return Err(GlmError::ParseError {
            offset: 0,
            message: format!("expected {} coefficients, got {}", design.p, beta.len()),
        });
    }
    Ok(())
}
