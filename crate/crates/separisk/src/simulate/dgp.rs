//! Data generation and analytic truth. Per-interval event probabilities
//! are alpha * expit(linear index), so the scale alpha caps the hazard
//! while the index moves it within (0, alpha). Within an interval the
//! competing event resolves first and blocks the event of interest for
//! good; no censoring is generated.

use std::io::Write;

use rand::Rng;

use crate::event_history::{format_float, CovariateSchema, EventKind, SubjectRecord};
use crate::gformula::{EstimatorKind, RiskCurve};
use crate::glm::expit;
use crate::seeds::{stream_rng, PURPOSE_SIMULATE};

use super::SimError;

/// Linear coefficients of one hazard's logistic index. The `a_y` and
/// `a_d` slots are the effects of each treatment component on this
/// hazard, whichever hazard the block is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HazardIndex {
    pub intercept: f64,
    /// Coefficient on elapsed intervals; the hazard for an event in
    /// 1-based interval j uses time value j - 1.
    pub time: f64,
    pub a_y: f64,
    pub a_d: f64,
    pub l1: f64,
    pub l2: f64,
    pub a_y_l1: f64,
    pub a_d_l1: f64,
}

impl HazardIndex {
    fn value(&self, time: f64, a_y: f64, a_d: f64, l1: f64, l2: f64) -> f64 {
        self.intercept
            + self.time * time
            + self.a_y * a_y
            + self.a_d * a_d
            + self.l1 * l1
            + self.l2 * l2
            + self.a_y_l1 * a_y * l1
            + self.a_d_l1 * a_d * l1
    }

    fn all_finite(&self) -> bool {
        [
            self.intercept,
            self.time,
            self.a_y,
            self.a_d,
            self.l1,
            self.l2,
            self.a_y_l1,
            self.a_d_l1,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Full generating process for a two-covariate competing-event cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpCoefficients {
    /// Scale of the event-of-interest hazard.
    pub alpha_y: f64,
    /// Scale of the competing-event hazard.
    pub alpha_d: f64,
    pub y_hazard: HazardIndex,
    pub d_hazard: HazardIndex,
    /// Pr(L1 = 1).
    pub l1_prob: f64,
    /// Pr(L2 = 1 | L1), indexed by L1.
    pub l2_prob: [f64; 2],
    /// Horizon: events can occur in intervals 1..=k_horizon+1.
    pub k_horizon: u32,
}

impl DgpCoefficients {
    pub fn n_intervals(&self) -> u32 {
        self.k_horizon + 1
    }

    /// Event-of-interest hazard in 1-based interval `j`.
    pub fn hazard_y(&self, j: u32, a_y: u8, a_d: u8, l1: f64, l2: f64) -> f64 {
        self.alpha_y
            * expit(
                self.y_hazard
                    .value(f64::from(j - 1), f64::from(a_y), f64::from(a_d), l1, l2),
            )
    }

    /// Competing-event hazard in 1-based interval `j`.
    pub fn hazard_d(&self, j: u32, a_y: u8, a_d: u8, l1: f64, l2: f64) -> f64 {
        self.alpha_d
            * expit(
                self.d_hazard
                    .value(f64::from(j - 1), f64::from(a_y), f64::from(a_d), l1, l2),
            )
    }

    /// Probability-scale validity, decided by enumerating every reachable
    /// (a_y, a_d, l1, l2, interval) combination rather than by a bound on
    /// the scales: a scale above 1 is fine when no reachable index pushes
    /// the product past 1.
    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |detail: String| Err(SimError::InvalidDgp { detail });
        if !self.alpha_y.is_finite() || !self.alpha_d.is_finite() {
            return invalid("non-finite hazard scale".into());
        }
        if !self.y_hazard.all_finite() || !self.d_hazard.all_finite() {
            return invalid("non-finite hazard coefficient".into());
        }
        if !(0.0..=1.0).contains(&self.l1_prob) {
            return invalid(format!("Pr(L1=1) = {} is not a probability", self.l1_prob));
        }
        for (l1, p) in self.l2_prob.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return invalid(format!("Pr(L2=1 | L1={l1}) = {p} is not a probability"));
            }
        }
        if self.k_horizon < 1 {
            return invalid("horizon must be at least 1".into());
        }
        for a_y in 0..=1u8 {
            for a_d in 0..=1u8 {
                for l1 in 0..=1u8 {
                    for l2 in 0..=1u8 {
                        for j in 1..=self.n_intervals() {
                            let hy = self.hazard_y(j, a_y, a_d, f64::from(l1), f64::from(l2));
                            let hd = self.hazard_d(j, a_y, a_d, f64::from(l1), f64::from(l2));
                            if !(0.0..=1.0).contains(&hy) {
                                return invalid(format!(
                                    "event hazard {hy} lies outside [0,1] at j={j}, \
                                     a_y={a_y}, a_d={a_d}, l1={l1}, l2={l2}"
                                ));
                            }
                            if !(0.0..=1.0).contains(&hd) {
                                return invalid(format!(
                                    "competing hazard {hd} lies outside [0,1] at j={j}, \
                                     a_y={a_y}, a_d={a_d}, l1={l1}, l2={l2}"
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Randomization design for the simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmDesign {
    /// One treatment A ~ Bernoulli(1/2); both components equal A.
    TwoArm,
    /// Components drawn independently, each Bernoulli(1/2).
    FourArm,
}

/// A simulated cohort plus the component assignment behind each subject.
/// `subjects[i].arm` holds the a_y component; `components[i]` holds the
/// full (a_y, a_d) pair (they differ only under `FourArm`) and is what
/// cell-level summaries group by.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub subjects: Vec<SubjectRecord>,
    pub components: Vec<(u8, u8)>,
    /// Grid length the cohort was generated over.
    pub n_intervals: u32,
}

fn draw<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn check_binary(v: u8, name: &str) -> Result<(), SimError> {
    if v > 1 {
        return Err(SimError::InvalidRequest {
            detail: format!("{name} must be 0 or 1, got {v}"),
        });
    }
    Ok(())
}

/// Draws a cohort of `n` subjects. Subject i consumes its own RNG stream,
/// so cohorts reproduce exactly regardless of iteration or thread order
/// and resizing a cohort never re-randomizes existing subjects.
pub fn simulate_cohort(
    dgp: &DgpCoefficients,
    n: u32,
    seed: u64,
    design: ArmDesign,
) -> Result<SimulatedCohort, SimError> {
    dgp.validate()?;
    if n == 0 {
        return Err(SimError::InvalidRequest {
            detail: "cohort size must be at least 1".into(),
        });
    }
    let schema = CovariateSchema::new(vec!["l1", "l2"]);
    let mut subjects = Vec::with_capacity(n as usize);
    let mut components = Vec::with_capacity(n as usize);
    for i in 0..n {
        let mut rng = stream_rng(seed, PURPOSE_SIMULATE, 0, i);
        let l1 = draw(&mut rng, dgp.l1_prob);
        let l2 = draw(&mut rng, dgp.l2_prob[usize::from(l1)]);
        let (a_y, a_d) = match design {
            ArmDesign::TwoArm => {
                let a = u8::from(draw(&mut rng, 0.5));
                (a, a)
            }
            ArmDesign::FourArm => (u8::from(draw(&mut rng, 0.5)), u8::from(draw(&mut rng, 0.5))),
        };
        let (l1f, l2f) = (f64::from(u8::from(l1)), f64::from(u8::from(l2)));
        let mut kind = EventKind::AdminEnd;
        let mut interval = None;
        for j in 1..=dgp.n_intervals() {
            if draw(&mut rng, dgp.hazard_d(j, a_y, a_d, l1f, l2f)) {
                kind = EventKind::Competing;
                interval = Some(j);
                break;
            }
            if draw(&mut rng, dgp.hazard_y(j, a_y, a_d, l1f, l2f)) {
                kind = EventKind::Interest;
                interval = Some(j);
                break;
            }
        }
        subjects.push(SubjectRecord {
            id: format!("s{i}"),
            arm: a_y,
            schema: schema.clone(),
            covariates: vec![l1f, l2f],
            event_kind: kind,
            event_interval: interval,
        });
        components.push((a_y, a_d));
    }
    Ok(SimulatedCohort {
        subjects,
        components,
        n_intervals: dgp.n_intervals(),
    })
}

/// Exact risk of the event of interest under components (a_y, a_d):
/// state probabilities propagated interval by interval within each
/// (L1, L2) cell and mixed by the covariate distribution, with no Monte
/// Carlo error. Tagged `Gformula` because the curve is the exact
/// standardized g-functional of the generating hazards.
pub fn true_risk(dgp: &DgpCoefficients, a_y: u8, a_d: u8) -> Result<RiskCurve, SimError> {
    dgp.validate()?;
    check_binary(a_y, "a_y")?;
    check_binary(a_d, "a_d")?;
    let mut values = vec![0.0f64; dgp.n_intervals() as usize];
    for l1 in 0..=1u8 {
        for l2 in 0..=1u8 {
            let p1 = if l1 == 1 {
                dgp.l1_prob
            } else {
                1.0 - dgp.l1_prob
            };
            let p2_given = dgp.l2_prob[usize::from(l1)];
            let p2 = if l2 == 1 { p2_given } else { 1.0 - p2_given };
            let weight = p1 * p2;
            if weight == 0.0 {
                continue;
            }
            let (l1f, l2f) = (f64::from(l1), f64::from(l2));
            let mut surv = 1.0f64;
            let mut cum = 0.0f64;
            for j in 1..=dgp.n_intervals() {
                let hd = dgp.hazard_d(j, a_y, a_d, l1f, l2f);
                let hy = dgp.hazard_y(j, a_y, a_d, l1f, l2f);
                cum += surv * (1.0 - hd) * hy;
                surv *= (1.0 - hd) * (1.0 - hy);
                values[(j - 1) as usize] += weight * cum;
            }
        }
    }
    Ok(RiskCurve::new(EstimatorKind::Gformula, a_y, a_d, values)?)
}

/// Empirical cumulative incidence of the event of interest among the
/// subjects assigned the given component pair, with the cell size.
/// Tagged `Nonparam`: with no censoring this is the sample CDF of the
/// interest-event time.
pub fn empirical_risk(
    cohort: &SimulatedCohort,
    a_y: u8,
    a_d: u8,
) -> Result<(RiskCurve, u32), SimError> {
    check_binary(a_y, "a_y")?;
    check_binary(a_d, "a_d")?;
    let mut cell = 0u32;
    let mut counts = vec![0u32; cohort.n_intervals as usize];
    for (subject, &(ay, ad)) in cohort.subjects.iter().zip(&cohort.components) {
        if (ay, ad) != (a_y, a_d) {
            continue;
        }
        cell += 1;
        if subject.event_kind == EventKind::Interest {
            let j = subject
                .event_interval
                .expect("interest event carries its interval");
            counts[(j - 1) as usize] += 1;
        }
    }
    if cell == 0 {
        return Err(SimError::EmptyCell { a_y, a_d });
    }
    let mut values = Vec::with_capacity(counts.len());
    let mut acc = 0.0f64;
    for c in counts {
        acc += f64::from(c) / f64::from(cell);
        values.push(acc);
    }
    Ok((
        RiskCurve::new(EstimatorKind::Nonparam, a_y, a_d, values)?,
        cell,
    ))
}

/// Writes the exact risk of all four component pairs as long-format rows
/// `a_y,a_d,k,risk`.
pub fn write_truth_curves_csv<W: Write>(dgp: &DgpCoefficients, mut out: W) -> Result<(), SimError> {
    writeln!(out, "a_y,a_d,k,risk")?;
    for &(a_y, a_d) in &[(1u8, 1u8), (0, 0), (1, 0), (0, 1)] {
        let curve = true_risk(dgp, a_y, a_d)?;
        for (i, v) in curve.values().iter().enumerate() {
            writeln!(out, "{},{},{},{}", a_y, a_d, i + 1, format_float(*v))?;
        }
    }
    Ok(())
}
