//! Acceptance gate: one test per numbered claim the toolkit must satisfy,
//! so the harness prints one pass/fail line per criterion. Criteria 1 and 2
//! assert against results on the original trial extract, which cannot ship
//! with this repository; until that file is supplied they fail loudly with
//! BLOCKED instructions instead of being weakened or skipped silently.

use std::env;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use separisk::bootstrap::{
    percentile_engine, resample_subjects, BootstrapResult, ReplicateOutcome,
};
use separisk::causal_graph::{check_dismissible, d_separated, parse_graph, Dag};
use separisk::effects::separable_decomposition;
use separisk::event_history::{validate_and_expand, CovariateSchema, EventKind, SubjectRecord};
use separisk::gformula::{estimate_gformula_risk, EstimatorKind, RiskCurve, Standardization};
use separisk::glm::{
    fit_pooled_logistic, log_likelihood, parse_formula, score, DesignSpec, HazardModelSet,
    OutcomeRole,
};
use separisk::ipw::{compute_weights, estimate_ipw_risk, WeightKind};
use separisk::nonparam::aalen_johansen;
use separisk::simulate::{
    coverage_scenario, empirical_risk, illustrative_scenario, run_coverage, simulate_cohort,
    true_risk, ArmDesign,
};

const SEED: u64 = 20260819;

/// Hazard model formulas for the trial analysis: cubic time-varying
/// intercepts, a treatment effect that may vary quadratically with time,
/// and the four recorded baseline covariates.
const TRIAL_MODEL: &str = "1 + k + k^2 + k^3 + A + A*k + A*k^2 + \
                           activity_limited + age_band_mid + age_band_high + hg + hx";

/// Month of interest for the three-year summaries on the monthly grid.
const THREE_YEARS: u32 = 36;

fn trial_extract() -> Option<PathBuf> {
    if let Ok(path) = env::var("SEPARISK_PROSTATE_CSV") {
        return Some(PathBuf::from(path));
    }
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/prostate.csv");
    bundled.exists().then_some(bundled)
}

fn blocked_message(criterion: &str) -> String {
    format!(
        "BLOCKED: criterion {criterion} needs the original trial extract, which is not \
         redistributable with this repository and cannot be fetched from inside the sandbox. \
         Place the raw CSV (columns patno..sdate) at data/prostate.csv or set \
         SEPARISK_PROSTATE_CSV to its path and rerun; the test then asserts the published \
         three-year numbers with B = 500 bootstrap draws."
    )
}

/// Three-year risk summaries on the trial data: the point estimates and
/// percentile intervals for targets (1,1), (1,0), (0,0) under the
/// g-formula and the competing-hazard weighted estimator, in that order.
fn trial_three_year_summaries(data: &Path) -> (Vec<f64>, BootstrapResult) {
    let config = separisk::ingest_prostate::ProstateConfig::default();
    let cohort = separisk::ingest_prostate::load_prostate(data, &config).expect("ingest");
    let horizon = config.horizon_k;
    let y_spec = parse_formula(TRIAL_MODEL, OutcomeRole::EventY).expect("y formula");
    let d_spec = parse_formula(TRIAL_MODEL, OutcomeRole::CompetingD).expect("d formula");
    let c_spec = parse_formula(TRIAL_MODEL, OutcomeRole::CensorC).expect("c formula");

    let evaluate = |subjects: &[SubjectRecord]| -> Result<Vec<f64>, String> {
        let table = validate_and_expand(subjects, horizon).map_err(|e| e.to_string())?;
        let fit_y = fit_pooled_logistic(&table, &y_spec).map_err(|e| e.to_string())?;
        let fit_d = fit_pooled_logistic(&table, &d_spec).map_err(|e| e.to_string())?;
        let fit_c = fit_pooled_logistic(&table, &c_spec).map_err(|e| e.to_string())?;
        let models = HazardModelSet {
            fit_y,
            fit_d,
            fit_c: Some(fit_c),
            schema: table.schema().clone(),
            n_intervals: table.n_intervals(),
        };
        let mut values = Vec::with_capacity(6);
        for &(a_y, a_d) in &[(1u8, 1u8), (1, 0), (0, 0)] {
            let curve =
                estimate_gformula_risk(&models, &table, a_y, a_d, Standardization::AllSubjects)
                    .map_err(|e| e.to_string())?;
            values.push(curve.at(THREE_YEARS));
        }
        for &(a_y, a_d) in &[(1u8, 1u8), (1, 0), (0, 0)] {
            let weights = compute_weights(&models, &table, a_y, a_d, WeightKind::ForNu1)
                .map_err(|e| e.to_string())?;
            let curve = estimate_ipw_risk(&table, &weights, WeightKind::ForNu1)
                .map_err(|e| e.to_string())?;
            values.push(curve.at(THREE_YEARS));
        }
        Ok(values)
    };

    let point = evaluate(&cohort.subjects).expect("point estimation on the trial data");
    let subjects = cohort.subjects;
    let boot = percentile_engine(point.clone(), 500, 0.95, SEED, |_r, rng| {
        let resampled = resample_subjects(&subjects, rng);
        Ok(match evaluate(&resampled) {
            Ok(values) => ReplicateOutcome::Estimate(values),
            Err(detail) => ReplicateOutcome::Failed(detail),
        })
    })
    .expect("bootstrap on the trial data");
    (point, boot)
}

#[test]
fn criterion_1_trial_three_year_risks_match_the_published_table() {
    let Some(data) = trial_extract() else {
        panic!("{}", blocked_message("1"))
    };
    let started = Instant::now();
    let (point, boot) = trial_three_year_summaries(&data);

    // (estimate, lower, upper) per slot: g-formula then weighted, each
    // over targets (1,1), (1,0), (0,0).
    let expected = [
        (0.14, 0.08, 0.20),
        (0.15, 0.09, 0.21),
        (0.21, 0.15, 0.28),
        (0.17, 0.10, 0.24),
        (0.18, 0.10, 0.26),
        (0.23, 0.17, 0.35),
    ];
    let labels = [
        "g-formula (1,1)",
        "g-formula (1,0)",
        "g-formula (0,0)",
        "weighted (1,1)",
        "weighted (1,0)",
        "weighted (0,0)",
    ];
    for (i, &(est, lo, hi)) in expected.iter().enumerate() {
        assert!(
            (point[i] - est).abs() <= 0.03,
            "{}: point {:.3} vs published {est}",
            labels[i],
            point[i]
        );
        assert!(
            (boot.lower[i] - lo).abs() <= 0.04,
            "{}: lower bound {:.3} vs published {lo}",
            labels[i],
            boot.lower[i]
        );
        assert!(
            (boot.upper[i] - hi).abs() <= 0.04,
            "{}: upper bound {:.3} vs published {hi}",
            labels[i],
            boot.upper[i]
        );
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed <= Duration::from_secs(120),
        "trial reproduction took {elapsed:?}, budget is two minutes"
    );
    println!(
        "criterion 1: trial three-year risks and intervals match the published table \
         ({elapsed:?} including B = 500)"
    );
}

#[test]
fn criterion_2_trial_indirect_effect_is_small() {
    let Some(data) = trial_extract() else {
        panic!("{}", blocked_message("2"))
    };
    let (point, _) = trial_three_year_summaries(&data);
    let gform = (point[0] - point[1]).abs();
    let weighted = (point[3] - point[4]).abs();
    assert!(
        gform <= 0.03,
        "g-formula indirect magnitude {gform:.3} exceeds 0.03"
    );
    assert!(
        weighted <= 0.03,
        "weighted indirect magnitude {weighted:.3} exceeds 0.03"
    );
    println!(
        "criterion 2: three-year indirect effect magnitudes are {gform:.3} (g-formula) \
         and {weighted:.3} (weighted), within 0.03"
    );
}

/// One saturated-design dataset: a binary covariate, a grid of at most
/// four intervals, no censoring, and per-stratum subject counts that are
/// identical in both arms so that every estimator standardizes over the
/// same covariate distribution.
struct SmallDataset {
    subjects: Vec<SubjectRecord>,
    horizon: u32,
    strata_sizes: [u32; 2],
}

fn draw_small_dataset(rng: &mut ChaCha12Rng, attempt: u32) -> SmallDataset {
    let horizon = rng.random_range(1..=3u32);
    let schema = CovariateSchema::new(vec!["l1"]);
    let strata_sizes = [rng.random_range(15..=30u32), rng.random_range(15..=30u32)];
    let mut subjects = Vec::new();
    for (l, &m) in strata_sizes.iter().enumerate() {
        // Hazards differ freely by stratum and arm; only the design needs balance.
        let p_d: f64 = rng.random_range(0.10..0.25);
        let p_y: f64 = rng.random_range(0.20..0.35);
        for arm in 0..=1u8 {
            for i in 0..m {
                let mut kind = EventKind::AdminEnd;
                let mut interval = None;
                for j in 1..=horizon + 1 {
                    if rng.random_bool(p_d) {
                        kind = EventKind::Competing;
                        interval = Some(j);
                        break;
                    }
                    if rng.random_bool(p_y) {
                        kind = EventKind::Interest;
                        interval = Some(j);
                        break;
                    }
                }
                subjects.push(SubjectRecord {
                    id: format!("d{attempt}_l{l}_a{arm}_s{i}"),
                    arm,
                    schema: schema.clone(),
                    covariates: vec![l as f64],
                    event_kind: kind,
                    event_interval: interval,
                });
            }
        }
    }
    SmallDataset {
        subjects,
        horizon,
        strata_sizes,
    }
}

/// A formula with one parameter per (arm, stratum, interval) cell of a
/// grid with `grid` intervals: the full interaction basis of A, l1, and a
/// degree grid-1 polynomial in k.
fn saturated_formula(grid: u32) -> String {
    let mut terms = vec!["1".to_string(), "A".into(), "l1".into(), "A*l1".into()];
    for p in 1..grid {
        let kpow = if p == 1 {
            "k".to_string()
        } else {
            format!("k^{p}")
        };
        for prefix in ["", "A*", "l1*", "A*l1*"] {
            terms.push(format!("{prefix}{kpow}"));
        }
    }
    terms.join(" + ")
}

#[test]
fn criterion_3_saturated_fits_collapse_every_estimator_to_one_answer() {
    let mut rng = ChaCha12Rng::seed_from_u64(SEED ^ 3);
    let mut accepted = 0u32;
    let mut attempts = 0u32;
    let mut max_gap = 0.0f64;
    let mut max_aj_gap = 0.0f64;
    while accepted < 50 {
        attempts += 1;
        assert!(
            attempts <= 600,
            "only {accepted} of 50 datasets accepted in 600 attempts"
        );
        let data = draw_small_dataset(&mut rng, attempts);
        let table = validate_and_expand(&data.subjects, data.horizon).expect("expand");
        let formula = saturated_formula(table.n_intervals());
        let y_spec = parse_formula(&formula, OutcomeRole::EventY).expect("y formula");
        let d_spec = parse_formula(&formula, OutcomeRole::CompetingD).expect("d formula");
        // A saturated fit fails when some cell is empty or has a constant
        // outcome; such draws carry no information about agreement, redraw.
        let (Ok(fit_y), Ok(fit_d)) = (
            fit_pooled_logistic(&table, &y_spec),
            fit_pooled_logistic(&table, &d_spec),
        ) else {
            continue;
        };
        let models = HazardModelSet {
            fit_y,
            fit_d,
            fit_c: None,
            schema: table.schema().clone(),
            n_intervals: table.n_intervals(),
        };
        for &(a_y, a_d) in &[(1u8, 1u8), (0, 0), (1, 0), (0, 1)] {
            let gform =
                estimate_gformula_risk(&models, &table, a_y, a_d, Standardization::AllSubjects)
                    .expect("gformula");
            for kind in [WeightKind::ForNu1, WeightKind::ForNu2] {
                let weights = compute_weights(&models, &table, a_y, a_d, kind).expect("weights");
                let curve = estimate_ipw_risk(&table, &weights, kind).expect("weighted estimate");
                for (g, w) in gform.values().iter().zip(curve.values()) {
                    let gap = (g - w).abs();
                    max_gap = max_gap.max(gap);
                    assert!(
                        gap <= 1e-10,
                        "dataset {attempts}, target ({a_y},{a_d}), {kind:?}: \
                         saturated estimators disagree by {gap:.3e}"
                    );
                }
            }
            // On the diagonal the estimate must also equal the mixture of
            // stratified nonparametric cumulative incidences, weighted by
            // the pooled covariate distribution.
            if a_y == a_d {
                let n_total: u32 = data.strata_sizes.iter().map(|m| 2 * m).sum();
                let mut mixture = vec![0.0f64; table.n_intervals() as usize];
                for (l, &m) in data.strata_sizes.iter().enumerate() {
                    let stratum: Vec<SubjectRecord> = data
                        .subjects
                        .iter()
                        .filter(|s| s.covariates[0] == l as f64)
                        .cloned()
                        .collect();
                    let sub_table = validate_and_expand(&stratum, data.horizon).expect("stratum");
                    let cif = aalen_johansen(&sub_table, a_y).expect("stratified estimate");
                    let weight = f64::from(2 * m) / f64::from(n_total);
                    for (slot, v) in mixture.iter_mut().zip(&cif.cif_y) {
                        *slot += weight * v;
                    }
                }
                for (g, m) in gform.values().iter().zip(&mixture) {
                    let gap = (g - m).abs();
                    max_aj_gap = max_aj_gap.max(gap);
                    assert!(
                        gap <= 1e-10,
                        "dataset {attempts}, arm {a_y}: saturated estimate diverges from \
                         the stratified nonparametric mixture by {gap:.3e}"
                    );
                }
            }
        }
        accepted += 1;
    }
    println!(
        "criterion 3: 50 saturated datasets ({attempts} draws) agree across all three \
         estimators (max gap {max_gap:.2e}) and match the stratified nonparametric \
         mixture on the diagonal (max gap {max_aj_gap:.2e})"
    );
}

#[test]
fn criterion_4_effect_decomposition_is_exact_everywhere() {
    // A spread of generating processes: the nominal coverage scenario, the
    // scenario with a violated condition, and an illustrative process.
    let cohorts = vec![
        (
            coverage_scenario(1).expect("preset").dgp,
            "1 + A + l1 + l2",
            "1 + A + l1",
            600,
            41,
        ),
        (
            coverage_scenario(4).expect("preset").dgp,
            "1 + A + l1 + l2",
            "1 + A + l1",
            600,
            42,
        ),
        (
            illustrative_scenario(3).expect("preset"),
            "1 + A + l1",
            "1 + A + l1",
            400,
            43,
        ),
    ];
    let mut max_gap = 0.0f64;
    for (dgp, y_formula, d_formula, n, seed) in cohorts {
        let cohort = simulate_cohort(&dgp, n, seed, ArmDesign::TwoArm).expect("cohort");
        let table = validate_and_expand(&cohort.subjects, dgp.n_intervals() - 1).expect("expand");
        let y_spec = parse_formula(y_formula, OutcomeRole::EventY).expect("y formula");
        let d_spec = parse_formula(d_formula, OutcomeRole::CompetingD).expect("d formula");
        let models = HazardModelSet {
            fit_y: fit_pooled_logistic(&table, &y_spec).expect("y fit"),
            fit_d: fit_pooled_logistic(&table, &d_spec).expect("d fit"),
            fit_c: None,
            schema: table.schema().clone(),
            n_intervals: table.n_intervals(),
        };
        let curve = |a_y: u8, a_d: u8, kind: Option<WeightKind>| -> RiskCurve {
            match kind {
                None => {
                    estimate_gformula_risk(&models, &table, a_y, a_d, Standardization::AllSubjects)
                        .expect("gformula")
                }
                Some(kind) => {
                    let weights =
                        compute_weights(&models, &table, a_y, a_d, kind).expect("weights");
                    estimate_ipw_risk(&table, &weights, kind).expect("weighted estimate")
                }
            }
        };
        for kind in [None, Some(WeightKind::ForNu1), Some(WeightKind::ForNu2)] {
            let r11 = curve(1, 1, kind);
            let r00 = curve(0, 0, kind);
            for middle_pair in [(1u8, 0u8), (0, 1)] {
                let middle = curve(middle_pair.0, middle_pair.1, kind);
                let (total, direct, indirect) =
                    separable_decomposition(&r11, &middle, &r00).expect("decomposition");
                for ((t, d), i) in total
                    .values()
                    .iter()
                    .zip(direct.values())
                    .zip(indirect.values())
                {
                    let gap = (t - (d + i)).abs();
                    max_gap = max_gap.max(gap);
                    assert!(
                        gap <= 1e-12,
                        "total and direct + indirect split by {gap:.2e} \
                         (estimator {kind:?}, middle {middle_pair:?}, seed {seed})"
                    );
                }
            }
        }
    }
    println!(
        "criterion 4: total = direct + indirect holds to 1e-12 across estimators, \
         middles, and generating processes (max gap {max_gap:.2e})"
    );
}

#[test]
fn criterion_5_nominal_scenario_reproduces_reference_coverage() {
    let started = Instant::now();
    let table = run_coverage(1, 400, 200, 200, &[25, 75, 100], 0.95, SEED).expect("coverage study");
    // Reference coverage of 95% intervals in the correctly specified
    // scenario, by target, estimator, and grid point.
    let expected: &[(u8, u8, EstimatorKind, [(u32, f64); 3])] = &[
        (
            1,
            1,
            EstimatorKind::Gformula,
            [(25, 0.93), (75, 0.94), (100, 0.95)],
        ),
        (
            1,
            1,
            EstimatorKind::Nonparam,
            [(25, 0.95), (75, 0.94), (100, 0.95)],
        ),
        (
            0,
            0,
            EstimatorKind::Gformula,
            [(25, 0.92), (75, 0.93), (100, 0.94)],
        ),
        (
            0,
            0,
            EstimatorKind::Nonparam,
            [(25, 0.95), (75, 0.95), (100, 0.94)],
        ),
        (
            1,
            0,
            EstimatorKind::Gformula,
            [(25, 0.94), (75, 0.96), (100, 0.95)],
        ),
        (
            1,
            0,
            EstimatorKind::Ipw1,
            [(25, 0.95), (75, 0.95), (100, 0.94)],
        ),
        (
            1,
            0,
            EstimatorKind::Ipw2,
            [(25, 0.95), (75, 0.95), (100, 0.96)],
        ),
        (
            0,
            1,
            EstimatorKind::Gformula,
            [(25, 0.94), (75, 0.93), (100, 0.93)],
        ),
        (
            0,
            1,
            EstimatorKind::Ipw1,
            [(25, 0.95), (75, 0.90), (100, 0.92)],
        ),
        (
            0,
            1,
            EstimatorKind::Ipw2,
            [(25, 0.92), (75, 0.94), (100, 0.94)],
        ),
    ];
    let mut worst: (f64, String) = (0.0, String::new());
    for &(a_y, a_d, estimator, ref cells) in expected {
        for &(k, reference) in cells {
            let got = table
                .coverage(a_y, a_d, estimator, k)
                .unwrap_or_else(|| panic!("no coverage cell ({a_y},{a_d},{estimator},{k})"));
            let gap = (got - reference).abs();
            if gap > worst.0 {
                worst = (
                    gap,
                    format!("({a_y},{a_d}) {estimator} k={k}: {got:.3} vs {reference}"),
                );
            }
            assert!(
                gap <= 0.05,
                "coverage ({a_y},{a_d}) {estimator} k={k}: {got:.3} strays {gap:.3} \
                 from the reference {reference}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed <= Duration::from_secs(1800),
        "coverage study took {elapsed:?}, budget is thirty minutes"
    );
    println!(
        "criterion 5: all 30 reference coverage cells within 0.05 \
         (worst {:.3} at {}; {elapsed:?} for 200 replicates x B = 200)",
        worst.0, worst.1
    );
}

#[test]
fn criterion_6_broken_condition_destroys_coverage_for_its_target_only() {
    let table = run_coverage(4, 400, 200, 200, &[100], 0.95, SEED).expect("coverage study");
    let lost = table
        .coverage(0, 1, EstimatorKind::Gformula, 100)
        .expect("cell (0,1) gformula k=100");
    let kept = table
        .coverage(1, 0, EstimatorKind::Gformula, 100)
        .expect("cell (1,0) gformula k=100");
    assert!(
        lost <= 0.15,
        "the unidentified target should lose coverage, got {lost:.3} at k=100"
    );
    assert!(
        kept >= 0.88,
        "the still-identified target should keep coverage, got {kept:.3} at k=100"
    );
    println!(
        "criterion 6: with one condition broken, coverage is {lost:.3} for the affected \
         target and {kept:.3} for the unaffected one at the end of follow-up"
    );
}

#[test]
fn criterion_7_large_cohorts_match_their_exact_risks() {
    let dgp = coverage_scenario(1).expect("preset").dgp;
    let cohort = simulate_cohort(&dgp, 100_000, SEED ^ 7, ArmDesign::FourArm).expect("cohort");
    let mut worst = 0.0f64;
    for &(a_y, a_d) in &[(1u8, 1u8), (0, 0), (1, 0), (0, 1)] {
        let (empirical, cell) = empirical_risk(&cohort, a_y, a_d).expect("cell estimate");
        let exact = true_risk(&dgp, a_y, a_d).expect("exact risk");
        for k in [25u32, 75, 100] {
            let p = exact.at(k);
            let se = (p * (1.0 - p) / f64::from(cell)).sqrt();
            let gap = (empirical.at(k) - p).abs();
            worst = worst.max(gap / se);
            assert!(
                gap <= 3.0 * se,
                "cell ({a_y},{a_d}) k={k}: empirical {:.4} vs exact {p:.4} is {:.1} SEs off",
                empirical.at(k),
                gap / se
            );
        }
    }
    println!(
        "criterion 7: empirical incidence tracks the exact curves in all four cells \
         (worst deviation {worst:.2} Monte Carlo SEs)"
    );
}

#[test]
fn criterion_8_fitted_gradients_vanish_and_match_finite_differences() {
    let dgp = coverage_scenario(1).expect("preset").dgp;
    let cohort = simulate_cohort(&dgp, 400, SEED ^ 8, ArmDesign::TwoArm).expect("cohort");
    let table = validate_and_expand(&cohort.subjects, dgp.n_intervals() - 1).expect("expand");

    let check = |spec: &DesignSpec| -> f64 {
        let fit = fit_pooled_logistic(&table, spec).expect("fit");
        let mut worst = 0.0f64;
        // At the solution and at a deliberately wrong point: the analytic
        // score must track central finite differences of the log-likelihood.
        for shift in [0.0, 0.05] {
            let beta: Vec<f64> = fit.coefficients.iter().map(|b| b + shift).collect();
            let analytic = score(&table, spec, &beta).expect("score");
            for j in 0..beta.len() {
                let h = 1e-6 * beta[j].abs().max(1.0);
                let mut up = beta.clone();
                up[j] += h;
                let mut down = beta.clone();
                down[j] -= h;
                let fd = (log_likelihood(&table, spec, &up).expect("loglik")
                    - log_likelihood(&table, spec, &down).expect("loglik"))
                    / (2.0 * h);
                let rel = (analytic[j] - fd).abs() / fd.abs().max(1.0);
                worst = worst.max(rel);
                assert!(
                    rel < 1e-4,
                    "coefficient {j} at shift {shift}: score {:.6e} vs finite difference \
                     {fd:.6e} (relative error {rel:.2e})",
                    analytic[j]
                );
            }
        }
        worst
    };
    let y_spec = parse_formula("1 + A + k + l1 + l2", OutcomeRole::EventY).expect("y formula");
    let d_spec = parse_formula("1 + A + l1", OutcomeRole::CompetingD).expect("d formula");
    let worst = check(&y_spec).max(check(&d_spec));

    // Intercept-only closed form: the fitted intercept is the log-odds of
    // the pooled event fraction. Three events in 3 + 2 * 4 = 11 rows.
    let schema = CovariateSchema::empty();
    let mut subjects = Vec::new();
    for i in 0..3 {
        subjects.push(SubjectRecord {
            id: format!("e{i}"),
            arm: (i % 2) as u8,
            schema: schema.clone(),
            covariates: vec![],
            event_kind: EventKind::Interest,
            event_interval: Some(1),
        });
    }
    for i in 0..4 {
        subjects.push(SubjectRecord {
            id: format!("s{i}"),
            arm: (i % 2) as u8,
            schema: schema.clone(),
            covariates: vec![],
            event_kind: EventKind::AdminEnd,
            event_interval: None,
        });
    }
    let tiny = validate_and_expand(&subjects, 1).expect("expand");
    let spec = parse_formula("1", OutcomeRole::EventY).expect("intercept formula");
    let fit = fit_pooled_logistic(&tiny, &spec).expect("intercept fit");
    let closed_form = (3.0f64 / 8.0).ln();
    let gap = (fit.coefficients[0] - closed_form).abs();
    assert!(
        gap <= 1e-8,
        "intercept-only fit {:.10} vs closed form {closed_form:.10}",
        fit.coefficients[0]
    );
    println!(
        "criterion 8: score matches finite differences (worst relative error {worst:.2e}) \
         and the intercept-only fit hits its closed form within {gap:.1e}"
    );
}

/// Literal path-by-path openness check, independent of the library's
/// reachability algorithm: enumerate every simple undirected path and test
/// the definition directly on each one.
mod exhaustive {
    use std::collections::VecDeque;

    pub struct Graph {
        pub n: usize,
        pub edge: Vec<Vec<bool>>,
    }

    impl Graph {
        pub fn new(n: usize, edges: &[(usize, usize)]) -> Graph {
            let mut edge = vec![vec![false; n]; n];
            for &(a, b) in edges {
                edge[a][b] = true;
            }
            Graph { n, edge }
        }

        /// Nodes with a directed path into the conditioning set, including
        /// the set itself: exactly the colliders that conditioning opens.
        fn opened_colliders(&self, z: &[bool]) -> Vec<bool> {
            let mut opened = z.to_vec();
            let mut queue: VecDeque<usize> = (0..self.n).filter(|&v| z[v]).collect();
            while let Some(v) = queue.pop_front() {
                for u in 0..self.n {
                    if self.edge[u][v] && !opened[u] {
                        opened[u] = true;
                        queue.push_back(u);
                    }
                }
            }
            opened
        }

        pub fn d_connected(&self, x: usize, y: usize, z: &[bool]) -> bool {
            let opened = self.opened_colliders(z);
            let mut path = vec![x];
            let mut on_path = vec![false; self.n];
            on_path[x] = true;
            self.extend(y, z, &opened, &mut path, &mut on_path)
        }

        fn extend(
            &self,
            y: usize,
            z: &[bool],
            opened: &[bool],
            path: &mut Vec<usize>,
            on_path: &mut Vec<bool>,
        ) -> bool {
            let last = *path.last().expect("path is never empty");
            if last == y {
                return self.is_open(path, z, opened);
            }
            for next in 0..self.n {
                if on_path[next] || (!self.edge[last][next] && !self.edge[next][last]) {
                    continue;
                }
                path.push(next);
                on_path[next] = true;
                if self.extend(y, z, opened, path, on_path) {
                    path.pop();
                    on_path[next] = false;
                    return true;
                }
                path.pop();
                on_path[next] = false;
            }
            false
        }

        fn is_open(&self, path: &[usize], z: &[bool], opened: &[bool]) -> bool {
            for i in 1..path.len() - 1 {
                let into_from_left = self.edge[path[i - 1]][path[i]];
                let into_from_right = self.edge[path[i + 1]][path[i]];
                if into_from_left && into_from_right {
                    if !opened[path[i]] {
                        return false;
                    }
                } else if z[path[i]] {
                    return false;
                }
            }
            true
        }
    }
}

#[test]
fn criterion_9_graph_queries_match_exhaustive_path_enumeration() {
    let mut rng = ChaCha12Rng::seed_from_u64(SEED ^ 9);
    let mut queries = 0u32;
    let mut separated = 0u32;
    for _ in 0..200 {
        let n = rng.random_range(3..=8usize);
        let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.35) {
                    edges.push((i, j));
                }
            }
        }
        let oracle = exhaustive::Graph::new(n, &edges);
        let dag = Dag::new(
            names.clone(),
            edges
                .iter()
                .map(|&(a, b)| (names[a].clone(), names[b].clone(), false))
                .collect(),
        )
        .expect("random graph is acyclic by construction");
        for _ in 0..3 {
            let x = rng.random_range(0..n);
            let mut y = rng.random_range(0..n);
            while y == x {
                y = rng.random_range(0..n);
            }
            let mut z = vec![false; n];
            for (v, slot) in z.iter_mut().enumerate() {
                if v != x && v != y && rng.random_bool(0.3) {
                    *slot = true;
                }
            }
            let z_names: Vec<&str> = (0..n)
                .filter(|&v| z[v])
                .map(|v| names[v].as_str())
                .collect();
            let library = d_separated(&dag, &[&names[x]], &[&names[y]], &z_names)
                .expect("query on valid nodes");
            let literal = !oracle.d_connected(x, y, &z);
            assert_eq!(
                library, literal,
                "graph with edges {edges:?}: query {} _||_ {} | {z_names:?} disagrees",
                names[x], names[y]
            );
            queries += 1;
            separated += u32::from(library);
        }
    }

    // The audited structures must reproduce their known verdicts: the
    // shared-cause structure violates both conditions somewhere on the
    // grid, the others satisfy every condition at every transition.
    let fixture = |name: &str| -> String {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../graphs")
            .join(name);
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
    };
    let report = |name: &str| {
        let dag = parse_graph(&fixture(name)).expect("fixture parses");
        check_dismissible(&dag, 2).expect("fixture audit")
    };
    let shared_cause = report("fig2.cg");
    assert!(
        shared_cause.entries.iter().any(|e| !e.delta1_holds),
        "the shared-cause structure must violate the first condition"
    );
    assert!(
        shared_cause.entries.iter().any(|e| !e.delta2_holds),
        "the shared-cause structure must violate the second condition"
    );
    for name in ["fig3.cg", "fig4.cg", "fig7.cg"] {
        assert!(
            report(name).all_hold(),
            "{name} must satisfy both conditions everywhere"
        );
    }
    println!(
        "criterion 9: {queries} random queries agree with exhaustive enumeration \
         ({separated} separated), and all four audited structures reproduce their verdicts"
    );
}
