//! Loader for the public prostate-cancer trial extract (Byar & Greene),
//! recoding it into [`SubjectRecord`]s for the competing-risks analysis.
//!
//! The source file is the plain-CSV export of the trial as distributed by
//! public biostatistics archives: one row per patient with treatment label
//! `rx`, follow-up months `dtime`, vital `status`, and baseline covariates.
//! Two arms are kept (placebo and high-dose estrogen by default); death
//! from prostate cancer is the event of interest, death from any other
//! cause the competing event, and patients alive at last follow-up are
//! censored.
//!
//! Interval mapping at `interval_months = m`: a death during month t lands
//! in interval ceil(t/m); an `alive` row confirms event-free follow-up
//! through month t, so censoring lands in the first unobserved interval
//! floor(t/m)+1. Anything past interval K+1 becomes ADMIN_END.
//!
//! Covariates follow the trial analysis: daily activity dichotomized
//! (normal vs any limitation), age in three bands entered as two
//! indicators, hemoglobin continuous, and the prior-cardiovascular-disease
//! indicator as recorded. Rows missing any covariate are dropped and
//! counted (complete case); every recode is tallied in an audit that can
//! be serialized to JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::event_history::{CovariateSchema, EventKind, SubjectRecord};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("status {status:?} for patient {id} has no event assignment")]
    UnmappedStatus { id: String, status: String },
    #[error("arm codes must map exactly two treatment labels to arms 0 and 1")]
    BadArmCodes,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed row for patient {id}: {detail}")]
    MalformedRow { id: String, detail: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Arm selection, interval grid, and covariate recodes.
#[derive(Debug, Clone)]
pub struct ProstateConfig {
    /// Treatment labels to keep, with their analysis arm codes; rows with
    /// any other label are dropped. Exactly one label per arm 0 and 1.
    pub arm_codes: Vec<(String, u8)>,
    /// Months per interval.
    pub interval_months: u32,
    /// Highest hazard index K; subjects contribute intervals 1..=K+1.
    pub horizon_k: u32,
    /// Age band cutpoints: below the first is the reference band, the two
    /// bands at or past a cutpoint enter as indicators.
    pub age_cutpoints: [f64; 2],
    /// Daily-activity label coding 0; any other recorded label codes 1.
    pub unrestricted_activity: String,
    /// Status values mapping to the event of interest. Other `dead - *`
    /// values map to the competing event, `alive` to censoring.
    pub interest_statuses: Vec<String>,
    /// Expected kept-arm sizes (indexed by arm code); a mismatch is
    /// reported as an audit warning, not an error.
    pub expected_arm_sizes: Option<[usize; 2]>,
}

impl Default for ProstateConfig {
    fn default() -> Self {
        ProstateConfig {
            arm_codes: vec![("placebo".into(), 0), ("5.0 mg estrogen".into(), 1)],
            interval_months: 1,
            horizon_k: 59,
            age_cutpoints: [75.0, 80.0],
            unrestricted_activity: "normal activity".into(),
            interest_statuses: vec!["dead - prostatic ca".into()],
            expected_arm_sizes: Some([127, 125]),
        }
    }
}

impl ProstateConfig {
    fn validate(&self) -> Result<(), IngestError> {
        let mut codes: Vec<u8> = self.arm_codes.iter().map(|(_, c)| *c).collect();
        codes.sort();
        if codes != [0, 1] {
            return Err(IngestError::BadArmCodes);
        }
        if self.interval_months == 0 {
            return Err(IngestError::InvalidConfig(
                "interval_months must be positive".into(),
            ));
        }
        if self.horizon_k == 0 {
            return Err(IngestError::InvalidConfig(
                "horizon_k must be positive".into(),
            ));
        }
        let [lo, hi] = self.age_cutpoints;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(IngestError::InvalidConfig(
                "age cutpoints must be finite and increasing".into(),
            ));
        }
        Ok(())
    }

    /// Covariate layout produced by [`load_prostate`].
    pub fn schema(&self) -> CovariateSchema {
        CovariateSchema::new(vec![
            "activity_limited",
            "age_band_mid",
            "age_band_high",
            "hg",
            "hx",
        ])
    }
}

/// Tallies of every recode decision, serializable as the run's audit trail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestAudit {
    pub source_rows: usize,
    pub kept_subjects: usize,
    /// Kept subjects per retained treatment label.
    pub arm_counts: BTreeMap<String, usize>,
    /// Rows dropped because their treatment label is not retained.
    pub dropped_other_arms: BTreeMap<String, usize>,
    /// Rows in retained arms dropped for a missing covariate.
    pub dropped_missing_covariates: usize,
    /// Raw status values among retained-arm rows.
    pub status_counts: BTreeMap<String, usize>,
    /// Terminal fates among kept subjects.
    pub event_counts: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl IngestAudit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("audit serializes")
    }
}

/// Recoded cohort plus its audit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProstateCohort {
    pub subjects: Vec<SubjectRecord>,
    pub audit: IngestAudit,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "." || field.eq_ignore_ascii_case("na")
}

/// Reads and recodes the trial CSV. Fails loudly on structural problems
/// (absent columns, unparseable follow-up, statuses with no mapping);
/// missing covariate values drop the row into the audit instead.
pub fn load_prostate(
    path: impl AsRef<Path>,
    config: &ProstateConfig,
) -> Result<ProstateCohort, IngestError> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let col_rx = column("rx")?;
    let col_dtime = column("dtime")?;
    let col_status = column("status")?;
    let col_pf = column("pf")?;
    let col_age = column("age")?;
    let col_hg = column("hg")?;
    let col_hx = column("hx")?;
    let col_patno = headers.iter().position(|h| h == "patno");

    let schema = config.schema();
    let n_intervals = config.horizon_k + 1;
    let mut subjects = Vec::new();
    let mut audit = IngestAudit {
        source_rows: 0,
        kept_subjects: 0,
        arm_counts: BTreeMap::new(),
        dropped_other_arms: BTreeMap::new(),
        dropped_missing_covariates: 0,
        status_counts: BTreeMap::new(),
        event_counts: BTreeMap::new(),
        warnings: Vec::new(),
    };

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        audit.source_rows += 1;
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = match col_patno {
            Some(i) if !is_missing(field(i)) => field(i).to_string(),
            _ => format!("row{}", row_idx + 1),
        };

        let rx = field(col_rx);
        let Some(arm) = config
            .arm_codes
            .iter()
            .find(|(label, _)| label == rx)
            .map(|(_, code)| *code)
        else {
            *audit.dropped_other_arms.entry(rx.to_string()).or_insert(0) += 1;
            continue;
        };

        let status = field(col_status).to_string();
        *audit.status_counts.entry(status.clone()).or_insert(0) += 1;

        let months: f64 = field(col_dtime)
            .parse()
            .map_err(|_| IngestError::MalformedRow {
                id: id.clone(),
                detail: format!("follow-up months {:?} is not a number", field(col_dtime)),
            })?;
        if !months.is_finite() || months < 0.0 {
            return Err(IngestError::MalformedRow {
                id,
                detail: format!("follow-up months {months} out of range"),
            });
        }

        enum Fate {
            Event(EventKind),
            Alive,
        }
        let fate = if status == "alive" {
            Fate::Alive
        } else if config.interest_statuses.iter().any(|s| s == &status) {
            Fate::Event(EventKind::Interest)
        } else if status.starts_with("dead") {
            Fate::Event(EventKind::Competing)
        } else {
            return Err(IngestError::UnmappedStatus { id, status });
        };

        let m = f64::from(config.interval_months);
        let (event_kind, event_interval) = match fate {
            // A death during month t falls in the interval covering t.
            Fate::Event(kind) => (kind, ((months / m).ceil() as u32).max(1)),
            // Alive rows confirm follow-up through month t; censoring
            // starts with the first unobserved interval.
            Fate::Alive => (EventKind::Censored, (months / m).floor() as u32 + 1),
        };
        let (event_kind, event_interval) = if event_interval > n_intervals {
            (EventKind::AdminEnd, None)
        } else {
            (event_kind, Some(event_interval))
        };

        let covariate = |i: usize, name: &str| -> Result<Option<f64>, IngestError> {
            let raw = field(i);
            if is_missing(raw) {
                return Ok(None);
            }
            raw.parse::<f64>()
                .map(Some)
                .map_err(|_| IngestError::MalformedRow {
                    id: id.clone(),
                    detail: format!("{name} value {raw:?} is not a number"),
                })
        };
        let pf_raw = field(col_pf);
        let activity = if is_missing(pf_raw) {
            None
        } else {
            Some(f64::from(u8::from(pf_raw != config.unrestricted_activity)))
        };
        let age = covariate(col_age, "age")?;
        let hg = covariate(col_hg, "hg")?;
        let hx = covariate(col_hx, "hx")?;
        let (Some(activity), Some(age), Some(hg), Some(hx)) = (activity, age, hg, hx) else {
            audit.dropped_missing_covariates += 1;
            continue;
        };

        let [cut_mid, cut_high] = config.age_cutpoints;
        let age_mid = f64::from(u8::from(age >= cut_mid && age < cut_high));
        let age_high = f64::from(u8::from(age >= cut_high));

        let fate_label = match event_kind {
            EventKind::Interest => "interest",
            EventKind::Competing => "competing",
            EventKind::Censored => "censored",
            EventKind::AdminEnd => "admin_end",
        };
        *audit
            .event_counts
            .entry(fate_label.to_string())
            .or_insert(0) += 1;
        *audit.arm_counts.entry(rx.to_string()).or_insert(0) += 1;
        audit.kept_subjects += 1;
        subjects.push(SubjectRecord {
            id,
            arm,
            schema: schema.clone(),
            covariates: vec![activity, age_mid, age_high, hg, hx],
            event_kind,
            event_interval,
        });
    }

    if let Some(expected) = config.expected_arm_sizes {
        for (label, code) in &config.arm_codes {
            let got = audit.arm_counts.get(label).copied().unwrap_or(0);
            let want = expected[usize::from(*code)];
            if got != want {
                audit
                    .warnings
                    .push(format!("arm {label:?} has {got} subjects, expected {want}"));
            }
        }
    }

    Ok(ProstateCohort { subjects, audit })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::event_history::validate_and_expand;

    const HEADER: &str =
        "patno,stage,rx,dtime,status,age,wt,pf,hx,sbp,dbp,ekg,hg,sz,sg,ap,bm,sdate";

    fn row(
        patno: &str,
        rx: &str,
        dtime: &str,
        status: &str,
        age: &str,
        pf: &str,
        hx: &str,
        hg: &str,
    ) -> String {
        format!(
            "{patno},3,{rx},{dtime},{status},{age},99,{pf},{hx},14,8,normal,{hg},2,10,0.5,0,2778"
        )
    }

    fn write_csv(rows: &[String]) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "{HEADER}").unwrap();
        for r in rows {
            writeln!(file, "{r}").unwrap();
        }
        file
    }

    fn load(rows: &[String]) -> ProstateCohort {
        load_prostate(write_csv(rows).path(), &ProstateConfig::default()).unwrap()
    }

    #[test]
    fn maps_statuses_arms_and_intervals() {
        let cohort = load(&[
            row(
                "1",
                "placebo",
                "10",
                "dead - prostatic ca",
                "70",
                "normal activity",
                "0",
                "13.5",
            ),
            row(
                "2",
                "5.0 mg estrogen",
                "5",
                "dead - heart or vascular",
                "76",
                "in bed < 50% daytime",
                "1",
                "12.0",
            ),
            row(
                "3",
                "placebo",
                "30",
                "alive",
                "82",
                "confined to bed",
                "0",
                "14.1",
            ),
            row(
                "4",
                "placebo",
                "76",
                "alive",
                "60",
                "normal activity",
                "1",
                "11.0",
            ),
            row(
                "5",
                "1.0 mg estrogen",
                "10",
                "alive",
                "70",
                "normal activity",
                "0",
                "13.0",
            ),
            row(
                "6",
                "placebo",
                "70",
                "dead - unknown cause",
                "75",
                "normal activity",
                "0",
                "13.0",
            ),
        ]);
        let s: &SubjectRecord = &cohort.subjects[0];
        assert_eq!(
            (s.arm, s.event_kind, s.event_interval),
            (0, EventKind::Interest, Some(10))
        );
        assert_eq!(s.covariates, vec![0.0, 0.0, 0.0, 13.5, 0.0]);
        assert_eq!(s.id, "1");

        let s = &cohort.subjects[1];
        assert_eq!(
            (s.arm, s.event_kind, s.event_interval),
            (1, EventKind::Competing, Some(5))
        );
        assert_eq!(s.covariates, vec![1.0, 1.0, 0.0, 12.0, 1.0]);

        // Alive through month 30: censored in interval 31.
        let s = &cohort.subjects[2];
        assert_eq!(
            (s.event_kind, s.event_interval),
            (EventKind::Censored, Some(31))
        );
        assert_eq!(s.covariates[1..3], [0.0, 1.0]);

        // Beyond the 60-interval window, alive or dead alike.
        let s = &cohort.subjects[3];
        assert_eq!(
            (s.event_kind, s.event_interval),
            (EventKind::AdminEnd, None)
        );
        let s = &cohort.subjects[4];
        assert_eq!(
            (s.event_kind, s.event_interval),
            (EventKind::AdminEnd, None)
        );
        assert_eq!(s.id, "6");
        assert_eq!(s.covariates[1..3], [1.0, 0.0]);

        assert_eq!(cohort.subjects.len(), 5);
        assert_eq!(
            cohort.audit.dropped_other_arms.get("1.0 mg estrogen"),
            Some(&1)
        );
        assert_eq!(cohort.audit.event_counts.get("interest"), Some(&1));
        assert_eq!(cohort.audit.event_counts.get("admin_end"), Some(&2));
        assert_eq!(cohort.audit.status_counts.get("alive"), Some(&2));
        assert!(cohort.audit.warnings.iter().any(|w| w.contains("127")));

        let expanded = validate_and_expand(&cohort.subjects, 59).unwrap();
        assert_eq!(expanded.n_intervals(), 60);
    }

    #[test]
    fn age_bands_split_at_the_cutpoints() {
        let cohort = load(&[
            row(
                "1",
                "placebo",
                "1",
                "alive",
                "74",
                "normal activity",
                "0",
                "13.0",
            ),
            row(
                "2",
                "placebo",
                "1",
                "alive",
                "75",
                "normal activity",
                "0",
                "13.0",
            ),
            row(
                "3",
                "placebo",
                "1",
                "alive",
                "79",
                "normal activity",
                "0",
                "13.0",
            ),
            row(
                "4",
                "placebo",
                "1",
                "alive",
                "80",
                "normal activity",
                "0",
                "13.0",
            ),
        ]);
        let bands: Vec<[f64; 2]> = cohort
            .subjects
            .iter()
            .map(|s| [s.covariates[1], s.covariates[2]])
            .collect();
        assert_eq!(bands, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn missing_covariates_drop_into_the_audit() {
        let cohort = load(&[
            row(
                "1",
                "placebo",
                "10",
                "alive",
                "",
                "normal activity",
                "0",
                "13.0",
            ),
            row("2", "placebo", "10", "alive", "70", "NA", "0", "13.0"),
            row(
                "3",
                "placebo",
                "10",
                "alive",
                "70",
                "normal activity",
                "0",
                ".",
            ),
            row(
                "4",
                "placebo",
                "10",
                "alive",
                "70",
                "normal activity",
                "1",
                "13.0",
            ),
        ]);
        assert_eq!(cohort.subjects.len(), 1);
        assert_eq!(cohort.subjects[0].id, "4");
        assert_eq!(cohort.audit.dropped_missing_covariates, 3);
        assert_eq!(cohort.audit.kept_subjects, 1);
    }

    #[test]
    fn coarser_intervals_use_ceiling_for_deaths_and_floor_for_alive() {
        let config = ProstateConfig {
            interval_months: 3,
            horizon_k: 19,
            expected_arm_sizes: None,
            ..ProstateConfig::default()
        };
        let file = write_csv(&[
            row(
                "1",
                "placebo",
                "7",
                "dead - prostatic ca",
                "70",
                "normal activity",
                "0",
                "13.0",
            ),
            row(
                "2",
                "placebo",
                "7",
                "alive",
                "70",
                "normal activity",
                "0",
                "13.0",
            ),
            row(
                "3",
                "placebo",
                "0",
                "dead - other ca",
                "70",
                "normal activity",
                "0",
                "13.0",
            ),
            row(
                "4",
                "placebo",
                "6",
                "dead - other ca",
                "70",
                "normal activity",
                "0",
                "13.0",
            ),
        ]);
        let cohort = load_prostate(file.path(), &config).unwrap();
        let got: Vec<(EventKind, Option<u32>)> = cohort
            .subjects
            .iter()
            .map(|s| (s.event_kind, s.event_interval))
            .collect();
        assert_eq!(
            got,
            vec![
                (EventKind::Interest, Some(3)),
                (EventKind::Censored, Some(3)),
                (EventKind::Competing, Some(1)),
                (EventKind::Competing, Some(2)),
            ]
        );
        assert!(cohort.audit.warnings.is_empty());
    }

    #[test]
    fn unmapped_status_fails_loudly() {
        let err = load_prostate(
            write_csv(&[row(
                "9",
                "placebo",
                "10",
                "lost",
                "70",
                "normal activity",
                "0",
                "13.0",
            )])
            .path(),
            &ProstateConfig::default(),
        )
        .unwrap_err();
        match err {
            IngestError::UnmappedStatus { id, status } => {
                assert_eq!(id, "9");
                assert_eq!(status, "lost");
            }
            other => panic!("expected unmapped status, got {other:?}"),
        }
    }

    #[test]
    fn structural_problems_are_errors() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "patno,dtime,status,age,pf,hx,hg").unwrap();
        let err = load_prostate(file.path(), &ProstateConfig::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(name) if name == "rx"));

        let err = load_prostate(
            write_csv(&[row(
                "1",
                "placebo",
                "ten",
                "alive",
                "70",
                "normal activity",
                "0",
                "13.0",
            )])
            .path(),
            &ProstateConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MalformedRow { .. }));

        let bad = ProstateConfig {
            arm_codes: vec![("placebo".into(), 0), ("5.0 mg estrogen".into(), 0)],
            ..ProstateConfig::default()
        };
        let err = load_prostate(write_csv(&[]).path(), &bad).unwrap_err();
        assert!(matches!(err, IngestError::BadArmCodes));
    }

    #[test]
    fn reingestion_is_idempotent_and_audit_serializes() {
        let rows = [
            row(
                "1",
                "placebo",
                "10",
                "dead - prostatic ca",
                "70",
                "normal activity",
                "0",
                "13.5",
            ),
            row(
                "2",
                "5.0 mg estrogen",
                "20",
                "alive",
                "76",
                "confined to bed",
                "1",
                "12.0",
            ),
        ];
        let file = write_csv(&rows);
        let first = load_prostate(file.path(), &ProstateConfig::default()).unwrap();
        let second = load_prostate(file.path(), &ProstateConfig::default()).unwrap();
        assert_eq!(first, second);
        let json = first.audit.to_json();
        assert!(json.contains("\"kept_subjects\": 2"));
        assert!(json.contains("\"source_rows\": 2"));
    }
}
