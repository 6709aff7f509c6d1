//! Subject-level event histories and their person-interval expansion.
//!
//! Follow-up is cut into intervals 1..=K+1. Within an interval the order is
//! censoring first, then the competing event, then the event of interest;
//! a subject leaves the table in the interval of their first event. Both
//! event processes are absorbing and D_0 = Y_0 = 0 by convention, so a row
//! only exists while the subject was event-free and uncensored at the end
//! of the previous interval.

use std::collections::HashSet;
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventHistoryError {
    #[error("covariate schema mismatch for subject {id}: expected [{expected}], got [{got}]")]
    SchemaMismatch {
        id: String,
        expected: String,
        got: String,
    },
    #[error("invalid event interval for subject {id}: {reason}")]
    InvalidInterval { id: String, reason: String },
    #[error("duplicate subject id {0}")]
    DuplicateId(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// Terminal fate of a subject. ADMIN_END means event-free and uncensored
/// through interval K+1 and carries no interval of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Interest,
    Competing,
    Censored,
    AdminEnd,
}

/// Shared, ordered covariate names. Cheap to clone; equality is by content.
#[derive(Debug, Clone, Eq)]
pub struct CovariateSchema(Arc<Vec<String>>);

impl CovariateSchema {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Self {
        CovariateSchema(Arc::new(names.into_iter().map(Into::into).collect()))
    }

    pub fn empty() -> Self {
        CovariateSchema(Arc::new(Vec::new()))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }
}

impl PartialEq for CovariateSchema {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    /// Treatment arm, 0 or 1.
    pub arm: u8,
    pub schema: CovariateSchema,
    /// Baseline covariate values, aligned with `schema`.
    pub covariates: Vec<f64>,
    pub event_kind: EventKind,
    /// 1-based interval of the terminal event; `None` iff ADMIN_END.
    pub event_interval: Option<u32>,
}

/// One subject-interval. At most one of c/d/y is set and only on the
/// subject's last row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PersonTimeRow {
    pub subject: u32,
    /// Interval index, 1..=n_intervals.
    pub k: u32,
    pub c: bool,
    pub d: bool,
    pub y: bool,
}

/// Long-format expansion of a cohort over a fixed interval grid.
/// Immutable after construction; estimators share it freely across threads.
#[derive(Debug, Clone)]
pub struct PersonTimeTable {
    n_intervals: u32,
    schema: CovariateSchema,
    ids: Vec<String>,
    arms: Vec<u8>,
    covariates: Vec<f64>, // row-major, n_subjects x schema.len()
    rows: Vec<PersonTimeRow>,
    subject_rows: Vec<(u32, u32)>, // (first row index, row count) per subject
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExpandOptions {
    /// Recode events beyond interval K+1 as ADMIN_END instead of erroring.
    pub truncate: bool,
}

pub fn validate_and_expand(
    subjects: &[SubjectRecord],
    k_horizon: u32,
) -> Result<PersonTimeTable, EventHistoryError> {
    validate_and_expand_with(subjects, k_horizon, ExpandOptions::default())
}

pub fn validate_and_expand_with(
    subjects: &[SubjectRecord],
    k_horizon: u32,
    opts: ExpandOptions,
) -> Result<PersonTimeTable, EventHistoryError> {
    if k_horizon < 1 {
        return Err(EventHistoryError::Malformed(
            "horizon K must be at least 1".into(),
        ));
    }
    if subjects.is_empty() {
        return Err(EventHistoryError::Malformed("empty cohort".into()));
    }
    let n_intervals = k_horizon + 1;
    let schema = subjects[0].schema.clone();
    let mut seen = HashSet::with_capacity(subjects.len());
    let mut ids = Vec::with_capacity(subjects.len());
    let mut arms = Vec::with_capacity(subjects.len());
    let mut covariates = Vec::with_capacity(subjects.len() * schema.len());
    let mut rows = Vec::new();
    let mut subject_rows = Vec::with_capacity(subjects.len());

    for (i, s) in subjects.iter().enumerate() {
        if s.schema != schema {
            return Err(EventHistoryError::SchemaMismatch {
                id: s.id.clone(),
                expected: schema.names().join(","),
                got: s.schema.names().join(","),
            });
        }
        if s.covariates.len() != schema.len() {
            return Err(EventHistoryError::SchemaMismatch {
                id: s.id.clone(),
                expected: format!("{} values", schema.len()),
                got: format!("{} values", s.covariates.len()),
            });
        }
        if s.covariates.iter().any(|v| !v.is_finite()) {
            return Err(EventHistoryError::Malformed(format!(
                "non-finite covariate for subject {}",
                s.id
            )));
        }
        if s.arm > 1 {
            return Err(EventHistoryError::Malformed(format!(
                "arm must be 0 or 1, got {} for subject {}",
                s.arm, s.id
            )));
        }
        if !seen.insert(s.id.clone()) {
            return Err(EventHistoryError::DuplicateId(s.id.clone()));
        }

        let (kind, interval) = match (s.event_kind, s.event_interval) {
            (EventKind::AdminEnd, None) => (EventKind::AdminEnd, None),
            (EventKind::AdminEnd, Some(_)) => {
                return Err(EventHistoryError::InvalidInterval {
                    id: s.id.clone(),
                    reason: "ADMIN_END carries no event interval".into(),
                })
            }
            (kind, Some(e)) => {
                if e < 1 {
                    return Err(EventHistoryError::InvalidInterval {
                        id: s.id.clone(),
                        reason: "event interval must be >= 1".into(),
                    });
                }
                if e > n_intervals {
                    if opts.truncate {
                        (EventKind::AdminEnd, None)
                    } else {
                        return Err(EventHistoryError::InvalidInterval {
                            id: s.id.clone(),
                            reason: format!("event interval {} exceeds K+1 = {}", e, n_intervals),
                        });
                    }
                } else {
                    (kind, Some(e))
                }
            }
            (_, None) => {
                return Err(EventHistoryError::InvalidInterval {
                    id: s.id.clone(),
                    reason: "missing event interval".into(),
                })
            }
        };

        let n_rows = match kind {
            EventKind::AdminEnd => n_intervals,
            _ => interval.unwrap(),
        };
        let first = rows.len() as u32;
        for k in 1..=n_rows {
            let last = k == n_rows;
            rows.push(PersonTimeRow {
                subject: i as u32,
                k,
                c: last && kind == EventKind::Censored,
                d: last && kind == EventKind::Competing,
                y: last && kind == EventKind::Interest,
            });
        }
        subject_rows.push((first, n_rows));
        ids.push(s.id.clone());
        arms.push(s.arm);
        covariates.extend_from_slice(&s.covariates);
    }

    Ok(PersonTimeTable {
        n_intervals,
        schema,
        ids,
        arms,
        covariates,
        rows,
        subject_rows,
    })
}

impl PersonTimeTable {
    pub fn n_subjects(&self) -> usize {
        self.ids.len()
    }

    /// Number of intervals on the grid, i.e. K+1.
    pub fn n_intervals(&self) -> u32 {
        self.n_intervals
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[PersonTimeRow] {
        &self.rows
    }

    pub fn id(&self, subject: usize) -> &str {
        &self.ids[subject]
    }

    pub fn arm(&self, subject: usize) -> u8 {
        self.arms[subject]
    }

    pub fn covariates(&self, subject: usize) -> &[f64] {
        let p = self.schema.len();
        &self.covariates[subject * p..(subject + 1) * p]
    }

    pub fn subject_rows(&self, subject: usize) -> &[PersonTimeRow] {
        let (first, count) = self.subject_rows[subject];
        &self.rows[first as usize..(first + count) as usize]
    }

    /// (kind, interval) reconstructed from the subject's last row.
    pub fn fate(&self, subject: usize) -> (EventKind, Option<u32>) {
        let rows = self.subject_rows(subject);
        let last = rows.last().expect("subjects have at least one row");
        if last.y {
            (EventKind::Interest, Some(last.k))
        } else if last.d {
            (EventKind::Competing, Some(last.k))
        } else if last.c {
            (EventKind::Censored, Some(last.k))
        } else {
            (EventKind::AdminEnd, None)
        }
    }

    pub fn has_censoring(&self) -> bool {
        self.rows.iter().any(|r| r.c)
    }

    pub fn subjects_in_arm(&self, arm: u8) -> impl Iterator<Item = usize> + '_ {
        self.arms
            .iter()
            .enumerate()
            .filter(move |(_, a)| **a == arm)
            .map(|(i, _)| i)
    }

    /// Inverse of expansion. Truncated subjects come back as ADMIN_END.
    pub fn collapse(&self) -> Vec<SubjectRecord> {
        (0..self.n_subjects())
            .map(|i| {
                let (event_kind, event_interval) = self.fate(i);
                SubjectRecord {
                    id: self.ids[i].clone(),
                    arm: self.arms[i],
                    schema: self.schema.clone(),
                    covariates: self.covariates(i).to_vec(),
                    event_kind,
                    event_interval,
                }
            })
            .collect()
    }
}

const EVENT_CODE_CENSORED: &str = "0";
const EVENT_CODE_INTEREST: &str = "1";
const EVENT_CODE_COMPETING: &str = "2";
const EVENT_CODE_ADMIN_END: &str = "3";

/// Wide CSV, one line per subject: `id,arm,<covariate...>,time,event` where
/// event is 0=censored, 1=interest, 2=competing, 3=admin-end. The time cell
/// is written as 0 for admin-end subjects and ignored on read.
pub fn read_wide_csv<R: io::Read>(reader: R) -> Result<Vec<SubjectRecord>, EventHistoryError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4 || cols[0] != "id" || cols[1] != "arm" {
        return Err(EventHistoryError::Malformed(
            "expected header id,arm,<covariate...>,time,event".into(),
        ));
    }
    let n = cols.len();
    if cols[n - 2] != "time" || cols[n - 1] != "event" {
        return Err(EventHistoryError::Malformed(
            "last two columns must be time,event".into(),
        ));
    }
    let schema = CovariateSchema::new(cols[2..n - 2].to_vec());

    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != n {
            return Err(EventHistoryError::Malformed(format!(
                "record {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                n
            )));
        }
        let id = rec[0].to_string();
        let arm: u8 = rec[1]
            .parse()
            .map_err(|_| EventHistoryError::Malformed(format!("bad arm for subject {}", id)))?;
        let covariates = rec
            .iter()
            .skip(2)
            .take(schema.len())
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    EventHistoryError::Malformed(format!("bad covariate for subject {}", id))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let event_kind = match &rec[n - 1] {
            EVENT_CODE_CENSORED => EventKind::Censored,
            EVENT_CODE_INTEREST => EventKind::Interest,
            EVENT_CODE_COMPETING => EventKind::Competing,
            EVENT_CODE_ADMIN_END => EventKind::AdminEnd,
            other => {
                return Err(EventHistoryError::Malformed(format!(
                    "unknown event code {:?} for subject {}",
                    other, id
                )))
            }
        };
        let event_interval = if event_kind == EventKind::AdminEnd {
            None
        } else {
            let t: u32 = rec[n - 2].parse().map_err(|_| {
                EventHistoryError::Malformed(format!("bad time for subject {}", id))
            })?;
            Some(t)
        };
        out.push(SubjectRecord {
            id,
            arm,
            schema: schema.clone(),
            covariates,
            event_kind,
            event_interval,
        });
    }
    Ok(out)
}

pub fn write_wide_csv<W: io::Write>(
    writer: W,
    subjects: &[SubjectRecord],
) -> Result<(), EventHistoryError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let schema = subjects
        .first()
        .map(|s| s.schema.clone())
        .unwrap_or_else(CovariateSchema::empty);
    let mut header = vec!["id".to_string(), "arm".to_string()];
    header.extend(schema.names().iter().cloned());
    header.push("time".into());
    header.push("event".into());
    wtr.write_record(&header)?;
    for s in subjects {
        let mut rec = vec![s.id.clone(), s.arm.to_string()];
        rec.extend(s.covariates.iter().map(|v| format_float(*v)));
        rec.push(s.event_interval.unwrap_or(0).to_string());
        rec.push(
            match s.event_kind {
                EventKind::Censored => EVENT_CODE_CENSORED,
                EventKind::Interest => EVENT_CODE_INTEREST,
                EventKind::Competing => EVENT_CODE_COMPETING,
                EventKind::AdminEnd => EVENT_CODE_ADMIN_END,
            }
            .to_string(),
        );
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

// Round-trippable float formatting; integers print without a fraction.
pub(crate) fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{}", v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(id: &str, arm: u8, kind: EventKind, interval: Option<u32>) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            arm,
            schema: CovariateSchema::new(vec!["l1"]),
            covariates: vec![1.0],
            event_kind: kind,
            event_interval: interval,
        }
    }

    #[test]
    fn interest_at_two_expands_to_two_rows() {
        let t = validate_and_expand(&[subject("1", 1, EventKind::Interest, Some(2))], 3).unwrap();
        let rows = t.subject_rows(0);
        assert_eq!(rows.len(), 2);
        assert_eq!(
            rows[0],
            PersonTimeRow {
                subject: 0,
                k: 1,
                c: false,
                d: false,
                y: false
            }
        );
        assert_eq!(
            rows[1],
            PersonTimeRow {
                subject: 0,
                k: 2,
                c: false,
                d: false,
                y: true
            }
        );
    }

    #[test]
    fn admin_end_expands_to_full_grid() {
        let t = validate_and_expand(&[subject("2", 0, EventKind::AdminEnd, None)], 3).unwrap();
        let rows = t.subject_rows(0);
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| !r.c && !r.d && !r.y));
    }

    #[test]
    fn censored_row_is_terminal() {
        let t = validate_and_expand(&[subject("3", 0, EventKind::Censored, Some(1))], 2).unwrap();
        let rows = t.subject_rows(0);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].c && !rows[0].d && !rows[0].y);
    }

    #[test]
    fn event_beyond_horizon_errors_without_truncate() {
        let err =
            validate_and_expand(&[subject("4", 0, EventKind::Interest, Some(7))], 4).unwrap_err();
        assert!(matches!(err, EventHistoryError::InvalidInterval { .. }));
    }

    #[test]
    fn event_beyond_horizon_truncates_to_admin_end() {
        let t = validate_and_expand_with(
            &[subject("4", 0, EventKind::Interest, Some(7))],
            4,
            ExpandOptions { truncate: true },
        )
        .unwrap();
        assert_eq!(t.subject_rows(0).len(), 5);
        assert_eq!(t.fate(0), (EventKind::AdminEnd, None));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let subs = vec![
            subject("1", 0, EventKind::AdminEnd, None),
            subject("1", 1, EventKind::Interest, Some(1)),
        ];
        assert!(matches!(
            validate_and_expand(&subs, 2).unwrap_err(),
            EventHistoryError::DuplicateId(_)
        ));
    }

    #[test]
    fn schema_mismatch_rejected() {
        let mut b = subject("2", 1, EventKind::Interest, Some(1));
        b.schema = CovariateSchema::new(vec!["l2"]);
        let subs = vec![subject("1", 0, EventKind::AdminEnd, None), b];
        assert!(matches!(
            validate_and_expand(&subs, 2).unwrap_err(),
            EventHistoryError::SchemaMismatch { .. }
        ));
    }

    #[test]
    fn admin_end_with_interval_rejected() {
        let err =
            validate_and_expand(&[subject("1", 0, EventKind::AdminEnd, Some(2))], 2).unwrap_err();
        assert!(matches!(err, EventHistoryError::InvalidInterval { .. }));
    }

    fn random_cohort(seed: u64, n: usize, k: u32) -> Vec<SubjectRecord> {
        use rand::Rng;
        let mut rng = crate::seeds::stream_rng(seed, 9, 0, 0);
        (0..n)
            .map(|i| {
                let kind = match rng.random_range(0..4) {
                    0 => EventKind::Interest,
                    1 => EventKind::Competing,
                    2 => EventKind::Censored,
                    _ => EventKind::AdminEnd,
                };
                let interval = if kind == EventKind::AdminEnd {
                    None
                } else {
                    Some(rng.random_range(1..=k + 1))
                };
                SubjectRecord {
                    id: format!("s{}", i),
                    arm: rng.random_range(0..2) as u8,
                    schema: CovariateSchema::new(vec!["l1", "l2"]),
                    covariates: vec![rng.random_range(0..2) as f64, rng.random::<f64>()],
                    event_kind: kind,
                    event_interval: interval,
                }
            })
            .collect()
    }

    #[test]
    fn row_count_and_terminal_invariants() {
        let k = 5;
        let subs = random_cohort(11, 200, k);
        let t = validate_and_expand(&subs, k).unwrap();
        let expected: u32 = subs.iter().map(|s| s.event_interval.unwrap_or(k + 1)).sum();
        assert_eq!(t.rows().len() as u32, expected);
        for i in 0..t.n_subjects() {
            let rows = t.subject_rows(i);
            let (cy, cd, cc) = rows.iter().fold((0, 0, 0), |(a, b, c), r| {
                (a + r.y as u32, b + r.d as u32, c + r.c as u32)
            });
            assert!(cy <= 1 && cd <= 1 && cc <= 1);
            assert!(rows
                .iter()
                .all(|r| !(r.y && r.d) && !(r.y && r.c) && !(r.d && r.c)));
            // events only on the last row
            for r in &rows[..rows.len() - 1] {
                assert!(!r.c && !r.d && !r.y);
            }
        }
    }

    #[test]
    fn expand_collapse_round_trip() {
        let subs = random_cohort(13, 150, 4);
        let t = validate_and_expand(&subs, 4).unwrap();
        assert_eq!(t.collapse(), subs);
    }

    #[test]
    fn csv_round_trip() {
        let subs = random_cohort(17, 60, 3);
        let mut buf = Vec::new();
        write_wide_csv(&mut buf, &subs).unwrap();
        let back = read_wide_csv(&buf[..]).unwrap();
        assert_eq!(back, subs);
    }

    #[test]
    fn csv_rejects_unknown_event_code() {
        let data = "id,arm,l1,time,event\n1,0,0.5,2,9\n";
        assert!(matches!(
            read_wide_csv(data.as_bytes()).unwrap_err(),
            EventHistoryError::Malformed(_)
        ));
    }

    #[test]
    fn csv_requires_pinned_header() {
        let data = "subject,arm,l1,time,event\n1,0,0.5,2,1\n";
        assert!(read_wide_csv(data.as_bytes()).is_err());
    }
}
