//! Dismissible component conditions on an event-history DAG.
//!
//! For each transition k into interval k+1 the checker asks, on the
//! four-arm counterpart of the graph (deterministic assignment arrows cut),
//! whether the component acting on the other process can be dismissed:
//!
//! * delta1: Y_{k+1} independent of A_D given A_Y, the event history
//!   Y1..Yk and D1..D_{k+1}, any censoring history C1..C_{k+1} present,
//!   and all measured baseline covariates (names starting with `L`).
//! * delta2: D_{k+1} independent of A_Y given A_D, the histories D1..Dk
//!   and Y1..Yk, the same censoring history, and the measured covariates.
//!
//! Conditioning is on the nodes themselves, the graphical surrogate for
//! conditioning on the event-free histories. Names starting with `U` are
//! unmeasured and never conditioned on. A failed condition comes with an
//! open witness path from the offending component to the event node.

use std::collections::HashSet;
use std::fmt;

use super::dsep::{find_open_path, render_path};
use super::{Dag, GraphError};

/// Verdicts for one transition; witnesses are present exactly for failures.
#[derive(Debug, Clone)]
pub struct DccEntry {
    pub k: usize,
    pub delta1_holds: bool,
    pub delta2_holds: bool,
    pub delta1_witness: Option<String>,
    pub delta2_witness: Option<String>,
}

/// Per-transition verdicts for k = 0..K-1.
#[derive(Debug, Clone)]
pub struct DccReport {
    pub entries: Vec<DccEntry>,
}

impl DccReport {
    pub fn all_hold(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.delta1_holds && e.delta2_holds)
    }
}

impl fmt::Display for DccReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, " k  delta1  delta2")?;
        for e in &self.entries {
            let word = |holds: bool| if holds { "holds" } else { "FAILS" };
            writeln!(
                f,
                "{:>2}  {:<6}  {:<6}",
                e.k,
                word(e.delta1_holds),
                word(e.delta2_holds)
            )?;
            if let Some(path) = &e.delta1_witness {
                writeln!(f, "      delta1 witness: {path}")?;
            }
            if let Some(path) = &e.delta2_witness {
                writeln!(f, "      delta2 witness: {path}")?;
            }
        }
        Ok(())
    }
}

/// Checks both conditions at every transition k = 0..K-1, where K is the
/// highest event interval. The graph must contain A_Y, A_D, and the Y and D
/// families up to K; censoring nodes and covariates are optional.
pub fn check_dismissible(g: &Dag, k_horizon: usize) -> Result<DccReport, GraphError> {
    if k_horizon == 0 {
        return Err(GraphError::MissingComponentNodes {
            detail: "horizon K must be at least 1".to_string(),
        });
    }
    let h = g.without_deterministic();
    let mut missing = Vec::new();
    for name in ["A_Y", "A_D"] {
        if !h.has_node(name) {
            missing.push(name.to_string());
        }
    }
    for j in 1..=k_horizon {
        for family in ["Y", "D"] {
            let name = format!("{family}{j}");
            if !h.has_node(&name) {
                missing.push(name);
            }
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(GraphError::MissingComponentNodes {
            detail: missing.join(", "),
        });
    }

    let measured: Vec<usize> = h
        .node_names()
        .iter()
        .enumerate()
        .filter(|(_, name)| name.starts_with('L'))
        .map(|(i, _)| i)
        .collect();
    let node = |name: String| h.idx(&name).expect("presence checked above");
    let a_y = node("A_Y".into());
    let a_d = node("A_D".into());

    let mut entries = Vec::with_capacity(k_horizon);
    for k in 0..k_horizon {
        let mut censoring: Vec<usize> = Vec::new();
        for j in 1..=(k + 1) {
            if let Some(c) = h.idx(&format!("C{j}")) {
                censoring.push(c);
            }
        }

        // delta1: event of interest at k+1 vs the competing component.
        let mut z: HashSet<usize> = [a_y].into();
        z.extend(&measured);
        z.extend(&censoring);
        for j in 1..=k {
            z.insert(node(format!("Y{j}")));
        }
        for j in 1..=(k + 1) {
            z.insert(node(format!("D{j}")));
        }
        let (delta1_holds, delta1_witness) = probe(&h, a_d, node(format!("Y{}", k + 1)), &z);

        // delta2: competing event at k+1 vs the interest component.
        let mut z: HashSet<usize> = [a_d].into();
        z.extend(&measured);
        z.extend(&censoring);
        for j in 1..=k {
            z.insert(node(format!("Y{j}")));
            z.insert(node(format!("D{j}")));
        }
        let (delta2_holds, delta2_witness) = probe(&h, a_y, node(format!("D{}", k + 1)), &z);

        entries.push(DccEntry {
            k,
            delta1_holds,
            delta2_holds,
            delta1_witness,
            delta2_witness,
        });
    }
    Ok(DccReport { entries })
}

/// Runs one independence probe from a treatment component to an event node;
/// an open path is returned rendered, component first.
fn probe(h: &Dag, component: usize, event: usize, z: &HashSet<usize>) -> (bool, Option<String>) {
    let targets: HashSet<usize> = [event].into();
    match find_open_path(h, &[component], &targets, z) {
        Some(path) => (false, Some(render_path(h, &path))),
        None => (true, None),
    }
}
