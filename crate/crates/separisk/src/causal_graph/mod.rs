//! Causal DAGs over discrete-time event histories, with the d-separation
//! queries that audit whether the two treatment components can be analyzed
//! separately (the dismissible component conditions).
//!
//! Node names carry roles. `A` is the assigned treatment, `A_Y` and `A_D`
//! its components acting on the event of interest and on the competing
//! event; the indexed families `Y1..YK`, `D1..DK`, `C1..CK` are the event,
//! competing-event, and censoring indicators per interval; names starting
//! with `L` are measured baseline covariates and names starting with `U`
//! are unmeasured. Deterministic assignment arrows (`A` to its components)
//! are flagged so the dismissible-condition check can cut them, which turns
//! the graph into its hypothetical four-arm counterpart where the two
//! components are randomized separately.
//!
//! Graphs come from a small line-oriented DSL ([`parse_graph`]) or are built
//! programmatically ([`Dag::new`]). [`d_separated`] answers individual
//! independence queries; [`check_dismissible`] runs both conditions at every
//! transition and reports an open witness path for each failure.

use std::collections::HashMap;
use std::collections::HashSet;

mod dcc;
mod dsep;
mod parse;

pub use dcc::{check_dismissible, DccEntry, DccReport};
pub use dsep::d_separated;
pub use parse::parse_graph;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("graph has a directed cycle through {}", nodes.join(", "))]
    CycleDetected { nodes: Vec<String> },
    #[error("unknown node {name}")]
    UnknownNode { name: String },
    #[error("node {name} appears in more than one of the query sets")]
    NodeOverlap { name: String },
    #[error("missing component nodes: {detail}")]
    MissingComponentNodes { detail: String },
}

/// Directed acyclic graph with named nodes and a flagged subset of
/// deterministic edges.
#[derive(Debug, Clone)]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    deterministic: HashSet<(usize, usize)>,
}

impl Dag {
    /// Builds a graph from a node list and `(src, dst, deterministic)`
    /// edges. Nodes may be listed without edges; edge endpoints must appear
    /// in `nodes`. Duplicate names and duplicate edges collapse silently.
    pub fn new(nodes: Vec<String>, edges: Vec<(String, String, bool)>) -> Result<Dag, GraphError> {
        let mut g = Dag {
            names: Vec::new(),
            index: HashMap::new(),
            children: Vec::new(),
            parents: Vec::new(),
            deterministic: HashSet::new(),
        };
        for name in nodes {
            g.intern(name);
        }
        for (src, dst, det) in edges {
            let s = g.resolve(&src)?;
            let d = g.resolve(&dst)?;
            if s == d {
                return Err(GraphError::CycleDetected { nodes: vec![src] });
            }
            if g.children[s].contains(&d) {
                continue;
            }
            g.children[s].push(d);
            g.parents[d].push(s);
            if det {
                g.deterministic.insert((s, d));
            }
        }
        g.check_acyclic()?;
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn has_edge(&self, src: &str, dst: &str) -> bool {
        match (self.index.get(src), self.index.get(dst)) {
            (Some(&s), Some(&d)) => self.children[s].contains(&d),
            _ => false,
        }
    }

    pub fn is_deterministic(&self, src: &str, dst: &str) -> bool {
        match (self.index.get(src), self.index.get(dst)) {
            (Some(&s), Some(&d)) => self.deterministic.contains(&(s, d)),
            _ => false,
        }
    }

    /// Edges as `(src, dst, deterministic)` triples in insertion order of
    /// the source nodes.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, bool)> {
        self.children.iter().enumerate().flat_map(move |(s, kids)| {
            kids.iter().map(move |&d| {
                (
                    self.names[s].as_str(),
                    self.names[d].as_str(),
                    self.deterministic.contains(&(s, d)),
                )
            })
        })
    }

    /// The hypothetical four-arm counterpart: every deterministic assignment
    /// arrow is cut, leaving the treatment components exogenous.
    pub fn without_deterministic(&self) -> Dag {
        let nodes = self.names.clone();
        let edges = self
            .edges()
            .filter(|&(_, _, det)| !det)
            .map(|(s, d, _)| (s.to_string(), d.to_string(), false))
            .collect();
        Dag::new(nodes, edges).expect("subgraph of a valid DAG stays valid")
    }

    fn intern(&mut self, name: String) -> usize {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        self.children.push(Vec::new());
        self.parents.push(Vec::new());
        i
    }

    fn resolve(&self, name: &str) -> Result<usize, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode {
                name: name.to_string(),
            })
    }

    pub(crate) fn idx(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub(crate) fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub(crate) fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub(crate) fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub(crate) fn has_edge_idx(&self, s: usize, d: usize) -> bool {
        self.children[s].contains(&d)
    }

    /// Kahn's algorithm; leftover nodes sit on a directed cycle.
    fn check_acyclic(&self) -> Result<(), GraphError> {
        let n = self.names.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0usize;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if seen == n {
            return Ok(());
        }
        let mut cyclic: Vec<String> = (0..n)
            .filter(|&i| indegree[i] > 0)
            .map(|i| self.names[i].clone())
            .collect();
        cyclic.sort();
        Err(GraphError::CycleDetected { nodes: cyclic })
    }
}
