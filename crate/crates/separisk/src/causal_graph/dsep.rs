//! d-separation queries.
//!
//! The boolean query runs a reachability sweep over (node, approach
//! direction) states: a trail may pass a non-collider only while the node is
//! outside the conditioning set, and may pass a collider only when the node
//! or one of its descendants is conditioned on. Witness recovery walks
//! simple undirected paths depth-first, pruning a prefix as soon as one of
//! its settled interior nodes violates the same rules, so it finds an open
//! path exactly when one exists.

use std::collections::HashSet;

use super::{Dag, GraphError};

/// True when every path between `x` and `y` is blocked given `z`. The three
/// sets must be disjoint and name existing nodes.
pub fn d_separated(g: &Dag, x: &[&str], y: &[&str], z: &[&str]) -> Result<bool, GraphError> {
    let xi = resolve_set(g, x)?;
    let yi = resolve_set(g, y)?;
    let zi = resolve_set(g, z)?;
    for (a, b) in [(&xi, &yi), (&xi, &zi), (&yi, &zi)] {
        if let Some(&shared) = a.iter().find(|i| b.contains(i)) {
            return Err(GraphError::NodeOverlap {
                name: g.name(shared).to_string(),
            });
        }
    }
    let z_set: HashSet<usize> = zi.iter().copied().collect();
    let reached = open_trail_reach(g, &xi, &z_set);
    Ok(!yi.iter().any(|&t| reached[t]))
}

fn resolve_set(g: &Dag, names: &[&str]) -> Result<Vec<usize>, GraphError> {
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        match g.idx(name) {
            Some(i) => {
                if !out.contains(&i) {
                    out.push(i);
                }
            }
            None => {
                return Err(GraphError::UnknownNode {
                    name: name.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Nodes in `z` or with a descendant in `z`; these are the open colliders.
pub(super) fn collider_openers(g: &Dag, z: &HashSet<usize>) -> Vec<bool> {
    let mut open = vec![false; g.node_count()];
    let mut stack: Vec<usize> = z.iter().copied().collect();
    for &v in &stack {
        open[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &p in g.parents_of(v) {
            if !open[p] {
                open[p] = true;
                stack.push(p);
            }
        }
    }
    open
}

/// Marks every node reachable from `x` along a trail that is open given `z`.
fn open_trail_reach(g: &Dag, x: &[usize], z: &HashSet<usize>) -> Vec<bool> {
    let n = g.node_count();
    let openers = collider_openers(g, z);
    let mut reached = vec![false; n];
    // A state records how the trail arrives: from a child (upstream) or
    // from a parent (downstream); the two admit different continuations.
    let mut seen_up = vec![false; n];
    let mut seen_down = vec![false; n];
    let mut stack: Vec<(usize, bool)> = x.iter().map(|&s| (s, true)).collect();
    while let Some((v, up)) = stack.pop() {
        if up {
            if seen_up[v] {
                continue;
            }
            seen_up[v] = true;
            if !z.contains(&v) {
                reached[v] = true;
                for &p in g.parents_of(v) {
                    stack.push((p, true));
                }
                for &c in g.children_of(v) {
                    stack.push((c, false));
                }
            }
        } else {
            if seen_down[v] {
                continue;
            }
            seen_down[v] = true;
            if !z.contains(&v) {
                reached[v] = true;
                for &c in g.children_of(v) {
                    stack.push((c, false));
                }
            }
            if openers[v] {
                // Collider against the trail: passable exactly because v
                // or a descendant is conditioned on.
                for &p in g.parents_of(v) {
                    stack.push((p, true));
                }
            }
        }
    }
    reached
}

/// First open simple path from `x` to `y` given `z`, in DFS order over each
/// node's child edges then parent edges. `None` exactly when d-separated.
pub(super) fn find_open_path(
    g: &Dag,
    x: &[usize],
    y: &HashSet<usize>,
    z: &HashSet<usize>,
) -> Option<Vec<usize>> {
    let openers = collider_openers(g, z);
    let mut on_path = vec![false; g.node_count()];
    for &start in x {
        let mut path = vec![start];
        let mut forward = Vec::new();
        on_path[start] = true;
        let found = extend(g, &mut path, &mut forward, &mut on_path, y, z, &openers);
        on_path[start] = false;
        if found {
            return Some(path);
        }
    }
    None
}

fn extend(
    g: &Dag,
    path: &mut Vec<usize>,
    forward: &mut Vec<bool>,
    on_path: &mut Vec<bool>,
    y: &HashSet<usize>,
    z: &HashSet<usize>,
    openers: &[bool],
) -> bool {
    let u = *path.last().expect("path starts non-empty");
    let kids = g.children_of(u).iter().map(|&w| (w, true));
    let folks = g.parents_of(u).iter().map(|&w| (w, false));
    for (w, fwd) in kids.chain(folks) {
        if on_path[w] {
            continue;
        }
        if let Some(&prev_fwd) = forward.last() {
            // u's role on the path is settled by its two adjacent edges.
            let collider = prev_fwd && !fwd;
            let blocked = if collider {
                !openers[u]
            } else {
                z.contains(&u)
            };
            if blocked {
                continue;
            }
        }
        path.push(w);
        if y.contains(&w) {
            return true;
        }
        forward.push(fwd);
        on_path[w] = true;
        if extend(g, path, forward, on_path, y, z, openers) {
            return true;
        }
        on_path[w] = false;
        forward.pop();
        path.pop();
    }
    false
}

/// Renders a path with per-edge orientation, e.g. `A_D -> D1 <- U_YD -> Y1`.
pub(super) fn render_path(g: &Dag, path: &[usize]) -> String {
    let mut out = String::new();
    for (i, &v) in path.iter().enumerate() {
        if i > 0 {
            let arrow = if g.has_edge_idx(path[i - 1], v) {
                " -> "
            } else {
                " <- "
            };
            out.push_str(arrow);
        }
        out.push_str(g.name(v));
    }
    out
}
