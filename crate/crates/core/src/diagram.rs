//! Graphviz output for the stage diagram.
//!
//! A node at rank `n` is a component `k ∈ ℤ_{2^n}` of `X_n × ℤ_{2^n}`,
//! labelled by the binary digits of `k`, least significant first. Component
//! `k` at rank `n+1` restricts to component `k mod 2^n` at rank `n`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::schedule::{DerivedSequences, ScheduleError};

pub const MAX_DOT_DEPTH: usize = 4;

#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("depth {0} exceeds the diagram limit of {MAX_DOT_DEPTH}")]
    TooDeep(usize),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

fn node_id(rank: usize, k: u64) -> String {
    format!("n{rank}_{k}")
}

fn node_label(rank: usize, k: u64) -> String {
    if rank == 0 {
        return "X0".into();
    }
    (0..rank).map(|b| if k >> b & 1 == 1 { '1' } else { '0' }).collect()
}

fn header(out: &mut String, name: &str) {
    let _ = writeln!(out, "digraph {name} {{");
    let _ = writeln!(out, "  rankdir=LR;");
    let _ = writeln!(out, "  node [shape=circle, fontsize=10];");
}

/// Tree diagram down to `depth`. Every child gets a double edge (its bundle
/// of coordinate projections) and a parallel dotted edge (point
/// evaluations) from its parent; `with_cross_evals` adds dotted edges from
/// every other node of the previous rank.
pub fn emit_dot(seq: &DerivedSequences, depth: usize, with_cross_evals: bool) -> Result<String, DiagramError> {
    if depth > MAX_DOT_DEPTH {
        return Err(DiagramError::TooDeep(depth));
    }
    seq.require_stage(depth)?;
    let mut out = String::new();
    header(&mut out, if with_cross_evals { "stages_cross" } else { "stages" });
    for rank in 0..=depth {
        let _ = write!(out, "  {{ rank=same;");
        for k in 0..1u64 << rank {
            let _ = write!(out, " {}", node_id(rank, k));
        }
        let _ = writeln!(out, " }}");
        for k in 0..1u64 << rank {
            let _ = writeln!(out, "  {} [label=\"{}\"];", node_id(rank, k), node_label(rank, k));
        }
    }
    for rank in 0..depth {
        let parents = 1u64 << rank;
        for k in 0..parents * 2 {
            let parent = k % parents;
            let (from, to) = (node_id(rank, parent), node_id(rank + 1, k));
            let _ = writeln!(
                out,
                "  {from} -> {to} [color=\"black:black\", label=\"{}\"];",
                seq.d(rank + 1)
            );
            let _ = writeln!(out, "  {from} -> {to} [style=dotted];");
            if with_cross_evals {
                for other in (0..parents).filter(|&j| j != parent) {
                    let _ = writeln!(out, "  {} -> {to} [style=dotted];", node_id(rank, other));
                }
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}

/// The plain chain `X_0 → X_1 → …` without the group coordinate, with
/// slot multiplicities on the edges.
pub fn emit_chain_dot(seq: &DerivedSequences, depth: usize) -> Result<String, DiagramError> {
    seq.require_stage(depth)?;
    let mut out = String::new();
    header(&mut out, "chain");
    for n in 0..=depth {
        let _ = writeln!(out, "  x{n} [label=\"X{n}\"];");
    }
    for n in 0..depth {
        let _ = writeln!(
            out,
            "  x{n} -> x{} [color=\"black:black\", label=\"{}\"];",
            n + 1,
            seq.d(n + 1)
        );
        let _ = writeln!(
            out,
            "  x{n} -> x{} [style=dotted, label=\"{}\"];",
            n + 1,
            seq.l(n + 1) - seq.d(n + 1)
        );
    }
    out.push_str("}\n");
    Ok(out)
}

/// Edge counts of a diagram, by style.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCounts {
    pub double: usize,
    pub dotted: usize,
}

pub fn count_edges(dot: &str) -> EdgeCounts {
    let mut c = EdgeCounts::default();
    for line in dot.lines().filter(|l| l.contains("->")) {
        if line.contains("black:black") {
            c.double += 1;
        } else if line.contains("dotted") {
            c.dotted += 1;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{derive_sequences, ParameterSchedule};

    fn seq() -> DerivedSequences {
        derive_sequences(&ParameterSchedule::powers_of_ten(), 5).unwrap()
    }

    #[test]
    fn depth_zero_single_node() {
        let dot = emit_dot(&seq(), 0, true).unwrap();
        assert_eq!(dot.matches("[label=").count(), 1);
        assert_eq!(count_edges(&dot), EdgeCounts::default());
    }

    #[test]
    fn depth_one_parallel_edges() {
        let dot = emit_dot(&seq(), 1, false).unwrap();
        assert!(dot.contains("n0_0 -> n1_0 [color=\"black:black\""));
        assert!(dot.contains("n0_0 -> n1_1 [style=dotted]"));
        assert_eq!(count_edges(&dot), EdgeCounts { double: 2, dotted: 2 });
    }

    #[test]
    fn depth_two_cross_edges_reach_everything() {
        let dot = emit_dot(&seq(), 2, true).unwrap();
        for parent in 0..2 {
            for child in 0..4 {
                assert!(
                    dot.contains(&format!("n1_{parent} -> n2_{child} [style=dotted]")),
                    "missing {parent}->{child}"
                );
            }
        }
        // rank 1: 2 dotted; rank 2: 4 parental + 4 cross
        assert_eq!(count_edges(&dot), EdgeCounts { double: 6, dotted: 10 });
    }

    #[test]
    fn labels_are_lsb_first() {
        let dot = emit_dot(&seq(), 3, false).unwrap();
        assert!(dot.contains("n3_1 [label=\"100\"]"));
        assert!(dot.contains("n3_6 [label=\"011\"]"));
    }

    #[test]
    fn depth_guard() {
        assert!(matches!(emit_dot(&seq(), 5, false), Err(DiagramError::TooDeep(5))));
    }

    #[test]
    fn chain_multiplicities() {
        let dot = emit_chain_dot(&seq(), 2).unwrap();
        assert!(dot.contains("x1 -> x2 [color=\"black:black\", label=\"100\"]"));
        assert!(dot.contains("x1 -> x2 [style=dotted, label=\"2\"]"));
    }
}
