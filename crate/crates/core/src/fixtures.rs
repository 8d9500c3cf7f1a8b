//! Reference graphs used throughout the tests, the acceptance suite and the
//! benchmark.

use crate::graph::{CausalGraph, NodeKind};

fn build(endo: &[&str], exo: &[&str], edges: &[(&str, &str)]) -> CausalGraph {
    let nodes = endo
        .iter()
        .map(|n| (n.to_string(), NodeKind::Endogenous))
        .chain(exo.iter().map(|n| (n.to_string(), NodeKind::Exogenous)));
    CausalGraph::new(nodes, edges.iter().copied()).expect("fixture graphs are valid")
}

/// X -> W -> Z -> Y with U1 over {X, W} and U2 over {Z, Y}.
pub fn confounded_chain() -> CausalGraph {
    build(
        &["X", "W", "Z", "Y"],
        &["U1", "U2"],
        &[("U1", "X"), ("U1", "W"), ("X", "W"), ("W", "Z"), ("U2", "Z"), ("U2", "Y"), ("Z", "Y")],
    )
}

/// X affects Y directly and through Z; R sits between X and Z. U1 confounds
/// {X, Y} and U2 confounds {R, Z}.
pub fn mediated_bow() -> CausalGraph {
    build(
        &["X", "Y", "R", "Z"],
        &["U1", "U2"],
        &[
            ("X", "Z"),
            ("Z", "Y"),
            ("X", "R"),
            ("R", "Z"),
            ("U1", "X"),
            ("U1", "Y"),
            ("U2", "R"),
            ("U2", "Z"),
            ("X", "Y"),
        ],
    )
}

/// X -> Z -> W -> Y plus X -> W, with U1 over {X, W} and U2 over {Z, Y}.
pub fn latency_pipeline() -> CausalGraph {
    build(
        &["X", "Z", "W", "Y"],
        &["U1", "U2"],
        &[("X", "Z"), ("Z", "W"), ("W", "Y"), ("U1", "X"), ("U1", "W"), ("U2", "Z"), ("U2", "Y"), ("X", "W")],
    )
}

/// The pipeline with an extra confounded mediator T and an upstream S.
pub fn extended_pipeline() -> CausalGraph {
    build(
        &["S", "Z", "X", "W", "Y", "T"],
        &["U1", "U2", "U3"],
        &[
            ("S", "Z"),
            ("X", "Z"),
            ("X", "W"),
            ("W", "Y"),
            ("X", "T"),
            ("T", "Y"),
            ("U1", "X"),
            ("U1", "W"),
            ("U1", "T"),
            ("U2", "Y"),
            ("U3", "S"),
            ("U3", "Z"),
            ("Z", "W"),
        ],
    )
}

/// The scalable pipeline with `m` observed confounders `Z1..Zm` and a chain
/// of `n` mediators `W1..Wn`. `(1, 1)` is [`latency_pipeline`] with `Z1` and
/// `W1` for `Z` and `W`.
pub fn pipeline_family(m: usize, n: usize) -> CausalGraph {
    assert!(m >= 1 && n >= 1, "family needs m, n >= 1");
    let zs: Vec<String> = (1..=m).map(|j| format!("Z{j}")).collect();
    let ws: Vec<String> = (1..=n).map(|i| format!("W{i}")).collect();
    let mut nodes = vec![("X".to_string(), NodeKind::Endogenous)];
    nodes.extend(zs.iter().chain(&ws).map(|s| (s.clone(), NodeKind::Endogenous)));
    nodes.push(("Y".into(), NodeKind::Endogenous));
    nodes.push(("U1".into(), NodeKind::Exogenous));
    nodes.push(("U2".into(), NodeKind::Exogenous));
    let mut edges: Vec<(String, String)> = vec![
        ("U1".into(), "X".into()),
        ("U2".into(), "Y".into()),
        ("X".into(), ws[0].clone()),
        (ws[n - 1].clone(), "Y".into()),
    ];
    for w in &ws {
        edges.push(("U1".into(), w.clone()));
    }
    for z in &zs {
        edges.push(("U2".into(), z.clone()));
        edges.push(("X".into(), z.clone()));
        for w in &ws {
            edges.push((z.clone(), w.clone()));
        }
    }
    for pair in ws.windows(2) {
        edges.push((pair[0].clone(), pair[1].clone()));
    }
    CausalGraph::new(nodes, edges).expect("family graphs are valid")
}

/// The four fixed fixtures by name.
pub fn named() -> Vec<(&'static str, CausalGraph)> {
    vec![
        ("confounded_chain", confounded_chain()),
        ("mediated_bow", mediated_bow()),
        ("latency_pipeline", latency_pipeline()),
        ("extended_pipeline", extended_pipeline()),
    ]
}

pub fn by_name(name: &str) -> Option<CausalGraph> {
    named().into_iter().find(|(n, _)| *n == name).map(|(_, g)| g)
}
