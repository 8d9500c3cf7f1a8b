#![allow(dead_code)]

use cbounds_core::graph::{CausalGraph, NodeKind, NodeSet};
use cbounds_core::oracle::FullScm;
use proptest::prelude::*;

/// Endogenous names in a fixed causal order: an edge only ever runs from an
/// earlier name to a later one.
pub const NAMES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

/// Shape of a random quasi-Markovian graph.
#[derive(Clone, Debug)]
pub struct Shape {
    pub n: usize,
    /// Candidate edges `i -> j` for `i < j`, in row order.
    pub edges: Vec<bool>,
    /// Exogenous parent per endogenous node: 0 for none, else `U{k}`.
    pub exo: Vec<u8>,
}

impl Shape {
    /// Each node keeps at most `max_parents` endogenous parents (the first
    /// ones), so canonical encodings stay small.
    pub fn graph(&self, max_parents: usize) -> CausalGraph {
        let mut edges: Vec<(String, String)> = Vec::new();
        let mut k = 0;
        let mut count = vec![0; self.n];
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.edges[k] && count[j] < max_parents {
                    edges.push((NAMES[i].into(), NAMES[j].into()));
                    count[j] += 1;
                }
                k += 1;
            }
        }
        let mut nodes: Vec<(String, NodeKind)> = NAMES[..self.n].iter().map(|s| (s.to_string(), NodeKind::Endogenous)).collect();
        let mut exo = std::collections::BTreeSet::new();
        for i in 0..self.n {
            if self.exo[i] > 0 {
                let u = format!("U{}", self.exo[i]);
                edges.push((u.clone(), NAMES[i].into()));
                exo.insert(u);
            }
        }
        nodes.extend(exo.into_iter().map(|u| (u, NodeKind::Exogenous)));
        CausalGraph::new(nodes, edges).unwrap()
    }
}

pub fn arb_shape(min_n: usize, max_n: usize, exo_vars: u8) -> impl Strategy<Value = Shape> {
    (min_n..=max_n).prop_flat_map(move |n| {
        (prop::collection::vec(any::<bool>(), n * (n - 1) / 2), prop::collection::vec(0..=exo_vars, n))
            .prop_map(move |(edges, exo)| Shape { n, edges, exo })
    })
}

/// Like [`arb_shape`], but every endogenous node has an exogenous parent.
pub fn arb_confounded_shape(min_n: usize, max_n: usize, exo_vars: u8) -> impl Strategy<Value = Shape> {
    (min_n..=max_n).prop_flat_map(move |n| {
        (prop::collection::vec(any::<bool>(), n * (n - 1) / 2), prop::collection::vec(1..=exo_vars, n))
            .prop_map(move |(edges, exo)| Shape { n, edges, exo })
    })
}

/// Number of joint exogenous configurations an exact enumeration visits.
pub fn enumeration_size(scm: &FullScm) -> usize {
    scm.components().iter().map(|c| c.support.len()).product()
}

pub fn set(g: &CausalGraph, names: &[&str]) -> NodeSet {
    g.node_set(names.iter().copied()).unwrap()
}

/// All `2^n` assignments to `names`, first name most significant.
pub fn assignments(names: &[String]) -> Vec<Vec<(String, bool)>> {
    let n = names.len();
    (0..1usize << n)
        .map(|i| names.iter().enumerate().map(|(k, s)| (s.clone(), (i >> (n - 1 - k)) & 1 == 1)).collect())
        .collect()
}

pub fn lits(a: &[(String, bool)]) -> Vec<(&str, bool)> {
    a.iter().map(|(n, b)| (n.as_str(), *b)).collect()
}
