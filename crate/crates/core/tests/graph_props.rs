mod common;

use std::collections::BTreeSet;

use cbounds_core::canon::{Assignment, BitEncoding};
use cbounds_core::dist::EmpiricalDistribution;
use cbounds_core::error::Error;
use cbounds_core::fixtures;
use cbounds_core::graph::{CausalGraph, NodeId, NodeSet};
use cbounds_core::oracle::{instance, random_scm, FullScm, ScmOptions};
use cbounds_core::query::Query;
use cbounds_core::solve::{bound, SolveOptions};
use common::*;
use proptest::prelude::*;

fn endo_names(g: &CausalGraph) -> Vec<String> {
    g.endogenous().map(|v| g.name(v).to_string()).collect()
}

fn subset(all: &[NodeId], mask: u32) -> NodeSet {
    all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect()
}

/// `P(a, b | s) = P(a | s) P(b | s)` for every value of `s` with positive mass.
fn independent(d: &EmpiricalDistribution, a: &str, b: &str, s: &[String]) -> bool {
    for sv in assignments(s) {
        let given = lits(&sv);
        let ps = d.marginal(&given).unwrap();
        if ps <= 0.0 {
            continue;
        }
        for (va, vb) in [(false, false), (false, true), (true, false), (true, true)] {
            let mut ab = given.clone();
            ab.push((a, va));
            ab.push((b, vb));
            let mut ja = given.clone();
            ja.push((a, va));
            let mut jb = given.clone();
            jb.push((b, vb));
            let lhs = d.marginal(&ab).unwrap() * ps;
            let rhs = d.marginal(&ja).unwrap() * d.marginal(&jb).unwrap();
            if (lhs - rhs).abs() > 1e-10 {
                return false;
            }
        }
    }
    true
}

/// `P(v | do(x))` for a full assignment `v` of the other endogenous nodes,
/// read off the intervened semi-marginal graph: the intervened component
/// keeps its mechanisms and exogenous distribution, every other node
/// contributes `P(v | parents in the semi-marginal graph)`. `None` when one
/// of those conditionals is undefined.
fn semi_marginal_value(scm: &FullScm, joint: &EmpiricalDistribution, x: &str, vals: &Assignment) -> Option<f64> {
    let g = scm.graph();
    let sm = g.intervened_semi_marginal(&set(g, &[x])).unwrap();
    let cstar = scm.component_of(x).unwrap();
    let in_cstar: BTreeSet<String> = cstar.component.members.iter().map(|&m| g.name(m).to_string()).collect();
    let mut p = 1.0;
    for v in sm.endogenous() {
        let name = sm.name(v);
        if name == x || in_cstar.contains(name) {
            continue;
        }
        let given: Vec<(&str, bool)> = sm.endo_parents(v).iter().map(|&q| (sm.name(q), vals[sm.name(q)])).collect();
        let c = joint.conditional(&[(name, vals[name])], &given).unwrap();
        if c.zero_conditioning {
            return None;
        }
        p *= c.value;
    }
    let mut inner = 0.0;
    for (u, pu) in &cstar.support {
        let ok = in_cstar.iter().filter(|m| m.as_str() != x).all(|m| {
            let v = sm.id(m).unwrap();
            let parents: Assignment = sm.endo_parents(v).iter().map(|&q| (sm.name(q).to_string(), vals[sm.name(q)])).collect();
            cstar.encoding.eval_mechanism(u, m, &parents).unwrap() == vals[m]
        });
        if ok {
            inner += pu;
        }
    }
    Some(p * inner)
}

/// Every component has an exogenous variable with full support, so every
/// observational conditional is defined.
fn positive(scm: &FullScm) -> bool {
    scm.components().iter().all(|c| c.component.exogenous.is_some() && Some(c.support.len() as u64) == c.encoding.cardinality())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn c_components_partition_the_endogenous_nodes(shape in arb_shape(2, 6, 3)) {
        let g = shape.graph(3);
        let mut seen = NodeSet::new();
        for c in g.c_components() {
            for &m in &c.members {
                prop_assert!(!g.is_exogenous(m));
                prop_assert!(seen.insert(m), "{} in two components", g.name(m));
            }
        }
        prop_assert_eq!(seen, g.endogenous().collect::<NodeSet>());
    }

    #[test]
    fn surgery_is_idempotent(shape in arb_shape(2, 6, 3), inc in any::<u32>(), out in any::<u32>()) {
        let g = shape.graph(3);
        let all: Vec<NodeId> = g.nodes().collect();
        let (i, o) = (subset(&all, inc), subset(&all, out));
        let once = g.mutilate(&i, &o);
        prop_assert_eq!(once.mutilate(&i, &o), once.clone());
        for (p, c) in once.edges() {
            prop_assert!(!i.contains(&c) && !o.contains(&p));
        }
    }

    #[test]
    fn d_separation_implies_independence(shape in arb_shape(3, 5, 2), seed in any::<u64>()) {
        let g = shape.graph(2);
        let scm = random_scm(&g, seed, ScmOptions::default()).unwrap();
        prop_assume!(enumeration_size(&scm) <= 1 << 16);
        let joint = scm.exact_joint().unwrap();
        let endo: Vec<NodeId> = g.endogenous().collect();
        for (ia, &a) in endo.iter().enumerate() {
            for &b in &endo[ia + 1..] {
                let rest: Vec<NodeId> = endo.iter().copied().filter(|&v| v != a && v != b).collect();
                for mask in 0..1u32 << rest.len() {
                    let s = subset(&rest, mask);
                    if g.d_separated(&[a].into(), &[b].into(), &s).unwrap() {
                        let names: Vec<String> = s.iter().map(|&v| g.name(v).to_string()).collect();
                        prop_assert!(
                            independent(&joint, g.name(a), g.name(b), &names),
                            "{} and {} given {:?}", g.name(a), g.name(b), names
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn semi_marginal_factorization_matches_truncation(shape in prop_oneof![arb_shape(2, 5, 2), arb_confounded_shape(2, 5, 2)], seed in any::<u64>(), xi in 0usize..5) {
        let g = shape.graph(2);
        let scm = random_scm(&g, seed, ScmOptions::default()).unwrap();
        prop_assume!(enumeration_size(&scm) <= 1 << 14);
        let joint = scm.exact_joint().unwrap();
        let names = endo_names(&g);
        let x = names[xi % names.len()].clone();
        let others: Vec<String> = names.iter().filter(|n| **n != x).cloned().collect();
        for xv in [false, true] {
            let mut total = 0.0;
            for a in assignments(&others) {
                let truth = scm.exact_interventional(&a, &[(x.clone(), xv)]).unwrap();
                let mut vals: Assignment = a.iter().cloned().collect();
                vals.insert(x.clone(), xv);
                match semi_marginal_value(&scm, &joint, &x, &vals) {
                    Some(sm) => prop_assert!((truth - sm).abs() <= 1e-12, "{:?}: {} vs {}", a, truth, sm),
                    None => prop_assert!(!positive(&scm), "undefined factor in a positive model"),
                }
                total += truth;
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pruning_is_safe(shape in arb_confounded_shape(3, 6, 3), seed in 0u64..1000, xi in 0usize..6, yi in 0usize..6) {
        let g = shape.graph(2);
        let names = endo_names(&g);
        let (x, y) = (&names[xi % names.len()], &names[yi % names.len()]);
        prop_assume!(x != y);
        let c = g.component_of(g.id(x).unwrap());
        prop_assume!(BitEncoding::build(&g, &c).total_bits() <= 12);
        let q = Query::probability(&[(y.as_str(), true)], &[(x.as_str(), true)]);
        let inst = instance(&g, q.clone(), seed, ScmOptions::default()).unwrap();
        let mut opts = SolveOptions { method: "direct-lp".into(), ..Default::default() };
        let on = bound(&g, &inst.dist, &q, &opts);
        opts.objective.prune = false;
        let off = bound(&g, &inst.dist, &q, &opts);
        let (on, off) = match (on, off) {
            (Ok(a), Ok(b)) => (a, b),
            (a, b) => {
                // Only derivations the recursion does not support may fail.
                for r in [a.err(), b.err()].into_iter().flatten() {
                    prop_assert!(matches!(r, Error::Unsupported(_) | Error::NoSeparator { .. }), "{}", r);
                }
                return Ok(());
            }
        };
        for (a, b) in [(on.lower_value(), off.lower_value()), (on.upper_value(), off.upper_value())] {
            let (a, b) = (a.unwrap(), b.unwrap());
            prop_assert!((a - b).abs() <= 1e-9, "pruned {} unpruned {}", a, b);
        }
    }
}

/// Pruning the non-ancestors of the target leaves the bounds unchanged.
fn prune_agrees(g: &CausalGraph, target: &str, seeds: std::ops::Range<u64>) {
    let q = Query::probability(&[(target, true)], &[("X", true)]);
    for seed in seeds {
        let inst = instance(g, q.clone(), seed, ScmOptions::default()).unwrap();
        let mut opts = SolveOptions { method: "direct-lp".into(), ..Default::default() };
        let on = bound(&inst.graph, &inst.dist, &q, &opts).unwrap();
        opts.objective.prune = false;
        let off = bound(&inst.graph, &inst.dist, &q, &opts).unwrap();
        for (a, b) in [(on.lower_value(), off.lower_value()), (on.upper_value(), off.upper_value())] {
            let (a, b) = (a.unwrap(), b.unwrap());
            assert!((a - b).abs() <= 1e-9, "{target} seed {seed}: pruned {a}, unpruned {b}");
        }
    }
}

#[test]
fn pruning_is_safe_on_fixtures() {
    prune_agrees(&fixtures::confounded_chain(), "W", 0..5);
    prune_agrees(&fixtures::confounded_chain(), "Y", 0..5);
    prune_agrees(&fixtures::latency_pipeline(), "Z", 0..5);
    prune_agrees(&fixtures::latency_pipeline(), "W", 0..5);
    prune_agrees(&fixtures::extended_pipeline(), "W", 0..5);
    prune_agrees(&fixtures::mediated_bow(), "Y", 0..5);
}
