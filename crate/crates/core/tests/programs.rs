use std::collections::BTreeMap;

use cbounds_core::canon::ExoValue;
use cbounds_core::fixtures;
use cbounds_core::graph::CausalGraph;
use cbounds_core::lpform::{
    build_direct_lp, build_pricing_milp_with, build_single_milp, Cmp, ConstraintSystem, IntegerProgramSpec,
    LinearProgramSpec, LpColumn, Product, Sense, SingleMilpOptions, VarKind,
};
use cbounds_core::objective::{BitPolynomial, ObjectiveOptions};
use cbounds_core::oracle::{instance, ScmOptions};
use cbounds_core::query::Query;
use cbounds_core::solve::{
    column_generation, prepare, solve_lp, solve_milp, CgOptions, LpStatus, MilpStatus,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(g: &CausalGraph, seed: u64) -> (ConstraintSystem, BitPolynomial) {
    let q = Query::probability(&[("Y", true)], &[("X", true)]);
    let inst = instance(g, q.clone(), seed, ScmOptions::default()).unwrap();
    let p = prepare(g, &inst.dist, &q, ObjectiveOptions::default()).unwrap();
    (p.system.unwrap(), p.gamma)
}

fn all_values(cs: &ConstraintSystem) -> Vec<ExoValue> {
    let enc = cs.encoding();
    (0..enc.cardinality().unwrap()).map(|i| enc.value(i).unwrap()).collect()
}

/// Range of variable `j` over the program with every bit fixed to `u`.
fn range_with_bits(ip: &IntegerProgramSpec, u: &ExoValue, j: usize) -> (f64, f64) {
    let mut fixed = ip.clone();
    fixed.offset = 0.0;
    for v in &mut fixed.vars {
        v.cost = 0.0;
    }
    for (pos, &b) in ip.bits[0].iter().enumerate() {
        let val = if u.bit(pos) { 1.0 } else { 0.0 };
        fixed.vars[b].lower = val;
        fixed.vars[b].upper = val;
    }
    fixed.sense = Sense::Minimize;
    fixed.vars[j].cost = 1.0;
    let lo = solve_milp(&fixed).unwrap();
    fixed.vars[j].cost = -1.0;
    let hi = solve_milp(&fixed).unwrap();
    assert_eq!(lo.status, MilpStatus::Optimal);
    assert_eq!(hi.status, MilpStatus::Optimal);
    (lo.objective, -hi.objective)
}

fn product_var(p: &Product) -> usize {
    match p {
        Product::Literals { var, .. } | Product::Weighted { var, .. } | Product::Scaled { var, .. } => *var,
    }
}

/// Once the bits are fixed, every product variable of the pricing program is
/// pinned to its defined value.
fn linearization_is_exact(cs: &ConstraintSystem, gamma: &BitPolynomial, values: &[ExoValue]) -> usize {
    let duals = vec![0.0; cs.num_rows()];
    let mut checked = 0;
    for strengthen in [false, true] {
        let ip = build_pricing_milp_with(cs, gamma, &duals, Sense::Minimize, strengthen);
        let weights: &[f64] = if strengthen { &[1.0] } else { &[] };
        for u in values {
            let x = ip.complete(std::slice::from_ref(u), weights);
            assert!(ip.max_violation(&x) <= 1e-12, "strengthen={strengthen} u={u}");
            for (i, &a) in ip.entries[0].iter().enumerate() {
                assert_eq!(x[a] == 1.0, cs.rows()[i].entry.eval(cs.encoding(), u));
            }
            for p in &ip.products {
                let j = product_var(p);
                let (lo, hi) = range_with_bits(&ip, u, j);
                assert!((lo - x[j]).abs() <= 1e-9 && (hi - x[j]).abs() <= 1e-9, "{} in [{lo}, {hi}], want {}", ip.vars[j].name, x[j]);
                checked += 1;
            }
        }
    }
    checked
}

#[test]
fn pricing_linearization_is_exact_on_the_pipeline() {
    let (cs, gamma) = system(&fixtures::latency_pipeline(), 3);
    let values = all_values(&cs);
    assert_eq!((values.len(), cs.rows().len()), (32, 8));
    assert!(linearization_is_exact(&cs, &gamma, &values) > 0);
}

#[test]
fn pricing_linearization_is_exact_with_degree_two_terms() {
    let (cs, gamma) = system(&fixtures::extended_pipeline(), 5);
    assert_eq!(gamma.degree(), 2);
    let values: Vec<ExoValue> = all_values(&cs).into_iter().step_by(9).collect();
    linearization_is_exact(&cs, &gamma, &values);
}

/// `sign·γ(u) − d·a_u`, normalization entry included, for every `u`.
fn brute_force_price(cs: &ConstraintSystem, gamma: &BitPolynomial, duals: &[f64], sense: Sense) -> f64 {
    all_values(cs)
        .iter()
        .map(|u| sense.sign() * gamma.eval(u) - cs.column(u).iter().map(|&r| duals[r]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn pricing_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (g, seed) in [(fixtures::latency_pipeline(), 1), (fixtures::confounded_chain(), 2), (fixtures::extended_pipeline(), 4)] {
        let (cs, gamma) = system(&g, seed);
        for trial in 0..10 {
            let duals: Vec<f64> = if trial == 0 { vec![0.0; cs.num_rows()] } else { (0..cs.num_rows()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            for sense in [Sense::Minimize, Sense::Maximize] {
                let want = brute_force_price(&cs, &gamma, &duals, sense);
                for strengthen in [false, true] {
                    let ip = build_pricing_milp_with(&cs, &gamma, &duals, sense, strengthen);
                    let sol = solve_milp(&ip).unwrap();
                    assert_eq!(sol.status, MilpStatus::Optimal);
                    assert!((sol.objective - want).abs() <= 1e-9, "trial {trial} {sense:?} strengthen={strengthen}: {} vs {want}", sol.objective);
                    let u = ip.decode(0, &sol.x);
                    let at_u = sense.sign() * gamma.eval(&u) - cs.column(&u).iter().map(|&r| duals[r]).sum::<f64>();
                    assert!((at_u - want).abs() <= 1e-9);
                }
            }
            if trial == 0 {
                let min_gamma = all_values(&cs).iter().map(|u| gamma.eval(u)).fold(f64::INFINITY, f64::min);
                assert!((brute_force_price(&cs, &gamma, &duals, Sense::Minimize) - min_gamma).abs() <= 1e-15);
            }
        }
    }
}

/// The external context of each configuration row.
fn row_contexts(cs: &ConstraintSystem) -> Vec<Vec<bool>> {
    let members = cs.encoding().members();
    let external: Vec<usize> = (0..cs.variables().len()).filter(|&j| !members.contains(&cs.variables()[j])).collect();
    cs.rows().iter().map(|r| external.iter().map(|&j| r.values[j]).collect()).collect()
}

/// A column is a 0/1 vector with exactly one configuration per context.
fn assert_valid_column(cs: &ConstraintSystem, rows: &[usize]) {
    let ctx = row_contexts(cs);
    assert_eq!(rows.last(), Some(&cs.normalization_row()));
    let mut per: BTreeMap<&Vec<bool>, usize> = ctx.iter().map(|c| (c, 0)).collect();
    for &r in &rows[..rows.len() - 1] {
        *per.get_mut(&ctx[r]).unwrap() += 1;
    }
    assert_eq!(per.len(), cs.external_contexts());
    assert!(per.values().all(|&n| n == 1), "{per:?}");
}

#[test]
fn direct_and_generated_columns_are_valid() {
    for g in [fixtures::confounded_chain(), fixtures::latency_pipeline(), fixtures::extended_pipeline(), fixtures::mediated_bow()] {
        let (cs, gamma) = system(&g, 0);
        let lp = build_direct_lp(&cs, &gamma, Sense::Minimize, 1 << 20).unwrap();
        for (col, u) in lp.columns.iter().zip(&lp.labels) {
            assert!(col.entries.iter().all(|&(_, a)| a == 1.0));
            let rows: Vec<usize> = col.entries.iter().map(|e| e.0).collect();
            assert_eq!(rows, cs.column(u));
            assert_valid_column(&cs, &rows);
            assert!((col.cost - gamma.eval(u)).abs() == 0.0);
        }
        for sense in [Sense::Minimize, Sense::Maximize] {
            let report = column_generation(&cs, &gamma, sense, CgOptions::default()).unwrap();
            assert!(!report.generated.is_empty());
            for u in &report.generated {
                assert_valid_column(&cs, &cs.column(u));
            }
        }
    }
}

#[test]
fn single_program_copies_decode_to_valid_columns() {
    let (cs, gamma) = system(&fixtures::confounded_chain(), 7);
    for sense in [Sense::Minimize, Sense::Maximize] {
        let lp = solve_lp(&build_direct_lp(&cs, &gamma, sense, 1 << 20).unwrap()).unwrap();
        for strengthen in [false, true] {
            let ip = build_single_milp(&cs, &gamma, sense, SingleMilpOptions { strengthen, ..Default::default() }).unwrap();
            assert_eq!(ip.bits.len(), cs.num_rows());
            let sol = solve_milp(&ip).unwrap();
            assert_eq!(sol.status, MilpStatus::Optimal);
            assert!((sol.objective - lp.objective).abs() <= 1e-7, "{} vs {}", sol.objective, lp.objective);
            assert!(ip.max_violation(&sol.x) <= 1e-7);
            for k in 0..ip.bits.len() {
                let u = ip.decode(k, &sol.x);
                let rows = cs.column(&u);
                assert_valid_column(&cs, &rows);
                for (i, &a) in ip.entries[k].iter().enumerate() {
                    assert!((sol.x[a] - rows.contains(&i) as u8 as f64).abs() <= 1e-7);
                }
            }
        }
    }
}

/// The optimal direct LP solution, spread over copies, is a feasible point
/// of the single program with the same objective.
#[test]
fn single_program_contains_the_lp_optimum() {
    let (cs, gamma) = system(&fixtures::latency_pipeline(), 2);
    let spec = build_direct_lp(&cs, &gamma, Sense::Maximize, 1 << 20).unwrap();
    let lp = solve_lp(&spec).unwrap();
    let support: Vec<usize> = (0..lp.x.len()).filter(|&j| lp.x[j] > 0.0).collect();
    assert!(support.len() <= cs.num_rows());
    let mut values: Vec<ExoValue> = support.iter().map(|&j| spec.labels[j].clone()).collect();
    let mut weights: Vec<f64> = support.iter().map(|&j| lp.x[j]).collect();
    while values.len() < cs.num_rows() {
        values.push(spec.labels[0].clone());
        weights.push(0.0);
    }
    for strengthen in [false, true] {
        let ip = build_single_milp(&cs, &gamma, Sense::Maximize, SingleMilpOptions { strengthen, ..Default::default() }).unwrap();
        let x = ip.complete(&values, &weights);
        assert!(ip.max_violation(&x) <= 1e-9, "strengthen={strengthen}: {}", ip.max_violation(&x));
        assert!((ip.objective_at(&x) - lp.objective).abs() <= 1e-9);
    }
}

#[test]
fn weighted_products_follow_the_binary() {
    let (cs, gamma) = system(&fixtures::confounded_chain(), 1);
    let ip = build_single_milp(&cs, &gamma, Sense::Minimize, SingleMilpOptions { strengthen: false, ..Default::default() }).unwrap();
    let mut checked = 0;
    for p in &ip.products {
        let Product::Weighted { var, binary, weight } = *p else { continue };
        // The three inequalities that define this product.
        let mut local = ip.clone();
        local.constraints.retain(|c| c.terms.iter().any(|t| t.0 == var) && c.terms.iter().all(|t| [var, binary, weight].contains(&t.0)));
        assert_eq!(local.constraints.len(), 3);
        for v in &mut local.vars {
            v.cost = 0.0;
        }
        local.offset = 0.0;
        local.sense = Sense::Minimize;
        for (m, w) in [(0.0, 0.0), (0.0, 0.37), (1.0, 0.0), (1.0, 0.37), (1.0, 1.0), (0.0, 1.0)] {
            local.vars[binary].lower = m;
            local.vars[binary].upper = m;
            local.vars[weight].lower = w;
            local.vars[weight].upper = w;
            local.vars[var].cost = 1.0;
            let lo = solve_milp(&local).unwrap().objective;
            local.vars[var].cost = -1.0;
            let hi = -solve_milp(&local).unwrap().objective;
            assert!((lo - m * w).abs() <= 1e-12 && (hi - m * w).abs() <= 1e-12, "m={m} p={w}: [{lo}, {hi}]");
        }
        assert_eq!(local.vars[var].kind, VarKind::Continuous);
        checked += 1;
    }
    assert!(checked > 0);
    assert!(ip.constraints.iter().any(|c| c.cmp == Cmp::Eq));
}

#[test]
fn normalization_row_is_redundant() {
    for g in [fixtures::confounded_chain(), fixtures::latency_pipeline(), fixtures::mediated_bow()] {
        for seed in 0..5 {
            let (cs, gamma) = system(&g, seed);
            for sense in [Sense::Minimize, Sense::Maximize] {
                let full = build_direct_lp(&cs, &gamma, sense, 1 << 20).unwrap();
                let norm = cs.normalization_row();
                let mut dropped = full.clone();
                dropped.rhs.remove(norm);
                for c in &mut dropped.columns {
                    c.entries.retain(|e| e.0 != norm);
                }
                let (a, b) = (solve_lp(&full).unwrap(), solve_lp(&dropped).unwrap());
                assert_eq!((a.status, b.status), (LpStatus::Optimal, LpStatus::Optimal));
                assert!((a.objective - b.objective).abs() <= 1e-8, "seed {seed}: {} vs {}", a.objective, b.objective);
            }
        }
    }
}

const TOL: f64 = 1e-11;

fn pivot(t: &mut [Vec<f64>], r: usize, j: usize) {
    let p = t[r][j];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let pr = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r && row[j] != 0.0 {
            let f = row[j];
            for (v, q) in row.iter_mut().zip(&pr) {
                *v -= f * q;
            }
        }
    }
}

/// Bland's rule pivots over the first `allowed` columns until no reduced
/// cost is negative. `false` when unbounded.
fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> bool {
    let last = t[0].len() - 1;
    loop {
        let reduced = |j: usize| cost[j] - t.iter().zip(basis.iter()).map(|(row, &k)| cost[k] * row[j]).sum::<f64>();
        let Some(j) = (0..allowed).find(|&j| !basis.contains(&j) && reduced(j) < -TOL) else { return true };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..t.len() {
            if t[i][j] > TOL {
                let ratio = t[i][last] / t[i][j];
                match best {
                    Some((r, k)) if ratio > r + TOL || (ratio > r - TOL && basis[i] > basis[k]) => {}
                    _ => best = Some((ratio, i)),
                }
            }
        }
        let Some((_, r)) = best else { return false };
        pivot(t, r, j);
        basis[r] = j;
    }
}

/// Dense two-phase tableau simplex for `min c·x, A x = b, x ≥ 0`. `None`
/// when infeasible.
fn tableau_simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let (m, n) = (a.len(), c.len());
    // Columns: n structural, m artificial, then the right-hand side.
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
            let mut row: Vec<f64> = a[i].iter().map(|v| s * v).collect();
            row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
            row.push(s * b[i]);
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    let phase_one: Vec<f64> = (0..n + m).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    assert!(run(&mut t, &mut basis, &phase_one, n + m));
    let infeasibility: f64 = (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][n + m]).sum();
    if infeasibility > 1e-9 {
        return None;
    }
    // Drive zero-level artificials out of the basis, dropping redundant rows.
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= n {
            match (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                Some(j) => {
                    pivot(&mut t, i, j);
                    basis[i] = j;
                }
                None => {
                    t.remove(i);
                    basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    let cost: Vec<f64> = c.iter().copied().chain(std::iter::repeat(0.0).take(m)).collect();
    assert!(run(&mut t, &mut basis, &cost, n), "test programs are bounded");
    Some(t.iter().zip(&basis).map(|(row, &k)| c[k] * row[n + m]).sum())
}

fn random_program(rng: &mut ChaCha8Rng, feasible: bool) -> LinearProgramSpec {
    let m = rng.gen_range(2..7);
    let n = rng.gen_range(m..m + 10);
    let mut a: Vec<Vec<f64>> = (0..m - 1)
        .map(|_| (0..n).map(|_| if rng.gen_bool(0.4) { 0.0 } else if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(-1.0..2.0) }).collect())
        .collect();
    // A normalization row keeps the feasible set bounded.
    a.push(vec![1.0; n]);
    let rhs: Vec<f64> = if feasible {
        let mut x0: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { rng.gen::<f64>() } else { 0.0 }).collect();
        x0[0] += 0.1;
        let s: f64 = x0.iter().sum();
        x0.iter_mut().for_each(|v| *v /= s);
        a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect()
    } else {
        (0..m).map(|i| if i == m - 1 { 1.0 } else { rng.gen_range(-3.0..3.0) }).collect()
    };
    let columns = (0..n)
        .map(|j| LpColumn { cost: rng.gen_range(-1.0..1.0), entries: (0..m).filter(|&i| a[i][j] != 0.0).map(|i| (i, a[i][j])).collect() })
        .collect();
    let sense = if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    LinearProgramSpec { sense, rhs, columns, labels: Vec::new() }
}

#[test]
fn revised_simplex_agrees_with_a_tableau_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut optimal, mut infeasible) = (0, 0);
    for trial in 0..50 {
        let spec = random_program(&mut rng, trial % 5 != 4);
        let (m, n) = (spec.num_rows(), spec.columns.len());
        let mut a = vec![vec![0.0; n]; m];
        for (j, c) in spec.columns.iter().enumerate() {
            for &(i, v) in &c.entries {
                a[i][j] = v;
            }
        }
        let sign = spec.sense.sign();
        let c: Vec<f64> = spec.columns.iter().map(|c| sign * c.cost).collect();
        let oracle = tableau_simplex(&a, &spec.rhs, &c).map(|v| sign * v);
        let sol = solve_lp(&spec).unwrap();
        match oracle {
            None => {
                assert_eq!(sol.status, LpStatus::Infeasible, "trial {trial}");
                infeasible += 1;
            }
            Some(v) => {
                assert_eq!(sol.status, LpStatus::Optimal, "trial {trial}");
                assert!((sol.objective - v).abs() <= 1e-8, "trial {trial}: {} vs {v}", sol.objective);
                // Primal feasibility.
                for i in 0..m {
                    let lhs: f64 = (0..n).map(|j| a[i][j] * sol.x[j]).sum();
                    assert!((lhs - spec.rhs[i]).abs() <= 1e-8);
                }
                assert!(sol.x.iter().all(|&x| x >= -1e-12));
                // Dual feasibility and complementary slackness.
                for j in 0..n {
                    let d = sign * (spec.columns[j].cost - (0..m).map(|i| sol.duals[i] * a[i][j]).sum::<f64>());
                    assert!(d >= -1e-7, "trial {trial} column {j}: reduced cost {d}");
                    assert!((d * sol.x[j]).abs() <= 1e-7);
                }
                let dual_obj: f64 = sol.duals.iter().zip(&spec.rhs).map(|(y, b)| y * b).sum();
                assert!((dual_obj - sol.objective).abs() <= 1e-8);
                optimal += 1;
            }
        }
    }
    assert!(optimal >= 30 && infeasible >= 1, "{optimal} optimal, {infeasible} infeasible");
}
