//! Revised simplex on `min c·x, A x = b, x ≥ 0` with an explicit dense
//! basis inverse.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lpform::LinearProgramSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// In the sense of the program.
    pub objective: f64,
    pub x: Vec<f64>,
    /// Row duals `y` with `c_j - y·A_j ≥ 0` for a minimization and `≤ 0`
    /// for a maximization.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub max_pivots: usize,
    /// Reduced cost optimality tolerance.
    pub tol: f64,
    pub pivot_tol: f64,
    /// Phase one optimum above this means infeasible.
    pub feas_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            refactor_every: 100,
            bland_after: 50,
            max_pivots: 5_000_000,
            tol: 1e-10,
            pivot_tol: 1e-9,
            feas_tol: 1e-9,
        }
    }
}

/// Simplex state. Columns `0..m` are the artificial identity; user columns
/// follow. Rows with negative right-hand side are negated internally.
#[derive(Clone, Debug)]
pub struct RevisedSimplex {
    m: usize,
    flip: Vec<bool>,
    b: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    locked: Vec<bool>,
    basis: Vec<usize>,
    pos: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
    pivots: usize,
    degenerate_run: usize,
    opts: SimplexOptions,
}

impl RevisedSimplex {
    pub fn new(b: &[f64], opts: SimplexOptions) -> Self {
        let m = b.len();
        let flip: Vec<bool> = b.iter().map(|&v| v < 0.0).collect();
        let bb: Vec<f64> = b.iter().map(|v| v.abs()).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        RevisedSimplex {
            m,
            flip,
            xb: bb.clone(),
            b: bb,
            cols: (0..m).map(|i| vec![(i, 1.0)]).collect(),
            cost: vec![0.0; m],
            locked: vec![false; m],
            basis: (0..m).collect(),
            pos: (0..m).map(Some).collect(),
            binv,
            since_refactor: 0,
            pivots: 0,
            degenerate_run: 0,
            opts,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_columns(&self) -> usize {
        self.cols.len()
    }

    pub fn pivots(&self) -> usize {
        self.pivots
    }

    pub fn add_column(&mut self, entries: &[(usize, f64)], cost: f64) -> usize {
        let col: Vec<(usize, f64)> = entries
            .iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|&(i, a)| (i, if self.flip[i] { -a } else { a }))
            .collect();
        self.cols.push(col);
        self.cost.push(cost);
        self.locked.push(false);
        self.pos.push(None);
        self.cols.len() - 1
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.cost[j] = c;
    }

    /// A locked column may not enter and leaves the basis as soon as it can.
    pub fn lock(&mut self, j: usize) {
        self.locked[j] = true;
    }

    pub fn value(&self, j: usize) -> f64 {
        self.pos[j].map_or(0.0, |r| self.xb[r].max(0.0))
    }

    pub fn objective(&self) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&j, &x)| self.cost[j] * x).sum()
    }

    fn internal_duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for i in 0..m {
                    y[i] += c * row[i];
                }
            }
        }
        y
    }

    /// Duals of the original (unflipped) rows.
    pub fn duals(&self) -> Vec<f64> {
        let mut y = self.internal_duals();
        for (i, v) in y.iter_mut().enumerate() {
            if self.flip[i] {
                *v = -*v;
            }
        }
        y
    }

    pub fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for k in 0..m {
                alpha[k] += self.binv[k * m + i] * a;
            }
        }
        alpha
    }

    /// Rebuild the basis inverse from scratch by Gauss-Jordan elimination.
    pub fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&r, &s| a[r * m + c].abs().total_cmp(&a[s * m + c].abs()))
                .unwrap();
            let pv = a[p * m + c];
            if pv.abs() < 1e-12 {
                return Err(Error::Solver("singular basis".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            for k in 0..m {
                a[c * m + k] /= pv;
                inv[c * m + k] /= pv;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        // inv = B^{-1}: row k belongs to basis position k.
        self.binv = inv;
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&self.b).map(|(r, b)| r * b).sum();
            self.xb[k] = if v.abs() < 1e-13 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, r: usize, j: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        let theta = self.xb[r] / ar;
        for k in 0..m {
            self.binv[r * m + k] /= ar;
        }
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
                self.xb[i] -= f * theta;
                if self.xb[i].abs() < 1e-13 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[r] = theta;
        let old = self.basis[r];
        self.pos[old] = None;
        self.basis[r] = j;
        self.pos[j] = Some(r);
        self.pivots += 1;
        self.since_refactor += 1;
    }

    fn choose_entering(&self, y: &[f64], bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols.len() {
            if self.locked[j] || self.pos[j].is_some() {
                continue;
            }
            let d = self.reduced_cost(j, y);
            if d < -self.opts.tol {
                if bland {
                    return Some(j);
                }
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn choose_leaving(&self, alpha: &[f64], bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let locked = self.locked[self.basis[i]];
            let a = if locked { alpha[i].abs() } else { alpha[i] };
            if a <= self.opts.pivot_tol {
                continue;
            }
            let ratio = if locked { 0.0 } else { self.xb[i].max(0.0) / a };
            let better = match best {
                None => true,
                Some((k, r)) => {
                    if ratio < r - 1e-12 {
                        true
                    } else if ratio <= r + 1e-12 {
                        if bland {
                            self.basis[i] < self.basis[k]
                        } else {
                            alpha[i].abs() > alpha[k].abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((i, ratio));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Primal simplex from the current (feasible) basis.
    pub fn run(&mut self) -> Result<LpStatus> {
        let start = self.pivots;
        loop {
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            if self.pivots - start >= self.opts.max_pivots {
                return Ok(LpStatus::IterationLimit);
            }
            let bland = self.degenerate_run >= self.opts.bland_after;
            let y = self.internal_duals();
            let Some(j) = self.choose_entering(&y, bland) else {
                return Ok(LpStatus::Optimal);
            };
            let alpha = self.ftran(j);
            let Some(r) = self.choose_leaving(&alpha, bland) else {
                return Ok(LpStatus::Unbounded);
            };
            let theta = if self.locked[self.basis[r]] { 0.0 } else { self.xb[r] / alpha[r] };
            if theta.abs() <= 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            self.pivot(r, j, &alpha);
        }
    }

    /// Largest violation of `A x = b`, `x ≥ 0` over all columns.
    pub fn primal_residual(&self) -> f64 {
        let mut r = self.b.clone();
        for (k, &j) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[j] {
                r[i] -= a * self.xb[k];
            }
        }
        let neg = self.xb.iter().fold(0.0f64, |w, &x| w.max(-x));
        r.iter().fold(neg, |w, v| w.max(v.abs()))
    }
}

/// Two-phase solve of a standalone program.
pub fn solve_lp(spec: &LinearProgramSpec) -> Result<LpSolution> {
    solve_lp_with(spec, SimplexOptions::default())
}

pub fn solve_lp_with(spec: &LinearProgramSpec, opts: SimplexOptions) -> Result<LpSolution> {
    let m = spec.num_rows();
    for c in &spec.columns {
        if !c.cost.is_finite() || c.entries.iter().any(|&(i, a)| i >= m || !a.is_finite()) {
            return Err(Error::Malformed("non-finite or out-of-range program entry".into()));
        }
    }
    let sign = spec.sense.sign();
    let mut lp = RevisedSimplex::new(&spec.rhs, opts);
    for i in 0..m {
        lp.set_cost(i, 1.0);
    }
    for c in &spec.columns {
        lp.add_column(&c.entries, 0.0);
    }
    let n = spec.columns.len();
    let fail = |status| LpSolution { status, objective: f64::NAN, x: vec![0.0; n], duals: vec![0.0; m], pivots: 0 };
    let status = lp.run()?;
    if status == LpStatus::IterationLimit {
        return Ok(LpSolution { pivots: lp.pivots(), ..fail(status) });
    }
    let scale = spec.rhs.iter().fold(1.0f64, |s, b| s.max(b.abs()));
    if lp.objective() > opts.feas_tol * scale {
        return Ok(LpSolution { pivots: lp.pivots(), ..fail(LpStatus::Infeasible) });
    }
    for i in 0..m {
        lp.set_cost(i, 0.0);
        lp.lock(i);
    }
    for (j, c) in spec.columns.iter().enumerate() {
        lp.set_cost(m + j, sign * c.cost);
    }
    lp.refactor()?;
    let status = lp.run()?;
    if status != LpStatus::Optimal {
        return Ok(LpSolution { pivots: lp.pivots(), ..fail(status) });
    }
    let x: Vec<f64> = (0..n).map(|j| lp.value(m + j)).collect();
    let duals: Vec<f64> = lp.duals().into_iter().map(|y| sign * y).collect();
    let objective = spec.columns.iter().zip(&x).map(|(c, v)| c.cost * v).sum();
    Ok(LpSolution { status, objective, x, duals, pivots: lp.pivots() })
}

/// How the column generation master starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MasterInit {
    /// Artificial columns priced at the given penalty.
    BigM(f64),
    /// Minimize the artificial sum first, then switch to the real costs.
    PhaseOne,
}

/// Restricted master problem `min c·p, A p = b, p ≥ 0` over the columns
/// added so far, always kept feasible through the artificial identity.
#[derive(Clone, Debug)]
pub struct Master {
    lp: RevisedSimplex,
    costs: Vec<f64>,
    init: MasterInit,
    phase_one: bool,
}

impl Master {
    pub fn new(rhs: &[f64], init: MasterInit, opts: SimplexOptions) -> Self {
        let mut lp = RevisedSimplex::new(rhs, opts);
        let phase_one = matches!(init, MasterInit::PhaseOne);
        let penalty = match init {
            MasterInit::BigM(p) => p,
            MasterInit::PhaseOne => 1.0,
        };
        for i in 0..rhs.len() {
            lp.set_cost(i, penalty);
        }
        Master { lp, costs: Vec::new(), init, phase_one }
    }

    pub fn init(&self) -> MasterInit {
        self.init
    }

    pub fn in_phase_one(&self) -> bool {
        self.phase_one
    }

    pub fn num_rows(&self) -> usize {
        self.lp.num_rows()
    }

    pub fn num_columns(&self) -> usize {
        self.costs.len()
    }

    pub fn add_column(&mut self, rows: &[usize], cost: f64) -> usize {
        let entries: Vec<(usize, f64)> = rows.iter().map(|&r| (r, 1.0)).collect();
        let c = if self.phase_one { 0.0 } else { cost };
        self.lp.add_column(&entries, c);
        self.costs.push(cost);
        self.costs.len() - 1
    }

    pub fn solve(&mut self) -> Result<LpStatus> {
        self.lp.run()
    }

    /// Drop the artificial columns from the objective and price the real
    /// costs from here on.
    pub fn end_phase_one(&mut self) -> Result<()> {
        let m = self.lp.num_rows();
        for i in 0..m {
            self.lp.set_cost(i, 0.0);
            self.lp.lock(i);
        }
        for (j, &c) in self.costs.iter().enumerate() {
            self.lp.set_cost(m + j, c);
        }
        self.phase_one = false;
        self.lp.refactor()
    }

    /// Duals of the rows in the current phase.
    pub fn duals(&self) -> Vec<f64> {
        self.lp.duals()
    }

    /// Objective of the current phase, artificial penalties included.
    pub fn phase_objective(&self) -> f64 {
        self.lp.objective()
    }

    /// `Σ c_j p_j` over the real columns.
    pub fn objective(&self) -> f64 {
        let m = self.lp.num_rows();
        self.costs.iter().enumerate().map(|(j, c)| c * self.lp.value(m + j)).sum()
    }

    pub fn artificial_sum(&self) -> f64 {
        (0..self.lp.num_rows()).map(|i| self.lp.value(i)).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        let m = self.lp.num_rows();
        (0..self.costs.len()).map(|j| self.lp.value(m + j)).collect()
    }

    pub fn pivots(&self) -> usize {
        self.lp.pivots()
    }

    pub fn primal_residual(&self) -> f64 {
        self.lp.primal_residual()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpform::{LpColumn, Sense};

    fn spec(sense: Sense, rhs: Vec<f64>, cols: Vec<(f64, Vec<(usize, f64)>)>) -> LinearProgramSpec {
        LinearProgramSpec {
            sense,
            rhs,
            columns: cols.into_iter().map(|(cost, entries)| LpColumn { cost, entries }).collect(),
            labels: vec![],
        }
    }

    #[test]
    fn one_variable() {
        let s = solve_lp(&spec(Sense::Minimize, vec![0.3], vec![(1.0, vec![(0, 1.0)])])).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 0.3).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_program_with_duals() {
        // min x + 2y + 3z, x + y + z = 1, y - z = 0.2
        let p = spec(
            Sense::Minimize,
            vec![1.0, 0.2],
            vec![(1.0, vec![(0, 1.0)]), (2.0, vec![(0, 1.0), (1, 1.0)]), (3.0, vec![(0, 1.0), (1, -1.0)])],
        );
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 1.2).abs() < 1e-12);
        for (j, c) in p.columns.iter().enumerate() {
            let rc = c.cost - c.entries.iter().map(|&(i, a)| s.duals[i] * a).sum::<f64>();
            assert!(rc > -1e-9);
            assert!(s.x[j] * rc.abs() < 1e-9);
        }
        let mut q = p.clone();
        q.sense = Sense::Maximize;
        let s = solve_lp(&q).unwrap();
        assert!((s.objective - 2.4).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = spec(Sense::Minimize, vec![1.0, 2.0], vec![(1.0, vec![(0, 1.0), (1, 1.0)])]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
        let p = spec(Sense::Minimize, vec![1.0], vec![(-1.0, vec![(0, 1.0)]), (-1.0, vec![(0, 1.0)]), (-2.0, vec![])]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_rows() {
        // x - y = -0.5, x + y = 1
        let p = spec(Sense::Minimize, vec![-0.5, 1.0], vec![(1.0, vec![(0, 1.0), (1, 1.0)]), (0.0, vec![(0, -1.0), (1, 1.0)])]);
        let s = solve_lp(&p).unwrap();
        assert!((s.x[0] - 0.25).abs() < 1e-12 && (s.x[1] - 0.75).abs() < 1e-12);
        let rc1 = 0.0 - (-s.duals[0] + s.duals[1]);
        assert!(rc1.abs() < 1e-12);
    }

    #[test]
    fn master_big_m_and_phase_one_agree() {
        let rhs = [0.5, 0.5, 1.0];
        for init in [MasterInit::BigM(1e4), MasterInit::PhaseOne] {
            let mut m = Master::new(&rhs, init, SimplexOptions::default());
            m.add_column(&[0, 2], 0.7);
            m.add_column(&[1, 2], 0.1);
            m.add_column(&[0, 1, 2], 0.2);
            m.solve().unwrap();
            if m.in_phase_one() {
                assert!(m.artificial_sum() < 1e-12);
                m.end_phase_one().unwrap();
                m.solve().unwrap();
            }
            assert!((m.objective() - 0.4).abs() < 1e-12, "{init:?}");
            assert!(m.artificial_sum() < 1e-12);
        }
    }
}
