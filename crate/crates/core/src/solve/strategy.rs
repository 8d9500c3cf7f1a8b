//! Bounding strategies behind one trait, looked up by name.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::canon::ExoValue;
use crate::lpform::{
    build_direct_lp, build_single_milp, ConstraintSystem, IntegerProgramSpec, LinearProgramSpec, LpColumn, Sense,
};
use crate::objective::BitPolynomial;

use super::colgen::{column_generation, CgOptions, CgStatus};
use super::milp::{solve_milp_guided, MilpOptions, MilpStatus};
use super::simplex::{solve_lp, LpStatus};
use super::{BoundStatus, DirectionResult, SolveOptions};

/// Constraint rows and objective of one bounding problem.
#[derive(Clone, Debug)]
pub struct BoundProblem {
    pub system: ConstraintSystem,
    pub gamma: BitPolynomial,
}

pub trait BoundStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Optimal `γ·p` in `sense`.
    fn solve(&self, problem: &BoundProblem, sense: Sense, opts: &SolveOptions) -> Result<DirectionResult>;
}

pub struct DirectLp;

impl BoundStrategy for DirectLp {
    fn name(&self) -> &'static str {
        "direct-lp"
    }

    fn solve(&self, problem: &BoundProblem, sense: Sense, opts: &SolveOptions) -> Result<DirectionResult> {
        let start = Instant::now();
        let lp = build_direct_lp(&problem.system, &problem.gamma, sense, opts.column_limit)?;
        let sol = solve_lp(&lp)?;
        let status = match sol.status {
            LpStatus::Optimal => BoundStatus::Optimal,
            LpStatus::Infeasible => BoundStatus::Infeasible,
            LpStatus::IterationLimit => BoundStatus::NonConverged,
            LpStatus::Unbounded => return Err(Error::Solver("bounding program unbounded".into())),
        };
        let mut r = DirectionResult::new(sense, sol.objective, status);
        r.iterations = sol.pivots;
        r.columns = lp.columns.len();
        r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(r)
    }
}

pub struct ColumnGeneration;

impl BoundStrategy for ColumnGeneration {
    fn name(&self) -> &'static str {
        "cg"
    }

    fn solve(&self, problem: &BoundProblem, sense: Sense, opts: &SolveOptions) -> Result<DirectionResult> {
        let cg = CgOptions { time_limit: opts.time_limit, ..opts.cg };
        let report = column_generation(&problem.system, &problem.gamma, sense, cg)?;
        let status = match report.status {
            CgStatus::Optimal => BoundStatus::Optimal,
            CgStatus::Infeasible => BoundStatus::Infeasible,
            CgStatus::NonConverged => BoundStatus::NonConverged,
            CgStatus::TimeLimit => BoundStatus::TimeLimit,
        };
        let mut r = DirectionResult::new(sense, report.objective, status);
        r.iterations = report.iterations;
        r.columns = report.columns.len();
        r.nodes = report.pricing_nodes;
        r.wall_ms = report.wall_ms;
        r.cg = Some(report);
        Ok(r)
    }
}

pub struct SingleMilp;

impl BoundStrategy for SingleMilp {
    fn name(&self) -> &'static str {
        "single-milp"
    }

    fn solve(&self, problem: &BoundProblem, sense: Sense, opts: &SolveOptions) -> Result<DirectionResult> {
        let start = Instant::now();
        let ip = build_single_milp(&problem.system, &problem.gamma, sense, opts.single)?;
        let mut pool = ColumnPool::new(problem, sense);
        let mut heuristic = |x: &[f64]| pool.propose(&ip, x);
        let milp = MilpOptions { time_limit: opts.time_limit, ..Default::default() };
        let sol = solve_milp_guided(&ip, milp, &mut heuristic)?;
        let status = match sol.status {
            MilpStatus::Optimal | MilpStatus::Stopped => BoundStatus::Optimal,
            MilpStatus::Infeasible => BoundStatus::Infeasible,
            MilpStatus::TimeLimit => BoundStatus::TimeLimit,
        };
        let mut r = DirectionResult::new(sense, sol.objective, status);
        r.nodes = sol.nodes;
        r.iterations = sol.nodes;
        r.columns = ip.bits.len();
        r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(r)
    }
}

/// Primal heuristic for the single program. Exogenous values read off node
/// relaxations are pooled; whenever the pool grows, the program restricted to
/// the pool is solved as an LP and its basic solution, which uses at most as
/// many values as there are copies, becomes a candidate point.
const MAX_OPEN_BITS: usize = 6;

struct ColumnPool<'a> {
    problem: &'a BoundProblem,
    seen: HashSet<ExoValue>,
    lp: LinearProgramSpec,
}

impl<'a> ColumnPool<'a> {
    fn new(problem: &'a BoundProblem, sense: Sense) -> Self {
        let lp = LinearProgramSpec { sense, rhs: problem.system.rhs(), columns: Vec::new(), labels: Vec::new() };
        ColumnPool { problem, seen: HashSet::new(), lp }
    }

    fn harvest(&mut self, u: ExoValue) -> bool {
        if !self.seen.insert(u.clone()) {
            return false;
        }
        let entries = self.problem.system.column(&u).into_iter().map(|r| (r, 1.0)).collect();
        self.lp.columns.push(LpColumn { cost: self.problem.gamma.eval(&u), entries });
        self.lp.labels.push(u);
        true
    }

    fn propose(&mut self, ip: &IntegerProgramSpec, x: &[f64]) -> Option<Vec<f64>> {
        let mut grew = false;
        for k in 0..ip.bits.len() {
            grew |= self.harvest(ip.decode(k, x));
            let p = x[ip.weights[k]];
            if p <= 1e-9 {
                continue;
            }
            // Every rounding of the bits the copy leaves undecided, up to a cap.
            let ratios: Vec<f64> = ip.scaled_bits[k].iter().map(|&j| x[j] / p).collect();
            let open: Vec<usize> = (0..ratios.len()).filter(|&j| (ratios[j] - 0.5).abs() < 0.49).collect();
            let open = &open[..open.len().min(MAX_OPEN_BITS)];
            let base: Vec<bool> = ratios.iter().map(|&r| r > 0.5).collect();
            for mask in 0u32..(1 << open.len()) {
                let mut bits = base.clone();
                for (i, &j) in open.iter().enumerate() {
                    bits[j] = mask >> i & 1 == 1;
                }
                grew |= self.harvest(ExoValue::from_bits(&bits));
            }
        }
        if !grew {
            return None;
        }
        let sol = super::simplex::solve_lp(&self.lp).ok()?;
        if sol.status != LpStatus::Optimal {
            return None;
        }
        let support: Vec<usize> = (0..sol.x.len()).filter(|&j| sol.x[j] > 1e-12).collect();
        if support.len() > ip.bits.len() {
            return None;
        }
        let mut values: Vec<ExoValue> = support.iter().map(|&j| self.lp.labels[j].clone()).collect();
        let mut weights: Vec<f64> = support.iter().map(|&j| sol.x[j]).collect();
        let filler = values.first()?.clone();
        values.resize(ip.bits.len(), filler);
        weights.resize(ip.bits.len(), 0.0);
        Some(ip.complete(&values, &weights))
    }
}

/// Strategies by name, with aliases.
#[derive(Clone, Default)]
pub struct StrategyRegistry {
    strategies: BTreeMap<String, Arc<dyn BoundStrategy>>,
    aliases: BTreeMap<String, String>,
}

impl StrategyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `direct-lp` (alias `lp`), `cg` and `single-milp` (alias `milp`).
    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register(Arc::new(DirectLp));
        r.register(Arc::new(ColumnGeneration));
        r.register(Arc::new(SingleMilp));
        r.alias("lp", "direct-lp");
        r.alias("milp", "single-milp");
        r
    }

    pub fn register(&mut self, s: Arc<dyn BoundStrategy>) {
        self.strategies.insert(s.name().to_string(), s);
    }

    pub fn alias(&mut self, alias: &str, name: &str) {
        self.aliases.insert(alias.to_string(), name.to_string());
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn BoundStrategy>> {
        let key = self.aliases.get(name).map_or(name, String::as_str);
        self.strategies.get(key).cloned().ok_or_else(|| Error::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.strategies.keys().map(String::as_str).collect()
    }
}
