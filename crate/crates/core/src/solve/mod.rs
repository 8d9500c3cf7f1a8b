//! Solvers and the bound dispatcher.

pub mod colgen;
pub mod milp;
pub mod simplex;
pub mod strategy;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::canon::BitEncoding;
use crate::dist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::graph::{CComponent, CausalGraph};
use crate::lpform::{ConstraintSystem, Sense, SingleMilpOptions, DEFAULT_COLUMN_LIMIT};
use crate::objective::{build_objective, BitPolynomial, DerivationTrace, ObjectiveOptions};
use crate::query::Query;

pub use colgen::{column_generation, CgOptions, CgReport, CgStatus};
pub use milp::{solve_milp, solve_milp_with, MilpOptions, MilpSolution, MilpStatus};
pub use simplex::{solve_lp, LpSolution, LpStatus, Master, MasterInit, SimplexOptions};
pub use strategy::{BoundProblem, BoundStrategy, StrategyRegistry};

/// Tolerance on `lower ≤ upper`.
pub const SENSE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Upper,
    Both,
}

impl Direction {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Direction::Lower),
            "upper" => Ok(Direction::Upper),
            "both" => Ok(Direction::Both),
            _ => Err(Error::Malformed(format!("direction must be lower, upper or both, got `{s}`"))),
        }
    }

    fn senses(self) -> Vec<Sense> {
        match self {
            Direction::Lower => vec![Sense::Minimize],
            Direction::Upper => vec![Sense::Maximize],
            Direction::Both => vec![Sense::Minimize, Sense::Maximize],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundStatus {
    Optimal,
    Infeasible,
    NonConverged,
    TimeLimit,
}

/// One side of a bound.
#[derive(Clone, Debug, Serialize)]
pub struct DirectionResult {
    pub direction: &'static str,
    pub value: f64,
    pub status: BoundStatus,
    /// Simplex pivots, CG iterations or branch-and-bound nodes.
    pub iterations: usize,
    /// Columns of the program: all of them for the direct LP, the generated
    /// ones for CG, the copies for the single MILP.
    pub columns: usize,
    pub nodes: usize,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg: Option<CgReport>,
}

impl DirectionResult {
    pub fn new(sense: Sense, value: f64, status: BoundStatus) -> Self {
        DirectionResult {
            direction: if sense == Sense::Minimize { "lower" } else { "upper" },
            value,
            status,
            iterations: 0,
            columns: 0,
            nodes: 0,
            wall_ms: 0.0,
            cg: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundResult {
    pub query: String,
    /// `direct-lp`, `cg`, `single-milp` or `identified`.
    pub method: String,
    pub lower: Option<DirectionResult>,
    pub upper: Option<DirectionResult>,
    pub zero_conditioning: bool,
}

impl BoundResult {
    pub fn lower_value(&self) -> Option<f64> {
        self.lower.as_ref().map(|r| r.value)
    }

    pub fn upper_value(&self) -> Option<f64> {
        self.upper.as_ref().map(|r| r.value)
    }

    pub fn sides(&self) -> impl Iterator<Item = &DirectionResult> {
        self.lower.iter().chain(self.upper.iter())
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// A registry name or `auto`.
    pub method: String,
    pub direction: Direction,
    pub cg: CgOptions,
    pub column_limit: u64,
    pub time_limit: Option<Duration>,
    pub single: SingleMilpOptions,
    pub objective: ObjectiveOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: "auto".into(),
            direction: Direction::Both,
            cg: CgOptions::default(),
            column_limit: DEFAULT_COLUMN_LIMIT,
            time_limit: None,
            single: SingleMilpOptions::default(),
            objective: ObjectiveOptions::default(),
        }
    }
}

/// Objective and constraint rows of a query, before any solver runs.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub query: Query,
    pub graph: CausalGraph,
    pub component: Option<CComponent>,
    pub gamma: BitPolynomial,
    /// One trace per interventional probability in the query.
    pub traces: Vec<DerivationTrace>,
    pub identified: Option<f64>,
    pub system: Option<ConstraintSystem>,
    pub zero_conditioning: bool,
}

impl Prepared {
    pub fn encoding(&self) -> &Arc<BitEncoding> {
        self.gamma.encoding()
    }

    pub fn problem(&self) -> Option<BoundProblem> {
        self.system.as_ref().map(|s| BoundProblem { system: s.clone(), gamma: self.gamma.clone() })
    }
}

pub fn prepare(g: &CausalGraph, d: &EmpiricalDistribution, query: &Query, opts: ObjectiveOptions) -> Result<Prepared> {
    let mut objectives = Vec::new();
    for (w, target, intervention) in query.parts() {
        objectives.push((w, build_objective(g, d, &target, &intervention, opts)?));
    }
    let parts: Vec<(f64, &BitPolynomial)> = objectives.iter().map(|(w, o)| (*w, &o.polynomial)).collect();
    let gamma = BitPolynomial::combine_linear(&parts)?;
    let first = &objectives[0].1;
    let zero_conditioning = objectives.iter().any(|(_, o)| o.zero_conditioning);
    let identified = gamma.constant_value(crate::objective::IDENTIFIED_TOL);
    let system = match (&first.component, identified) {
        (Some(c), None) => Some(ConstraintSystem::build(&first.graph, d, c, gamma.encoding().clone())?),
        _ => None,
    };
    Ok(Prepared {
        query: query.clone(),
        graph: first.graph.clone(),
        component: first.component.clone(),
        traces: objectives.iter().map(|(_, o)| o.trace.clone()).collect(),
        gamma,
        identified,
        zero_conditioning: zero_conditioning || system.as_ref().is_some_and(|s| s.has_zero_conditioning()),
        system,
    })
}

pub fn bound(g: &CausalGraph, d: &EmpiricalDistribution, query: &Query, opts: &SolveOptions) -> Result<BoundResult> {
    bound_with(&StrategyRegistry::with_defaults(), g, d, query, opts)
}

pub fn bound_with(
    registry: &StrategyRegistry,
    g: &CausalGraph,
    d: &EmpiricalDistribution,
    query: &Query,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    let start = Instant::now();
    let prepared = prepare(g, d, query, opts.objective)?;
    if opts.method != "auto" {
        registry.get(&opts.method)?;
    }
    let mut result = BoundResult {
        query: query.to_string(),
        method: String::new(),
        lower: None,
        upper: None,
        zero_conditioning: prepared.zero_conditioning,
    };
    let Some(problem) = prepared.problem() else {
        let v = prepared.identified.unwrap_or(0.0);
        result.method = "identified".into();
        for sense in opts.direction.senses() {
            let mut r = DirectionResult::new(sense, v, BoundStatus::Optimal);
            r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            set_side(&mut result, sense, r);
        }
        return Ok(result);
    };
    let name = if opts.method == "auto" {
        let fits = problem.gamma.encoding().cardinality().is_some_and(|c| c <= opts.column_limit);
        if fits { "direct-lp" } else { "cg" }
    } else {
        opts.method.as_str()
    };
    let strategy = registry.get(name)?;
    result.method = strategy.name().to_string();
    for sense in opts.direction.senses() {
        let r = strategy.solve(&problem, sense, opts)?;
        set_side(&mut result, sense, r);
    }
    if let (Some(l), Some(u)) = (&result.lower, &result.upper) {
        if l.status == BoundStatus::Optimal && u.status == BoundStatus::Optimal && l.value > u.value + SENSE_TOL {
            return Err(Error::Solver(format!("lower bound {} above upper bound {}", l.value, u.value)));
        }
    }
    Ok(result)
}

fn set_side(result: &mut BoundResult, sense: Sense, r: DirectionResult) {
    match sense {
        Sense::Minimize => result.lower = Some(r),
        Sense::Maximize => result.upper = Some(r),
    }
}
