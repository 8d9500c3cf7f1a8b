//! Depth-first branch and bound over LP relaxations.
//!
//! Relaxations are solved by `minilp`; a child node fixes one binary in a
//! copy of its parent's solution, so the dual simplex restarts warm.

use std::rc::Rc;
use std::time::{Duration, Instant};

use minilp::{ComparisonOp, OptimizationDirection, Problem, Solution, Variable};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lpform::{Cmp, IntegerProgramSpec, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    /// Stopped at the first incumbent below the early-stop threshold.
    Stopped,
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// In the sense of the program, offset included.
    pub objective: f64,
    pub x: Vec<f64>,
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct MilpOptions {
    pub time_limit: Option<Duration>,
    /// Stop at the first integral solution whose minimization objective is
    /// below this value.
    pub stop_below: Option<f64>,
    pub integrality_tol: f64,
    /// Nodes whose bound is within this of the incumbent are pruned.
    pub prune_tol: f64,
    /// Before branching, dive from the root by rounding the lowest-index
    /// fractional binary to its nearest value, to get an early incumbent.
    pub dive: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions { time_limit: None, stop_below: None, integrality_tol: 1e-7, prune_tol: 1e-9, dive: true }
    }
}

pub fn solve_milp(spec: &IntegerProgramSpec) -> Result<MilpSolution> {
    solve_milp_with(spec, MilpOptions::default())
}

pub fn solve_milp_with(spec: &IntegerProgramSpec, opts: MilpOptions) -> Result<MilpSolution> {
    solve_milp_guided(spec, opts, &mut |_: &[f64]| None)
}

/// A primal heuristic: given the relaxation values at a node, propose a
/// complete solution. Proposals are checked before they are accepted.
pub type Heuristic<'a> = dyn FnMut(&[f64]) -> Option<Vec<f64>> + 'a;

pub fn solve_milp_guided(spec: &IntegerProgramSpec, opts: MilpOptions, heuristic: &mut Heuristic<'_>) -> Result<MilpSolution> {
    let start = Instant::now();
    // Always minimize internally.
    let sign = spec.sense.sign();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = spec.vars.iter().map(|v| problem.add_var(sign * v.cost, (v.lower, v.upper))).collect();
    for c in &spec.constraints {
        let expr: Vec<(Variable, f64)> = c.terms.iter().map(|&(j, a)| (vars[j], a)).collect();
        let op = match c.cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(expr.as_slice(), op, c.rhs);
    }
    let binaries: Vec<usize> =
        spec.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Binary).map(|(j, _)| j).collect();
    let offset = sign * spec.offset;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut status = MilpStatus::Optimal;
    let mut stack: Vec<(Rc<Solution>, usize, f64)> = Vec::new();
    let mut pending: Option<Solution> = match problem.solve() {
        Ok(s) => Some(s),
        Err(minilp::Error::Infeasible) => None,
        Err(e) => return Err(Error::Solver(format!("relaxation: {e}"))),
    };
    if opts.dive {
        if let Some(root) = &pending {
            best = dive(root.clone(), &vars, &binaries, &opts, start)?
                .map(|sol| integral_point(spec, &sol, &vars, &binaries, sign));
        }
    }
    loop {
        let node = match pending.take() {
            Some(s) => Some(s),
            None => match stack.pop() {
                None => break,
                Some((parent, j, val)) => match Rc::try_unwrap(parent).unwrap_or_else(|rc| (*rc).clone()).fix_var(vars[j], val) {
                    Ok(s) => Some(s),
                    Err(minilp::Error::Infeasible) => None,
                    Err(e) => return Err(Error::Solver(format!("relaxation: {e}"))),
                },
            },
        };
        nodes += 1;
        if let Some(limit) = opts.time_limit {
            if start.elapsed() > limit {
                status = MilpStatus::TimeLimit;
                break;
            }
        }
        let Some(sol) = node else { continue };
        let bound = sol.objective() + offset;
        let relaxed: Vec<f64> = vars.iter().map(|&v| *sol.var_value(v)).collect();
        if let Some(x) = heuristic(&relaxed) {
            if let Some(obj) = accept(spec, &x, &binaries, sign, opts.integrality_tol) {
                if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                    best = Some((obj, x));
                }
            }
        }
        if best.as_ref().is_some_and(|(b, _)| bound >= b - opts.prune_tol) {
            continue;
        }
        match first_fractional(&sol, &vars, &binaries, opts.integrality_tol) {
            Some(j) => {
                let rc = Rc::new(sol);
                stack.push((rc.clone(), j, 1.0));
                stack.push((rc, j, 0.0));
            }
            None => {
                let (obj, x) = integral_point(spec, &sol, &vars, &binaries, sign);
                if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                    best = Some((obj, x));
                }
                if opts.stop_below.is_some_and(|t| obj < t) {
                    status = MilpStatus::Stopped;
                    break;
                }
            }
        }
    }
    match best {
        Some((obj, x)) => Ok(MilpSolution { status, objective: sign * obj, x, nodes }),
        None if status == MilpStatus::TimeLimit => {
            Ok(MilpSolution { status, objective: f64::NAN, x: vec![0.0; spec.vars.len()], nodes })
        }
        None => Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            objective: f64::NAN,
            x: vec![0.0; spec.vars.len()],
            nodes,
        }),
    }
}

fn first_fractional(sol: &Solution, vars: &[Variable], binaries: &[usize], tol: f64) -> Option<usize> {
    binaries.iter().copied().find(|&j| {
        let v = *sol.var_value(vars[j]);
        (v - v.round()).abs() > tol
    })
}

/// Minimization objective and values with binaries rounded.
fn integral_point(
    spec: &IntegerProgramSpec,
    sol: &Solution,
    vars: &[Variable],
    binaries: &[usize],
    sign: f64,
) -> (f64, Vec<f64>) {
    let mut x: Vec<f64> = vars.iter().map(|&v| *sol.var_value(v)).collect();
    for &j in binaries {
        x[j] = x[j].round();
    }
    (sign * spec.objective_at(&x), x)
}

fn dive(
    mut sol: Solution,
    vars: &[Variable],
    binaries: &[usize],
    opts: &MilpOptions,
    start: Instant,
) -> Result<Option<Solution>> {
    while let Some(j) = first_fractional(&sol, vars, binaries, opts.integrality_tol) {
        if opts.time_limit.is_some_and(|t| start.elapsed() > t) {
            return Ok(None);
        }
        let near = sol.var_value(vars[j]).round();
        match fix_either(sol, vars[j], near)? {
            Some(s) => sol = s,
            None => return Ok(None),
        }
    }
    Ok(Some(sol))
}

/// Fix a binary to `prefer`, or to the other value if that is infeasible.
fn fix_either(sol: Solution, var: Variable, prefer: f64) -> Result<Option<Solution>> {
    match sol.clone().fix_var(var, prefer) {
        Ok(s) => Ok(Some(s)),
        Err(minilp::Error::Infeasible) => match sol.fix_var(var, 1.0 - prefer) {
            Ok(s) => Ok(Some(s)),
            Err(minilp::Error::Infeasible) => Ok(None),
            Err(e) => Err(Error::Solver(format!("relaxation: {e}"))),
        },
        Err(e) => Err(Error::Solver(format!("relaxation: {e}"))),
    }
}

/// Minimization objective of a proposed point if it is feasible and
/// integral.
fn accept(spec: &IntegerProgramSpec, x: &[f64], binaries: &[usize], sign: f64, tol: f64) -> Option<f64> {
    if x.len() != spec.vars.len() || spec.max_violation(x) > 1e-7 {
        return None;
    }
    if binaries.iter().any(|&j| (x[j] - x[j].round()).abs() > tol) {
        return None;
    }
    Some(sign * spec.objective_at(x))
}
