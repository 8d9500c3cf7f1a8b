//! Column generation: a restricted master over the exogenous values found so
//! far, extended by pricing the most negative reduced cost with a MILP.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::canon::ExoValue;
use crate::error::{Error, Result};
use crate::lpform::{build_pricing_milp_with, ConstraintSystem, Sense};
use crate::objective::BitPolynomial;

use super::milp::{solve_milp_with, MilpOptions, MilpStatus};
use super::simplex::{LpStatus, Master, MasterInit, SimplexOptions};

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Reduced-cost tolerance.
    pub eps: f64,
    pub max_iter: usize,
    pub init: MasterInit,
    /// Accept the first pricing solution with negative reduced cost.
    pub early_stop: bool,
    pub time_limit: Option<Duration>,
    /// Artificial mass above this at termination means infeasible.
    pub artificial_tol: f64,
    /// Tighten the pricing relaxation with valid inequalities.
    pub strengthen: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            eps: 1e-9,
            max_iter: 10_000,
            init: MasterInit::BigM(1e4),
            early_stop: false,
            time_limit: None,
            artificial_tol: 1e-7,
            strengthen: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CgStatus {
    Optimal,
    Infeasible,
    NonConverged,
    TimeLimit,
}

#[derive(Clone, Debug, Serialize)]
pub struct CgReport {
    pub status: CgStatus,
    pub iterations: usize,
    /// Generated exogenous values as bit strings, in order.
    pub columns: Vec<String>,
    /// Best bound found, in the requested sense.
    pub objective: f64,
    /// Minimum reduced cost returned by pricing at each iteration.
    pub reduced_costs: Vec<f64>,
    /// Master objective (minimization form, penalties included) per iteration.
    pub master_objectives: Vec<f64>,
    pub artificial_sum: f64,
    pub pricing_nodes: usize,
    pub wall_ms: f64,
    /// Row duals of the final master, minimization form.
    #[serde(skip)]
    pub final_duals: Vec<f64>,
    #[serde(skip)]
    pub generated: Vec<ExoValue>,
    #[serde(skip)]
    pub weights: Vec<f64>,
}

/// Bound `γ·p` in `sense` over the polytope of `cs` by column generation.
pub fn column_generation(cs: &ConstraintSystem, gamma: &BitPolynomial, sense: Sense, opts: CgOptions) -> Result<CgReport> {
    if opts.eps <= 0.0 {
        return Err(Error::Malformed("column generation tolerance must be positive".into()));
    }
    let start = Instant::now();
    let sign = sense.sign();
    let simplex = SimplexOptions { tol: (opts.eps * 0.1).min(1e-10), ..Default::default() };
    let mut master = Master::new(&cs.rhs(), opts.init, simplex);
    let zero = BitPolynomial::zero(cs.encoding().clone());
    let mut seen: HashSet<ExoValue> = HashSet::new();
    let mut report = CgReport {
        status: CgStatus::Optimal,
        iterations: 0,
        columns: Vec::new(),
        objective: f64::NAN,
        reduced_costs: Vec::new(),
        master_objectives: Vec::new(),
        artificial_sum: 0.0,
        pricing_nodes: 0,
        wall_ms: 0.0,
        final_duals: Vec::new(),
        generated: Vec::new(),
        weights: Vec::new(),
    };
    loop {
        let st = master.solve()?;
        if st != LpStatus::Optimal {
            return Err(Error::Solver(format!("restricted master ended {st:?}")));
        }
        report.master_objectives.push(master.phase_objective());
        let duals = master.duals();
        if report.iterations >= opts.max_iter {
            report.status = CgStatus::NonConverged;
            break;
        }
        let remaining = match opts.time_limit {
            Some(t) => match t.checked_sub(start.elapsed()) {
                Some(r) => Some(r),
                None => {
                    report.status = CgStatus::TimeLimit;
                    break;
                }
            },
            None => None,
        };
        let phase_one = master.in_phase_one();
        let (pricing_gamma, pricing_sense) = if phase_one { (&zero, Sense::Minimize) } else { (gamma, sense) };
        let ip = build_pricing_milp_with(cs, pricing_gamma, &duals, pricing_sense, opts.strengthen);
        let milp = MilpOptions {
            time_limit: remaining,
            stop_below: opts.early_stop.then_some(-opts.eps),
            ..Default::default()
        };
        let sol = solve_milp_with(&ip, milp)?;
        report.pricing_nodes += sol.nodes;
        match sol.status {
            MilpStatus::TimeLimit => {
                report.status = CgStatus::TimeLimit;
                break;
            }
            MilpStatus::Infeasible => return Err(Error::Solver("pricing program infeasible".into())),
            MilpStatus::Optimal | MilpStatus::Stopped => {}
        }
        report.reduced_costs.push(sol.objective);
        report.iterations += 1;
        if sol.objective >= -opts.eps {
            if phase_one {
                if master.artificial_sum() > opts.artificial_tol {
                    report.status = CgStatus::Infeasible;
                    break;
                }
                master.end_phase_one()?;
                continue;
            }
            break;
        }
        let u = ip.decode(0, &sol.x);
        let rows = cs.column(&u);
        let cost = if phase_one { 0.0 } else { sign * gamma.eval(&u) };
        let true_cost = sign * gamma.eval(&u);
        let direct = cost - rows.iter().map(|&r| duals[r]).sum::<f64>();
        if (direct - sol.objective).abs() > 1e-6 {
            return Err(Error::Solver(format!(
                "pricing objective {} disagrees with the column's reduced cost {direct}",
                sol.objective
            )));
        }
        if !seen.insert(u.clone()) {
            return Err(Error::DuplicateColumn(u.to_string()));
        }
        master.add_column(&rows, true_cost);
        report.columns.push(u.to_string());
        report.generated.push(u);
    }
    report.artificial_sum = master.artificial_sum();
    if report.status == CgStatus::Optimal && report.artificial_sum > opts.artificial_tol {
        report.status = CgStatus::Infeasible;
    }
    report.objective = sign * master.objective();
    report.final_duals = master.duals();
    report.weights = master.weights();
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
