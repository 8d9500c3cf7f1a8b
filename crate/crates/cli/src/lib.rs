//! The `cbounds` command line: `analyze`, `bound`, `bench` and `gen`.
//!
//! Exit codes: 0 success, 1 malformed input or other failure, 2 infeasible
//! program, 3 solver stopped before convergence, 4 size limit exceeded.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cbounds_core::dist::EmpiricalDistribution;
use cbounds_core::format::{self, Truth};
use cbounds_core::graph::CausalGraph;
use cbounds_core::lpform::{build_direct_lp, build_pricing_milp, build_single_milp, Sense};
use cbounds_core::oracle::{random_scm, FullScm, ScmOptions};
use cbounds_core::query::Query;
use cbounds_core::solve::{
    bound_with, prepare, BoundResult, BoundStatus, CgReport, Direction, DirectionResult, MasterInit, SolveOptions,
    StrategyRegistry,
};
use cbounds_core::{fixtures, Error};

pub const EXIT_MALFORMED: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NON_CONVERGED: i32 = 3;
pub const EXIT_SIZE_LIMIT: i32 = 4;

const DEFAULT_QUERY: &str = "P(Y=1 | do(X=1))";

#[derive(Parser, Debug)]
#[command(name = "cbounds", version, about = "Bounds on interventional probabilities in quasi-Markovian models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// C-components, the intervened semi-marginal graph and the derivation
    /// of the objective.
    Analyze(AnalyzeArgs),
    /// Lower and upper bounds, one JSON record per bound.
    Bound(BoundArgs),
    /// Sweep the scalable pipeline family and write a CSV of values and
    /// wall times.
    Bench(BenchArgs),
    /// Write a random instance bundle with its ground truth.
    Gen(GenArgs),
}

/// Where the graph comes from, and the distribution when it is generated.
#[derive(Args, Debug)]
struct Source {
    /// Model file (JSON).
    #[arg(long, conflicts_with_all = ["fixture", "family"])]
    model: Option<PathBuf>,
    /// Built-in graph: confounded_chain, mediated_bow, latency_pipeline or
    /// extended_pipeline.
    #[arg(long, conflicts_with = "family")]
    fixture: Option<String>,
    /// Member `M,N` of the pipeline family.
    #[arg(long, value_parser = parse_pair)]
    family: Option<(usize, usize)>,
    /// Seed for generated models.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generate models with zero-probability contexts.
    #[arg(long)]
    degenerate: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: Source,
    /// Distribution file; without it only value-independent output is shown.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    query: Option<String>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[command(flatten)]
    source: Source,
    /// Distribution file. Required with --model; with --fixture or --family
    /// the data of a random model drawn with --seed is used instead.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_QUERY)]
    query: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the programs solved, in LP format, into this directory.
    #[arg(long)]
    dump_lp: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// lp, cg, milp or auto (also direct-lp and single-milp).
    #[arg(long, default_value = "auto")]
    method: String,
    /// lower, upper or both.
    #[arg(long, default_value = "both")]
    direction: String,
    /// Reduced-cost tolerance of column generation.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Iteration cap of column generation.
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Wall-time limit per bound, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Start column generation with phase one instead of big-M.
    #[arg(long)]
    phase_one: bool,
    /// Accept the first improving column found by pricing.
    #[arg(long)]
    early_stop: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// `M,N` pairs; repeat the flag for several.
    #[arg(long = "pairs", value_parser = parse_pair, default_values = ["1,1", "1,2", "2,1", "2,2"])]
    pairs: Vec<(usize, usize)>,
    /// Comma-separated methods.
    #[arg(long, default_value = "lp,cg")]
    methods: String,
    #[arg(long, default_value = "both")]
    direction: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Wall-time limit per bound, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = DEFAULT_QUERY)]
    query: String,
    /// Output directory; receives model.json, data.txt and truth.json.
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s.split_once(',').ok_or_else(|| format!("expected `M,N`, got `{s}`"))?;
    let m: usize = m.trim().parse().map_err(|_| format!("bad M in `{s}`"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad N in `{s}`"))?;
    if m == 0 || n == 0 {
        return Err("M and N must be at least 1".into());
    }
    Ok((m, n))
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SizeLimit { .. } => EXIT_SIZE_LIMIT,
            _ => EXIT_MALFORMED,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_MALFORMED, message: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { code: EXIT_MALFORMED, message: e.to_string() }
    }
}

type CliResult = Result<i32, Failure>;

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_MALFORMED
                }
            };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a, out),
        Command::Bound(a) => bound(a, out, err),
        Command::Bench(a) => bench(a, out, err),
        Command::Gen(a) => generate(a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

impl Source {
    fn graph(&self) -> Result<CausalGraph, Failure> {
        match (&self.model, &self.fixture, self.family) {
            (Some(p), _, _) => Ok(format::load_model(p)?),
            (_, Some(name), _) => fixtures::by_name(name).ok_or_else(|| Failure {
                code: EXIT_MALFORMED,
                message: format!(
                    "unknown fixture `{name}`; one of {}",
                    fixtures::named().iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                ),
            }),
            (_, _, Some((m, n))) => Ok(fixtures::pipeline_family(m, n)),
            _ => Err(Failure { code: EXIT_MALFORMED, message: "one of --model, --fixture or --family is required".into() }),
        }
    }

    fn generated(&self) -> bool {
        self.model.is_none()
    }

    fn scm(&self, g: &CausalGraph) -> Result<FullScm, Failure> {
        Ok(random_scm(g, self.seed, ScmOptions { degenerate: self.degenerate })?)
    }
}

fn observational(scm: &FullScm) -> Result<EmpiricalDistribution, Failure> {
    Ok(scm.exact_joint().or_else(|_| scm.cfactor_joint())?)
}

fn analyze(a: AnalyzeArgs, out: &mut dyn Write) -> CliResult {
    let g = a.source.graph()?;
    let mut s = String::new();
    let endo = g.endogenous().count();
    let _ = writeln!(s, "nodes: {} ({endo} endogenous, {} exogenous)", g.len(), g.len() - endo);
    let _ = writeln!(s, "quasi-markovian: {}", if g.is_quasi_markovian() { "yes" } else { "no" });
    let _ = writeln!(s, "c-components:");
    for c in g.c_components() {
        let names: Vec<&str> = g.names_of(&c.members);
        match c.exogenous {
            Some(u) => {
                let _ = writeln!(s, "  {{{}}} via {}", names.join(", "), g.name(u));
            }
            None => {
                let _ = writeln!(s, "  {{{}}}", names.join(", "));
            }
        }
    }
    if let Some(text) = &a.query {
        let query = Query::parse(text)?;
        let intervened = g.node_set(query.intervention.iter().map(|(n, _)| n.as_str()))?;
        let _ = writeln!(s, "query: {query}");
        let _ = writeln!(s, "intervened semi-marginal graph:");
        s.push_str(g.intervened_semi_marginal(&intervened)?.to_dot().trim_end());
        s.push('\n');
        let d = match &a.data {
            Some(p) => format::load_distribution(p)?,
            // The derivation does not depend on the numbers.
            None => uniform(&g)?,
        };
        let prepared = prepare(&g, &d, &query, Default::default())?;
        let _ = writeln!(s, "derivation:");
        for t in &prepared.traces {
            let _ = write!(s, "{t}");
        }
        if prepared.component.is_some() {
            let _ = writeln!(s, "encoding: {}", prepared.encoding().layout());
        }
        if a.data.is_some() {
            match prepared.identified {
                Some(v) => {
                    let _ = writeln!(s, "identified: {v}");
                }
                None => {
                    let _ = writeln!(s, "objective: {}", prepared.gamma);
                }
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(0)
}

fn uniform(g: &CausalGraph) -> Result<EmpiricalDistribution, Failure> {
    let names: Vec<String> = g.endogenous().map(|v| g.name(v).to_string()).collect();
    let n = 1usize << names.len();
    Ok(EmpiricalDistribution::from_probs(names, vec![1.0 / n as f64; n])?)
}

impl SolverArgs {
    fn options(&self) -> Result<SolveOptions, Failure> {
        let mut o = SolveOptions { method: self.method.clone(), direction: Direction::parse(&self.direction)?, ..Default::default() };
        if !(self.tol > 0.0) {
            return Err(Failure { code: EXIT_MALFORMED, message: "--tol must be positive".into() });
        }
        o.cg.eps = self.tol;
        o.cg.max_iter = self.max_iter;
        o.cg.early_stop = self.early_stop;
        if self.phase_one {
            o.cg.init = MasterInit::PhaseOne;
        }
        o.time_limit = time_limit(self.time_limit)?;
        Ok(o)
    }
}

fn time_limit(secs: Option<f64>) -> Result<Option<Duration>, Failure> {
    match secs {
        None => Ok(None),
        Some(s) if s.is_finite() && s > 0.0 => Ok(Some(Duration::from_secs_f64(s))),
        Some(s) => Err(Failure { code: EXIT_MALFORMED, message: format!("--time-limit must be positive, got {s}") }),
    }
}

/// One bound as printed by `bound`.
#[derive(Serialize)]
struct Record<'a> {
    query: &'a str,
    method: &'a str,
    direction: &'a str,
    /// `null` when no value was reached.
    value: Option<f64>,
    iterations: usize,
    columns_generated: usize,
    wall_ms: f64,
    status: BoundStatus,
    seed: Option<u64>,
    eps: f64,
    zero_conditioning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    cg: Option<&'a CgReport>,
}

fn record<'a>(r: &'a BoundResult, side: &'a DirectionResult, seed: Option<u64>, eps: f64) -> Record<'a> {
    Record {
        query: &r.query,
        method: &r.method,
        direction: side.direction,
        value: side.value.is_finite().then_some(side.value),
        iterations: side.iterations,
        columns_generated: side.columns,
        wall_ms: side.wall_ms,
        status: side.status,
        seed,
        eps,
        zero_conditioning: r.zero_conditioning,
        cg: side.cg.as_ref(),
    }
}

fn status_code(r: &BoundResult) -> i32 {
    let statuses: Vec<BoundStatus> = r.sides().map(|s| s.status).collect();
    if statuses.contains(&BoundStatus::Infeasible) {
        EXIT_INFEASIBLE
    } else if statuses.iter().any(|s| matches!(s, BoundStatus::NonConverged | BoundStatus::TimeLimit)) {
        EXIT_NON_CONVERGED
    } else {
        0
    }
}

fn bound(a: BoundArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let g = a.source.graph()?;
    let (d, seed) = match &a.data {
        Some(p) => (format::load_distribution(p)?, None),
        None if a.source.generated() => (observational(&a.source.scm(&g)?)?, Some(a.source.seed)),
        None => return Err(Failure { code: EXIT_MALFORMED, message: "--data is required with --model".into() }),
    };
    let query = Query::parse(&a.query)?;
    let opts = a.solver.options()?;
    let r = bound_with(&StrategyRegistry::with_defaults(), &g, &d, &query, &opts)?;
    for side in r.sides() {
        let line = serde_json::to_string(&record(&r, side, seed, opts.cg.eps)).map_err(Error::from)?;
        writeln!(out, "{line}")?;
    }
    if r.zero_conditioning {
        let _ = writeln!(err, "warning: some conditionals have a zero-probability conditioning event");
    }
    if let Some(dir) = &a.dump_lp {
        dump_programs(dir, &g, &d, &query, &opts, &r, err)?;
    }
    Ok(status_code(&r))
}

fn dump_programs(
    dir: &Path,
    g: &CausalGraph,
    d: &EmpiricalDistribution,
    query: &Query,
    opts: &SolveOptions,
    r: &BoundResult,
    err: &mut dyn Write,
) -> Result<(), Failure> {
    let prepared = prepare(g, d, query, opts.objective)?;
    let Some(problem) = prepared.problem() else {
        let _ = writeln!(err, "query is identified; no program to dump");
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    for side in r.sides() {
        let sense = if side.direction == "lower" { Sense::Minimize } else { Sense::Maximize };
        let text = match r.method.as_str() {
            "direct-lp" => build_direct_lp(&problem.system, &problem.gamma, sense, opts.column_limit)?.to_lp_format(),
            "single-milp" => build_single_milp(&problem.system, &problem.gamma, sense, opts.single)?.to_lp_format(),
            _ => {
                let zero = vec![0.0; problem.system.num_rows()];
                let mut s = String::from("\\ pricing program at zero duals\n");
                s.push_str(&build_pricing_milp(&problem.system, &problem.gamma, &zero, sense).to_lp_format());
                s
            }
        };
        let path = dir.join(format!("{}-{}.lp", r.method, side.direction));
        std::fs::write(&path, text)?;
        let _ = writeln!(err, "wrote {}", path.display());
    }
    Ok(())
}

/// Row of the bench CSV.
#[derive(Serialize)]
struct BenchRow {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    method: String,
    direction: String,
    value: Option<f64>,
    wall_ms: f64,
    iterations: usize,
    status: &'static str,
}

fn status_name(s: BoundStatus) -> &'static str {
    match s {
        BoundStatus::Optimal => "optimal",
        BoundStatus::Infeasible => "infeasible",
        BoundStatus::NonConverged => "non-converged",
        BoundStatus::TimeLimit => "time-limit",
    }
}

fn bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let direction = Direction::parse(&a.direction)?;
    let registry = StrategyRegistry::with_defaults();
    let methods: Vec<String> = a.methods.split(',').map(|m| m.trim().to_string()).filter(|m| !m.is_empty()).collect();
    for m in &methods {
        registry.get(m)?;
    }
    let limit = time_limit(a.time_limit)?;
    let mut rows = Vec::new();
    let mut failed = false;
    for &(m, n) in &a.pairs {
        let inst = cbounds_core::oracle::family_instance(m, n, a.seed)?;
        let prepared = prepare(&inst.graph, &inst.dist, &inst.query, Default::default())?;
        let enc = prepared.encoding();
        let columns = enc.cardinality().map_or_else(|| format!("2^{}", enc.total_bits()), |c| c.to_string());
        let _ = writeln!(err, "M={m} N={n} bits={} columns={columns}", enc.total_bits());
        for method in &methods {
            let mut opts = SolveOptions { method: method.clone(), direction, time_limit: limit, ..Default::default() };
            opts.cg.eps = a.tol;
            match bound_with(&registry, &inst.graph, &inst.dist, &inst.query, &opts) {
                Ok(r) => {
                    for side in r.sides() {
                        rows.push(BenchRow {
                            m,
                            n,
                            method: r.method.clone(),
                            direction: side.direction.to_string(),
                            value: side.value.is_finite().then_some(side.value),
                            wall_ms: side.wall_ms,
                            iterations: side.iterations,
                            status: status_name(side.status),
                        });
                    }
                }
                Err(e) => {
                    let status = if matches!(e, Error::SizeLimit { .. }) { "size-limit" } else { "error" };
                    failed |= status == "error";
                    let _ = writeln!(err, "M={m} N={n} {method}: {e}");
                    let resolved = registry.get(method)?.name().to_string();
                    for dir in ["lower", "upper"] {
                        if direction == Direction::Both || Direction::parse(dir)? == direction {
                            rows.push(BenchRow {
                                m,
                                n,
                                method: resolved.clone(),
                                direction: dir.into(),
                                value: None,
                                wall_ms: 0.0,
                                iterations: 0,
                                status,
                            });
                        }
                    }
                }
            }
        }
    }
    let sink: Box<dyn Write + '_> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(out),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(if failed { EXIT_MALFORMED } else { 0 })
}

fn generate(a: GenArgs, out: &mut dyn Write) -> CliResult {
    let g = a.source.graph()?;
    let query = Query::parse(&a.query)?;
    let scm = a.source.scm(&g)?;
    let d = observational(&scm)?;
    let mut value = 0.0;
    for (w, target, intervention) in query.parts() {
        value += w * scm.exact_interventional(&target, &intervention)?;
    }
    let truth = Truth::new(&scm, a.source.seed, a.source.degenerate, query.to_string(), value);
    std::fs::create_dir_all(&a.out)?;
    let files = [
        ("model.json", format::write_model(&g)),
        ("data.txt", format::write_table(&d)),
        ("truth.json", serde_json::to_string_pretty(&truth).map_err(Error::from)?),
    ];
    for (name, text) in files {
        let path = a.out.join(name);
        std::fs::write(&path, text)?;
        writeln!(out, "{}", path.display())?;
    }
    Ok(0)
}
