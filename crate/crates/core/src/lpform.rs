//! Constraint rows and the three optimization programs built on them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::canon::{Assignment, BitEncoding, BitLiteral, ColumnEntry, ExoValue};
use crate::dist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::graph::{CComponent, CausalGraph};
use crate::objective::BitPolynomial;

pub const DEFAULT_COLUMN_LIMIT: u64 = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    /// +1 for minimization, -1 for maximization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

/// One configuration of the extended set of the intervened component.
#[derive(Clone, Debug)]
pub struct Row {
    /// Values of [`ConstraintSystem::variables`], in order.
    pub values: Vec<bool>,
    pub rhs: f64,
    pub entry: ColumnEntry,
    /// The literals of `entry`, one per member in topological order.
    pub chain: Vec<BitLiteral>,
    pub zero_conditioning: bool,
}

/// Rows `Σ_u p_u a_{u,w} = q_w` for every configuration `w`, followed by the
/// normalization row `Σ_u p_u = 1`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    encoding: Arc<BitEncoding>,
    variables: Vec<String>,
    rows: Vec<Row>,
}

impl ConstraintSystem {
    pub fn build(
        g: &CausalGraph,
        d: &EmpiricalDistribution,
        component: &CComponent,
        encoding: Arc<BitEncoding>,
    ) -> Result<Self> {
        let mut variables: Vec<String> = component.extended.iter().map(|&v| g.name(v).to_string()).collect();
        variables.sort();
        let n = variables.len();
        if n > 24 {
            return Err(Error::SizeLimit {
                what: "constraint rows".into(),
                needed: format!("2^{n}"),
                limit: "2^24".into(),
            });
        }
        let dv: HashMap<&str, usize> =
            variables.iter().map(|v| Ok((v.as_str(), d.var_index(v)?))).collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(1 << n);
        for i in 0..1usize << n {
            let values: Vec<bool> = (0..n).map(|k| (i >> (n - 1 - k)) & 1 == 1).collect();
            let w: Assignment = variables.iter().cloned().zip(values.iter().copied()).collect();
            let mut rhs = 1.0;
            let mut zero_conditioning = false;
            for (k, &m) in component.members.iter().enumerate() {
                let name = g.name(m);
                let given: Vec<(usize, bool)> =
                    component.prefixes[k].iter().map(|&p| (dv[g.name(p)], w[g.name(p)])).collect();
                let c = d.conditional_ids(&[(dv[name], w[name])], &given)?;
                zero_conditioning |= c.zero_conditioning;
                rhs *= c.value;
            }
            let entry = encoding.symbolic_column_entry(&w)?;
            let chain = component
                .members
                .iter()
                .map(|&m| encoding.literal(g.name(m), |p| w.get(p).copied(), w[g.name(m)]))
                .collect::<Result<_>>()?;
            rows.push(Row { values, rhs, entry, chain, zero_conditioning });
        }
        Ok(ConstraintSystem { encoding, variables, rows })
    }

    pub fn encoding(&self) -> &Arc<BitEncoding> {
        &self.encoding
    }

    /// Variables indexing the rows, lexicographic; the first is the most
    /// significant bit of the row index.
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Configuration rows plus the normalization row.
    pub fn num_rows(&self) -> usize {
        self.rows.len() + 1
    }

    pub fn normalization_row(&self) -> usize {
        self.rows.len()
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.rows.iter().map(|r| r.rhs).collect();
        b.push(1.0);
        b
    }

    pub fn has_zero_conditioning(&self) -> bool {
        self.rows.iter().any(|r| r.zero_conditioning)
    }

    /// Number of configurations of the variables outside the component.
    pub fn external_contexts(&self) -> usize {
        1 << (self.variables.len() - self.encoding.num_blocks())
    }

    /// Rows where `a_{u,w} = 1`, normalization row included.
    pub fn column(&self, u: &ExoValue) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.rows.iter().enumerate().filter(|(_, r)| r.entry.eval(&self.encoding, u)).map(|(i, _)| i).collect();
        out.push(self.normalization_row());
        out
    }

    pub fn row_label(&self, i: usize) -> String {
        match self.rows.get(i) {
            Some(r) => r.values.iter().map(|&b| if b { '1' } else { '0' }).collect(),
            None => "norm".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpColumn {
    pub cost: f64,
    pub entries: Vec<(usize, f64)>,
}

/// `min/max c·p` subject to `A p = b`, `p ≥ 0`.
#[derive(Clone, Debug)]
pub struct LinearProgramSpec {
    pub sense: Sense,
    pub rhs: Vec<f64>,
    pub columns: Vec<LpColumn>,
    /// Exogenous value behind each column (empty for generic programs).
    pub labels: Vec<ExoValue>,
}

impl LinearProgramSpec {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn to_lp_format(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", if self.sense == Sense::Minimize { "Minimize" } else { "Maximize" });
        let obj: Vec<String> = self.columns.iter().enumerate().map(|(j, c)| format!("{:+} p{j}", c.cost)).collect();
        let _ = writeln!(s, " obj: {}", if obj.is_empty() { "0".into() } else { obj.join(" ") });
        let _ = writeln!(s, "Subject To");
        let mut by_row: Vec<Vec<String>> = vec![Vec::new(); self.rhs.len()];
        for (j, c) in self.columns.iter().enumerate() {
            for &(i, a) in &c.entries {
                by_row[i].push(format!("{a:+} p{j}"));
            }
        }
        for (i, terms) in by_row.iter().enumerate() {
            let lhs = if terms.is_empty() { "0 p0".to_string() } else { terms.join(" ") };
            let _ = writeln!(s, " r{i}: {lhs} = {}", self.rhs[i]);
        }
        let _ = writeln!(s, "End");
        s
    }
}

/// One column per exogenous value with `γ(u)` as its cost.
pub fn build_direct_lp(cs: &ConstraintSystem, gamma: &BitPolynomial, sense: Sense, limit: u64) -> Result<LinearProgramSpec> {
    let enc = cs.encoding();
    let too_big = || Error::SizeLimit {
        what: "the direct linear program".into(),
        needed: format!("2^{} columns", enc.total_bits()),
        limit: format!("{limit} columns; use column generation"),
    };
    let card = enc.cardinality().ok_or_else(too_big)?;
    if card > limit {
        return Err(too_big());
    }
    let mut columns = Vec::with_capacity(card as usize);
    let mut labels = Vec::with_capacity(card as usize);
    for i in 0..card {
        let u = enc.value(i)?;
        let entries = cs.column(&u).into_iter().map(|r| (r, 1.0)).collect();
        columns.push(LpColumn { cost: gamma.eval(&u), entries });
        labels.push(u);
    }
    Ok(LinearProgramSpec { sense, rhs: cs.rhs(), columns, labels })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Clone, Debug)]
pub struct IpVar {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct IpConstraint {
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// A product variable and what it stands for.
#[derive(Clone, Debug, PartialEq)]
pub enum Product {
    /// Product of bit literals `(bit variable, negated)`.
    Literals { var: usize, factors: Vec<(usize, bool)> },
    /// `binary · weight` with a binary and a `[0, 1]` continuous variable.
    Weighted { var: usize, binary: usize, weight: usize },
    /// `weight · Π literals`, tied to the bits only through other products.
    Scaled { var: usize, weight: usize, factors: Vec<(usize, bool)> },
}

/// Mixed 0/1 program `min/max c·x + offset` under linear constraints.
#[derive(Clone, Debug)]
pub struct IntegerProgramSpec {
    pub sense: Sense,
    pub vars: Vec<IpVar>,
    pub constraints: Vec<IpConstraint>,
    pub offset: f64,
    /// Per copy, the variable of every bit position.
    pub bits: Vec<Vec<usize>>,
    /// Per copy, the entry variable of every configuration row.
    pub entries: Vec<Vec<usize>>,
    /// Per copy, the weight variable (single program only).
    pub weights: Vec<usize>,
    /// Per copy, the variables `p·b` of every bit position (single program
    /// with strengthening only).
    pub scaled_bits: Vec<Vec<usize>>,
    pub products: Vec<Product>,
}

impl IntegerProgramSpec {
    fn new(sense: Sense) -> Self {
        IntegerProgramSpec {
            sense,
            vars: Vec::new(),
            constraints: Vec::new(),
            offset: 0.0,
            bits: Vec::new(),
            entries: Vec::new(),
            weights: Vec::new(),
            scaled_bits: Vec::new(),
            products: Vec::new(),
        }
    }

    fn var(&mut self, name: String, kind: VarKind, upper: f64) -> usize {
        self.vars.push(IpVar { name, kind, lower: 0.0, upper, cost: 0.0 });
        self.vars.len() - 1
    }

    /// Adds a constraint with repeated variables merged.
    fn constrain(&mut self, mut terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (j, a) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.constraints.push(IpConstraint { terms: merged, cmp, rhs });
    }

    /// Fresh `v = Π lits` with `v ≤ lit` for each literal and
    /// `v ≥ 1 - k + Σ lits`; `0 ≤ v ≤ 1` are bounds.
    fn literal_product(&mut self, name: String, factors: &[(usize, bool)]) -> usize {
        let v = self.var(name, VarKind::Binary, 1.0);
        let k = factors.len() as f64;
        let mut lower = vec![(v, 1.0)];
        let mut rhs = 1.0 - k;
        for &(b, neg) in factors {
            if neg {
                self.constrain(vec![(v, 1.0), (b, 1.0)], Cmp::Le, 1.0);
                lower.push((b, 1.0));
                rhs += 1.0;
            } else {
                self.constrain(vec![(v, 1.0), (b, -1.0)], Cmp::Le, 0.0);
                lower.push((b, -1.0));
            }
        }
        self.constrain(lower, Cmp::Ge, rhs);
        self.products.push(Product::Literals { var: v, factors: factors.to_vec() });
        v
    }

    /// Fresh binary standing for `Π lits` without linking constraints; the
    /// caller must tie it to the bits some other way.
    fn bare_product(&mut self, name: String, factors: &[(usize, bool)]) -> usize {
        let v = self.var(name, VarKind::Binary, 1.0);
        self.products.push(Product::Literals { var: v, factors: factors.to_vec() });
        v
    }

    /// Fresh `α = m·p` with `0 ≤ α ≤ m` and `p + m - 1 ≤ α ≤ p`.
    fn weighted_product(&mut self, name: String, m: usize, p: usize) -> usize {
        let a = self.var(name, VarKind::Continuous, 1.0);
        self.constrain(vec![(a, 1.0), (m, -1.0)], Cmp::Le, 0.0);
        self.constrain(vec![(a, 1.0), (p, -1.0)], Cmp::Le, 0.0);
        self.constrain(vec![(a, 1.0), (p, -1.0), (m, -1.0)], Cmp::Ge, -1.0);
        self.products.push(Product::Weighted { var: a, binary: m, weight: p });
        a
    }

    /// The full point with copy `k` set to the exogenous value `values[k]`
    /// at weight `weights[k]`; every product takes its defined value.
    pub fn complete(&self, values: &[ExoValue], weights: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.vars.len()];
        for (k, u) in values.iter().enumerate() {
            for (pos, &j) in self.bits[k].iter().enumerate() {
                x[j] = if u.bit(pos) { 1.0 } else { 0.0 };
            }
        }
        for (k, &w) in weights.iter().enumerate() {
            x[self.weights[k]] = w;
        }
        let lit = |x: &[f64], (j, neg): (usize, bool)| if neg { 1.0 - x[j] } else { x[j] };
        for p in &self.products {
            if let Product::Literals { var, factors } = p {
                x[*var] = factors.iter().map(|&f| lit(&x, f)).product();
            }
        }
        for p in &self.products {
            match p {
                Product::Weighted { var, binary, weight } => x[*var] = x[*binary] * x[*weight],
                Product::Scaled { var, weight, factors } => {
                    x[*var] = x[*weight] * factors.iter().map(|&f| lit(&x, f)).product::<f64>()
                }
                Product::Literals { .. } => {}
            }
        }
        x
    }

    /// Value of the objective at `x`.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.offset + self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum::<f64>()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (v, xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        worst
    }

    /// The exogenous value encoded by copy `k` in the 0/1 solution `x`.
    pub fn decode(&self, k: usize, x: &[f64]) -> ExoValue {
        let bits: Vec<bool> = self.bits[k].iter().map(|&j| x[j] > 0.5).collect();
        ExoValue::from_bits(&bits)
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn to_lp_format(&self) -> String {
        let mut s = String::new();
        let term = |a: f64, j: usize| format!("{a:+} {}", self.vars[j].name);
        let _ = writeln!(s, "\\ constant objective offset {}", self.offset);
        let _ = writeln!(s, "{}", if self.sense == Sense::Minimize { "Minimize" } else { "Maximize" });
        let obj: Vec<String> =
            self.vars.iter().enumerate().filter(|(_, v)| v.cost != 0.0).map(|(j, v)| term(v.cost, j)).collect();
        let _ = writeln!(s, " obj: {}", if obj.is_empty() { "0".into() } else { obj.join(" ") });
        let _ = writeln!(s, "Subject To");
        for (i, c) in self.constraints.iter().enumerate() {
            let lhs: Vec<String> = c.terms.iter().map(|&(j, a)| term(a, j)).collect();
            let op = match c.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Eq => "=",
            };
            let _ = writeln!(s, " c{i}: {} {op} {}", lhs.join(" "), c.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for v in &self.vars {
            let _ = writeln!(s, " {} <= {} <= {}", v.lower, v.name, v.upper);
        }
        let _ = writeln!(s, "Binaries");
        let bins: Vec<&str> =
            self.vars.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.as_str()).collect();
        for chunk in bins.chunks(10) {
            let _ = writeln!(s, " {}", chunk.join(" "));
        }
        let _ = writeln!(s, "End");
        s
    }
}

fn lit_var(bits: &[usize], enc: &BitEncoding, l: &BitLiteral) -> (usize, bool) {
    (bits[enc.position(l)], l.negated)
}

/// Reduced-cost minimization `sign·γ(b) - Σ_w d_w a_w(b)` over the bits `b`
/// of one exogenous value. `duals` has one entry per row, normalization
/// last.
pub fn build_pricing_milp(cs: &ConstraintSystem, gamma: &BitPolynomial, duals: &[f64], sense: Sense) -> IntegerProgramSpec {
    build_pricing_milp_with(cs, gamma, duals, sense, false)
}

/// The pricing program, optionally with the valid inequalities of the single
/// program (at unit weight) added to tighten its relaxation.
pub fn build_pricing_milp_with(
    cs: &ConstraintSystem,
    gamma: &BitPolynomial,
    duals: &[f64],
    sense: Sense,
    strengthen: bool,
) -> IntegerProgramSpec {
    assert_eq!(duals.len(), cs.num_rows(), "one dual per row");
    let enc = cs.encoding();
    let sign = sense.sign();
    let mut ip = IntegerProgramSpec::new(Sense::Minimize);
    let bits: Vec<usize> = (0..enc.total_bits())
        .map(|p| {
            let (b, j) = enc.locate(p);
            ip.var(format!("b{}_{}", b + 1, j), VarKind::Binary, 1.0)
        })
        .collect();
    // With strengthening, the weighted products anchored at each entry and
    // objective term already pin them to their bits.
    let product = |ip: &mut IntegerProgramSpec, name: String, factors: &[(usize, bool)]| {
        if strengthen && factors.len() >= 2 {
            ip.bare_product(name, factors)
        } else {
            ip.literal_product(name, factors)
        }
    };
    let mut entries = Vec::with_capacity(cs.rows().len());
    for (i, row) in cs.rows().iter().enumerate() {
        let factors: Vec<(usize, bool)> = row.entry.literals().map(|l| lit_var(&bits, enc, l)).collect();
        let a = product(&mut ip, format!("a_{}", cs.row_label(i)), &factors);
        ip.vars[a].cost -= duals[i];
        entries.push(a);
    }
    ip.offset -= duals[cs.normalization_row()];
    // Objective products with their literals, positive for single literals.
    let mut terms: Vec<(usize, Vec<BitLiteral>)> = Vec::new();
    for (t, term) in gamma.terms().iter().enumerate() {
        let c = sign * term.coef;
        match term.literals.as_slice() {
            [] => ip.offset += c,
            [l] => {
                let (b, neg) = lit_var(&bits, enc, l);
                terms.push((b, vec![BitLiteral { negated: false, ..*l }]));
                if neg {
                    ip.offset += c;
                    ip.vars[b].cost -= c;
                } else {
                    ip.vars[b].cost += c;
                }
            }
            lits => {
                let factors: Vec<(usize, bool)> = lits.iter().map(|l| lit_var(&bits, enc, l)).collect();
                let beta = product(&mut ip, format!("beta_{t}"), &factors);
                ip.vars[beta].cost += c;
                terms.push((beta, lits.to_vec()));
            }
        }
    }
    ip.bits.push(bits.clone());
    if strengthen {
        let one = ip.var("unit".into(), VarKind::Continuous, 1.0);
        ip.vars[one].lower = 1.0;
        ip.weights.push(one);
        strengthen_copy(&mut ip, cs, 0, one, &entries, &entries, &terms);
    }
    ip.entries.push(entries);
    ip
}

/// Options for the single program.
#[derive(Clone, Copy, Debug)]
pub struct SingleMilpOptions {
    /// Maximum number of binary variables.
    pub max_binaries: usize,
    /// Add valid inequalities that leave the optimum unchanged: one member
    /// configuration per external context and locally consistent weighted
    /// literal products `p·Π S` around every row and objective term.
    pub strengthen: bool,
}

impl Default for SingleMilpOptions {
    fn default() -> Self {
        SingleMilpOptions { max_binaries: 4096, strengthen: true }
    }
}

/// `R = rows + 1` copies of the bits, each with a weight `p_k`; bilinear
/// products of 0/1 expressions with weights are replaced by `α` variables.
pub fn build_single_milp(
    cs: &ConstraintSystem,
    gamma: &BitPolynomial,
    sense: Sense,
    opts: SingleMilpOptions,
) -> Result<IntegerProgramSpec> {
    let enc = cs.encoding();
    let copies = cs.num_rows();
    let per_copy = enc.total_bits() + cs.rows().len() + gamma.terms().iter().filter(|t| t.literals.len() >= 2).count();
    if copies * per_copy > opts.max_binaries {
        return Err(Error::SizeLimit {
            what: "the single integer program".into(),
            needed: format!("{} binary variables", copies * per_copy),
            limit: format!("{}", opts.max_binaries),
        });
    }
    let mut ip = IntegerProgramSpec::new(sense);
    // Bits of all copies first so branching settles them before anything else.
    for k in 0..copies {
        let bits: Vec<usize> = (0..enc.total_bits())
            .map(|p| {
                let (b, j) = enc.locate(p);
                ip.var(format!("b{}_{}_k{k}", b + 1, j), VarKind::Binary, 1.0)
            })
            .collect();
        ip.bits.push(bits);
    }
    let mut row_alphas: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cs.rows().len()];
    for k in 0..copies {
        let p = ip.var(format!("p_k{k}"), VarKind::Continuous, 1.0);
        ip.weights.push(p);
        let bits = ip.bits[k].clone();
        let mut entries = Vec::new();
        let mut alphas = Vec::new();
        for (i, row) in cs.rows().iter().enumerate() {
            let factors: Vec<(usize, bool)> = row.entry.literals().map(|l| lit_var(&bits, enc, l)).collect();
            let a = ip.literal_product(format!("a_{}_k{k}", cs.row_label(i)), &factors);
            let alpha = ip.weighted_product(format!("alpha_{}_k{k}", cs.row_label(i)), a, p);
            row_alphas[i].push((alpha, 1.0));
            entries.push(a);
            alphas.push(alpha);
        }
        let mut gamma_alphas = Vec::new();
        for (t, term) in gamma.terms().iter().enumerate() {
            let c = term.coef;
            match term.literals.as_slice() {
                [] => ip.vars[p].cost += c,
                [l] => {
                    let (b, neg) = lit_var(&bits, enc, l);
                    let alpha = ip.weighted_product(format!("alpha_g{t}_k{k}"), b, p);
                    if neg {
                        ip.vars[p].cost += c;
                        ip.vars[alpha].cost -= c;
                    } else {
                        ip.vars[alpha].cost += c;
                    }
                    gamma_alphas.push((alpha, vec![BitLiteral { negated: false, ..*l }]));
                }
                lits => {
                    let factors: Vec<(usize, bool)> = lits.iter().map(|l| lit_var(&bits, enc, l)).collect();
                    let beta = ip.literal_product(format!("beta_{t}_k{k}"), &factors);
                    let alpha = ip.weighted_product(format!("alpha_g{t}_k{k}"), beta, p);
                    ip.vars[alpha].cost += c;
                    gamma_alphas.push((alpha, lits.to_vec()));
                }
            }
        }
        if opts.strengthen {
            strengthen_copy(&mut ip, cs, k, p, &entries, &alphas, &gamma_alphas);
        }
        ip.entries.push(entries);
    }
    for (i, terms) in row_alphas.into_iter().enumerate() {
        ip.constrain(terms, Cmp::Eq, cs.rows()[i].rhs);
    }
    ip.constrain(ip.weights.iter().map(|&p| (p, 1.0)).collect(), Cmp::Eq, 1.0);
    Ok(ip)
}

/// Valid inequalities for copy `k` with weight `p`.
fn strengthen_copy(
    ip: &mut IntegerProgramSpec,
    cs: &ConstraintSystem,
    k: usize,
    p: usize,
    entries: &[usize],
    alphas: &[usize],
    gamma_alphas: &[(usize, Vec<BitLiteral>)],
) {
    let enc = cs.encoding();
    let bits = ip.bits[k].clone();
    // Mechanisms are functions: one member configuration per context.
    let members: Vec<usize> =
        enc.members().iter().map(|m| cs.variables().iter().position(|v| v == m).unwrap()).collect();
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for (i, row) in cs.rows().iter().enumerate() {
        let ctx: Vec<bool> =
            row.values.iter().enumerate().filter(|(j, _)| !members.contains(j)).map(|(_, &b)| b).collect();
        groups.entry(ctx).or_default().push(i);
    }
    for rows in groups.values() {
        ip.constrain(rows.iter().map(|&i| (entries[i], 1.0)).collect(), Cmp::Eq, 1.0);
    }

    // Weighted products P(S) = p·Π S for literal sets S on distinct bits,
    // closed under subsets and sign changes of every row chain and every
    // objective term, tied together by P(S+l) + P(S+¬l) = P(S).
    let mut reg: HashMap<Vec<BitLiteral>, usize> = HashMap::new();
    let mut scaled = Vec::with_capacity(bits.len());
    for (pos, &b) in bits.iter().enumerate() {
        let (blk, off) = enc.locate(pos);
        // At unit weight the product is the bit itself.
        let pi = if ip.vars[p].lower == 1.0 { b } else { ip.weighted_product(format!("pi{pos}_k{k}"), b, p) };
        scaled.push(pi);
        reg.insert(vec![BitLiteral::positive(blk, off)], pi);
        let neg = ip.var(format!("pn{pos}_k{k}"), VarKind::Continuous, 1.0);
        ip.constrain(vec![(neg, 1.0), (pi, 1.0), (p, -1.0)], Cmp::Eq, 0.0);
        ip.products.push(Product::Scaled { var: neg, weight: p, factors: vec![(b, true)] });
        reg.insert(vec![BitLiteral::negative(blk, off)], neg);
    }
    ip.scaled_bits.push(scaled);
    let mut anchored: Vec<(Vec<BitLiteral>, usize)> = Vec::new();
    for (i, row) in cs.rows().iter().enumerate() {
        let mut key = row.chain.clone();
        key.sort();
        anchored.push((key, alphas[i]));
    }
    for (alpha, lits) in gamma_alphas {
        let mut key = lits.clone();
        key.sort();
        anchored.push((key, *alpha));
    }
    let mut bitsets: Vec<Vec<BitLiteral>> = anchored
        .iter()
        .map(|(key, _)| key.iter().map(|l| BitLiteral { negated: false, ..*l }).collect())
        .collect();
    bitsets.sort();
    bitsets.dedup();
    for (key, var) in &anchored {
        match reg.get(key) {
            Some(&v) if v != *var => ip.constrain(vec![(v, 1.0), (*var, -1.0)], Cmp::Eq, 0.0),
            Some(_) => {}
            None => {
                reg.insert(key.clone(), *var);
            }
        }
    }
    for set in &bitsets {
        let n = set.len();
        for mask in 1u32..(1 << n) {
            let members: Vec<&BitLiteral> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &set[i]).collect();
            if members.len() < 2 {
                continue;
            }
            for signs in 0u32..(1 << members.len()) {
                let key: Vec<BitLiteral> = members
                    .iter()
                    .enumerate()
                    .map(|(i, l)| BitLiteral { negated: signs >> i & 1 == 1, ..**l })
                    .collect();
                if !reg.contains_key(&key) {
                    let v = ip.var(format!("rho{}_k{k}", reg.len()), VarKind::Continuous, 1.0);
                    let factors = key.iter().map(|l| (bits[enc.position(l)], l.negated)).collect();
                    ip.products.push(Product::Scaled { var: v, weight: p, factors });
                    reg.insert(key, v);
                }
            }
        }
    }
    let mut keys: Vec<&Vec<BitLiteral>> = reg.keys().filter(|k| k.len() >= 2).collect();
    keys.sort();
    let mut done: HashSet<(Vec<BitLiteral>, BitLiteral)> = HashSet::new();
    for key in keys {
        for (i, l) in key.iter().enumerate() {
            let mut parent = key.clone();
            parent.remove(i);
            let bit = BitLiteral { negated: false, ..*l };
            if !done.insert((parent.clone(), bit)) {
                continue;
            }
            let mut sib = key.clone();
            sib[i].negated = !l.negated;
            ip.constrain(vec![(reg[key], 1.0), (reg[&sib], 1.0), (reg[&parent], -1.0)], Cmp::Eq, 0.0);
        }
    }
}
