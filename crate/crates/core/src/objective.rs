//! Objective coefficients `γ_u` as polynomials in the bits of `u`, built by
//! walking the target set in reverse topological order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::canon::{BitEncoding, BitLiteral, ExoValue};
use crate::dist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::graph::{CComponent, CausalGraph, NodeId, NodeSet};

pub const MERGE_TOL: f64 = 1e-15;
pub const IDENTIFIED_TOL: f64 = 1e-12;
const MAX_STEPS: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coef: f64,
    /// Sorted, at most one literal per bit.
    pub literals: Vec<BitLiteral>,
}

/// Sum of coefficient times product-of-literals terms over one encoding.
#[derive(Clone, Debug)]
pub struct BitPolynomial {
    encoding: Arc<BitEncoding>,
    terms: Vec<Term>,
}

impl BitPolynomial {
    pub fn zero(encoding: Arc<BitEncoding>) -> Self {
        BitPolynomial { encoding, terms: Vec::new() }
    }

    pub fn constant(encoding: Arc<BitEncoding>, c: f64) -> Self {
        let mut p = Self::zero(encoding);
        p.terms.push(Term { coef: c, literals: Vec::new() });
        p.canonicalize();
        p
    }

    pub fn from_terms(encoding: Arc<BitEncoding>, terms: Vec<Term>) -> Self {
        let mut p = BitPolynomial { encoding, terms };
        p.canonicalize();
        p
    }

    pub fn encoding(&self) -> &Arc<BitEncoding> {
        &self.encoding
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.literals.len()).max().unwrap_or(0)
    }

    fn add(&mut self, other: BitPolynomial) {
        self.terms.extend(other.terms);
    }

    fn scale(mut self, c: f64) -> Self {
        for t in &mut self.terms {
            t.coef *= c;
        }
        self
    }

    /// Multiplies every term by `lit`; a term that already holds the
    /// opposite literal on the same bit vanishes.
    fn times_literal(mut self, lit: BitLiteral) -> Self {
        self.terms.retain_mut(|t| {
            match t.literals.iter().find(|l| l.same_bit(&lit)) {
                Some(l) => l.negated == lit.negated,
                None => {
                    let at = t.literals.partition_point(|l| *l < lit);
                    t.literals.insert(at, lit);
                    true
                }
            }
        });
        self
    }

    /// Merges terms with identical literal sets and drops vanishing ones.
    pub fn canonicalize(&mut self) {
        let mut merged: BTreeMap<Vec<BitLiteral>, f64> = BTreeMap::new();
        for mut t in self.terms.drain(..) {
            t.literals.sort();
            t.literals.dedup();
            *merged.entry(t.literals).or_insert(0.0) += t.coef;
        }
        self.terms = merged
            .into_iter()
            .filter(|(_, c)| c.abs() > MERGE_TOL)
            .map(|(literals, coef)| Term { coef, literals })
            .collect();
    }

    pub fn eval(&self, u: &ExoValue) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.literals.iter().all(|l| self.encoding.eval_literal(l, u)))
            .map(|t| t.coef)
            .sum()
    }

    /// The polynomial in plain monomials over bit positions, with negated
    /// literals expanded as `1 - b`.
    pub fn multilinear(&self) -> BTreeMap<Vec<usize>, f64> {
        let mut out: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for t in &self.terms {
            let pos: Vec<usize> = t.literals.iter().filter(|l| !l.negated).map(|l| self.encoding.position(l)).collect();
            let neg: Vec<usize> = t.literals.iter().filter(|l| l.negated).map(|l| self.encoding.position(l)).collect();
            for mask in 0u64..(1 << neg.len()) {
                let mut mono = pos.clone();
                let mut sign = 1.0;
                for (k, &p) in neg.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        mono.push(p);
                        sign = -sign;
                    }
                }
                mono.sort_unstable();
                *out.entry(mono).or_insert(0.0) += sign * t.coef;
            }
        }
        out
    }

    /// The value when the polynomial does not depend on any bit.
    pub fn constant_value(&self, tol: f64) -> Option<f64> {
        let mut c = 0.0;
        for (mono, coef) in self.multilinear() {
            if mono.is_empty() {
                c = coef;
            } else if coef.abs() > tol {
                return None;
            }
        }
        Some(c)
    }

    /// `Σ w_i p_i`; all polynomials must share one encoding.
    pub fn combine_linear(parts: &[(f64, &BitPolynomial)]) -> Result<BitPolynomial> {
        let first = parts.first().ok_or_else(|| Error::Malformed("nothing to combine".into()))?;
        let enc = first.1.encoding.clone();
        let mut out = BitPolynomial::zero(enc.clone());
        for (w, p) in parts {
            if !Arc::ptr_eq(&p.encoding, &enc) && *p.encoding != *enc {
                return Err(Error::EncodingMismatch);
            }
            out.add((*p).clone().scale(*w));
        }
        out.canonicalize();
        Ok(out)
    }
}

impl fmt::Display for BitPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{}", t.coef)?;
            for l in &t.literals {
                write!(f, "*{l}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Case {
    C1a,
    C1b,
    C2,
    C3,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivationStep {
    pub selected: String,
    pub case: Case,
    pub targets: Vec<String>,
    pub next: Vec<String>,
    pub summed: Vec<String>,
    pub separator: Option<Vec<String>>,
    pub conditioning: Vec<String>,
    pub equation: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DerivationTrace {
    pub steps: Vec<DerivationStep>,
}

impl fmt::Display for DerivationTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{:<4} {}", format!("{:?}", s.case), s.equation)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ObjectiveOptions {
    /// Restrict the graph to the ancestors of the targets first.
    pub prune: bool,
}

impl Default for ObjectiveOptions {
    fn default() -> Self {
        ObjectiveOptions { prune: true }
    }
}

/// The objective of one query together with the graph it was derived on.
#[derive(Clone, Debug)]
pub struct Objective {
    /// The working graph (pruned unless pruning was disabled).
    pub graph: CausalGraph,
    pub target: Vec<(String, bool)>,
    /// Interventions that survive pruning.
    pub intervention: Vec<(String, bool)>,
    /// The intervened c-component in `graph`.
    pub component: Option<CComponent>,
    pub polynomial: BitPolynomial,
    pub trace: DerivationTrace,
    /// Some estimated conditional had a zero-probability conditioning event.
    pub zero_conditioning: bool,
}

impl Objective {
    pub fn encoding(&self) -> &Arc<BitEncoding> {
        self.polynomial.encoding()
    }

    /// The constant value of `γ` when the query is identified.
    pub fn identified_value(&self) -> Option<f64> {
        self.polynomial.constant_value(IDENTIFIED_TOL)
    }
}

struct PlanStep {
    v: NodeId,
    case: Case,
    /// Endogenous members of Y_t, sorted by id.
    targets: Vec<NodeId>,
    /// Endogenous members of Y_{t+1}, sorted by id.
    next: Vec<NodeId>,
    /// Endogenous variables summed out.
    summed: Vec<NodeId>,
    /// Conditioning set of the estimated factor (C1b, C3).
    cond: Vec<NodeId>,
}

/// Checks a query against the graph and resolves names.
fn resolve(g: &CausalGraph, lits: &[(String, bool)], what: &str) -> Result<Vec<(NodeId, bool)>> {
    let mut out: Vec<(NodeId, bool)> = Vec::new();
    for (n, b) in lits {
        let v = g.id(n).map_err(|_| Error::UnknownVariable(n.clone()))?;
        if g.is_exogenous(v) {
            return Err(Error::InvalidQuery(format!("{what} `{n}` is exogenous")));
        }
        if let Some(&(_, old)) = out.iter().find(|(w, _)| *w == v) {
            if old != *b {
                return Err(Error::InvalidQuery(format!("{what} `{n}` given two values")));
            }
            continue;
        }
        out.push((v, *b));
    }
    Ok(out)
}

pub fn build_objective(
    g: &CausalGraph,
    d: &EmpiricalDistribution,
    target: &[(String, bool)],
    intervention: &[(String, bool)],
    options: ObjectiveOptions,
) -> Result<Objective> {
    g.require_quasi_markovian()?;
    d.check_against(g)?;
    if target.is_empty() {
        return Err(Error::InvalidQuery("empty target".into()));
    }
    let ty = resolve(g, target, "target")?;
    let tx = resolve(g, intervention, "intervened variable")?;
    if let Some((v, _)) = ty.iter().find(|(v, _)| tx.iter().any(|(w, _)| w == v)) {
        return Err(Error::OverlappingSets(g.name(*v).to_string()));
    }

    let graph = if options.prune {
        let ys: NodeSet = ty.iter().map(|(v, _)| *v).collect();
        g.ancestral_prune(&ys)
    } else {
        g.clone()
    };
    let target: Vec<(String, bool)> = ty.iter().map(|&(v, b)| (g.name(v).to_string(), b)).collect();
    let intervention: Vec<(String, bool)> = tx
        .iter()
        .filter(|(v, _)| graph.id(g.name(*v)).is_ok())
        .map(|&(v, b)| (g.name(v).to_string(), b))
        .collect();
    let y: Vec<(NodeId, bool)> = target.iter().map(|(n, b)| (graph.id(n).unwrap(), *b)).collect();
    let x: Vec<(NodeId, bool)> = intervention.iter().map(|(n, b)| (graph.id(n).unwrap(), *b)).collect();
    let xs: NodeSet = x.iter().map(|(v, _)| *v).collect();

    let comps = graph.c_components();
    let hit: Vec<&CComponent> = comps.iter().filter(|c| c.members.iter().any(|v| xs.contains(v))).collect();
    if hit.len() > 1 {
        let desc = hit
            .iter()
            .map(|c| graph.sorted_names(&c.member_set()).join(","))
            .collect();
        return Err(Error::SeveralInterventedComponents(desc));
    }
    let component = hit.first().map(|c| (*c).clone());
    let encoding = Arc::new(match &component {
        Some(c) => BitEncoding::build(&graph, c),
        None => BitEncoding::from_parts(None, vec![], vec![]),
    });
    let ustar = component.as_ref().and_then(|c| c.exogenous);

    let (plan, trace) = derive_plan(&graph, &xs, &y, component.as_ref(), ustar)?;

    let dvar: Vec<Option<usize>> = graph
        .nodes()
        .map(|v| if graph.is_exogenous(v) { None } else { d.var_index(graph.name(v)).ok() })
        .collect();
    let mut ev = Evaluator {
        g: &graph,
        d,
        dvar,
        enc: encoding.clone(),
        plan: &plan,
        x: &x,
        memo: HashMap::new(),
        zero_conditioning: false,
    };
    let mut vals = vec![None; graph.len()];
    for &(v, b) in &y {
        vals[v] = Some(b);
    }
    let polynomial = ev.rec(0, &vals)?;
    let zero_conditioning = ev.zero_conditioning;
    Ok(Objective { graph, target, intervention, component, polynomial, trace, zero_conditioning })
}

fn derive_plan(
    g: &CausalGraph,
    xs: &NodeSet,
    y: &[(NodeId, bool)],
    cstar: Option<&CComponent>,
    ustar: Option<NodeId>,
) -> Result<(Vec<PlanStep>, DerivationTrace)> {
    let mut desc = g.descendants(xs);
    for v in xs {
        desc.remove(v);
    }
    let xnames = g.names_of(xs).join(",");
    let do_x = if xs.is_empty() { String::new() } else { format!(" | do({xnames})") };
    let cut_in = g.mutilate(xs, &NodeSet::new());
    let show = |s: &NodeSet| {
        let mut v: Vec<NodeId> = s.iter().copied().collect();
        v.sort_by_key(|&n| std::cmp::Reverse(g.topo_rank(n)));
        g.names_of(&v).join(",")
    };

    let mut plan = Vec::new();
    let mut trace = DerivationTrace::default();
    let mut cur: NodeSet = y.iter().map(|(v, _)| *v).collect();
    while !cur.is_empty() {
        if plan.len() >= MAX_STEPS {
            return Err(Error::Unsupported("derivation does not terminate".into()));
        }
        let pool: Vec<NodeId> = {
            let d: Vec<NodeId> = cur.iter().copied().filter(|v| desc.contains(v)).collect();
            if d.is_empty() {
                cur.iter().copied().collect()
            } else {
                d
            }
        };
        let v = *pool.iter().max_by_key(|&&n| g.topo_rank(n)).unwrap();
        let in_c = cstar.is_some_and(|c| c.contains(v));
        let u_in = ustar.is_some_and(|u| cur.contains(&u));
        let name = g.name(v).to_string();

        let mut next = cur.clone();
        next.remove(&v);
        let mut summed = NodeSet::new();
        let mut cond = NodeSet::new();
        let mut separator = None;
        let case;
        let equation;
        if g.is_exogenous(v) {
            if Some(v) != ustar {
                return Err(Error::Unsupported(format!("exogenous `{name}` outside the intervened component")));
            }
            case = Case::C1a;
            equation = if next.is_empty() {
                format!("P({name}{do_x}) = P({name})")
            } else {
                format!("P({}{do_x}) = P({}{do_x}) P({name})", show(&cur), show(&next))
            };
        } else if in_c && (desc.contains(&v) || u_in) {
            case = Case::C2;
            for &p in g.parents(v) {
                if !cur.contains(&p) && !xs.contains(&p) {
                    summed.insert(p);
                    next.insert(p);
                }
            }
            let pa: Vec<&str> = g.parents(v).iter().map(|&p| g.name(p)).collect();
            let sum = if summed.is_empty() { String::new() } else { format!("sum_{{{}}} ", show(&summed)) };
            let rest = if next.is_empty() { String::new() } else { format!(" P({}{do_x})", show(&next)) };
            equation = format!("P({}{do_x}) = {sum}[f_{name}({}) = {name}]{rest}", show(&cur), pa.join(","));
        } else if desc.contains(&v) {
            case = Case::C3;
            let carried = next.clone();
            let w = g.find_c3_separator(v, xs, &carried)?;
            let ux: NodeSet = xs.iter().flat_map(|&x| g.exo_parents(x)).collect();
            for &n in carried.iter().chain(&w) {
                if n != v && !ux.contains(&n) {
                    cond.insert(n);
                }
            }
            for &n in &w {
                if !cur.contains(&n) {
                    summed.insert(n);
                }
                next.insert(n);
            }
            let given = if cond.is_empty() { xnames.clone() } else { format!("{xnames},{}", show(&cond)) };
            let sum = if summed.is_empty() { String::new() } else { format!("sum_{{{}}} ", show(&summed)) };
            let rest = if next.is_empty() { String::new() } else { format!(" P({}{do_x})", show(&next)) };
            equation = format!("P({}{do_x}) = {sum}P^({name} | {given}){rest}", show(&cur), );
            separator = Some(g.sorted_names(&w));
        } else {
            case = Case::C1b;
            // Rule 3 must let us drop the intervention; when U* is still in
            // the target set it must also be irrelevant to `v`.
            if !xs.is_empty() && !cut_in.d_separated(&[v].into(), xs, &next)? {
                return Err(Error::Unsupported(format!("`{name}` is not separated from the intervention")));
            }
            cond = next.clone();
            if let Some(u) = ustar.filter(|u| next.contains(u)) {
                cond.remove(&u);
                if !g.d_separated(&[v].into(), &[u].into(), &cond)? {
                    return Err(Error::Unsupported(format!(
                        "`{name}` depends on `{}` given the remaining targets",
                        g.name(u)
                    )));
                }
            }
            let given = if cond.is_empty() { String::new() } else { format!(" | {}", show(&cond)) };
            equation = if next.is_empty() {
                format!("P({name}{do_x}) = P^({name}{given})")
            } else {
                format!("P({}{do_x}) = P({}{do_x}) P^({name}{given})", show(&cur), show(&next))
            };
        }

        let endo = |s: &NodeSet| -> Vec<NodeId> { s.iter().copied().filter(|&n| !g.is_exogenous(n)).collect() };
        trace.steps.push(DerivationStep {
            selected: name,
            case,
            targets: g.sorted_names(&cur),
            next: g.sorted_names(&next),
            summed: g.sorted_names(&summed),
            separator,
            conditioning: g.sorted_names(&cond),
            equation,
        });
        plan.push(PlanStep { v, case, targets: endo(&cur), next: endo(&next), summed: endo(&summed), cond: endo(&cond) });
        cur = next;
    }
    Ok((plan, trace))
}

struct Evaluator<'a> {
    g: &'a CausalGraph,
    d: &'a EmpiricalDistribution,
    dvar: Vec<Option<usize>>,
    enc: Arc<BitEncoding>,
    plan: &'a [PlanStep],
    x: &'a [(NodeId, bool)],
    memo: HashMap<(usize, Vec<bool>), BitPolynomial>,
    zero_conditioning: bool,
}

impl Evaluator<'_> {
    fn dv(&self, v: NodeId) -> Result<usize> {
        self.dvar[v].ok_or_else(|| Error::UnknownVariable(self.g.name(v).to_string()))
    }

    fn estimate(&mut self, v: NodeId, val: bool, given: &[(NodeId, bool)]) -> Result<f64> {
        let ev = [(self.dv(v)?, val)];
        let gv: Vec<(usize, bool)> = given.iter().map(|&(n, b)| Ok((self.dv(n)?, b))).collect::<Result<_>>()?;
        let c = self.d.conditional_ids(&ev, &gv)?;
        self.zero_conditioning |= c.zero_conditioning;
        Ok(c.value)
    }

    fn rec(&mut self, t: usize, vals: &[Option<bool>]) -> Result<BitPolynomial> {
        let Some(step) = self.plan.get(t) else {
            return Ok(BitPolynomial::constant(self.enc.clone(), 1.0));
        };
        let key: Vec<bool> = step.targets.iter().map(|&n| vals[n].expect("targets are assigned")).collect();
        if let Some(p) = self.memo.get(&(t, key.clone())) {
            return Ok(p.clone());
        }
        let v = step.v;
        let mut out = BitPolynomial::zero(self.enc.clone());
        match step.case {
            Case::C1a => {
                out = self.rec(t + 1, vals)?;
                if out.degree() > 0 {
                    return Err(Error::Unsupported("exogenous factor left with mechanism terms".into()));
                }
            }
            Case::C1b => {
                let given: Vec<(NodeId, bool)> = step.cond.iter().map(|&n| (n, vals[n].unwrap())).collect();
                let c = self.estimate(v, vals[v].unwrap(), &given)?;
                let mut nv = vals.to_vec();
                nv[v] = None;
                if c != 0.0 {
                    out = self.rec(t + 1, &nv)?.scale(c);
                }
            }
            Case::C2 | Case::C3 => {
                let k = step.summed.len();
                for mask in 0u64..(1 << k) {
                    let mut nv = vals.to_vec();
                    for (i, &z) in step.summed.iter().enumerate() {
                        nv[z] = Some(mask >> (k - 1 - i) & 1 == 1);
                    }
                    if step.case == Case::C2 {
                        let lookup = |p: &str| -> Option<bool> {
                            let n = self.g.id(p).ok()?;
                            nv[n].or_else(|| self.x.iter().find(|(w, _)| *w == n).map(|(_, b)| *b))
                        };
                        let lit = self.enc.literal(self.g.name(v), lookup, vals[v].unwrap())?;
                        nv[v] = None;
                        out.add(self.rec(t + 1, &nv)?.times_literal(lit));
                    } else {
                        let mut given: Vec<(NodeId, bool)> = self.x.to_vec();
                        given.extend(step.cond.iter().map(|&n| (n, nv[n].unwrap())));
                        let c = self.estimate(v, vals[v].unwrap(), &given)?;
                        nv[v] = None;
                        if c != 0.0 {
                            out.add(self.rec(t + 1, &nv)?.scale(c));
                        }
                    }
                }
                out.canonicalize();
            }
        }
        debug_assert!(step.next.iter().all(|&n| n != v));
        self.memo.insert((t, key), out.clone());
        Ok(out)
    }
}
