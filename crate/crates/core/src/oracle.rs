//! Fully specified models and exact inference by enumeration, used as
//! ground truth.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::canon::{BitEncoding, ExoValue};
use crate::dist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::graph::{CComponent, CausalGraph, NodeId};
use crate::query::Query;

pub const ENUMERATION_LIMIT: u64 = 1 << 26;
const DENSE_SUPPORT_BITS: usize = 16;
const SPARSE_SUPPORT: usize = 256;
pub const PROB_FLOOR: f64 = 1e-6;

/// Distribution of one canonical exogenous variable.
#[derive(Clone, Debug)]
pub struct ComponentModel {
    pub component: CComponent,
    pub encoding: Arc<BitEncoding>,
    /// Support of `Pr(U)` with probabilities.
    pub support: Vec<(ExoValue, f64)>,
}

#[derive(Clone, Debug)]
pub struct FullScm {
    graph: CausalGraph,
    components: Vec<ComponentModel>,
    comp_of: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ScmOptions {
    /// Skip the probability floor and thin out the support, so that zero
    /// probability contexts show up.
    pub degenerate: bool,
}

impl FullScm {
    pub fn new(graph: CausalGraph, supports: Vec<Vec<(ExoValue, f64)>>) -> Result<Self> {
        graph.require_quasi_markovian()?;
        let comps = graph.c_components();
        if comps.len() != supports.len() {
            return Err(Error::Malformed(format!("{} components but {} distributions", comps.len(), supports.len())));
        }
        let mut comp_of = vec![usize::MAX; graph.len()];
        let mut components = Vec::new();
        for (i, (c, support)) in comps.into_iter().zip(supports).enumerate() {
            for &m in &c.members {
                comp_of[m] = i;
            }
            let encoding = Arc::new(BitEncoding::build(&graph, &c));
            let total: f64 = support.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 || support.iter().any(|(u, p)| *p < 0.0 || u.width() != encoding.total_bits()) {
                return Err(Error::Malformed("invalid exogenous distribution".into()));
            }
            components.push(ComponentModel { component: c, encoding, support });
        }
        Ok(FullScm { graph, components, comp_of })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn components(&self) -> &[ComponentModel] {
        &self.components
    }

    /// The model of the component containing the named endogenous node.
    pub fn component_of(&self, name: &str) -> Result<&ComponentModel> {
        let v = self.graph.id(name)?;
        self.components.get(self.comp_of[v]).ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    fn enumeration_size(&self, skip: &[bool]) -> Result<u64> {
        let mut size: u64 = 1;
        for (i, c) in self.components.iter().enumerate() {
            if skip[i] {
                continue;
            }
            size = size.saturating_mul(c.support.len() as u64);
            if size > ENUMERATION_LIMIT {
                return Err(Error::SizeLimit {
                    what: "exact enumeration".into(),
                    needed: "more than 2^26 exogenous configurations".into(),
                    limit: "2^26".into(),
                });
            }
        }
        Ok(size)
    }

    /// Endogenous values (indexed by node id) for one exogenous configuration.
    fn simulate(&self, choice: &[usize], fixed: &[Option<bool>]) -> Vec<bool> {
        let g = &self.graph;
        let mut val = vec![false; g.len()];
        for &v in g.topological_order() {
            if g.is_exogenous(v) {
                continue;
            }
            if let Some(b) = fixed[v] {
                val[v] = b;
                continue;
            }
            let ci = self.comp_of[v];
            let c = &self.components[ci];
            let block = c.encoding.block_of(g.name(v)).unwrap();
            let off = c.encoding.parent_config(block, |p| Some(val[g.id(p).unwrap()])).unwrap();
            let u = &c.support[choice[ci]].0;
            val[v] = u.bit(c.encoding.block_start(block) + off);
        }
        val
    }

    fn enumerate(&self, fixed: &[Option<bool>], mut visit: impl FnMut(&[bool], f64)) -> Result<()> {
        let k = self.components.len();
        let fixed_comp: Vec<bool> = self
            .components
            .iter()
            .map(|c| c.component.members.iter().all(|&m| fixed[m].is_some()))
            .collect();
        self.enumeration_size(&fixed_comp)?;
        let mut choice = vec![0usize; k];
        loop {
            let mut p = 1.0;
            for i in 0..k {
                if !fixed_comp[i] {
                    p *= self.components[i].support[choice[i]].1;
                }
            }
            if p > 0.0 {
                visit(&self.simulate(&choice, fixed), p);
            }
            let mut i = 0;
            loop {
                if i == k {
                    return Ok(());
                }
                if !fixed_comp[i] && choice[i] + 1 < self.components[i].support.len() {
                    choice[i] += 1;
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn endo_names(&self) -> Vec<String> {
        self.graph.endogenous().map(|v| self.graph.name(v).to_string()).collect()
    }

    fn index_of(&self, val: &[bool]) -> usize {
        self.graph.endogenous().fold(0, |acc, v| (acc << 1) | val[v] as usize)
    }

    /// Observational joint by summing the structural product over all
    /// exogenous configurations; checked against the c-factor product.
    pub fn exact_joint(&self) -> Result<EmpiricalDistribution> {
        let n = self.graph.endogenous().count();
        let mut probs = vec![0.0; 1 << n];
        self.enumerate(&vec![None; self.graph.len()], |val, p| probs[self.index_of(val)] += p)?;
        let via_factors = self.cfactor_joint()?;
        for (a, b) in probs.iter().zip(via_factors.probs()) {
            assert!((a - b).abs() <= 1e-12, "c-factor product disagrees with enumeration: {a} vs {b}");
        }
        EmpiricalDistribution::from_probs(self.endo_names(), probs)
    }

    /// `Q_C(w_C)` for every component, evaluated at the endogenous values
    /// `val` (indexed by node id), skipping mechanisms of `skip` nodes.
    fn cfactor(&self, ci: usize, val: &[bool], skip: &[bool]) -> f64 {
        let g = &self.graph;
        let c = &self.components[ci];
        let mut lits = Vec::new();
        for &m in &c.component.members {
            if skip[m] {
                continue;
            }
            let block = c.encoding.block_of(g.name(m)).unwrap();
            let off = c.encoding.parent_config(block, |p| Some(val[g.id(p).unwrap()])).unwrap();
            lits.push((c.encoding.block_start(block) + off, val[m]));
        }
        c.support.iter().filter(|(u, _)| lits.iter().all(|&(pos, b)| u.bit(pos) == b)).map(|(_, p)| p).sum()
    }

    /// Observational joint as the product of c-factors.
    pub fn cfactor_joint(&self) -> Result<EmpiricalDistribution> {
        let endo: Vec<NodeId> = self.graph.endogenous().collect();
        let n = endo.len();
        if n > 24 {
            return Err(Error::SizeLimit { what: "joint table".into(), needed: format!("{n} variables"), limit: "24".into() });
        }
        let skip = vec![false; self.graph.len()];
        let mut probs = vec![0.0; 1 << n];
        let mut val = vec![false; self.graph.len()];
        for (i, p) in probs.iter_mut().enumerate() {
            for (k, &v) in endo.iter().enumerate() {
                val[v] = (i >> (n - 1 - k)) & 1 == 1;
            }
            *p = (0..self.components.len()).map(|ci| self.cfactor(ci, &val, &skip)).product();
        }
        EmpiricalDistribution::from_probs(self.endo_names(), probs)
    }

    fn resolve(&self, lits: &[(String, bool)]) -> Result<Vec<(NodeId, bool)>> {
        lits.iter()
            .map(|(n, b)| {
                let v = self.graph.id(n).map_err(|_| Error::UnknownVariable(n.clone()))?;
                if self.graph.is_exogenous(v) {
                    return Err(Error::InvalidQuery(format!("`{n}` is exogenous")));
                }
                Ok((v, *b))
            })
            .collect()
    }

    /// `P(target | do(intervention))` by truncating the intervened mechanisms
    /// and enumerating; cross-checked against the mixed factorization on the
    /// intervened semi-marginal graph.
    pub fn exact_interventional(&self, target: &[(String, bool)], intervention: &[(String, bool)]) -> Result<f64> {
        let y = self.resolve(target)?;
        let x = self.resolve(intervention)?;
        let mut fixed = vec![None; self.graph.len()];
        for &(v, b) in &x {
            fixed[v] = Some(b);
        }
        let mut truth = 0.0;
        self.enumerate(&fixed, |val, p| {
            if y.iter().all(|&(v, b)| val[v] == b) {
                truth += p;
            }
        })?;
        if let Some(mixed) = self.mixed_factorization(&y, &x)? {
            assert!((truth - mixed).abs() <= 1e-10, "truncation gives {truth}, mixed factorization gives {mixed}");
        }
        Ok(truth)
    }

    /// Non-intervened components contribute estimated factors
    /// `Π P(v | w_V)`; intervened ones contribute `Σ_u Pr(u) Π [f_V = v]`
    /// over their non-intervened members. `None` when some factor conditions
    /// on an event of probability zero (the model is not positive there and
    /// the factorization says nothing).
    fn mixed_factorization(&self, y: &[(NodeId, bool)], x: &[(NodeId, bool)]) -> Result<Option<f64>> {
        let g = &self.graph;
        let joint = self.cfactor_joint()?;
        let mut skip = vec![false; g.len()];
        for &(v, _) in x {
            skip[v] = true;
        }
        let intervened: Vec<bool> =
            self.components.iter().map(|c| c.component.members.iter().any(|&m| skip[m])).collect();

        // Conditional tables P(v | w_V) for members of untouched components.
        let mut tables: BTreeMap<NodeId, (Vec<NodeId>, Vec<f64>)> = BTreeMap::new();
        for (ci, c) in self.components.iter().enumerate() {
            if intervened[ci] {
                continue;
            }
            for (k, &v) in c.component.members.iter().enumerate() {
                let pre = c.component.prefixes[k].clone();
                let mut names: Vec<String> = pre.iter().map(|&p| g.name(p).to_string()).collect();
                names.push(g.name(v).to_string());
                let m = joint.marginalize(&names)?;
                let probs = m.probs();
                let mut cond = vec![f64::NAN; probs.len()];
                for j in 0..probs.len() / 2 {
                    let den = probs[2 * j] + probs[2 * j + 1];
                    if den > 0.0 {
                        cond[2 * j] = probs[2 * j] / den;
                        cond[2 * j + 1] = probs[2 * j + 1] / den;
                    }
                }
                tables.insert(v, (pre, cond));
            }
        }

        let free: Vec<NodeId> = g.endogenous().filter(|&v| !skip[v]).collect();
        let mut val = vec![false; g.len()];
        for &(v, b) in x {
            val[v] = b;
        }
        let mut total = 0.0;
        'outer: for i in 0u64..(1 << free.len()) {
            for (k, &v) in free.iter().enumerate() {
                val[v] = (i >> (free.len() - 1 - k)) & 1 == 1;
            }
            for &(v, b) in y {
                if val[v] != b {
                    continue 'outer;
                }
            }
            let mut p = 1.0;
            for (v, (pre, cond)) in &tables {
                let idx = pre.iter().fold(0usize, |acc, &w| (acc << 1) | val[w] as usize);
                let f = cond[(idx << 1) | val[*v] as usize];
                if f.is_nan() {
                    return Ok(None);
                }
                p *= f;
            }
            if p == 0.0 {
                continue;
            }
            for ci in 0..self.components.len() {
                if intervened[ci] {
                    p *= self.cfactor(ci, &val, &skip);
                }
            }
            total += p;
        }
        Ok(Some(total))
    }
}

fn draw_weights(rng: &mut ChaCha8Rng, n: usize, opts: ScmOptions) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    if opts.degenerate {
        let keep = rng.gen_range(0..n);
        for (i, x) in w.iter_mut().enumerate() {
            if i != keep && rng.gen_bool(0.7) {
                *x = 0.0;
            }
        }
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    if !opts.degenerate {
        for x in &mut w {
            *x = x.max(PROB_FLOOR);
        }
        let total: f64 = w.iter().sum();
        for x in &mut w {
            *x /= total;
        }
    }
    w
}

/// A random fully specified model. Components with at most 16 bits get a
/// dense distribution over all canonical values; larger ones get a random
/// support of 256 values.
pub fn random_scm(g: &CausalGraph, seed: u64, opts: ScmOptions) -> Result<FullScm> {
    g.require_quasi_markovian()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut supports = Vec::new();
    for c in g.c_components() {
        let enc = BitEncoding::build(g, &c);
        let bits = enc.total_bits();
        let values: Vec<ExoValue> = if c.exogenous.is_none() {
            // No exogenous parent: a single fixed mechanism.
            let b: Vec<bool> = (0..bits).map(|_| rng.gen()).collect();
            vec![ExoValue::from_bits(&b)]
        } else if bits <= DENSE_SUPPORT_BITS {
            (0..1u64 << bits).map(|i| enc.value(i).unwrap()).collect()
        } else {
            let mut set = std::collections::BTreeSet::new();
            while set.len() < SPARSE_SUPPORT {
                let b: Vec<bool> = (0..bits).map(|_| rng.gen()).collect();
                set.insert(ExoValue::from_bits(&b));
            }
            set.into_iter().collect()
        };
        let w = if values.len() == 1 { vec![1.0] } else { draw_weights(&mut rng, values.len(), opts) };
        supports.push(values.into_iter().zip(w).collect());
    }
    FullScm::new(g.clone(), supports)
}

/// `Π_{V ∉ X} P(v | pa(V))` summed over the non-target variables; the
/// interventional distribution of a Markovian model.
pub fn truncated_factorization(
    g: &CausalGraph,
    d: &EmpiricalDistribution,
    target: &[(String, bool)],
    intervention: &[(String, bool)],
) -> Result<f64> {
    let endo: Vec<NodeId> = g.endogenous().collect();
    let mut fixed = vec![None; g.len()];
    for (n, b) in intervention {
        fixed[g.id(n)?] = Some(*b);
    }
    let mut want = vec![None; g.len()];
    for (n, b) in target {
        want[g.id(n)?] = Some(*b);
    }
    let free: Vec<NodeId> = endo.iter().copied().filter(|&v| fixed[v].is_none()).collect();
    let mut factors = Vec::new();
    for &v in &free {
        let pa = g.endo_parents(v);
        let mut names: Vec<String> = pa.iter().map(|&p| g.name(p).to_string()).collect();
        names.push(g.name(v).to_string());
        factors.push((v, pa, d.marginalize(&names)?));
    }
    let mut val = vec![false; g.len()];
    for v in 0..g.len() {
        if let Some(b) = fixed[v] {
            val[v] = b;
        }
    }
    let mut total = 0.0;
    'outer: for i in 0u64..(1 << free.len()) {
        for (k, &v) in free.iter().enumerate() {
            val[v] = (i >> (free.len() - 1 - k)) & 1 == 1;
            if want[v].is_some_and(|b| b != val[v]) {
                continue 'outer;
            }
        }
        if (0..g.len()).any(|v| fixed[v].is_some() && want[v].is_some_and(|b| b != val[v])) {
            continue;
        }
        let mut p = 1.0;
        for (v, pa, m) in &factors {
            let idx = pa.iter().fold(0usize, |acc, &w| (acc << 1) | val[w] as usize);
            let probs = m.probs();
            let den = probs[idx << 1] + probs[(idx << 1) | 1];
            if den <= 0.0 {
                p = 0.0;
                break;
            }
            p *= probs[(idx << 1) | val[*v] as usize] / den;
        }
        total += p;
    }
    Ok(total)
}

/// A generated problem: graph, observational distribution, query and the
/// model that produced them.
#[derive(Clone, Debug)]
pub struct Instance {
    pub graph: CausalGraph,
    pub dist: EmpiricalDistribution,
    pub query: Query,
    pub scm: FullScm,
}

pub fn instance(g: &CausalGraph, query: Query, seed: u64, opts: ScmOptions) -> Result<Instance> {
    let scm = random_scm(g, seed, opts)?;
    let dist = scm.exact_joint().or_else(|_| scm.cfactor_joint())?;
    Ok(Instance { graph: g.clone(), dist, query, scm })
}

/// The scalable pipeline with a random model and the query
/// `P(Y=1 | do(X=1))`.
pub fn family_instance(m: usize, n: usize, seed: u64) -> Result<Instance> {
    let g = fixtures::pipeline_family(m, n);
    let scm = random_scm(&g, seed, ScmOptions::default())?;
    let dist = scm.cfactor_joint()?;
    let query = Query::probability(&[("Y", true)], &[("X", true)]);
    Ok(Instance { graph: g, dist, query, scm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lits(v: &[(&str, bool)]) -> Vec<(String, bool)> {
        v.iter().map(|(n, b)| (n.to_string(), *b)).collect()
    }

    #[test]
    fn seeds_are_deterministic() {
        let g = fixtures::latency_pipeline();
        let a = random_scm(&g, 7, ScmOptions::default()).unwrap();
        let b = random_scm(&g, 7, ScmOptions::default()).unwrap();
        for (x, y) in a.components().iter().zip(b.components()) {
            assert_eq!(x.support, y.support);
            let total: f64 = x.support.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_model_gives_point_mass() {
        let g = fixtures::confounded_chain();
        let comps = g.c_components();
        let supports = comps
            .iter()
            .map(|c| {
                let bits = BitEncoding::build(&g, c).total_bits();
                vec![(ExoValue::from_bits(&vec![true; bits]), 1.0)]
            })
            .collect();
        let scm = FullScm::new(g, supports).unwrap();
        let joint = scm.exact_joint().unwrap();
        assert_eq!(joint.prob(&[true, true, true, true]).unwrap(), 1.0);
    }

    #[test]
    fn tian_factorization_of_confounded_chain() {
        let g = fixtures::confounded_chain();
        let scm = random_scm(&g, 3, ScmOptions::default()).unwrap();
        let d = scm.exact_joint().unwrap();
        for i in 0..16 {
            let a = d.assignment(i);
            let get = |n: &str| a[d.var_index(n).unwrap()];
            let lit = |n: &'static str| (n, get(n));
            let f = d.marginal(&[lit("X")]).unwrap()
                * d.conditional(&[lit("W")], &[lit("X")]).unwrap().value
                * d.conditional(&[lit("Z")], &[lit("W")]).unwrap().value
                * d.conditional(&[lit("Y")], &[lit("W"), lit("Z")]).unwrap().value;
            assert!((f - d.probs()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn intervening_on_a_non_ancestor_is_observational() {
        let g = fixtures::confounded_chain();
        let scm = random_scm(&g, 11, ScmOptions::default()).unwrap();
        let d = scm.exact_joint().unwrap();
        let p = scm.exact_interventional(&lits(&[("W", true)]), &lits(&[("Y", false)])).unwrap();
        assert!((p - d.marginal(&[("W", true)]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn markovian_models_follow_truncated_factorization() {
        let g = fixtures::latency_pipeline().markovianized();
        for seed in 0..5 {
            let scm = random_scm(&g, seed, ScmOptions::default()).unwrap();
            let d = scm.exact_joint().unwrap();
            let (y, x) = (lits(&[("Y", true)]), lits(&[("X", true)]));
            let truth = scm.exact_interventional(&y, &x).unwrap();
            let tf = truncated_factorization(&g, &d, &y, &x).unwrap();
            assert!((truth - tf).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_models_have_zero_contexts() {
        let g = fixtures::latency_pipeline();
        let scm = random_scm(&g, 5, ScmOptions { degenerate: true }).unwrap();
        let d = scm.exact_joint().unwrap();
        assert!(d.probs().iter().any(|&p| p == 0.0));
    }
}
