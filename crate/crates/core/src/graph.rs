//! Causal diagrams over endogenous and exogenous nodes.
//!
//! Nodes are addressed by [`NodeId`] inside one graph and by name across
//! graphs: every surgery returns a fresh graph whose ids may differ from the
//! original, so code that moves between graphs should go through names.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt::Write as _;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type NodeSet = BTreeSet<NodeId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Endogenous,
    Exogenous,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CausalGraph {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    // Both adjacency lists are sorted by node name.
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    index: HashMap<String, NodeId>,
    topo: Vec<NodeId>,
    rank: Vec<usize>,
}

/// A confounded component together with its extended set and the per-member
/// prefix sets used by the c-factor product.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CComponent {
    /// Members in topological order.
    pub members: Vec<NodeId>,
    pub exogenous: Option<NodeId>,
    /// Members plus their endogenous parents, in topological order.
    pub extended: Vec<NodeId>,
    /// `prefixes[i]` holds the nodes of `extended` that precede `members[i]`.
    pub prefixes: Vec<Vec<NodeId>>,
}

impl CComponent {
    pub fn contains(&self, v: NodeId) -> bool {
        self.members.contains(&v)
    }

    pub fn prefix(&self, v: NodeId) -> Option<&[NodeId]> {
        let i = self.members.iter().position(|&m| m == v)?;
        Some(&self.prefixes[i])
    }

    pub fn member_set(&self) -> NodeSet {
        self.members.iter().copied().collect()
    }
}

impl CausalGraph {
    /// Builds a graph from named nodes and `(parent, child)` edges.
    /// Repeated edges are collapsed.
    pub fn new<N, S, E, T>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = (S, NodeKind)>,
        S: Into<String>,
        E: IntoIterator<Item = (T, T)>,
        T: AsRef<str>,
    {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut index = HashMap::new();
        for (name, kind) in nodes {
            let name = name.into();
            if name.trim().is_empty() {
                return Err(Error::Malformed("empty node name".into()));
            }
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(Error::DuplicateNode(name));
            }
            names.push(name);
            kinds.push(kind);
        }
        let mut pairs = Vec::new();
        for (p, c) in edges {
            let (p, c) = (p.as_ref(), c.as_ref());
            let pi = *index.get(p).ok_or_else(|| Error::UnknownNode(p.to_string()))?;
            let ci = *index.get(c).ok_or_else(|| Error::UnknownNode(c.to_string()))?;
            pairs.push((pi, ci));
        }
        Self::assemble(names, kinds, pairs)
    }

    fn assemble(names: Vec<String>, kinds: Vec<NodeKind>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (p, c) in edges {
            if kinds[c] == NodeKind::Exogenous {
                return Err(Error::ExogenousChild(names[c].clone()));
            }
            if p == c {
                return Err(Error::Cyclic(names[p].clone()));
            }
            if !parents[c].contains(&p) {
                parents[c].push(p);
                children[p].push(c);
            }
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_by(|&a, &b| names[a].cmp(&names[b]));
        }

        // Kahn's algorithm, ties broken by name.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut heap: BinaryHeap<Reverse<(&str, NodeId)>> = (0..n)
            .filter(|&v| indeg[v] == 0)
            .map(|v| Reverse((names[v].as_str(), v)))
            .collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(Reverse((_, v))) = heap.pop() {
            topo.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    heap.push(Reverse((names[c].as_str(), c)));
                }
            }
        }
        if topo.len() < n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap();
            return Err(Error::Cyclic(names[stuck].clone()));
        }
        let mut rank = vec![0; n];
        for (i, &v) in topo.iter().enumerate() {
            rank[v] = i;
        }
        let index = names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(CausalGraph { names, kinds, parents, children, index, topo, rank })
    }

    /// Copy of the graph restricted to `keep` with the given edge list
    /// (old ids). The result is acyclic whenever `self` is.
    fn rebuild(&self, keep: &[bool], edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> CausalGraph {
        let mut remap = vec![usize::MAX; self.len()];
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        for v in 0..self.len() {
            if keep[v] {
                remap[v] = names.len();
                names.push(self.names[v].clone());
                kinds.push(self.kinds[v]);
            }
        }
        let edges = edges
            .into_iter()
            .filter(|&(p, c)| keep[p] && keep[c])
            .map(|(p, c)| (remap[p], remap[c]))
            .collect();
        Self::assemble(names, kinds, edges).expect("surgery preserves acyclicity")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        self.kinds[v]
    }

    pub fn is_exogenous(&self, v: NodeId) -> bool {
        self.kinds[v] == NodeKind::Exogenous
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn node_set<I, S>(&self, names: I) -> Result<NodeSet>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        names.into_iter().map(|s| self.id(s.as_ref())).collect()
    }

    pub fn names_of<'a>(&'a self, set: impl IntoIterator<Item = &'a NodeId>) -> Vec<&'a str> {
        set.into_iter().map(|&v| self.name(v)).collect()
    }

    /// Node names sorted lexicographically.
    pub fn sorted_names(&self, set: &NodeSet) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|&v| self.names[v].clone()).collect();
        v.sort();
        v
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        0..self.len()
    }

    pub fn endogenous(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|&v| !self.is_exogenous(v))
    }

    pub fn exogenous(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|&v| self.is_exogenous(v))
    }

    /// All parents, sorted by name.
    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    /// Endogenous parents in lexicographic order.
    pub fn endo_parents(&self, v: NodeId) -> Vec<NodeId> {
        self.parents[v].iter().copied().filter(|&p| !self.is_exogenous(p)).collect()
    }

    pub fn exo_parents(&self, v: NodeId) -> Vec<NodeId> {
        self.parents[v].iter().copied().filter(|&p| self.is_exogenous(p)).collect()
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for c in 0..self.len() {
            for &p in &self.parents[c] {
                out.push((p, c));
            }
        }
        out
    }

    /// Edges as name pairs, sorted.
    pub fn named_edges(&self) -> Vec<(String, String)> {
        let mut e: Vec<_> =
            self.edges().into_iter().map(|(p, c)| (self.names[p].clone(), self.names[c].clone())).collect();
        e.sort();
        e
    }

    pub fn has_edge(&self, p: NodeId, c: NodeId) -> bool {
        self.parents[c].contains(&p)
    }

    pub fn topological_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn topo_rank(&self, v: NodeId) -> usize {
        self.rank[v]
    }

    /// Endogenous nodes with more than one exogenous parent.
    pub fn non_quasi_markovian_nodes(&self) -> Vec<String> {
        self.endogenous()
            .filter(|&v| self.exo_parents(v).len() > 1)
            .map(|v| self.names[v].clone())
            .collect()
    }

    pub fn is_quasi_markovian(&self) -> bool {
        self.non_quasi_markovian_nodes().is_empty()
    }

    pub fn require_quasi_markovian(&self) -> Result<()> {
        let bad = self.non_quasi_markovian_nodes();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::NotQuasiMarkovian(bad))
        }
    }

    /// The set together with all its ancestors.
    pub fn ancestors(&self, set: &NodeSet) -> NodeSet {
        self.closure(set, |v| &self.parents[v])
    }

    /// The set together with all its descendants.
    pub fn descendants(&self, set: &NodeSet) -> NodeSet {
        self.closure(set, |v| &self.children[v])
    }

    fn closure<'a>(&'a self, set: &NodeSet, next: impl Fn(NodeId) -> &'a [NodeId]) -> NodeSet {
        let mut seen = set.clone();
        let mut stack: Vec<NodeId> = set.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for &w in next(v) {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    pub fn c_components(&self) -> Vec<CComponent> {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], v: usize) -> usize {
            let mut r = v;
            while parent[r] != r {
                r = parent[r];
            }
            let mut v = v;
            while parent[v] != r {
                let next = parent[v];
                parent[v] = r;
                v = next;
            }
            r
        }
        for u in self.exogenous() {
            let kids = &self.children[u];
            for w in kids.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a] = b;
            }
        }
        let mut groups: HashMap<usize, Vec<NodeId>> = HashMap::new();
        for &v in &self.topo {
            if !self.is_exogenous(v) {
                let r = find(&mut parent, v);
                groups.entry(r).or_default().push(v);
            }
        }
        let mut comps: Vec<CComponent> = groups.into_values().map(|m| self.component_from_members(m)).collect();
        comps.sort_by_key(|c| self.rank[c.members[0]]);
        comps
    }

    fn component_from_members(&self, mut members: Vec<NodeId>) -> CComponent {
        members.sort_by_key(|&v| self.rank[v]);
        let exogenous = members.iter().flat_map(|&v| self.exo_parents(v)).min();
        let mut ext: NodeSet = members.iter().copied().collect();
        for &v in &members {
            ext.extend(self.endo_parents(v));
        }
        let mut extended: Vec<NodeId> = ext.into_iter().collect();
        extended.sort_by_key(|&v| self.rank[v]);
        let prefixes = members
            .iter()
            .map(|&v| extended.iter().copied().filter(|&w| self.rank[w] < self.rank[v]).collect())
            .collect();
        CComponent { members, exogenous, extended, prefixes }
    }

    /// The c-component containing the endogenous node `v`.
    pub fn component_of(&self, v: NodeId) -> CComponent {
        self.c_components().into_iter().find(|c| c.contains(v)).expect("endogenous node")
    }

    /// Deletes edges entering `remove_incoming` and edges leaving
    /// `remove_outgoing`.
    pub fn mutilate(&self, remove_incoming: &NodeSet, remove_outgoing: &NodeSet) -> CausalGraph {
        let keep = vec![true; self.len()];
        let edges = self
            .edges()
            .into_iter()
            .filter(|(p, c)| !remove_incoming.contains(c) && !remove_outgoing.contains(p));
        self.rebuild(&keep, edges)
    }

    /// d-separation of `a` and `b` given `s` (Bayes-ball reachability).
    pub fn d_separated(&self, a: &NodeSet, b: &NodeSet, s: &NodeSet) -> Result<bool> {
        for (x, y) in [(a, b), (a, s), (b, s)] {
            if let Some(&v) = x.intersection(y).next() {
                return Err(Error::OverlappingSets(self.names[v].clone()));
            }
        }
        let anc_s = self.ancestors(s);
        // (node, arrived from a child)
        let mut visited = vec![[false; 2]; self.len()];
        let mut stack: Vec<(NodeId, bool)> = a.iter().map(|&v| (v, true)).collect();
        while let Some((v, up)) = stack.pop() {
            if visited[v][up as usize] {
                continue;
            }
            visited[v][up as usize] = true;
            let observed = s.contains(&v);
            if !observed && b.contains(&v) {
                return Ok(false);
            }
            if up {
                if !observed {
                    stack.extend(self.parents[v].iter().map(|&p| (p, true)));
                    stack.extend(self.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !observed {
                    stack.extend(self.children[v].iter().map(|&c| (c, false)));
                }
                if anc_s.contains(&v) {
                    stack.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        Ok(true)
    }

    /// Marginalizes the exogenous parents of non-intervened c-components
    /// (each member gains edges from its prefix set) and cuts the edges
    /// entering intervened nodes. Exogenous nodes left without children are
    /// dropped.
    pub fn intervened_semi_marginal(&self, intervened: &NodeSet) -> Result<CausalGraph> {
        self.require_quasi_markovian()?;
        if let Some(&v) = intervened.iter().find(|&&v| self.is_exogenous(v)) {
            return Err(Error::InvalidQuery(format!("cannot intervene on exogenous `{}`", self.names[v])));
        }
        let mut edges: BTreeSet<(NodeId, NodeId)> = self.edges().into_iter().collect();
        for comp in self.c_components() {
            if comp.members.iter().any(|v| intervened.contains(v)) {
                continue;
            }
            if let Some(u) = comp.exogenous {
                edges.retain(|&(p, _)| p != u);
            }
            for (i, &v) in comp.members.iter().enumerate() {
                for &w in &comp.prefixes[i] {
                    edges.insert((w, v));
                }
            }
        }
        edges.retain(|(_, c)| !intervened.contains(c));
        let mut keep = vec![true; self.len()];
        for u in self.exogenous() {
            keep[u] = edges.iter().any(|&(p, _)| p == u);
        }
        Ok(self.rebuild(&keep, edges))
    }

    /// Induced subgraph on the ancestors of `targets`.
    pub fn ancestral_prune(&self, targets: &NodeSet) -> CausalGraph {
        let anc = self.ancestors(targets);
        let keep: Vec<bool> = (0..self.len()).map(|v| anc.contains(&v)).collect();
        self.rebuild(&keep, self.edges())
    }

    /// Induced subgraph on `set`.
    pub fn induced(&self, set: &NodeSet) -> CausalGraph {
        let keep: Vec<bool> = (0..self.len()).map(|v| set.contains(&v)).collect();
        self.rebuild(&keep, self.edges())
    }

    /// Smallest set `W` (ties broken lexicographically) such that, with
    /// `S = (W ∪ carried) \ {y, U}`, `y` is d-separated from `x` given `S`
    /// once edges leaving `x` are removed, and from `U` (the exogenous
    /// parents of `x`) given `S ∪ x`.
    pub fn find_c3_separator(&self, y: NodeId, x: &NodeSet, carried: &NodeSet) -> Result<NodeSet> {
        let ux: NodeSet = x.iter().flat_map(|&v| self.exo_parents(v)).collect();
        let mut scope = carried.clone();
        scope.insert(y);
        let mut candidates: Vec<NodeId> = self
            .ancestors(&scope)
            .into_iter()
            .filter(|v| !self.is_exogenous(*v) && *v != y && !x.contains(v) && !carried.contains(v))
            .collect();
        candidates.sort_by(|&a, &b| self.names[a].cmp(&self.names[b]));

        let cut = self.mutilate(&NodeSet::new(), x);
        let ys: NodeSet = [y].into();
        let base: NodeSet = carried.iter().copied().filter(|v| !ux.contains(v) && *v != y).collect();
        for k in 0..=candidates.len() {
            for w in candidates.iter().copied().combinations(k) {
                let mut s = base.clone();
                s.extend(w.iter().copied());
                if !cut.d_separated(&ys, x, &s)? {
                    continue;
                }
                if !ux.is_empty() {
                    let mut sx = s.clone();
                    sx.extend(x.iter().copied());
                    if !self.d_separated(&ys, &ux, &sx)? {
                        continue;
                    }
                }
                return Ok(w.into_iter().collect());
            }
        }
        Err(Error::NoSeparator { y: self.names[y].clone() })
    }

    /// Gives every confounded endogenous node a private exogenous parent, so
    /// that each c-component becomes a singleton.
    pub fn markovianized(&self) -> CausalGraph {
        let mut nodes: Vec<(String, NodeKind)> = self.endogenous().map(|v| (self.names[v].clone(), NodeKind::Endogenous)).collect();
        let mut edges: Vec<(String, String)> = Vec::new();
        for (p, c) in self.edges() {
            if !self.is_exogenous(p) {
                edges.push((self.names[p].clone(), self.names[c].clone()));
            }
        }
        let mut taken: BTreeSet<String> = self.names.iter().cloned().collect();
        for v in self.endogenous() {
            for u in self.exo_parents(v) {
                let mut name = format!("{}_{}", self.names[u], self.names[v]);
                while taken.contains(&name) {
                    name.push('_');
                }
                taken.insert(name.clone());
                nodes.push((name.clone(), NodeKind::Exogenous));
                edges.push((name, self.names[v].clone()));
            }
        }
        CausalGraph::new(nodes, edges).expect("splitting confounders keeps the graph valid")
    }

    /// Dot-style rendering; exogenous nodes are drawn dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph G {\n");
        for &v in &self.topo {
            if self.is_exogenous(v) {
                let _ = writeln!(out, "  \"{}\" [style=dashed];", self.names[v]);
            } else {
                let _ = writeln!(out, "  \"{}\";", self.names[v]);
            }
        }
        for (p, c) in self.named_edges() {
            let _ = writeln!(out, "  \"{p}\" -> \"{c}\";");
        }
        out.push('}');
        out
    }
}
