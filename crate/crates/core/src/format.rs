//! File formats: model documents, distribution files and ground-truth
//! bundles.
//!
//! A model is JSON:
//!
//! ```text
//! {"nodes": [{"name": "X", "kind": "endogenous"}, {"name": "U1", "kind": "exogenous"}],
//!  "edges": [["U1", "X"]]}
//! ```
//!
//! A distribution file names its variables, then gives either a joint table
//! or one sample per line. Assignment strings list values in the declared
//! variable order. Blank lines and `#` comments are ignored.
//!
//! ```text
//! variables X Y
//! table
//! 00 0.25
//! 11 0.75
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canon::ExoValue;
use crate::dist::{bits_string, parse_bits, EmpiricalDistribution};
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, NodeKind};
use crate::oracle::FullScm;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(String, String)>,
}

impl ModelFile {
    pub fn from_graph(g: &CausalGraph) -> Self {
        let nodes = g.nodes().map(|v| NodeSpec { name: g.name(v).to_string(), kind: g.kind(v) }).collect();
        ModelFile { nodes, edges: g.named_edges() }
    }

    /// The graph, rejected unless it is quasi-Markovian.
    pub fn to_graph(&self) -> Result<CausalGraph> {
        let g = CausalGraph::new(self.nodes.iter().map(|n| (n.name.clone(), n.kind)), self.edges.iter().cloned())?;
        g.require_quasi_markovian()?;
        Ok(g)
    }
}

pub fn parse_model(text: &str) -> Result<CausalGraph> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Malformed(format!("model file: {e}")))?;
    file.to_graph()
}

pub fn write_model(g: &CausalGraph) -> String {
    serde_json::to_string_pretty(&ModelFile::from_graph(g)).expect("model serializes")
}

pub fn load_model(path: &Path) -> Result<CausalGraph> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub fn parse_distribution(text: &str) -> Result<EmpiricalDistribution> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .enumerate()
        .filter(|(_, l)| !l.is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Malformed("empty distribution file".into()))?;
    let names: Vec<String> = match header.split_whitespace().collect::<Vec<_>>().split_first() {
        Some((&"variables", rest)) if !rest.is_empty() => rest.iter().map(|s| s.to_string()).collect(),
        _ => return Err(Error::Malformed("distribution file must start with `variables <names>`".into())),
    };
    let at = |i: usize, e: Error| Error::Malformed(format!("line {}: {e}", i + 1));
    match lines.next() {
        Some((_, "table")) => {
            let mut entries = Vec::new();
            for (i, line) in lines {
                let mut parts = line.split_whitespace();
                let (Some(bits), Some(p), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(at(i, Error::Malformed("expected `<assignment> <probability>`".into())));
                };
                let p: f64 = p.parse().map_err(|_| at(i, Error::Malformed(format!("bad probability `{p}`"))))?;
                entries.push((parse_bits(bits).map_err(|e| at(i, e))?, p));
            }
            EmpiricalDistribution::from_table(names, entries)
        }
        Some((_, "samples")) => {
            let rows = lines.map(|(i, line)| parse_bits(line).map_err(|e| at(i, e))).collect::<Result<Vec<_>>>()?;
            EmpiricalDistribution::from_samples(names, rows)
        }
        Some((i, other)) => Err(at(i, Error::Malformed(format!("expected `table` or `samples`, got `{other}`")))),
        None => Err(Error::Malformed("distribution file has no `table` or `samples` section".into())),
    }
}

/// The table form. Zero entries are left out; probabilities are printed with
/// enough digits to read back exactly.
pub fn write_table(d: &EmpiricalDistribution) -> String {
    let mut s = format!("variables {}\ntable\n", d.names().join(" "));
    for (i, &p) in d.probs().iter().enumerate() {
        if p != 0.0 {
            let _ = writeln!(s, "{} {p:?}", bits_string(&d.assignment(i)));
        }
    }
    s
}

pub fn load_distribution(path: &Path) -> Result<EmpiricalDistribution> {
    parse_distribution(&std::fs::read_to_string(path)?)
}

/// Exogenous distribution of one c-component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentTruth {
    pub exogenous: Option<String>,
    pub members: Vec<String>,
    /// `(u as a bit string, Pr(u))`.
    pub support: Vec<(String, f64)>,
}

/// What a generated instance was built from, and the true query value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub degenerate: bool,
    pub query: String,
    pub value: f64,
    pub components: Vec<ComponentTruth>,
}

impl Truth {
    pub fn new(scm: &FullScm, seed: u64, degenerate: bool, query: String, value: f64) -> Self {
        let g = scm.graph();
        let components = scm
            .components()
            .iter()
            .map(|c| ComponentTruth {
                exogenous: c.component.exogenous.map(|u| g.name(u).to_string()),
                members: c.component.members.iter().map(|&m| g.name(m).to_string()).collect(),
                support: c.support.iter().map(|(u, p)| (u.to_string(), *p)).collect(),
            })
            .collect();
        Truth { seed, degenerate, query, value, components }
    }

    /// Rebuilds the model over `g`.
    pub fn to_scm(&self, g: &CausalGraph) -> Result<FullScm> {
        let supports = self
            .components
            .iter()
            .map(|c| {
                c.support
                    .iter()
                    .map(|(u, p)| Ok((ExoValue::from_bits(&parse_bits(u)?), *p)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        FullScm::new(g.clone(), supports)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn model_round_trip() {
        for (_, g) in fixtures::named() {
            assert_eq!(parse_model(&write_model(&g)).unwrap(), g);
        }
    }

    #[test]
    fn non_quasi_markovian_model_is_rejected() {
        let text = r#"{"nodes":[{"name":"X","kind":"endogenous"},{"name":"U1","kind":"exogenous"},
            {"name":"U2","kind":"exogenous"}],"edges":[["U1","X"],["U2","X"]]}"#;
        match parse_model(text) {
            Err(Error::NotQuasiMarkovian(v)) => assert_eq!(v, vec!["X".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_and_samples() {
        let d = parse_distribution("variables X\ntable\n0 0.5\n1 0.5\n").unwrap();
        assert_eq!(d.marginal(&[("X", true)]).unwrap(), 0.5);
        let d = parse_distribution("# data\nvariables X\nsamples\n1\n1\n\n1\n0\n").unwrap();
        assert_eq!(d.marginal(&[("X", true)]).unwrap(), 0.75);
        assert!(matches!(parse_distribution("variables X\ntable\n0 0.4\n1 0.5\n"), Err(Error::NotNormalized(_))));
        assert!(parse_distribution("variables X\ntable\n2 1.0\n").is_err());
        assert!(parse_distribution("table\n0 1\n").is_err());
    }

    #[test]
    fn table_round_trip_is_exact() {
        let d = EmpiricalDistribution::from_probs(
            vec!["A".into(), "B".into()],
            vec![0.1, 0.2, 0.30000000000000004, 0.39999999999999997],
        )
        .unwrap();
        assert_eq!(parse_distribution(&write_table(&d)).unwrap(), d);
    }
}
