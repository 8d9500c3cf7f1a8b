//! Queries: `P(Y=1 | do(X=1))` and `ATE(Y=1 ; X)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Probability,
    Ate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub target: Vec<(String, bool)>,
    /// For an ATE this holds the treatment with value `true`.
    pub intervention: Vec<(String, bool)>,
}

fn owned(lits: &[(&str, bool)]) -> Vec<(String, bool)> {
    lits.iter().map(|(n, b)| (n.to_string(), *b)).collect()
}

impl Query {
    pub fn probability(target: &[(&str, bool)], intervention: &[(&str, bool)]) -> Self {
        Query { kind: QueryKind::Probability, target: owned(target), intervention: owned(intervention) }
    }

    pub fn ate(target: &[(&str, bool)], treatment: &str) -> Self {
        Query { kind: QueryKind::Ate, target: owned(target), intervention: vec![(treatment.to_string(), true)] }
    }

    /// The query as a weighted sum of interventional probabilities.
    pub fn parts(&self) -> Vec<(f64, Vec<(String, bool)>, Vec<(String, bool)>)> {
        match self.kind {
            QueryKind::Probability => vec![(1.0, self.target.clone(), self.intervention.clone())],
            QueryKind::Ate => {
                let off: Vec<(String, bool)> = self.intervention.iter().map(|(n, _)| (n.clone(), false)).collect();
                vec![(1.0, self.target.clone(), self.intervention.clone()), (-1.0, self.target.clone(), off)]
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = |why: &str| Error::InvalidQuery(format!("`{text}`: {why}"));
        let q = if let Some(body) = s.strip_prefix("ATE(").and_then(|r| r.strip_suffix(')')) {
            let (t, x) = body.split_once(';').ok_or_else(|| bad("expected `ATE(target ; treatment)`"))?;
            check_name(x).map_err(|_| bad("invalid treatment name"))?;
            Query { kind: QueryKind::Ate, target: literals(t).map_err(|e| bad(&e))?, intervention: vec![(x.to_string(), true)] }
        } else if let Some(body) = s.strip_prefix("P(").and_then(|r| r.strip_suffix(')')) {
            match body.split_once('|') {
                Some((t, rest)) => {
                    let inner = rest
                        .strip_prefix("do(")
                        .and_then(|r| r.strip_suffix(')'))
                        .ok_or_else(|| bad("expected `do(...)` after `|`"))?;
                    Query {
                        kind: QueryKind::Probability,
                        target: literals(t).map_err(|e| bad(&e))?,
                        intervention: literals(inner).map_err(|e| bad(&e))?,
                    }
                }
                None => Query { kind: QueryKind::Probability, target: literals(body).map_err(|e| bad(&e))?, intervention: vec![] },
            }
        } else {
            return Err(bad("expected `P(...)` or `ATE(...)`"));
        };
        if q.target.is_empty() {
            return Err(bad("empty target"));
        }
        for (n, _) in &q.target {
            if q.intervention.iter().any(|(m, _)| m == n) {
                return Err(bad(&format!("`{n}` is both a target and intervened")));
            }
        }
        Ok(q)
    }
}

fn check_name(n: &str) -> std::result::Result<(), String> {
    if n.is_empty() || !n.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') {
        return Err(format!("invalid variable name `{n}`"));
    }
    Ok(())
}

fn literals(s: &str) -> std::result::Result<Vec<(String, bool)>, String> {
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|lit| {
            let (n, v) = lit.split_once('=').ok_or_else(|| format!("expected `name=value`, got `{lit}`"))?;
            check_name(n)?;
            let b = match v {
                "0" => false,
                "1" => true,
                _ => return Err(format!("value of `{n}` must be 0 or 1")),
            };
            Ok((n.to_string(), b))
        })
        .collect()
}

fn show(lits: &[(String, bool)]) -> String {
    lits.iter().map(|(n, b)| format!("{n}={}", *b as u8)).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            QueryKind::Ate => write!(f, "ATE({} ; {})", show(&self.target), self.intervention[0].0),
            QueryKind::Probability if self.intervention.is_empty() => write!(f, "P({})", show(&self.target)),
            QueryKind::Probability => write!(f, "P({} | do({}))", show(&self.target), show(&self.intervention)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_probability_queries() {
        let q = Query::parse(" P( Y=1 , Z=0 |do( X=1 ) ) ").unwrap();
        assert_eq!(q, Query::probability(&[("Y", true), ("Z", false)], &[("X", true)]));
        assert_eq!(q.to_string(), "P(Y=1, Z=0 | do(X=1))");
        assert_eq!(Query::parse(&q.to_string()).unwrap(), q);
        assert_eq!(Query::parse("P(Y=0)").unwrap().intervention, vec![]);
    }

    #[test]
    fn parses_ate() {
        let q = Query::parse("ATE(Y=1 ; X)").unwrap();
        assert_eq!(q, Query::ate(&[("Y", true)], "X"));
        let parts = q.parts();
        assert_eq!(parts[1].0, -1.0);
        assert_eq!(parts[1].2, vec![("X".to_string(), false)]);
        assert_eq!(Query::parse(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "P()", "P(Y=2|do(X=1))", "Q(Y=1)", "P(Y=1|X=1)", "ATE(Y=1)", "P(Y=1|do(Y=0))", "P(Y 1)"] {
            assert!(Query::parse(s).is_err(), "{s}");
        }
    }
}
