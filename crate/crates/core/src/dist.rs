//! Dense joint tables over binary variables.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::graph::CausalGraph;

pub const NORMALIZATION_TOL: f64 = 1e-9;
const MAX_VARIABLES: usize = 30;

/// Joint distribution over binary variables. Entry `i` of the table is the
/// assignment whose bits, read from the most significant end, give the
/// values of the variables in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    names: Vec<String>,
    index: HashMap<String, usize>,
    probs: Vec<f64>,
}

/// A conditional probability; `zero_conditioning` is set when the
/// conditioning event has probability zero, in which case `value` is 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conditional {
    pub value: f64,
    pub zero_conditioning: bool,
}

impl EmpiricalDistribution {
    pub fn from_probs(names: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        let index = Self::index_names(&names)?;
        if probs.len() != 1usize << names.len() {
            return Err(Error::Malformed(format!(
                "{} variables need {} table entries, got {}",
                names.len(),
                1usize << names.len(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Malformed(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(EmpiricalDistribution { names, index, probs })
    }

    /// Table entries keyed by full assignments; missing assignments are 0.
    pub fn from_table<I>(names: Vec<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<bool>, f64)>,
    {
        Self::index_names(&names)?;
        let mut probs = vec![0.0; 1usize << names.len()];
        let mut seen = vec![false; probs.len()];
        for (bits, p) in entries {
            let i = Self::encode(&names, &bits)?;
            if seen[i] {
                return Err(Error::Malformed(format!("assignment {} listed twice", bits_string(&bits))));
            }
            seen[i] = true;
            probs[i] = p;
        }
        Self::from_probs(names, probs)
    }

    /// Relative frequencies of the given full assignments.
    pub fn from_samples<I>(names: Vec<String>, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<bool>>,
    {
        Self::index_names(&names)?;
        let mut counts = vec![0u64; 1usize << names.len()];
        let mut total = 0u64;
        for bits in rows {
            counts[Self::encode(&names, &bits)?] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::Malformed("sample file has no rows".into()));
        }
        let probs = counts.into_iter().map(|c| c as f64 / total as f64).collect();
        Self::from_probs(names, probs)
    }

    fn index_names(names: &[String]) -> Result<HashMap<String, usize>> {
        if names.len() > MAX_VARIABLES {
            return Err(Error::SizeLimit {
                what: "a dense joint table".into(),
                needed: format!("{} variables", names.len()),
                limit: format!("{MAX_VARIABLES}"),
            });
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Malformed(format!("variable `{n}` declared twice")));
            }
        }
        Ok(index)
    }

    fn encode(names: &[String], bits: &[bool]) -> Result<usize> {
        if bits.len() != names.len() {
            return Err(Error::Malformed(format!(
                "assignment {} has {} values for {} variables",
                bits_string(bits),
                bits.len(),
                names.len()
            )));
        }
        Ok(bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Probability of a full assignment in declaration order.
    pub fn prob(&self, bits: &[bool]) -> Result<f64> {
        Ok(self.probs[Self::encode(&self.names, bits)?])
    }

    /// Values of the variables at table index `i`.
    pub fn assignment(&self, i: usize) -> Vec<bool> {
        let n = self.names.len();
        (0..n).map(|k| (i >> (n - 1 - k)) & 1 == 1).collect()
    }

    fn masks(&self, lits: &[(usize, bool)]) -> Result<(usize, usize)> {
        let n = self.names.len();
        let (mut mask, mut val) = (0usize, 0usize);
        for &(v, b) in lits {
            if v >= n {
                return Err(Error::UnknownVariable(format!("#{v}")));
            }
            let bit = 1usize << (n - 1 - v);
            if mask & bit != 0 && ((val & bit != 0) != b) {
                return Err(Error::Malformed(format!("`{}` assigned both values", self.names[v])));
            }
            mask |= bit;
            if b {
                val |= bit;
            }
        }
        Ok((mask, val))
    }

    /// Probability of a partial assignment given by variable index.
    pub fn marginal_ids(&self, event: &[(usize, bool)]) -> Result<f64> {
        let (mask, val) = self.masks(event)?;
        if mask == 0 {
            return Ok(1.0);
        }
        Ok(self.probs.iter().enumerate().filter(|(i, _)| i & mask == val).map(|(_, p)| p).sum())
    }

    /// `P(event | given)` with variables given by index.
    pub fn conditional_ids(&self, event: &[(usize, bool)], given: &[(usize, bool)]) -> Result<Conditional> {
        let (rm, rv) = self.masks(event)?;
        let (sm, sv) = self.masks(given)?;
        if rm & sm != 0 {
            let n = self.names.len();
            let v = (0..n).find(|&v| (rm & sm) >> (n - 1 - v) & 1 == 1).unwrap();
            return Err(Error::OverlappingSets(self.names[v].clone()));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &p) in self.probs.iter().enumerate() {
            if i & sm == sv {
                den += p;
                if i & rm == rv {
                    num += p;
                }
            }
        }
        if den <= 0.0 {
            return Ok(Conditional { value: 0.0, zero_conditioning: true });
        }
        Ok(Conditional { value: num / den, zero_conditioning: false })
    }

    fn resolve(&self, lits: &[(&str, bool)]) -> Result<Vec<(usize, bool)>> {
        lits.iter().map(|&(n, b)| Ok((self.var_index(n)?, b))).collect()
    }

    pub fn marginal(&self, event: &[(&str, bool)]) -> Result<f64> {
        self.marginal_ids(&self.resolve(event)?)
    }

    pub fn conditional(&self, event: &[(&str, bool)], given: &[(&str, bool)]) -> Result<Conditional> {
        self.conditional_ids(&self.resolve(event)?, &self.resolve(given)?)
    }

    /// Checks that the variables are exactly the endogenous nodes of `g`.
    pub fn check_against(&self, g: &CausalGraph) -> Result<()> {
        let endo: BTreeSet<&str> = g.endogenous().map(|v| g.name(v)).collect();
        for n in &self.names {
            if !endo.contains(n.as_str()) {
                return Err(Error::UnknownVariable(n.clone()));
            }
        }
        if let Some(missing) = endo.iter().find(|n| !self.index.contains_key(**n)) {
            return Err(Error::Malformed(format!("distribution has no column for `{missing}`")));
        }
        Ok(())
    }

    /// Marginal table over `keep` (in the given order).
    pub fn marginalize(&self, keep: &[String]) -> Result<Self> {
        let pos: Vec<usize> = keep.iter().map(|n| self.var_index(n)).collect::<Result<_>>()?;
        let n = self.names.len();
        let mut probs = vec![0.0; 1usize << keep.len()];
        for (i, &p) in self.probs.iter().enumerate() {
            let j = pos.iter().fold(0, |acc, &v| (acc << 1) | ((i >> (n - 1 - v)) & 1));
            probs[j] += p;
        }
        let index = Self::index_names(keep)?;
        Ok(EmpiricalDistribution { names: keep.to_vec(), index, probs })
    }
}

pub fn bits_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::Malformed(format!("`{s}` is not a 0/1 assignment string"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn uniform_singleton() {
        let d = EmpiricalDistribution::from_table(names(&["X"]), [(vec![false], 0.5), (vec![true], 0.5)]).unwrap();
        assert_eq!(d.marginal(&[("X", true)]).unwrap(), 0.5);
    }

    #[test]
    fn samples_are_frequencies() {
        let rows = vec![vec![true], vec![true], vec![false], vec![true]];
        let d = EmpiricalDistribution::from_samples(names(&["X"]), rows).unwrap();
        assert_eq!(d.marginal(&[("X", true)]).unwrap(), 0.75);
    }

    #[test]
    fn normalization_is_enforced() {
        let e = EmpiricalDistribution::from_table(names(&["X"]), [(vec![false], 0.5), (vec![true], 0.4)]);
        assert!(matches!(e, Err(Error::NotNormalized(_))));
    }

    #[test]
    fn missing_entries_default_to_zero() {
        let d = EmpiricalDistribution::from_table(names(&["A", "B"]), [(vec![true, false], 1.0)]).unwrap();
        assert_eq!(d.probs(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_conditioning_is_flagged() {
        let d = EmpiricalDistribution::from_table(names(&["A", "B"]), [(vec![true, false], 1.0)]).unwrap();
        let c = d.conditional(&[("B", true)], &[("A", false)]).unwrap();
        assert_eq!(c, Conditional { value: 0.0, zero_conditioning: true });
        let c = d.conditional(&[], &[("A", true)]).unwrap();
        assert_eq!(c, Conditional { value: 1.0, zero_conditioning: false });
    }

    #[test]
    fn overlap_and_unknown_are_errors() {
        let d = EmpiricalDistribution::from_probs(names(&["A", "B"]), vec![0.25; 4]).unwrap();
        assert!(matches!(d.conditional(&[("A", true)], &[("A", true)]), Err(Error::OverlappingSets(_))));
        assert!(matches!(d.conditional(&[("C", true)], &[]), Err(Error::UnknownVariable(_))));
    }

    #[test]
    fn first_variable_is_most_significant() {
        let d = EmpiricalDistribution::from_probs(names(&["A", "B"]), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((d.marginal(&[("A", true)]).unwrap() - 0.7).abs() < 1e-15);
        assert!((d.marginal(&[("B", true)]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(d.assignment(2), vec![true, false]);
        let m = d.marginalize(&names(&["B"])).unwrap();
        assert!((m.probs()[1] - 0.6).abs() < 1e-15);
    }
}
