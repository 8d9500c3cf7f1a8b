//! Canonical bit layout of the exogenous variable of one c-component.
//!
//! Each member owns a block of `2^k` bits, `k` being its number of endogenous
//! parents; bit `j` of the block is the member's output when its parents, in
//! lexicographic order with the last one least significant, spell `j` in
//! binary. Blocks follow the lexicographic order of the members.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{CComponent, CausalGraph};

pub type Assignment = BTreeMap<String, bool>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitEncoding {
    exogenous: Option<String>,
    members: Vec<String>,
    parents: Vec<Vec<String>>,
    starts: Vec<usize>,
    total_bits: usize,
    lookup: HashMap<String, usize>,
}

/// A bit of the encoding, possibly negated. Blocks and offsets are 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitLiteral {
    pub block: usize,
    pub offset: usize,
    pub negated: bool,
}

impl BitLiteral {
    pub fn positive(block: usize, offset: usize) -> Self {
        BitLiteral { block, offset, negated: false }
    }

    pub fn negative(block: usize, offset: usize) -> Self {
        BitLiteral { block, offset, negated: true }
    }

    pub fn same_bit(&self, other: &BitLiteral) -> bool {
        self.block == other.block && self.offset == other.offset
    }
}

impl fmt::Display for BitLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "(1-b^{}_{})", self.block + 1, self.offset)
        } else {
            write!(f, "b^{}_{}", self.block + 1, self.offset)
        }
    }
}

/// A concrete value of the canonical exogenous variable. Position 0 is the
/// first bit of the first block and the most significant bit of the index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExoValue {
    width: usize,
    repr: Repr,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Repr {
    Word(u64),
    Wide(Box<[bool]>),
}

pub const WORD_BITS: usize = 63;

impl ExoValue {
    pub fn from_index(index: u64, width: usize) -> Result<Self> {
        if width > WORD_BITS || index >> width != 0 {
            return Err(Error::Malformed(format!("exogenous index {index} out of range for {width} bits")));
        }
        Ok(ExoValue { width, repr: Repr::Word(index) })
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let width = bits.len();
        if width <= WORD_BITS {
            let v = bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
            ExoValue { width, repr: Repr::Word(v) }
        } else {
            ExoValue { width, repr: Repr::Wide(bits.into()) }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bit(&self, pos: usize) -> bool {
        assert!(pos < self.width, "bit {pos} out of range");
        match &self.repr {
            Repr::Word(v) => (v >> (self.width - 1 - pos)) & 1 == 1,
            Repr::Wide(b) => b[pos],
        }
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.width).map(|p| self.bit(p)).collect()
    }

    /// Integer index when the value fits a machine word.
    pub fn index(&self) -> Option<u64> {
        match self.repr {
            Repr::Word(v) => Some(v),
            Repr::Wide(_) => None,
        }
    }
}

impl fmt::Display for ExoValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// The symbolic form of one column entry: the product of the positive
/// literals and of the negated ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnEntry {
    pub positive: Vec<BitLiteral>,
    pub negative: Vec<BitLiteral>,
}

impl ColumnEntry {
    pub fn literals(&self) -> impl Iterator<Item = &BitLiteral> {
        self.positive.iter().chain(&self.negative)
    }

    pub fn eval(&self, enc: &BitEncoding, u: &ExoValue) -> bool {
        self.literals().all(|l| enc.eval_literal(l, u))
    }
}

impl BitEncoding {
    pub fn build(g: &CausalGraph, component: &CComponent) -> Self {
        let mut members: Vec<String> = component.members.iter().map(|&v| g.name(v).to_string()).collect();
        members.sort();
        let parents: Vec<Vec<String>> = members
            .iter()
            .map(|m| {
                let v = g.id(m).expect("member of the graph");
                let mut ps: Vec<String> = g.endo_parents(v).into_iter().map(|p| g.name(p).to_string()).collect();
                ps.sort();
                ps
            })
            .collect();
        let exogenous = component.exogenous.map(|u| g.name(u).to_string());
        Self::from_parts(exogenous, members, parents)
    }

    /// Layout from explicit member and parent lists; members and parents are
    /// sorted here.
    pub fn from_parts(exogenous: Option<String>, members: Vec<String>, parents: Vec<Vec<String>>) -> Self {
        let mut pairs: Vec<(String, Vec<String>)> = members.into_iter().zip(parents).collect();
        pairs.sort();
        let (members, mut parents): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        for p in parents.iter_mut() {
            p.sort();
        }
        let mut starts = Vec::with_capacity(members.len());
        let mut total_bits = 0;
        for p in &parents {
            starts.push(total_bits);
            total_bits += 1usize << p.len();
        }
        let lookup = members.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        BitEncoding { exogenous, members, parents, starts, total_bits, lookup }
    }

    pub fn exogenous(&self) -> Option<&str> {
        self.exogenous.as_deref()
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn num_blocks(&self) -> usize {
        self.members.len()
    }

    pub fn parents(&self, block: usize) -> &[String] {
        &self.parents[block]
    }

    pub fn block_len(&self, block: usize) -> usize {
        1 << self.parents[block].len()
    }

    pub fn block_start(&self, block: usize) -> usize {
        self.starts[block]
    }

    pub fn block_of(&self, member: &str) -> Option<usize> {
        self.lookup.get(member).copied()
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    /// Number of exogenous values, when it fits in a `u64`.
    pub fn cardinality(&self) -> Option<u64> {
        (self.total_bits <= WORD_BITS).then(|| 1u64 << self.total_bits)
    }

    pub fn position(&self, lit: &BitLiteral) -> usize {
        self.starts[lit.block] + lit.offset
    }

    /// Block and offset of an absolute bit position.
    pub fn locate(&self, pos: usize) -> (usize, usize) {
        let block = self.starts.partition_point(|&s| s <= pos) - 1;
        (block, pos - self.starts[block])
    }

    pub fn eval_literal(&self, lit: &BitLiteral, u: &ExoValue) -> bool {
        u.bit(self.position(lit)) != lit.negated
    }

    pub fn value(&self, index: u64) -> Result<ExoValue> {
        ExoValue::from_index(index, self.total_bits)
    }

    /// Offset within the member's block selected by its parents' values.
    pub fn parent_config(&self, block: usize, value_of: impl Fn(&str) -> Option<bool>) -> Result<usize> {
        let mut j = 0;
        for p in &self.parents[block] {
            let b = value_of(p)
                .ok_or_else(|| Error::Malformed(format!("no value for `{p}`, parent of `{}`", self.members[block])))?;
            j = (j << 1) | b as usize;
        }
        Ok(j)
    }

    /// The literal that equals `[f_member(parents) = value]`.
    pub fn literal(&self, member: &str, value_of: impl Fn(&str) -> Option<bool>, value: bool) -> Result<BitLiteral> {
        let block = self.block_of(member).ok_or_else(|| Error::UnknownNode(member.to_string()))?;
        let offset = self.parent_config(block, value_of)?;
        Ok(BitLiteral { block, offset, negated: !value })
    }

    pub fn eval_mechanism(&self, u: &ExoValue, member: &str, parents: &Assignment) -> Result<bool> {
        if u.width() != self.total_bits {
            return Err(Error::Malformed(format!("value has {} bits, encoding has {}", u.width(), self.total_bits)));
        }
        let lit = self.literal(member, |p| parents.get(p).copied(), true)?;
        Ok(self.eval_literal(&lit, u))
    }

    /// `a_{u,w}` as a product of literals: one per member, selected by the
    /// member's parents in `w` and negated when the member is 0 in `w`.
    pub fn symbolic_column_entry(&self, w: &Assignment) -> Result<ColumnEntry> {
        let mut entry = ColumnEntry { positive: Vec::new(), negative: Vec::new() };
        for m in &self.members {
            let v = *w.get(m).ok_or_else(|| Error::Malformed(format!("assignment lacks `{m}`")))?;
            let lit = self.literal(m, |p| w.get(p).copied(), v)?;
            if v {
                entry.positive.push(lit);
            } else {
                entry.negative.push(lit);
            }
        }
        Ok(entry)
    }

    /// Textual layout such as `b^1_0 b^1_1 b^2_0`.
    pub fn layout(&self) -> String {
        let mut parts = Vec::with_capacity(self.total_bits);
        for b in 0..self.members.len() {
            for j in 0..self.block_len(b) {
                parts.push(format!("b^{}_{}", b + 1, j));
            }
        }
        parts.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn pipeline() -> BitEncoding {
        let g = fixtures::latency_pipeline();
        let c = g.component_of(g.id("X").unwrap());
        BitEncoding::build(&g, &c)
    }

    fn assign(pairs: &[(&str, bool)]) -> Assignment {
        pairs.iter().map(|&(n, b)| (n.to_string(), b)).collect()
    }

    #[test]
    fn pipeline_layout() {
        let e = pipeline();
        assert_eq!(e.members(), ["W", "X"]);
        assert_eq!(e.parents(0), ["X", "Z"]);
        assert_eq!(e.total_bits(), 5);
        assert_eq!(e.cardinality(), Some(32));
        assert_eq!(e.layout(), "b^1_0 b^1_1 b^1_2 b^1_3 b^2_0");
        assert_eq!(e.locate(4), (1, 0));
        assert_eq!(e.locate(2), (0, 2));
    }

    #[test]
    fn mechanisms_read_their_bit() {
        let e = pipeline();
        // u = b^1_2 only: 00100
        let u = e.value(0b00100).unwrap();
        assert!(e.eval_mechanism(&u, "W", &assign(&[("X", true), ("Z", false)])).unwrap());
        assert!(!e.eval_mechanism(&u, "W", &assign(&[("X", true), ("Z", true)])).unwrap());
        assert!(!e.eval_mechanism(&u, "X", &Assignment::new()).unwrap());
        let u = e.value(0b00001).unwrap();
        assert!(e.eval_mechanism(&u, "X", &Assignment::new()).unwrap());
        let zero = e.value(0).unwrap();
        for x in [false, true] {
            for z in [false, true] {
                assert!(!e.eval_mechanism(&zero, "W", &assign(&[("X", x), ("Z", z)])).unwrap());
            }
        }
        assert!(e.value(32).is_err());
    }

    #[test]
    fn singleton_without_parents() {
        let e = BitEncoding::from_parts(Some("U".into()), vec!["A".into()], vec![vec![]]);
        assert_eq!(e.total_bits(), 1);
        assert_eq!(e.cardinality(), Some(2));
    }

    #[test]
    fn column_entries() {
        let e = pipeline();
        let c = e.symbolic_column_entry(&assign(&[("W", false), ("X", false), ("Z", false)])).unwrap();
        assert_eq!(c.positive, vec![]);
        assert_eq!(c.negative, vec![BitLiteral::negative(0, 0), BitLiteral::negative(1, 0)]);
        let c = e.symbolic_column_entry(&assign(&[("W", true), ("X", true), ("Z", true)])).unwrap();
        assert_eq!(c.positive, vec![BitLiteral::positive(0, 3), BitLiteral::positive(1, 0)]);
        let c = e.symbolic_column_entry(&assign(&[("W", false), ("X", true), ("Z", true)])).unwrap();
        assert_eq!(c.positive, vec![BitLiteral::positive(1, 0)]);
        assert_eq!(c.negative, vec![BitLiteral::negative(0, 3)]);
        assert!(e.symbolic_column_entry(&assign(&[("W", true)])).is_err());
    }

    #[test]
    fn wide_values() {
        let bits: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let u = ExoValue::from_bits(&bits);
        assert_eq!(u.index(), None);
        assert_eq!(u.bits(), bits);
        let w = ExoValue::from_bits(&bits[..10]);
        assert_eq!(w.index(), Some(0b1001001001));
    }
}
