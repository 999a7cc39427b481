//! Index algebra for factored finite sets `Z = Z_1 × … × Z_k`.
//!
//! Factor values are 0-based integers. Factor *indices* are 0-based inside
//! [`IndexSubset`] but are always printed and parsed 1-based, so that `{1,2}`
//! in a report names the first two factors.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cardinalities of the factors of a finite product set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FactoredShape {
    cards: Vec<usize>,
}

impl FactoredShape {
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if let Some(pos) = cards.iter().position(|&c| c == 0) {
            return Err(Error::InvalidShape(format!(
                "factor {} has cardinality 0",
                pos + 1
            )));
        }
        if cards.len() > IndexSubset::MAX_FACTORS {
            return Err(Error::InvalidShape(format!(
                "{} factors exceeds the supported maximum of {}",
                cards.len(),
                IndexSubset::MAX_FACTORS
            )));
        }
        Ok(Self { cards })
    }

    /// The empty product, which has exactly one (empty) tuple.
    pub fn scalar() -> Self {
        Self { cards: Vec::new() }
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Number of factors `k`.
    pub fn k(&self) -> usize {
        self.cards.len()
    }

    /// Total number of tuples, `∏ |Z_i|`.
    pub fn size(&self) -> usize {
        self.cards.iter().product()
    }

    /// Row-major strides: the last factor varies fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.cards.len()];
        for i in (0..self.cards.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.cards[i + 1];
        }
        strides
    }

    pub fn index_of(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.cards.len() || tuple.iter().zip(&self.cards).any(|(&z, &c)| z >= c) {
            return Err(Error::InvalidTuple {
                tuple: tuple.to_vec(),
                shape: self.cards.clone(),
            });
        }
        Ok(tuple
            .iter()
            .zip(&self.cards)
            .fold(0, |acc, (&z, &c)| acc * c + z))
    }

    pub fn tuple_of(&self, mut index: usize) -> Vec<usize> {
        let mut tuple = vec![0; self.cards.len()];
        for i in (0..self.cards.len()).rev() {
            tuple[i] = index % self.cards[i];
            index /= self.cards[i];
        }
        tuple
    }

    pub fn tuples(&self) -> Tuples<'_> {
        Tuples {
            shape: self,
            next: Some(vec![0; self.cards.len()]),
        }
    }

    /// The shape `Z_I` of the factors selected by `subset`, in index order.
    pub fn restrict(&self, subset: IndexSubset) -> Result<Self> {
        self.check_subset(subset)?;
        Ok(Self {
            cards: subset.iter().map(|i| self.cards[i]).collect(),
        })
    }

    /// `|Z_I|`.
    pub fn subset_size(&self, subset: IndexSubset) -> usize {
        subset.iter().map(|i| self.cards[i]).product()
    }

    /// The product shape `self × other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut cards = self.cards.clone();
        cards.extend_from_slice(&other.cards);
        Self::new(cards)
    }

    pub fn check_subset(&self, subset: IndexSubset) -> Result<()> {
        if subset.is_subset_of(IndexSubset::full(self.k())) {
            Ok(())
        } else {
            Err(Error::InvalidSubset {
                subset,
                k: self.k(),
            })
        }
    }

    /// For every flat index of `self`, the flat index of its projection onto
    /// `Z_I` (the coordinates in `subset`, in order).
    pub(crate) fn projection_indices(&self, subset: IndexSubset) -> Vec<usize> {
        let mut sub_strides = vec![0; self.k()];
        let mut stride = 1;
        for i in (0..self.k()).rev() {
            if subset.contains(i) {
                sub_strides[i] = stride;
                stride *= self.cards[i];
            }
        }
        let mut out = Vec::with_capacity(self.size());
        let mut tuple = vec![0; self.k()];
        let mut current = 0usize;
        for _ in 0..self.size() {
            out.push(current);
            // odometer increment, keeping `current` in sync
            for i in (0..self.k()).rev() {
                tuple[i] += 1;
                current += sub_strides[i];
                if tuple[i] < self.cards[i] {
                    break;
                }
                current -= sub_strides[i] * self.cards[i];
                tuple[i] = 0;
            }
        }
        out
    }
}

impl TryFrom<Vec<usize>> for FactoredShape {
    type Error = Error;

    fn try_from(cards: Vec<usize>) -> Result<Self> {
        Self::new(cards)
    }
}

impl From<FactoredShape> for Vec<usize> {
    fn from(shape: FactoredShape) -> Self {
        shape.cards
    }
}

/// Lexicographic iterator over the tuples of a shape.
pub struct Tuples<'a> {
    shape: &'a FactoredShape,
    next: Option<Vec<usize>>,
}

impl Iterator for Tuples<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried_out = true;
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.shape.cards[i] {
                carried_out = false;
                break;
            }
            succ[i] = 0;
        }
        if !carried_out {
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// All tuples of `shape` in lexicographic order.
pub fn enumerate_tuples(shape: &FactoredShape) -> Vec<Vec<usize>> {
    shape.tuples().collect()
}

/// A set of factor indices, stored as a bitmask over 0-based positions.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct IndexSubset(u64);

impl IndexSubset {
    pub const MAX_FACTORS: usize = 64;

    pub const EMPTY: Self = Self(0);

    pub fn from_mask(mask: u64) -> Self {
        Self(mask)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    /// `[k]`, all of the first `k` factors.
    pub fn full(k: usize) -> Self {
        if k >= 64 {
            Self(u64::MAX)
        } else {
            Self((1u64 << k) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        Self(1 << i)
    }

    /// From 0-based indices.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        Self(indices.into_iter().fold(0, |m, i| m | (1 << i)))
    }

    /// From 1-based indices drawn from `[k]`.
    pub fn from_one_based(indices: &[usize], k: usize) -> Result<Self> {
        let mut mask = 0u64;
        for &i in indices {
            if i == 0 || i > k {
                return Err(Error::InvalidArgument(format!(
                    "factor index {i} is outside [1, {k}]"
                )));
            }
            mask |= 1 << (i - 1);
        }
        Ok(Self(mask))
    }

    /// Parses `"1,3"`, `"{1,3}"`, `""`, `"{}"` or `"∅"` as 1-based members.
    pub fn parse_one_based(text: &str, k: usize) -> Result<Self> {
        let trimmed = text
            .trim()
            .trim_start_matches('{')
            .trim_end_matches('}')
            .trim();
        if trimmed.is_empty() || trimmed == "∅" {
            return Ok(Self::EMPTY);
        }
        let indices = trimmed
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad factor index '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_based(&indices, k)
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 & (1 << i) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        Self(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        Self(self.0 & !other.0)
    }

    pub fn intersects(self, other: Self) -> bool {
        self.0 & other.0 != 0
    }

    /// Members as 0-based indices, ascending.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..64).filter(move |&i| mask & (1 << i) != 0)
    }

    /// Members as 1-based indices, ascending.
    pub fn one_based(self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }

    /// Every subset `J ⊆ self`, in increasing mask order (starting with ∅).
    pub fn subsets(self) -> Vec<Self> {
        let mut out = Vec::with_capacity(1 << self.len());
        let mut sub = 0u64;
        loop {
            out.push(Self(sub));
            if sub == self.0 {
                break;
            }
            sub = (sub.wrapping_sub(self.0)) & self.0;
        }
        out
    }

    /// Shifts every member up by `offset` positions.
    pub fn shifted(self, offset: usize) -> Self {
        if self.0 == 0 {
            self
        } else {
            Self(self.0 << offset)
        }
    }

    /// Splits a subset of `[m] ⊔ [n]` back into its `[m]` and `[n]` parts.
    pub fn split(self, m: usize) -> (Self, Self) {
        let low = self.intersection(Self::full(m));
        let high = if m >= 64 { 0 } else { self.0 >> m };
        (low, Self(high))
    }
}

impl fmt::Display for IndexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "∅");
        }
        let members: Vec<String> = self.one_based().iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", members.join(","))
    }
}

impl fmt::Debug for IndexSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for IndexSubset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for IndexSubset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let members = Vec::<usize>::deserialize(d)?;
        if members.iter().any(|&i| i == 0 || i > Self::MAX_FACTORS) {
            return Err(serde::de::Error::custom("factor indices are 1-based"));
        }
        Ok(Self::from_indices(members.into_iter().map(|i| i - 1)))
    }
}

/// All `2^k` subsets of `[k]`, ordered by size and then lexicographically.
pub fn all_subsets(k: usize) -> Vec<IndexSubset> {
    assert!(k < 64, "cannot enumerate the power set of {k} factors");
    let mut subsets: Vec<IndexSubset> = (0..1u64 << k).map(IndexSubset).collect();
    subsets.sort_by_cached_key(|s| (s.len(), s.iter().collect::<Vec<_>>()));
    subsets
}

/// `I ⊔ J` as a subset of `[m] ⊔ [n] ≅ [m+n]`.
pub fn disjoint_union(
    input: IndexSubset,
    m: usize,
    output: IndexSubset,
    n: usize,
) -> Result<IndexSubset> {
    if !input.is_subset_of(IndexSubset::full(m)) {
        return Err(Error::InvalidSubset {
            subset: input,
            k: m,
        });
    }
    if !output.is_subset_of(IndexSubset::full(n)) {
        return Err(Error::InvalidSubset {
            subset: output,
            k: n,
        });
    }
    if m + n > IndexSubset::MAX_FACTORS {
        return Err(Error::InvalidArgument(format!(
            "{} merged factors exceeds {}",
            m + n,
            IndexSubset::MAX_FACTORS
        )));
    }
    Ok(input.union(output.shifted(m)))
}

/// A partition `Z_A, Z_B, Z_C` of the merged variables `X_1..X_m, Y_1..Y_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariablePartition {
    pub a: IndexSubset,
    pub b: IndexSubset,
    pub c: IndexSubset,
    pub m: usize,
    pub n: usize,
}

impl VariablePartition {
    pub fn new(a: IndexSubset, b: IndexSubset, c: IndexSubset, m: usize, n: usize) -> Result<Self> {
        let all = IndexSubset::full(m + n);
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidPartition("A and B must be nonempty".into()));
        }
        if a.intersects(b) || a.intersects(c) || b.intersects(c) {
            return Err(Error::InvalidPartition("blocks must be disjoint".into()));
        }
        if a.union(b).union(c) != all {
            return Err(Error::InvalidPartition(format!(
                "blocks must cover all {} variables",
                m + n
            )));
        }
        Ok(Self { a, b, c, m, n })
    }

    /// Builds a partition from `A` and `B`; `C` is everything else.
    pub fn with_rest(a: IndexSubset, b: IndexSubset, m: usize, n: usize) -> Result<Self> {
        let c = IndexSubset::full(m + n).difference(a.union(b));
        Self::new(a, b, c, m, n)
    }

    /// Parses `"A=x1,x2;B=y1;C=y2"`. Variables are `x1..xm`, `y1..yn`, or
    /// any name in `aliases` (mapping to a 0-based merged index). `C` may be
    /// omitted, in which case it is the complement of `A ∪ B`.
    pub fn parse(text: &str, m: usize, n: usize, aliases: &HashMap<String, usize>) -> Result<Self> {
        let mut blocks: [Option<IndexSubset>; 3] = [None; 3];
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, vars) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidPartition(format!("missing '=' in '{part}'")))?;
            let slot = match name.trim() {
                "A" | "a" => 0,
                "B" | "b" => 1,
                "C" | "c" => 2,
                other => return Err(Error::InvalidPartition(format!("unknown block '{other}'"))),
            };
            if blocks[slot].is_some() {
                return Err(Error::InvalidPartition(format!("block '{name}' repeated")));
            }
            let mut set = IndexSubset::EMPTY;
            for var in vars.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                let idx = resolve_variable(var, m, n, aliases)?;
                if set.contains(idx) {
                    return Err(Error::InvalidPartition(format!(
                        "variable '{var}' repeated"
                    )));
                }
                set = set.union(IndexSubset::singleton(idx));
            }
            blocks[slot] = Some(set);
        }
        let a = blocks[0].ok_or_else(|| Error::InvalidPartition("missing block A".into()))?;
        let b = blocks[1].ok_or_else(|| Error::InvalidPartition("missing block B".into()))?;
        match blocks[2] {
            Some(c) => Self::new(a, b, c, m, n),
            None => Self::with_rest(a, b, m, n),
        }
    }

    /// Whether the pair `(I, J)` must have vanishing pairing for
    /// `A ⊥ B |_X C`: `J ≠ ∅` and `I ⊔ J` meets both `A` and `B`.
    pub fn is_forbidden(&self, input: IndexSubset, output: IndexSubset) -> bool {
        if output.is_empty() {
            return false;
        }
        let merged = input.union(output.shifted(self.m));
        merged.intersects(self.a) && merged.intersects(self.b)
    }

    /// All forbidden `(I, J)` pairs, enumerated exhaustively.
    pub fn forbidden_pairs(&self) -> Vec<(IndexSubset, IndexSubset)> {
        let mut out = Vec::new();
        for input in all_subsets(self.m) {
            for output in all_subsets(self.n) {
                if self.is_forbidden(input, output) {
                    out.push((input, output));
                }
            }
        }
        out
    }

    /// The family `{A∪C, B∪C, [m]}` whose hierarchical model is exactly the
    /// set of log-conditionals satisfying this relation.
    pub fn support_family(&self) -> Vec<IndexSubset> {
        vec![
            self.a.union(self.c),
            self.b.union(self.c),
            IndexSubset::full(self.m),
        ]
    }

    /// Renders with `x1..xm`/`y1..yn` names.
    pub fn describe(&self) -> String {
        let block = |s: IndexSubset| {
            s.iter()
                .map(|i| variable_name(i, self.m))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "A={};B={};C={}",
            block(self.a),
            block(self.b),
            block(self.c)
        )
    }
}

/// `x1..xm` for inputs, `y1..yn` for outputs, given a 0-based merged index.
pub fn variable_name(merged: usize, m: usize) -> String {
    if merged < m {
        format!("x{}", merged + 1)
    } else {
        format!("y{}", merged - m + 1)
    }
}

fn resolve_variable(
    var: &str,
    m: usize,
    n: usize,
    aliases: &HashMap<String, usize>,
) -> Result<usize> {
    if let Some(&idx) = aliases.get(var) {
        return Ok(idx);
    }
    let parsed = var
        .strip_prefix('x')
        .map(|r| (r, 0, m))
        .or_else(|| var.strip_prefix('y').map(|r| (r, m, n)));
    if let Some((rest, offset, count)) = parsed {
        if let Ok(i) = rest.parse::<usize>() {
            if i >= 1 && i <= count {
                return Ok(offset + i - 1);
            }
        }
    }
    Err(Error::InvalidPartition(format!("unknown variable '{var}'")))
}

/// A partition `I, J, K` of one side's factors `[k]` (used for the
/// output-only and input-only specialisations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidePartition {
    pub first: IndexSubset,
    pub second: IndexSubset,
    pub rest: IndexSubset,
    pub k: usize,
}

impl SidePartition {
    pub fn new(
        first: IndexSubset,
        second: IndexSubset,
        rest: IndexSubset,
        k: usize,
    ) -> Result<Self> {
        if first.is_empty() || second.is_empty() {
            return Err(Error::InvalidPartition("I and J must be nonempty".into()));
        }
        if first.intersects(second) || first.intersects(rest) || second.intersects(rest) {
            return Err(Error::InvalidPartition("blocks must be disjoint".into()));
        }
        if first.union(second).union(rest) != IndexSubset::full(k) {
            return Err(Error::InvalidPartition(format!("blocks must cover [{k}]")));
        }
        Ok(Self {
            first,
            second,
            rest,
            k,
        })
    }

    /// `H ∩ I ≠ ∅` and `H ∩ J ≠ ∅`.
    pub fn is_forbidden(&self, h: IndexSubset) -> bool {
        h.intersects(self.first) && h.intersects(self.second)
    }

    pub fn forbidden(&self) -> Vec<IndexSubset> {
        all_subsets(self.k)
            .into_iter()
            .filter(|&h| self.is_forbidden(h))
            .collect()
    }
}
