//! Ordered index sets `S` of matrix positions.
//!
//! The order of `pairs` is the enumeration `l -> (j1, j2)` used by every
//! downstream vector indexed by `l` (scores, bootstrap coordinates, interval
//! lists). Column indices are zero-based in code and one-based in CLI I/O.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub type Pair = (usize, usize);

#[derive(Debug, Clone)]
pub struct IndexSet {
    pairs: Vec<Pair>,
    p: usize,
    positions: OnceLock<HashMap<Pair, usize>>,
}

impl PartialEq for IndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.pairs == other.pairs
    }
}

impl IndexSet {
    /// Validates bounds, distinctness and non-emptiness.
    pub fn new(pairs: Vec<Pair>, p: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("index set is empty".into()));
        }
        let mut seen = HashMap::with_capacity(pairs.len());
        for (l, &(a, b)) in pairs.iter().enumerate() {
            if a >= p || b >= p {
                return Err(Error::InvalidDimension(format!(
                    "pair ({}, {}) out of range for p = {p}",
                    a + 1,
                    b + 1
                )));
            }
            if seen.insert((a, b), l).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate pair ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
        }
        let positions = OnceLock::new();
        let _ = positions.set(seen);
        Ok(Self { pairs, p, positions })
    }

    fn trusted(pairs: Vec<Pair>, p: usize) -> Self {
        Self {
            pairs,
            p,
            positions: OnceLock::new(),
        }
    }

    /// All `(j1, j2)` with `j1 != j2`, row-major.
    pub fn all_offdiag(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidDimension(format!(
                "off-diagonal set needs p >= 2, got {p}"
            )));
        }
        let pairs = (0..p)
            .flat_map(|a| (0..p).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect();
        Ok(Self::trusted(pairs, p))
    }

    /// `I_{h1} x I_{h2}` in row-major order, without diagonal pairs when
    /// `h1 == h2`.
    pub fn from_blocks(groups: &[Vec<usize>], h1: usize, h2: usize, p: usize) -> Result<Self> {
        for (h, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::EmptyBlock(h));
            }
        }
        let (Some(first), Some(second)) = (groups.get(h1), groups.get(h2)) else {
            return Err(Error::InvalidInput(format!(
                "block ({}, {}) out of range for {} groups",
                h1 + 1,
                h2 + 1,
                groups.len()
            )));
        };
        let mut members = vec![false; p];
        for &j in groups.iter().flatten() {
            if j >= p {
                return Err(Error::InvalidDimension(format!("column {} out of range", j + 1)));
            }
            if std::mem::replace(&mut members[j], true) {
                return Err(Error::InvalidInput(format!(
                    "column {} appears in more than one group",
                    j + 1
                )));
            }
        }
        let pairs: Vec<Pair> = first
            .iter()
            .flat_map(|&a| second.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a != b)
            .collect();
        if pairs.is_empty() {
            return Err(Error::EmptyBlock(h1));
        }
        Ok(Self::trusted(pairs, p))
    }

    /// Pairs `(j1, j2)` with `|j1 - j2| > k`, row-major.
    pub fn band_outside(p: usize, k: usize) -> Result<Self> {
        let pairs: Vec<Pair> = (0..p)
            .flat_map(|a| (0..p).filter(move |&b| a.abs_diff(b) > k).map(move |b| (a, b)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no pairs with |j1 - j2| > {k} for p = {p}"
            )));
        }
        Ok(Self::trusted(pairs, p))
    }

    /// Off-diagonal pairs for which `keep(j1, j2)` holds, row-major.
    pub fn from_predicate(p: usize, mut keep: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut pairs = Vec::new();
        for a in 0..p {
            for b in 0..p {
                if a != b && keep(a, b) {
                    pairs.push((a, b));
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::InvalidInput("predicate selects no pairs".into()));
        }
        Ok(Self::trusted(pairs, p))
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn r(&self) -> usize {
        self.pairs.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, l: usize) -> Pair {
        self.pairs[l]
    }

    /// Inverse of the enumeration.
    pub fn position_of(&self, pair: Pair) -> Option<usize> {
        self.positions
            .get_or_init(|| self.pairs.iter().enumerate().map(|(l, &pr)| (pr, l)).collect())
            .get(&pair)
            .copied()
    }
}
