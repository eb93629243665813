use serde::{Deserialize, Serialize};

use crate::{Error, ItemId, Result};

/// A point of the lattice Z₊^m: the multiplicity of every item type.
///
/// Stored densely; `counts.len()` is the universe size `m`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemMultiset {
    counts: Vec<u32>,
}

impl ItemMultiset {
    pub fn empty(universe_size: usize) -> Self {
        Self {
            counts: vec![0; universe_size],
        }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    /// Builds a multiset from a list of item ids, counting repeats.
    pub fn from_items(universe_size: usize, items: &[ItemId]) -> Result<Self> {
        let mut x = Self::empty(universe_size);
        for &i in items {
            x.add(i)?;
        }
        Ok(x)
    }

    /// The unit vector eᵢ.
    pub fn unit(universe_size: usize, item: ItemId) -> Result<Self> {
        Self::from_items(universe_size, &[item])
    }

    pub fn universe_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Multiplicity of `item`; zero for ids beyond the universe.
    pub fn count(&self, item: ItemId) -> u32 {
        self.counts.get(item).copied().unwrap_or(0)
    }

    /// |x| = Σ counts.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Items with nonzero multiplicity, with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (ItemId, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
    }

    pub fn add(&mut self, item: ItemId) -> Result<()> {
        let universe = self.universe_size();
        let slot = self
            .counts
            .get_mut(item)
            .ok_or(Error::ItemOutOfRange { item, universe })?;
        *slot = slot
            .checked_add(1)
            .ok_or_else(|| Error::Input(format!("multiplicity of item {item} overflows")))?;
        Ok(())
    }

    /// Removes one copy of `item`; errors if none is held.
    pub fn remove(&mut self, item: ItemId) -> Result<()> {
        match self.counts.get_mut(item) {
            Some(c) if *c > 0 => {
                *c -= 1;
                Ok(())
            }
            _ => Err(Error::Input(format!("no copy of item {item} to remove"))),
        }
    }

    /// x + eᵢ.
    pub fn with_added(&self, item: ItemId) -> Result<Self> {
        let mut y = self.clone();
        y.add(item)?;
        Ok(y)
    }

    /// Coordinate-wise x ≤ y.
    pub fn le(&self, other: &Self) -> bool {
        let n = self.counts.len().max(other.counts.len());
        (0..n).all(|i| self.count(i) <= other.count(i))
    }

    /// Coordinate-wise maximum x ∨ y.
    pub fn join(&self, other: &Self) -> Self {
        let n = self.counts.len().max(other.counts.len());
        Self::from_counts((0..n).map(|i| self.count(i).max(other.count(i))).collect())
    }

    /// Coordinate-wise minimum x ∧ y.
    pub fn meet(&self, other: &Self) -> Self {
        let n = self.counts.len().max(other.counts.len());
        Self::from_counts((0..n).map(|i| self.count(i).min(other.count(i))).collect())
    }

    /// x ∧ 1: the support as a 0/1 vector.
    pub fn support(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| c > 0).collect()
    }

    /// Multiset sum T + S.
    pub fn sum(&self, other: &Self) -> Self {
        let n = self.counts.len().max(other.counts.len());
        Self::from_counts((0..n).map(|i| self.count(i) + other.count(i)).collect())
    }

    /// Errors unless every nonzero entry lies below `universe_size`.
    pub(crate) fn check_within(&self, universe_size: usize) -> Result<()> {
        match self.iter().find(|&(i, _)| i >= universe_size) {
            Some((item, _)) => Err(Error::ItemOutOfRange {
                item,
                universe: universe_size,
            }),
            None => Ok(()),
        }
    }
}

/// Every multiset over `universe_size` item types with total size at most
/// `max_size`, in lexicographic order of the count vectors.
pub fn multisets_up_to(universe_size: usize, max_size: u32) -> Vec<ItemMultiset> {
    fn rec(prefix: &mut Vec<u32>, left: usize, budget: u32, out: &mut Vec<ItemMultiset>) {
        if left == 0 {
            out.push(ItemMultiset::from_counts(prefix.clone()));
            return;
        }
        for c in 0..=budget {
            prefix.push(c);
            rec(prefix, left - 1, budget - c, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(
        &mut Vec::with_capacity(universe_size),
        universe_size,
        max_size,
        &mut out,
    );
    out
}

/// Number of multisets of size ≤ `max_size` over `universe_size` types:
/// C(universe_size + max_size, max_size).
pub fn count_multisets_up_to(universe_size: usize, max_size: u32) -> u128 {
    let n = universe_size as u128 + max_size as u128;
    let k = (max_size as u128).min(universe_size as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_out_of_range_is_an_input_error() {
        let mut x = ItemMultiset::empty(2);
        assert!(matches!(x.add(2), Err(Error::ItemOutOfRange { item: 2, universe: 2 })));
    }

    #[test]
    fn lattice_operations() {
        let x = ItemMultiset::from_counts(vec![2, 0, 1]);
        let y = ItemMultiset::from_counts(vec![1, 3, 1]);
        assert_eq!(x.join(&y).counts(), &[2, 3, 1]);
        assert_eq!(x.meet(&y).counts(), &[1, 0, 1]);
        assert!(x.meet(&y).le(&x));
        assert!(!x.le(&y));
        assert_eq!(x.total(), 3);
        assert_eq!(x.support(), vec![true, false, true]);
    }

    #[test]
    fn multiset_enumeration_matches_binomial() {
        for m in 1..5 {
            for s in 0..5 {
                assert_eq!(
                    multisets_up_to(m, s).len() as u128,
                    count_multisets_up_to(m, s),
                    "m={m} s={s}"
                );
            }
        }
        // C(6,3) = 20 multisets of size ≤ 3 over 3 types.
        assert_eq!(count_multisets_up_to(3, 3), 20);
    }
}
