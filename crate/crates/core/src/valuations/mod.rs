//! Valuation oracles on item multisets.
//!
//! Three concrete kinds ([`CoverageValuation`], [`BudgetAdditiveValuation`],
//! [`TabularValuation`]) implement the [`Valuation`] trait; [`AnyValuation`]
//! is their serializable sum, tagged by `"kind"`. Set functions on {0,1}^m are
//! lifted to Z₊^m by [`cap_extension`]. The [`check`] submodule decides
//! monotonicity, diminishing returns and lattice submodularity on a box.

pub mod check;
mod multiset;

use serde::{Deserialize, Serialize};

pub use check::{
    check_property, check_property_sampled, check_property_with, CheckLimits, CheckMode, Counterexample, PropertyKind,
    PropertyWitness,
};
pub use multiset::{count_multisets_up_to, multisets_up_to, ItemMultiset};

use crate::{Error, ItemId, Result};

/// Comparison slack for real-valued oracles.
pub const REAL_TOLERANCE: f64 = 1e-9;

/// A value oracle w: Z₊^m → R.
pub trait Valuation {
    /// The universe size m.
    fn num_items(&self) -> usize;

    fn value(&self, x: &ItemMultiset) -> Result<f64>;

    /// w(x + eᵢ) − w(x).
    fn marginal_gain(&self, x: &ItemMultiset, item: ItemId) -> Result<f64> {
        let y = x.with_added(item)?;
        Ok(self.value(&y)? - self.value(x)?)
    }

    /// Slack used when comparing values of this oracle. Zero for
    /// integer-valued oracles.
    fn tolerance(&self) -> f64 {
        REAL_TOLERANCE
    }
}

impl<V: Valuation + ?Sized> Valuation for &V {
    fn num_items(&self) -> usize {
        (**self).num_items()
    }
    fn value(&self, x: &ItemMultiset) -> Result<f64> {
        (**self).value(x)
    }
    fn marginal_gain(&self, x: &ItemMultiset, item: ItemId) -> Result<f64> {
        (**self).marginal_gain(x, item)
    }
    fn tolerance(&self) -> f64 {
        (**self).tolerance()
    }
}

fn check_item(item: ItemId, universe: usize) -> Result<()> {
    if item < universe {
        Ok(())
    } else {
        Err(Error::ItemOutOfRange { item, universe })
    }
}

// Unions over universes up to this size go through fixed-width bitsets.
const BITSET_LIMIT: usize = 1024;
const BITSET_WORDS: usize = BITSET_LIMIT / 64;

/// w(S) = |⋃_{j∈S} A_j|; extra copies of an item cover nothing new.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoverageRepr", into = "CoverageRepr")]
pub struct CoverageValuation {
    universe_size: usize,
    sets: Vec<Vec<u32>>,
    masks: Option<Vec<[u64; BITSET_WORDS]>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct CoverageRepr {
    universe_size: usize,
    sets: Vec<Vec<u32>>,
}

impl TryFrom<CoverageRepr> for CoverageValuation {
    type Error = Error;
    fn try_from(r: CoverageRepr) -> Result<Self> {
        Self::new(r.universe_size, r.sets)
    }
}

impl From<CoverageValuation> for CoverageRepr {
    fn from(v: CoverageValuation) -> Self {
        Self {
            universe_size: v.universe_size,
            sets: v.sets,
        }
    }
}

impl CoverageValuation {
    /// One set per item; elements must lie in `0..universe_size`. Sets are
    /// sorted and deduplicated.
    pub fn new(universe_size: usize, sets: Vec<Vec<u32>>) -> Result<Self> {
        if universe_size == 0 {
            return Err(Error::Input("coverage universe must be nonempty".into()));
        }
        let mut sets = sets;
        for (j, set) in sets.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if let Some(&e) = set.iter().find(|&&e| e as usize >= universe_size) {
                return Err(Error::Input(format!(
                    "set of item {j} contains element {e} outside universe of size {universe_size}"
                )));
            }
        }
        let masks = (universe_size <= BITSET_LIMIT).then(|| {
            sets.iter()
                .map(|set| {
                    let mut m = [0u64; BITSET_WORDS];
                    for &e in set {
                        m[e as usize / 64] |= 1 << (e % 64);
                    }
                    m
                })
                .collect()
        });
        Ok(Self {
            universe_size,
            sets,
            masks,
        })
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn sets(&self) -> &[Vec<u32>] {
        &self.sets
    }

    /// The covered elements of `x`'s support, sorted.
    pub fn covered(&self, x: &ItemMultiset) -> Result<Vec<u32>> {
        x.check_within(self.sets.len())?;
        let mut out: Vec<u32> = x.iter().flat_map(|(j, _)| self.sets[j].iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    fn union_size(&self, x: &ItemMultiset) -> usize {
        match &self.masks {
            Some(masks) => {
                let mut acc = [0u64; BITSET_WORDS];
                let words = self.universe_size.div_ceil(64);
                for (j, _) in x.iter() {
                    for (a, m) in acc[..words].iter_mut().zip(&masks[j][..words]) {
                        *a |= m;
                    }
                }
                acc[..words].iter().map(|w| w.count_ones() as usize).sum()
            }
            None => {
                let mut all: Vec<u32> = x.iter().flat_map(|(j, _)| self.sets[j].iter().copied()).collect();
                all.sort_unstable();
                all.dedup();
                all.len()
            }
        }
    }
}

impl Valuation for CoverageValuation {
    fn num_items(&self) -> usize {
        self.sets.len()
    }

    fn value(&self, x: &ItemMultiset) -> Result<f64> {
        x.check_within(self.sets.len())?;
        Ok(self.union_size(x) as f64)
    }

    fn marginal_gain(&self, x: &ItemMultiset, item: ItemId) -> Result<f64> {
        x.check_within(self.sets.len())?;
        check_item(item, self.sets.len())?;
        if x.count(item) > 0 {
            return Ok(0.0);
        }
        let y = x.with_added(item)?;
        Ok(self.union_size(&y) as f64 - self.union_size(x) as f64)
    }

    fn tolerance(&self) -> f64 {
        0.0
    }
}

/// min{B, Σᵢ xᵢ·bᵢ}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub struct BudgetAdditiveValuation {
    bids: Vec<f64>,
    budget: f64,
}

#[derive(Clone, Serialize, Deserialize)]
struct BudgetRepr {
    bids: Vec<f64>,
    budget: f64,
}

impl TryFrom<BudgetRepr> for BudgetAdditiveValuation {
    type Error = Error;
    fn try_from(r: BudgetRepr) -> Result<Self> {
        Self::new(r.bids, r.budget)
    }
}

impl From<BudgetAdditiveValuation> for BudgetRepr {
    fn from(v: BudgetAdditiveValuation) -> Self {
        Self {
            bids: v.bids,
            budget: v.budget,
        }
    }
}

impl BudgetAdditiveValuation {
    /// Bids above the budget are lowered to the budget; this changes no value.
    pub fn new(bids: Vec<f64>, budget: f64) -> Result<Self> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::Input(format!("budget must be finite and ≥ 0, got {budget}")));
        }
        if let Some((i, b)) = bids.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::Input(format!(
                "bid for item {i} must be finite and ≥ 0, got {b}"
            )));
        }
        let bids = bids.into_iter().map(|b| b.min(budget)).collect();
        Ok(Self { bids, budget })
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    fn raw_sum(&self, x: &ItemMultiset) -> f64 {
        x.iter().map(|(i, c)| c as f64 * self.bids[i]).sum()
    }
}

impl Valuation for BudgetAdditiveValuation {
    fn num_items(&self) -> usize {
        self.bids.len()
    }

    fn value(&self, x: &ItemMultiset) -> Result<f64> {
        x.check_within(self.bids.len())?;
        Ok(self.raw_sum(x).min(self.budget))
    }

    fn marginal_gain(&self, x: &ItemMultiset, item: ItemId) -> Result<f64> {
        x.check_within(self.bids.len())?;
        check_item(item, self.bids.len())?;
        let before = self.raw_sum(x);
        let after = before + self.bids[item];
        Ok(after.min(self.budget) - before.min(self.budget))
    }
}

/// An explicit value table over the box Π [0, capᵢ], laid out in
/// lexicographic order with the first coordinate most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabularRepr", into = "TabularRepr")]
pub struct TabularValuation {
    caps: Vec<u32>,
    values: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct TabularRepr {
    caps: Vec<u32>,
    values: Vec<f64>,
}

impl TryFrom<TabularRepr> for TabularValuation {
    type Error = Error;
    fn try_from(r: TabularRepr) -> Result<Self> {
        Self::new(r.caps, r.values)
    }
}

impl From<TabularValuation> for TabularRepr {
    fn from(v: TabularValuation) -> Self {
        Self {
            caps: v.caps,
            values: v.values,
        }
    }
}

/// Number of lattice points in Π [0, capᵢ], saturating.
pub fn box_size(caps: &[u32]) -> u128 {
    caps.iter().fold(1u128, |acc, &c| acc.saturating_mul(c as u128 + 1))
}

impl TabularValuation {
    pub fn new(caps: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        let size = box_size(&caps);
        if size != values.len() as u128 {
            return Err(Error::Input(format!(
                "tabular valuation needs {size} values for box {caps:?}, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("tabular value {v} is not finite")));
        }
        Ok(Self { caps, values })
    }

    /// Tabulates `f` over the box.
    pub fn from_fn(caps: Vec<u32>, f: impl Fn(&ItemMultiset) -> f64) -> Result<Self> {
        let values = check::box_points(&caps).iter().map(f).collect();
        Self::new(caps, values)
    }

    pub fn caps(&self) -> &[u32] {
        &self.caps
    }

    fn index(&self, x: &ItemMultiset) -> Result<usize> {
        x.check_within(self.caps.len())?;
        let mut idx = 0usize;
        for (i, &cap) in self.caps.iter().enumerate() {
            let c = x.count(i);
            if c > cap {
                return Err(Error::Input(format!(
                    "point {:?} lies outside the tabulated box {:?}",
                    x.counts(),
                    self.caps
                )));
            }
            idx = idx * (cap as usize + 1) + c as usize;
        }
        Ok(idx)
    }
}

impl Valuation for TabularValuation {
    fn num_items(&self) -> usize {
        self.caps.len()
    }

    fn value(&self, x: &ItemMultiset) -> Result<f64> {
        Ok(self.values[self.index(x)?])
    }
}

/// Any of the serializable valuation kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyValuation {
    Coverage(CoverageValuation),
    BudgetAdditive(BudgetAdditiveValuation),
    Tabular(TabularValuation),
}

impl AnyValuation {
    fn inner(&self) -> &dyn Valuation {
        match self {
            AnyValuation::Coverage(v) => v,
            AnyValuation::BudgetAdditive(v) => v,
            AnyValuation::Tabular(v) => v,
        }
    }
}

impl Valuation for AnyValuation {
    fn num_items(&self) -> usize {
        self.inner().num_items()
    }
    fn value(&self, x: &ItemMultiset) -> Result<f64> {
        self.inner().value(x)
    }
    fn marginal_gain(&self, x: &ItemMultiset, item: ItemId) -> Result<f64> {
        self.inner().marginal_gain(x, item)
    }
    fn tolerance(&self) -> f64 {
        self.inner().tolerance()
    }
}

impl From<CoverageValuation> for AnyValuation {
    fn from(v: CoverageValuation) -> Self {
        AnyValuation::Coverage(v)
    }
}

impl From<BudgetAdditiveValuation> for AnyValuation {
    fn from(v: BudgetAdditiveValuation) -> Self {
        AnyValuation::BudgetAdditive(v)
    }
}

impl From<TabularValuation> for AnyValuation {
    fn from(v: TabularValuation) -> Self {
        AnyValuation::Tabular(v)
    }
}

/// A set function f: {0,1}^m → R, queried on indicator vectors.
pub trait SetFunction {
    fn num_items(&self) -> usize;
    fn eval(&self, set: &[bool]) -> f64;
}

/// Adapts a closure over indicator vectors into a [`SetFunction`].
pub struct SetFn<F> {
    num_items: usize,
    f: F,
}

impl<F: Fn(&[bool]) -> f64> SetFn<F> {
    pub fn new(num_items: usize, f: F) -> Self {
        Self { num_items, f }
    }
}

impl<F: Fn(&[bool]) -> f64> SetFunction for SetFn<F> {
    fn num_items(&self) -> usize {
        self.num_items
    }
    fn eval(&self, set: &[bool]) -> f64 {
        (self.f)(set)
    }
}

/// f̃(x) = f(x ∧ 1): extra copies of an item add nothing.
pub struct CapExtension<F> {
    inner: F,
}

pub fn cap_extension<F: SetFunction>(f: F) -> CapExtension<F> {
    CapExtension { inner: f }
}

impl<F: SetFunction> Valuation for CapExtension<F> {
    fn num_items(&self) -> usize {
        self.inner.num_items()
    }

    fn value(&self, x: &ItemMultiset) -> Result<f64> {
        let m = self.inner.num_items();
        x.check_within(m)?;
        let mut support = x.support();
        support.resize(m, false);
        Ok(self.inner.eval(&support))
    }
}

impl SetFunction for CoverageValuation {
    fn num_items(&self) -> usize {
        self.sets.len()
    }
    fn eval(&self, set: &[bool]) -> f64 {
        let counts = set.iter().map(|&b| b as u32).collect();
        self.union_size(&ItemMultiset::from_counts(counts)) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_sets() -> CoverageValuation {
        CoverageValuation::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap()
    }

    fn block_agent() -> BudgetAdditiveValuation {
        BudgetAdditiveValuation::new(vec![2.0, 2.0, 2.0], 3.0).unwrap()
    }

    #[test]
    fn coverage_value_is_union_size() {
        let v = two_sets();
        let x = ItemMultiset::from_counts(vec![1, 1]);
        assert_eq!(v.value(&x).unwrap(), 3.0);
        assert_eq!(v.value(&ItemMultiset::empty(2)).unwrap(), 0.0);
        // only the support matters
        assert_eq!(v.value(&ItemMultiset::from_counts(vec![4, 2])).unwrap(), 3.0);
    }

    #[test]
    fn coverage_gains() {
        let v = two_sets();
        let x = ItemMultiset::from_counts(vec![1, 0]);
        assert_eq!(v.marginal_gain(&x, 1).unwrap(), 1.0);
        assert_eq!(v.marginal_gain(&x, 0).unwrap(), 0.0);
    }

    #[test]
    fn coverage_large_universe_uses_merge_path() {
        let big = 5000;
        let v = CoverageValuation::new(big, vec![vec![0, 4999], vec![4999, 17], vec![3000]]).unwrap();
        assert!(v.masks.is_none());
        let x = ItemMultiset::from_counts(vec![1, 1, 1]);
        assert_eq!(v.value(&x).unwrap(), 4.0);
        assert_eq!(
            v.marginal_gain(&ItemMultiset::from_counts(vec![1, 0, 0]), 1).unwrap(),
            1.0
        );
    }

    #[test]
    fn coverage_rejects_elements_outside_universe() {
        assert!(CoverageValuation::new(2, vec![vec![0, 2]]).is_err());
    }

    #[test]
    fn out_of_range_items_are_input_errors() {
        let v = two_sets();
        let x = ItemMultiset::from_counts(vec![0, 0, 1]);
        assert!(matches!(v.value(&x), Err(Error::ItemOutOfRange { item: 2, .. })));
        assert!(v.marginal_gain(&ItemMultiset::empty(2), 5).is_err());
        assert!(block_agent()
            .value(&ItemMultiset::from_counts(vec![0, 0, 0, 1]))
            .is_err());
    }

    #[test]
    fn budget_additive_caps_at_budget() {
        let v = block_agent();
        assert_eq!(v.value(&ItemMultiset::from_counts(vec![1, 1, 0])).unwrap(), 3.0);
        assert_eq!(
            v.marginal_gain(&ItemMultiset::from_counts(vec![1, 0, 0]), 1).unwrap(),
            1.0
        );
        assert_eq!(
            v.marginal_gain(&ItemMultiset::from_counts(vec![1, 1, 0]), 2).unwrap(),
            0.0
        );
        assert_eq!(v.value(&ItemMultiset::empty(3)).unwrap(), 0.0);
    }

    #[test]
    fn budget_additive_normalizes_bids() {
        let v = BudgetAdditiveValuation::new(vec![5.0, 1.0], 3.0).unwrap();
        assert_eq!(v.bids(), &[3.0, 1.0]);
        assert!(BudgetAdditiveValuation::new(vec![-1.0], 3.0).is_err());
        assert!(BudgetAdditiveValuation::new(vec![1.0], f64::NAN).is_err());
    }

    #[test]
    fn tabular_lookup_and_box() {
        let v = TabularValuation::from_fn(vec![2, 1], |x| (x.count(0) * 10 + x.count(1)) as f64).unwrap();
        assert_eq!(v.value(&ItemMultiset::from_counts(vec![2, 1])).unwrap(), 21.0);
        assert_eq!(v.value(&ItemMultiset::from_counts(vec![1, 0])).unwrap(), 10.0);
        assert!(v.value(&ItemMultiset::from_counts(vec![3, 0])).is_err());
        assert!(TabularValuation::new(vec![1], vec![0.0]).is_err());
    }

    #[test]
    fn cap_extension_ignores_extra_copies() {
        let additive = SetFn::new(2, |s: &[bool]| {
            s.iter().zip([1.0, 2.0]).filter(|(b, _)| **b).map(|(_, w)| w).sum()
        });
        let ext = cap_extension(additive);
        assert_eq!(ext.value(&ItemMultiset::from_counts(vec![3, 0])).unwrap(), 1.0);
        assert_eq!(ext.value(&ItemMultiset::from_counts(vec![2, 2])).unwrap(), 3.0);

        let cov = two_sets();
        let ext = cap_extension(cov.clone());
        let full = ItemMultiset::from_counts(vec![1, 1]);
        let doubled = ItemMultiset::from_counts(vec![2, 2]);
        assert_eq!(ext.value(&doubled).unwrap(), cov.value(&full).unwrap());
    }

    #[test]
    fn json_is_tagged_by_kind() {
        let v: AnyValuation = block_agent().into();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"kind":"budget_additive","bids":[2.0,2.0,2.0],"budget":3.0}"#);
        let c: AnyValuation = two_sets().into();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"kind":"coverage","universe_size":3,"sets":[[0,1],[1,2]]}"#);
        let back: AnyValuation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"kind":"coverage","universe_size":1,"sets":[[3]]}"#;
        assert!(serde_json::from_str::<AnyValuation>(bad).is_err());
        let t = r#"{"kind":"tabular","caps":[1],"values":[0.0,1.5]}"#;
        let t: AnyValuation = serde_json::from_str(t).unwrap();
        assert_eq!(t.value(&ItemMultiset::from_counts(vec![1])).unwrap(), 1.5);
    }
}
