//! Exhaustive (and, on request, sampled) checks of lattice properties.
//!
//! Every check is phrased as an inequality `lhs ≤ rhs`:
//!
//! | property | lhs | rhs | pairs |
//! |---|---|---|---|
//! | monotone | f(x) | f(y) | x ≤ y |
//! | diminishing returns | f(y+eᵢ) − f(y) | f(x+eᵢ) − f(x) | x ≤ y, y+eᵢ in box |
//! | lattice submodular | f(x∨y) + f(x∧y) | f(x) + f(y) | all x, y |
//!
//! Points are visited in lexicographic order (first coordinate most
//! significant), pairs as (outer x, inner y), then items in increasing id;
//! the first violation found is returned.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{box_size, ItemMultiset, Valuation};
use crate::{Error, ItemId, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyKind {
    Monotone,
    DiminishingReturns,
    LatticeSubmodular,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 3] = [
        PropertyKind::Monotone,
        PropertyKind::DiminishingReturns,
        PropertyKind::LatticeSubmodular,
    ];

    pub fn inequality(self) -> &'static str {
        match self {
            PropertyKind::Monotone => "f(x) <= f(y) for x <= y",
            PropertyKind::DiminishingReturns => "f(y+e_i) - f(y) <= f(x+e_i) - f(x) for x <= y",
            PropertyKind::LatticeSubmodular => "f(x|y) + f(x&y) <= f(x) + f(y)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum CheckMode {
    /// Every required pair was examined; `holds` is a decision.
    Exhaustive,
    /// Random pairs only; `holds = true` is probabilistic evidence.
    Sampled { samples: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: ItemMultiset,
    pub y: ItemMultiset,
    pub item: Option<ItemId>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyWitness {
    pub property: PropertyKind,
    pub holds: bool,
    pub mode: CheckMode,
    /// Number of inequalities evaluated.
    pub comparisons: u64,
    pub tolerance: f64,
    pub counterexample: Option<Counterexample>,
}

impl PropertyWitness {
    /// Re-evaluates the cited inequality at the counterexample. `Ok(true)`
    /// when the violation reproduces; `Ok(false)` when there is nothing to
    /// reproduce or it does not.
    pub fn reverify<V: Valuation + ?Sized>(&self, v: &V) -> Result<bool> {
        let Some(ce) = &self.counterexample else {
            return Ok(false);
        };
        let (lhs, rhs) = sides(v, self.property, &ce.x, &ce.y, ce.item)?;
        Ok(lhs > rhs + self.tolerance)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CheckLimits {
    /// Largest box (in lattice points) enumerated exhaustively.
    pub max_points: u128,
}

impl Default for CheckLimits {
    fn default() -> Self {
        Self { max_points: 4096 }
    }
}

/// All points of Π [0, capᵢ] in lexicographic order.
pub(crate) fn box_points(caps: &[u32]) -> Vec<ItemMultiset> {
    let mut out = vec![ItemMultiset::from_counts(Vec::with_capacity(caps.len()))];
    for &cap in caps {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=cap).map(move |c| {
                    let mut counts = p.counts().to_vec();
                    counts.push(c);
                    ItemMultiset::from_counts(counts)
                })
            })
            .collect();
    }
    out
}

fn sides<V: Valuation + ?Sized>(
    v: &V,
    property: PropertyKind,
    x: &ItemMultiset,
    y: &ItemMultiset,
    item: Option<ItemId>,
) -> Result<(f64, f64)> {
    Ok(match property {
        PropertyKind::Monotone => (v.value(x)?, v.value(y)?),
        PropertyKind::DiminishingReturns => {
            let i = item.ok_or_else(|| Error::Input("diminishing returns needs an item".into()))?;
            let gy = v.value(&y.with_added(i)?)? - v.value(y)?;
            let gx = v.value(&x.with_added(i)?)? - v.value(x)?;
            (gy, gx)
        }
        PropertyKind::LatticeSubmodular => (v.value(&x.join(y))? + v.value(&x.meet(y))?, v.value(x)? + v.value(y)?),
    })
}

pub fn check_property<V: Valuation + ?Sized>(v: &V, caps: &[u32], property: PropertyKind) -> Result<PropertyWitness> {
    check_property_with(v, caps, property, CheckLimits::default())
}

/// Exhaustive decision of `property` on the box. A box above
/// `limits.max_points` is a resource error; there is no silent fallback to
/// sampling.
pub fn check_property_with<V: Valuation + ?Sized>(
    v: &V,
    caps: &[u32],
    property: PropertyKind,
    limits: CheckLimits,
) -> Result<PropertyWitness> {
    if caps.len() != v.num_items() {
        return Err(Error::Input(format!(
            "box has {} coordinates but the valuation has {} items",
            caps.len(),
            v.num_items()
        )));
    }
    let size = box_size(caps);
    if size > limits.max_points {
        return Err(Error::Resource {
            what: "exhaustive property check",
            needed: size,
            limit: limits.max_points,
            hint: "; shrink the box or request the sampled mode",
        });
    }
    let points = box_points(caps);
    let values = points.iter().map(|p| v.value(p)).collect::<Result<Vec<_>>>()?;
    let strides = strides(caps);
    let tol = v.tolerance();
    let mut comparisons = 0u64;

    let witness = |ce: Option<Counterexample>, comparisons| PropertyWitness {
        property,
        holds: ce.is_none(),
        mode: CheckMode::Exhaustive,
        comparisons,
        tolerance: tol,
        counterexample: ce,
    };

    for (ix, x) in points.iter().enumerate() {
        match property {
            PropertyKind::Monotone | PropertyKind::DiminishingReturns => {
                for (iy, y) in points.iter().enumerate() {
                    if !x.le(y) {
                        continue;
                    }
                    if property == PropertyKind::Monotone {
                        comparisons += 1;
                        if values[ix] > values[iy] + tol {
                            let ce = Counterexample {
                                x: x.clone(),
                                y: y.clone(),
                                item: None,
                                lhs: values[ix],
                                rhs: values[iy],
                            };
                            return Ok(witness(Some(ce), comparisons));
                        }
                        continue;
                    }
                    for (i, &cap) in caps.iter().enumerate() {
                        if y.count(i) >= cap {
                            continue;
                        }
                        comparisons += 1;
                        let gx = values[ix + strides[i]] - values[ix];
                        let gy = values[iy + strides[i]] - values[iy];
                        if gy > gx + tol {
                            let ce = Counterexample {
                                x: x.clone(),
                                y: y.clone(),
                                item: Some(i),
                                lhs: gy,
                                rhs: gx,
                            };
                            return Ok(witness(Some(ce), comparisons));
                        }
                    }
                }
            }
            PropertyKind::LatticeSubmodular => {
                // symmetric in (x, y): the earliest violating ordered pair has x before y
                for (iy, y) in points.iter().enumerate().skip(ix + 1) {
                    comparisons += 1;
                    let lhs = values[index_of(&x.join(y), &strides)] + values[index_of(&x.meet(y), &strides)];
                    let rhs = values[ix] + values[iy];
                    if lhs > rhs + tol {
                        let ce = Counterexample {
                            x: x.clone(),
                            y: y.clone(),
                            item: None,
                            lhs,
                            rhs,
                        };
                        return Ok(witness(Some(ce), comparisons));
                    }
                }
            }
        }
    }
    Ok(witness(None, comparisons))
}

/// Random-pair check; never a decision procedure, and labeled as such.
pub fn check_property_sampled<V: Valuation + ?Sized, R: Rng + ?Sized>(
    v: &V,
    caps: &[u32],
    property: PropertyKind,
    samples: u64,
    rng: &mut R,
) -> Result<PropertyWitness> {
    if caps.len() != v.num_items() {
        return Err(Error::Input("box dimension does not match the valuation".into()));
    }
    let tol = v.tolerance();
    let mut comparisons = 0;
    for _ in 0..samples {
        let y = ItemMultiset::from_counts(caps.iter().map(|&c| rng.gen_range(0..=c)).collect());
        let (x, y, item) = match property {
            PropertyKind::LatticeSubmodular => {
                let x = ItemMultiset::from_counts(caps.iter().map(|&c| rng.gen_range(0..=c)).collect());
                (x, y, None)
            }
            _ => {
                let x = ItemMultiset::from_counts(y.counts().iter().map(|&c| rng.gen_range(0..=c)).collect());
                let item = if property == PropertyKind::DiminishingReturns {
                    let open: Vec<_> = (0..caps.len()).filter(|&i| y.count(i) < caps[i]).collect();
                    if open.is_empty() {
                        continue;
                    }
                    Some(open[rng.gen_range(0..open.len())])
                } else {
                    None
                };
                (x, y, item)
            }
        };
        comparisons += 1;
        let (lhs, rhs) = sides(v, property, &x, &y, item)?;
        if lhs > rhs + tol {
            return Ok(PropertyWitness {
                property,
                holds: false,
                mode: CheckMode::Sampled { samples },
                comparisons,
                tolerance: tol,
                counterexample: Some(Counterexample { x, y, item, lhs, rhs }),
            });
        }
    }
    Ok(PropertyWitness {
        property,
        holds: true,
        mode: CheckMode::Sampled { samples },
        comparisons,
        tolerance: tol,
        counterexample: None,
    })
}

fn strides(caps: &[u32]) -> Vec<usize> {
    let mut s = vec![1usize; caps.len()];
    for i in (0..caps.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * (caps[i + 1] as usize + 1);
    }
    s
}

fn index_of(x: &ItemMultiset, strides: &[usize]) -> usize {
    strides.iter().enumerate().map(|(i, s)| x.count(i) as usize * s).sum()
}
