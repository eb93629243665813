//! Instance families: planted and random set systems, the cyclic-shift
//! offline coverage instance, staged online instances with random
//! deactivation, the budget-additive building block and its staged version,
//! and replicated i.i.d. instances.
//!
//! Agents of an [`OnlineInstance`] value item *types* `0..m`. A stage-r copy
//! of a base item is a distinct arrival (its position in the arrival
//! sequence) but is valued through the same type, so copies are represented
//! by the same sets or bids. A deactivated agent gains nothing from later
//! arrivals; policies see only the current active set.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::valuations::{AnyValuation, BudgetAdditiveValuation, CoverageValuation, ItemMultiset, Valuation};
use crate::{AgentId, Error, ItemId, Result};

/// A collection of k groups of n sets, every set of size s, over `0..|U|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSystem {
    pub universe_size: usize,
    pub groups: usize,
    pub sets_per_group: usize,
    pub set_size: usize,
    /// `sets[j1][j2]` is A_{j1,j2}, sorted.
    pub sets: Vec<Vec<Vec<u32>>>,
    /// π: group → index of the planted set in that group.
    pub planted: Option<Vec<usize>>,
}

impl SetSystem {
    /// Checks the shape invariants, and for a planted system that the planted
    /// sets partition the universe.
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.sets_per_group == 0 || self.set_size == 0 {
            return Err(Error::Input("k, n and s must all be at least 1".into()));
        }
        if self.sets.len() != self.groups {
            return Err(Error::Input(format!(
                "expected {} groups, got {}",
                self.groups,
                self.sets.len()
            )));
        }
        for (j1, group) in self.sets.iter().enumerate() {
            if group.len() != self.sets_per_group {
                return Err(Error::Input(format!(
                    "group {j1} has {} sets, expected {}",
                    group.len(),
                    self.sets_per_group
                )));
            }
            for (j2, set) in group.iter().enumerate() {
                let mut sorted = set.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != self.set_size || sorted.len() != set.len() {
                    return Err(Error::Input(format!(
                        "set ({j1},{j2}) does not have exactly {} distinct elements",
                        self.set_size
                    )));
                }
                if set.iter().any(|&e| e as usize >= self.universe_size) {
                    return Err(Error::Input(format!("set ({j1},{j2}) leaves the universe")));
                }
            }
        }
        if let Some(pi) = &self.planted {
            if pi.len() != self.groups || pi.iter().any(|&p| p >= self.sets_per_group) {
                return Err(Error::Input("planted cover must pick one set index per group".into()));
            }
            let mut seen = vec![false; self.universe_size];
            for (j, &p) in pi.iter().enumerate() {
                for &e in &self.sets[j][p] {
                    if std::mem::replace(&mut seen[e as usize], true) {
                        return Err(Error::Input(format!("planted sets overlap at element {e}")));
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Input("planted sets do not cover the universe".into()));
            }
        }
        Ok(())
    }

    pub fn set(&self, group: usize, index: usize) -> &[u32] {
        &self.sets[group][index]
    }
}

fn random_subset(rng: &mut impl Rng, universe: usize, size: usize) -> Vec<u32> {
    let mut s: Vec<u32> = sample(rng, universe, size).into_iter().map(|e| e as u32).collect();
    s.sort_unstable();
    s
}

/// A YES-case system: |U| = k·s, A_{j,0} = {js, …, js+s−1} (so π ≡ 0), and
/// every other set a uniformly random s-subset of U.
pub fn make_planted_cover_system(k: usize, n: usize, s: usize, seed: u64) -> Result<SetSystem> {
    if k == 0 || n == 0 || s == 0 {
        return Err(Error::Input("k, n and s must all be at least 1".into()));
    }
    let universe_size = k * s;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = (0..k)
        .map(|j| {
            (0..n)
                .map(|idx| {
                    if idx == 0 {
                        ((j * s) as u32..((j + 1) * s) as u32).collect()
                    } else {
                        random_subset(&mut rng, universe_size, s)
                    }
                })
                .collect()
        })
        .collect();
    let system = SetSystem {
        universe_size,
        groups: k,
        sets_per_group: n,
        set_size: s,
        sets,
        planted: Some(vec![0; k]),
    };
    debug_assert!(system.validate().is_ok());
    Ok(system)
}

/// A system with every set a uniformly random s-subset and no planted cover.
/// Used in place of the unconstructible NO case; its cover quality is
/// measured, never assumed.
pub fn make_random_system(k: usize, n: usize, s: usize, universe_size: usize, seed: u64) -> Result<SetSystem> {
    if k == 0 || n == 0 || s == 0 || s > universe_size {
        return Err(Error::Input("need k, n, s ≥ 1 and s ≤ |U|".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = (0..k)
        .map(|_| (0..n).map(|_| random_subset(&mut rng, universe_size, s)).collect())
        .collect();
    Ok(SetSystem {
        universe_size,
        groups: k,
        sets_per_group: n,
        set_size: s,
        sets,
        planted: None,
    })
}

/// n agents and m = k·n items labeled (j1, j2); agent i sees item (j1, j2)
/// as the set A_{j1, (j2 + i) mod n}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineCoverageInstance {
    pub system: SetSystem,
}

pub fn make_cyclic_instance(system: SetSystem) -> Result<OfflineCoverageInstance> {
    system.validate()?;
    Ok(OfflineCoverageInstance { system })
}

impl OfflineCoverageInstance {
    pub fn num_agents(&self) -> usize {
        self.system.sets_per_group
    }

    pub fn num_items(&self) -> usize {
        self.system.groups * self.system.sets_per_group
    }

    pub fn item_id(&self, j1: usize, j2: usize) -> ItemId {
        j1 * self.system.sets_per_group + j2
    }

    pub fn item_pair(&self, item: ItemId) -> (usize, usize) {
        (item / self.system.sets_per_group, item % self.system.sets_per_group)
    }

    pub fn valuation(&self, agent: AgentId) -> CoverageValuation {
        let n = self.system.sets_per_group;
        let sets = (0..self.num_items())
            .map(|item| {
                let (j1, j2) = self.item_pair(item);
                self.system.sets[j1][(j2 + agent) % n].clone()
            })
            .collect();
        CoverageValuation::new(self.system.universe_size, sets).expect("validated set system")
    }

    pub fn valuations(&self) -> Vec<CoverageValuation> {
        (0..self.num_agents()).map(|i| self.valuation(i)).collect()
    }

    /// Base agent that receives `item` in the YES allocation:
    /// item (j, π(j) − i mod n) goes to agent i.
    pub fn yes_owner(&self, item: ItemId) -> Result<AgentId> {
        let pi = self.planted()?;
        let n = self.system.sets_per_group;
        let (j1, j2) = self.item_pair(item);
        Ok((pi[j1] + n - j2) % n)
    }

    fn planted(&self) -> Result<&[usize]> {
        self.system
            .planted
            .as_deref()
            .ok_or_else(|| Error::Precondition("the set system has no planted cover".into()))
    }
}

/// Per-agent multisets of received items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub bundles: Vec<ItemMultiset>,
}

impl Allocation {
    pub fn empty(agents: usize, items: usize) -> Self {
        Self {
            bundles: vec![ItemMultiset::empty(items); agents],
        }
    }

    pub fn agent_values<V: Valuation>(&self, valuations: &[V]) -> Result<Vec<f64>> {
        if valuations.len() != self.bundles.len() {
            return Err(Error::Input(format!(
                "{} bundles but {} valuations",
                self.bundles.len(),
                valuations.len()
            )));
        }
        self.bundles.iter().zip(valuations).map(|(b, v)| v.value(b)).collect()
    }

    /// Σᵢ wᵢ(Tᵢ).
    pub fn welfare<V: Valuation>(&self, valuations: &[V]) -> Result<f64> {
        Ok(self.agent_values(valuations)?.iter().sum())
    }

    /// Σᵢ Tᵢ, the multiset of all allocated items.
    pub fn allocated(&self) -> ItemMultiset {
        self.bundles.iter().fold(ItemMultiset::default(), |acc, b| acc.sum(b))
    }

    /// True when every item copy is used at most as often as it is available.
    pub fn fits_within(&self, available: &ItemMultiset) -> bool {
        self.allocated().le(available)
    }
}

/// Agent i receives Sᵢ = {(j, π(j) − i mod n) : j ∈ [k]}.
pub fn yes_allocation(inst: &OfflineCoverageInstance) -> Result<Allocation> {
    let mut alloc = Allocation::empty(inst.num_agents(), inst.num_items());
    for item in 0..inst.num_items() {
        let owner = inst.yes_owner(item)?;
        alloc.bundles[owner].add(item)?;
    }
    Ok(alloc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Arrival {
    /// Explicit item sequence, grouped into stages.
    Staged { stages: Vec<Vec<ItemId>> },
    /// `draws` independent items from the distribution `probabilities`.
    Iid { probabilities: Vec<f64>, draws: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activity {
    AlwaysActive,
    /// Last stage (1-based) in which each agent is active.
    Fixed {
        last_active_stage: Vec<usize>,
    },
    /// Each family is a list of agent groups. After every stage but the last,
    /// each family independently loses one uniformly random remaining group.
    UniformGroups {
        families: Vec<Vec<Vec<AgentId>>>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineInstance {
    pub agents: Vec<AnyValuation>,
    pub arrival: Arrival,
    pub activity: Activity,
    #[serde(default)]
    pub meta: InstanceMeta,
}

/// One arrival: its stage (1-based) and item type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub stage: usize,
    pub item: ItemId,
}

/// A resolved activity rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub num_stages: usize,
    /// Last stage (1-based) in which each agent is active.
    pub last_active: Vec<usize>,
}

impl Schedule {
    pub fn is_active(&self, agent: AgentId, stage: usize) -> bool {
        stage <= self.last_active[agent]
    }

    /// Agents deactivated at the end of stage `j` (A_j); for j = t these are
    /// the agents still active at the end.
    pub fn deactivated_after(&self, stage: usize) -> Vec<AgentId> {
        (0..self.last_active.len())
            .filter(|&a| self.last_active[a] == stage)
            .collect()
    }
}

impl OnlineInstance {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Number of item types m.
    pub fn num_items(&self) -> usize {
        self.agents.first().map_or(0, |a| a.num_items())
    }

    pub fn num_stages(&self) -> usize {
        match &self.arrival {
            Arrival::Staged { stages } => stages.len(),
            Arrival::Iid { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_items();
        if self.agents.iter().any(|a| a.num_items() != m) {
            return Err(Error::Input("all agents must value the same item universe".into()));
        }
        match &self.arrival {
            Arrival::Staged { stages } => {
                if let Some(&item) = stages.iter().flatten().find(|&&i| i >= m) {
                    return Err(Error::ItemOutOfRange { item, universe: m });
                }
            }
            Arrival::Iid { probabilities, .. } => {
                if probabilities.len() != m {
                    return Err(Error::Input(format!(
                        "distribution has {} entries for {m} items",
                        probabilities.len()
                    )));
                }
                if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::Input("probabilities must be finite and ≥ 0".into()));
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Input(format!("probabilities sum to {total}, not 1")));
                }
            }
        }
        let n = self.num_agents();
        match &self.activity {
            Activity::AlwaysActive => {}
            Activity::Fixed { last_active_stage } => {
                if last_active_stage.len() != n {
                    return Err(Error::Input("activity schedule length differs from agent count".into()));
                }
            }
            Activity::UniformGroups { families } => {
                let mut seen = vec![false; n];
                for family in families {
                    if family.len() < self.num_stages() {
                        return Err(Error::Input(format!(
                            "a family with {} groups cannot lose one group after each of {} stages",
                            family.len(),
                            self.num_stages()
                        )));
                    }
                    for &a in family.iter().flatten() {
                        if a >= n || std::mem::replace(&mut seen[a], true) {
                            return Err(Error::Input(format!("agent {a} is out of range or listed twice")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves the activity rule. Uses `rng` only for `UniformGroups`.
    pub fn materialize_schedule<R: Rng + ?Sized>(&self, rng: &mut R) -> Schedule {
        let t = self.num_stages();
        let n = self.num_agents();
        let last_active = match &self.activity {
            Activity::AlwaysActive => vec![t; n],
            Activity::Fixed { last_active_stage } => last_active_stage.clone(),
            Activity::UniformGroups { families } => {
                // agents outside every family stay active
                let mut last = vec![t; n];
                for family in families {
                    let mut remaining: Vec<usize> = (0..family.len()).collect();
                    for stage in 1..t {
                        let g = remaining.remove(rng.gen_range(0..remaining.len()));
                        for &a in &family[g] {
                            last[a] = stage;
                        }
                    }
                }
                last
            }
        };
        Schedule {
            num_stages: t,
            last_active,
        }
    }

    /// The arrival sequence; draws from `rng` only for i.i.d. arrivals.
    pub fn materialize_arrivals<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<ArrivalEvent>> {
        Ok(match &self.arrival {
            Arrival::Staged { stages } => stages
                .iter()
                .enumerate()
                .flat_map(|(s, items)| items.iter().map(move |&item| ArrivalEvent { stage: s + 1, item }))
                .collect(),
            Arrival::Iid { probabilities, draws } => {
                if *draws == 0 {
                    return Ok(Vec::new());
                }
                let dist = WeightedIndex::new(probabilities)
                    .map_err(|e| Error::Input(format!("bad item distribution: {e}")))?;
                (0..*draws)
                    .map(|_| ArrivalEvent {
                        stage: 1,
                        item: dist.sample(rng),
                    })
                    .collect()
            }
        })
    }

    /// Evaluates an offline assignment of the arrival sequence (one entry per
    /// arrival; `None` discards). Assigning to an agent inactive in the
    /// item's stage is an error.
    pub fn evaluate_assignment(
        &self,
        arrivals: &[ArrivalEvent],
        schedule: &Schedule,
        assignment: &[Option<AgentId>],
    ) -> Result<Allocation> {
        if arrivals.len() != assignment.len() {
            return Err(Error::Input("assignment length differs from the arrival count".into()));
        }
        let mut alloc = Allocation::empty(self.num_agents(), self.num_items());
        for (ev, who) in arrivals.iter().zip(assignment) {
            if let Some(a) = *who {
                if a >= self.num_agents() {
                    return Err(Error::Input(format!("agent {a} out of range")));
                }
                if !schedule.is_active(a, ev.stage) {
                    return Err(Error::Precondition(format!(
                        "agent {a} is inactive in stage {} but received item {}",
                        ev.stage, ev.item
                    )));
                }
                alloc.bundles[a].add(ev.item)?;
            }
        }
        Ok(alloc)
    }
}

fn lexicographic_stage(m: usize, order: Option<&[ItemId]>) -> Result<Vec<ItemId>> {
    match order {
        None => Ok((0..m).collect()),
        Some(p) => {
            let mut sorted = p.to_vec();
            sorted.sort_unstable();
            if sorted != (0..m).collect::<Vec<_>>() {
                return Err(Error::Input(format!(
                    "within-stage order must be a permutation of 0..{m}"
                )));
            }
            Ok(p.to_vec())
        }
    }
}

/// The staged instance I^(t): t copies of each base agent (copy c of base
/// agent i is agent c·n + i), t stages delivering the m base items, and after
/// each stage one uniformly random active copy of every base agent leaves.
pub fn make_staged_instance(base: &OfflineCoverageInstance, t: usize, seed: u64) -> Result<OnlineInstance> {
    make_staged_instance_ordered(base, t, seed, None)
}

/// As [`make_staged_instance`], with an explicit within-stage order.
pub fn make_staged_instance_ordered(
    base: &OfflineCoverageInstance,
    t: usize,
    seed: u64,
    order: Option<&[ItemId]>,
) -> Result<OnlineInstance> {
    if t == 0 {
        return Err(Error::Input("t must be at least 1".into()));
    }
    let n = base.num_agents();
    let stage = lexicographic_stage(base.num_items(), order)?;
    let vals = base.valuations();
    let agents = (0..t)
        .flat_map(|_| vals.iter().cloned().map(AnyValuation::from))
        .collect();
    let families = (0..n).map(|i| (0..t).map(|c| vec![c * n + i]).collect()).collect();
    let sys = &base.system;
    Ok(OnlineInstance {
        agents,
        arrival: Arrival::Staged { stages: vec![stage; t] },
        activity: Activity::UniformGroups { families },
        meta: InstanceMeta {
            family: "staged".into(),
            k: Some(sys.groups),
            n: Some(sys.sets_per_group),
            s: Some(sys.set_size),
            t: Some(t),
            seed: Some(seed),
        },
    })
}

/// Two agents with budget 3 and three items bid at 2 by both.
pub fn make_budget_block() -> OnlineInstance {
    let agent = BudgetAdditiveValuation::new(vec![2.0; 3], 3.0).expect("valid bids");
    OnlineInstance {
        agents: vec![agent.clone().into(), agent.into()],
        arrival: Arrival::Staged {
            stages: vec![vec![0, 1, 2]],
        },
        activity: Activity::AlwaysActive,
        meta: InstanceMeta {
            family: "budget-block".into(),
            ..Default::default()
        },
    }
}

/// 2t agents in pairs (2s, 2s+1), t stages of three items bid at 2 by every
/// active agent; after each stage a uniformly random remaining pair leaves.
pub fn make_budget_staged(t: usize, seed: u64) -> Result<OnlineInstance> {
    if t == 0 {
        return Err(Error::Input("t must be at least 1".into()));
    }
    let agent: AnyValuation = BudgetAdditiveValuation::new(vec![2.0; 3], 3.0)?.into();
    Ok(OnlineInstance {
        agents: vec![agent; 2 * t],
        arrival: Arrival::Staged {
            stages: vec![vec![0, 1, 2]; t],
        },
        activity: Activity::UniformGroups {
            families: vec![(0..t).map(|s| vec![2 * s, 2 * s + 1]).collect()],
        },
        meta: InstanceMeta {
            family: "budget-staged".into(),
            t: Some(t),
            seed: Some(seed),
            ..Default::default()
        },
    })
}

/// I^[t]: t copies of each base agent and t·m i.i.d. uniform draws over the
/// m base items.
pub fn make_iid_instance(base: &OfflineCoverageInstance, t: usize) -> Result<OnlineInstance> {
    if t == 0 {
        return Err(Error::Input("t must be at least 1".into()));
    }
    let vals: Vec<AnyValuation> = base.valuations().into_iter().map(Into::into).collect();
    let m = base.num_items();
    let mut inst = make_iid_from(
        (0..t).flat_map(|_| vals.iter().cloned()).collect(),
        vec![1.0 / m as f64; m],
        t * m,
    )?;
    let sys = &base.system;
    inst.meta = InstanceMeta {
        family: "iid".into(),
        k: Some(sys.groups),
        n: Some(sys.sets_per_group),
        s: Some(sys.set_size),
        t: Some(t),
        seed: None,
    };
    Ok(inst)
}

/// An i.i.d. instance over arbitrary valuations.
pub fn make_iid_from(agents: Vec<AnyValuation>, probabilities: Vec<f64>, draws: usize) -> Result<OnlineInstance> {
    let inst = OnlineInstance {
        agents,
        arrival: Arrival::Iid { probabilities, draws },
        activity: Activity::AlwaysActive,
        meta: InstanceMeta {
            family: "iid".into(),
            ..Default::default()
        },
    };
    inst.validate()?;
    Ok(inst)
}

/// The offline YES allocation of a planted staged instance under a resolved
/// schedule: stage-r items go to the copies deactivated after stage r,
/// arranged as in [`yes_allocation`]. Returns one agent per arrival.
pub fn staged_yes_assignment(
    base: &OfflineCoverageInstance,
    arrivals: &[ArrivalEvent],
    schedule: &Schedule,
) -> Result<Vec<Option<AgentId>>> {
    let n = base.num_agents();
    arrivals
        .iter()
        .map(|ev| {
            let owner = base.yes_owner(ev.item)?;
            // copies of base agent `owner` are agents c·n + owner
            let copy = (0..schedule.last_active.len() / n)
                .map(|c| c * n + owner)
                .find(|&a| schedule.last_active[a] == ev.stage)
                .ok_or_else(|| {
                    Error::Precondition(format!("no copy of agent {owner} leaves after stage {}", ev.stage))
                })?;
            Ok(Some(copy))
        })
        .collect()
}

/// Small seeded random agents over `m` items: each is, with equal chance, a
/// coverage valuation (items cover 1–3 of up to 6 elements) or a
/// budget-additive one (integer bids 0–4, budget 1–8).
pub fn make_random_agents(n: usize, m: usize, seed: u64) -> Result<Vec<AnyValuation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                let universe = rng.gen_range(1..=6usize);
                let sets = (0..m)
                    .map(|_| {
                        let size = rng.gen_range(1..=3usize.min(universe));
                        sample(&mut rng, universe, size).into_iter().map(|e| e as u32).collect()
                    })
                    .collect();
                Ok(CoverageValuation::new(universe, sets)?.into())
            } else {
                let bids = (0..m).map(|_| rng.gen_range(0..=4u32) as f64).collect();
                Ok(BudgetAdditiveValuation::new(bids, rng.gen_range(1..=8u32) as f64)?.into())
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_agents_are_reproducible() {
        let a = make_random_agents(3, 5, 9).unwrap();
        assert_eq!(a, make_random_agents(3, 5, 9).unwrap());
        assert!(a.iter().all(|v| v.num_items() == 5));
        assert_ne!(a, make_random_agents(3, 5, 10).unwrap());
    }

    #[test]
    fn planted_system_shape() {
        let sys = make_planted_cover_system(4, 5, 3, 11).unwrap();
        assert_eq!(sys.universe_size, 12);
        for j in 0..4 {
            assert_eq!(sys.set(j, 0), &[3 * j as u32, 3 * j as u32 + 1, 3 * j as u32 + 2]);
        }
        sys.validate().unwrap();

        let one = make_planted_cover_system(1, 1, 2, 0).unwrap();
        assert_eq!(one.universe_size, 2);
        assert_eq!(one.sets, vec![vec![vec![0, 1]]]);

        let sys = make_planted_cover_system(3, 3, 2, 7).unwrap();
        assert!(sys.sets.iter().all(|g| g.len() == 3));
        assert!(sys.sets.iter().flatten().all(|s| s.len() == 2));
    }

    #[test]
    fn validation_catches_broken_systems() {
        let mut sys = make_planted_cover_system(2, 2, 2, 1).unwrap();
        sys.sets[1][0] = vec![0, 1];
        assert!(sys.validate().is_err());
        let mut sys = make_planted_cover_system(2, 2, 2, 1).unwrap();
        sys.sets[0][1] = vec![0];
        assert!(sys.validate().is_err());
        assert!(make_planted_cover_system(0, 1, 1, 0).is_err());
    }

    #[test]
    fn cyclic_shift() {
        let sys = make_planted_cover_system(2, 3, 2, 5).unwrap();
        let inst = make_cyclic_instance(sys.clone()).unwrap();
        assert_eq!(inst.num_items(), 6);
        let v0 = inst.valuation(0);
        for item in 0..6 {
            let (j1, j2) = inst.item_pair(item);
            assert_eq!(v0.sets()[item], sys.sets[j1][j2]);
            assert_eq!(inst.valuation(2).sets()[item], sys.sets[j1][(j2 + 2) % 3]);
        }
        let single = make_cyclic_instance(make_planted_cover_system(3, 1, 2, 0).unwrap()).unwrap();
        assert_eq!(single.num_items(), 3);
        assert_eq!(single.num_agents(), 1);
    }

    #[test]
    fn yes_allocation_satisfies_everyone() {
        let inst = make_cyclic_instance(make_planted_cover_system(4, 5, 3, 2).unwrap()).unwrap();
        let alloc = yes_allocation(&inst).unwrap();
        let vals = inst.valuations();
        for (i, b) in alloc.bundles.iter().enumerate() {
            assert_eq!(b.total(), 4, "agent {i}");
            assert_eq!(vals[i].value(b).unwrap(), 12.0);
        }
        // disjoint: every item used exactly once
        assert_eq!(alloc.allocated().counts(), vec![1; 20].as_slice());
        assert_eq!(alloc.welfare(&vals).unwrap(), 60.0);
    }

    #[test]
    fn yes_allocation_needs_a_planted_cover() {
        let inst = make_cyclic_instance(make_random_system(2, 2, 2, 4, 0).unwrap()).unwrap();
        assert!(matches!(yes_allocation(&inst), Err(Error::Precondition(_))));
    }

    #[test]
    fn staged_schedule_shape() {
        let base = make_cyclic_instance(make_planted_cover_system(2, 2, 2, 1).unwrap()).unwrap();
        let inst = make_staged_instance(&base, 3, 9).unwrap();
        inst.validate().unwrap();
        assert_eq!(inst.num_agents(), 6);
        assert_eq!(inst.num_stages(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sched = inst.materialize_schedule(&mut rng);
        // one copy of each base agent leaves after every stage
        for stage in 1..=3 {
            let gone = sched.deactivated_after(stage);
            assert_eq!(gone.len(), 2);
            let mut bases: Vec<_> = gone.iter().map(|a| a % 2).collect();
            bases.sort();
            assert_eq!(bases, vec![0, 1]);
        }
        let mut again = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(inst.materialize_schedule(&mut again), sched);
    }

    #[test]
    fn staged_with_one_stage_keeps_everyone() {
        let base = make_cyclic_instance(make_planted_cover_system(2, 2, 2, 1).unwrap()).unwrap();
        let inst = make_staged_instance(&base, 1, 0).unwrap();
        let sched = inst.materialize_schedule(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(sched.last_active, vec![1, 1]);
    }

    #[test]
    fn every_stage_delivers_the_base_items() {
        let base = make_cyclic_instance(make_planted_cover_system(2, 3, 2, 1).unwrap()).unwrap();
        let inst = make_staged_instance(&base, 4, 0).unwrap();
        let Arrival::Staged { stages } = &inst.arrival else {
            unreachable!()
        };
        assert!(stages.iter().all(|s| *s == (0..6).collect::<Vec<_>>()));
        let order = [5, 4, 3, 2, 1, 0];
        let rev = make_staged_instance_ordered(&base, 2, 0, Some(&order)).unwrap();
        let Arrival::Staged { stages } = &rev.arrival else {
            unreachable!()
        };
        assert_eq!(stages[1], order.to_vec());
        assert!(make_staged_instance_ordered(&base, 2, 0, Some(&[0, 0, 1, 2, 3, 4])).is_err());
    }

    #[test]
    fn staged_yes_assignment_reaches_tn_u() {
        let base = make_cyclic_instance(make_planted_cover_system(4, 5, 3, 3).unwrap()).unwrap();
        let inst = make_staged_instance(&base, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sched = inst.materialize_schedule(&mut rng);
        let arrivals = inst.materialize_arrivals(&mut rng).unwrap();
        let assign = staged_yes_assignment(&base, &arrivals, &sched).unwrap();
        let alloc = inst.evaluate_assignment(&arrivals, &sched, &assign).unwrap();
        assert_eq!(alloc.welfare(&inst.agents).unwrap(), 180.0);
    }

    #[test]
    fn assigning_to_inactive_agents_is_rejected() {
        let inst = make_budget_staged(2, 0).unwrap();
        let sched = Schedule {
            num_stages: 2,
            last_active: vec![1, 1, 2, 2],
        };
        let arrivals = inst.materialize_arrivals(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut assign = vec![Some(2); 6];
        assert!(inst.evaluate_assignment(&arrivals, &sched, &assign).is_ok());
        assign[4] = Some(0);
        assert!(inst.evaluate_assignment(&arrivals, &sched, &assign).is_err());
    }

    #[test]
    fn budget_staged_pairs_leave_together() {
        let inst = make_budget_staged(5, 0).unwrap();
        inst.validate().unwrap();
        let sched = inst.materialize_schedule(&mut ChaCha8Rng::seed_from_u64(8));
        for s in 0..5 {
            assert_eq!(sched.last_active[2 * s], sched.last_active[2 * s + 1]);
        }
        let mut stages: Vec<_> = (0..5).map(|s| sched.last_active[2 * s]).collect();
        stages.sort();
        assert_eq!(stages, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn iid_instance() {
        let base = make_cyclic_instance(make_planted_cover_system(3, 1, 1, 0).unwrap()).unwrap();
        let inst = make_iid_instance(&base, 1).unwrap();
        let Arrival::Iid { probabilities, draws } = &inst.arrival else {
            unreachable!()
        };
        assert_eq!(*draws, 3);
        assert_eq!(probabilities, &vec![1.0 / 3.0; 3]);
        let arrivals = inst.materialize_arrivals(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(arrivals.len(), 3);
        assert!(make_iid_from(inst.agents.clone(), vec![0.5, 0.6, -0.1], 3).is_err());
    }

    #[test]
    fn iid_copy_counts_concentrate_around_t() {
        let base = make_cyclic_instance(make_planted_cover_system(2, 2, 1, 0).unwrap()).unwrap();
        let t = 400;
        let inst = make_iid_instance(&base, t).unwrap();
        let arrivals = inst.materialize_arrivals(&mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut counts = [0usize; 4];
        arrivals.iter().for_each(|e| counts[e.item] += 1);
        // Binomial(1600, 1/4): sd ≈ 17.3; 5 sd keeps this deterministic-seed test meaningful
        for c in counts {
            assert!((c as f64 - t as f64).abs() < 5.0 * 17.33, "{counts:?}");
        }
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = make_budget_staged(2, 3).unwrap();
        let s = serde_json::to_string(&inst).unwrap();
        assert!(s.starts_with(r#"{"agents":[{"kind":"budget_additive""#));
        assert!(s.contains(r#""arrival":{"type":"staged""#));
        assert!(s.contains(r#""meta":{"family":"budget-staged","t":2,"seed":3}"#));
        let back: OnlineInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(back, inst);
    }
}
