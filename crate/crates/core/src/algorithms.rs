//! Online allocation policies and exact offline optima.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::StochasticBound;
use crate::instances::{Allocation, ArrivalEvent, OnlineInstance, Schedule};
use crate::valuations::{ItemMultiset, Valuation};
use crate::{AgentId, Error, ItemId, Result};

/// Default cap on the number of assignments explored by brute force.
pub const BRUTEFORCE_LIMIT: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestId,
    /// Uniform among maximizers, from the policy RNG.
    Random,
}

/// y_{ij} from a stochastic LP solution together with p and the draw count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpGuidance {
    /// `[agent][item]`.
    pub y: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub draws: usize,
}

impl LpGuidance {
    pub fn new(y: Vec<Vec<f64>>, probabilities: Vec<f64>, draws: usize) -> Result<Self> {
        let g = Self {
            y,
            probabilities,
            draws,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_bound(bound: &StochasticBound) -> Result<Self> {
        Self::new(
            bound.item_usage(),
            bound.program.probabilities.clone(),
            bound.program.draws,
        )
    }

    /// Checks y ≥ 0 and Σᵢ y_{ij} ≤ p_j·m for every item.
    pub fn validate(&self) -> Result<()> {
        let tol = crate::bounds::FEASIBILITY_TOLERANCE;
        let m = self.probabilities.len();
        if self.y.iter().any(|row| row.len() != m) {
            return Err(Error::Input(format!("every y row needs {m} entries")));
        }
        for j in 0..m {
            let cap = self.probabilities[j] * self.draws as f64;
            let mut total = 0.0;
            for row in &self.y {
                if row[j].is_nan() || row[j] < -tol {
                    return Err(Error::Input(format!("y has a negative entry {} for item {j}", row[j])));
                }
                total += row[j].max(0.0);
            }
            if total > cap + tol {
                return Err(Error::Input(format!("item {j} is used {total} > p·m = {cap} times")));
            }
        }
        Ok(())
    }

    /// Probability that item `item` goes to `agent`.
    pub fn probability(&self, agent: AgentId, item: ItemId) -> f64 {
        let cap = self.probabilities[item] * self.draws as f64;
        if cap <= 0.0 {
            0.0
        } else {
            (self.y[agent][item].max(0.0) / cap).min(1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Greedy {
        #[serde(default)]
        tie: TieBreak,
    },
    Random,
    LpGuided(LpGuidance),
}

impl Policy {
    pub fn greedy() -> Self {
        Policy::Greedy {
            tie: TieBreak::LowestId,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Greedy {
                tie: TieBreak::LowestId,
            } => "greedy",
            Policy::Greedy { tie: TieBreak::Random } => "greedy_random_ties",
            Policy::Random => "random",
            Policy::LpGuided(_) => "lp_guided",
        }
    }
}

/// Current bundles, their values, and the policy's RNG stream.
#[derive(Clone, Debug)]
pub struct PolicyState {
    pub allocation: Allocation,
    pub values: Vec<f64>,
    /// Active agents for the item being placed.
    pub active: Vec<bool>,
    pub rng: ChaCha8Rng,
}

impl PolicyState {
    pub fn new<V: Valuation>(valuations: &[V], rng: ChaCha8Rng) -> Result<Self> {
        let m = valuations.first().map_or(0, |v| v.num_items());
        let allocation = Allocation::empty(valuations.len(), m);
        let values = allocation.agent_values(valuations)?;
        Ok(Self {
            allocation,
            values,
            active: vec![true; valuations.len()],
            rng,
        })
    }

    /// Σᵢ wᵢ(Tᵢ).
    pub fn welfare(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Gives `item` to `agent`, updating its cached value; returns the gain.
    pub fn assign<V: Valuation>(&mut self, valuations: &[V], agent: AgentId, item: ItemId) -> Result<f64> {
        self.allocation.bundles[agent].add(item)?;
        let new = valuations[agent].value(&self.allocation.bundles[agent])?;
        let gain = new - self.values[agent];
        self.values[agent] = new;
        Ok(gain)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// The active agent with the largest marginal gain wᵢ(Tᵢ + j) − wᵢ(Tᵢ);
/// `None` when no agent is active.
pub fn greedy_policy<V: Valuation>(
    state: &mut PolicyState,
    valuations: &[V],
    item: ItemId,
    tie: TieBreak,
) -> Result<Option<AgentId>> {
    let mut best: Option<(AgentId, f64)> = None;
    let mut ties = 0u32;
    for (a, v) in valuations.iter().enumerate() {
        if !state.active[a] {
            continue;
        }
        let gain = v.marginal_gain(&state.allocation.bundles[a], item)?;
        match best {
            Some((_, g)) if close(gain, g) => {
                if tie == TieBreak::Random {
                    // reservoir sampling over the maximizers
                    ties += 1;
                    if state.rng.gen_range(0..ties) == 0 {
                        best = Some((a, g));
                    }
                }
            }
            Some((_, g)) if gain < g => {}
            _ => {
                best = Some((a, gain));
                ties = 1;
            }
        }
    }
    Ok(best.map(|(a, _)| a))
}

/// A uniformly random active agent.
pub fn random_policy(state: &mut PolicyState) -> Option<AgentId> {
    let active = state.active.iter().filter(|&&x| x).count();
    if active == 0 {
        return None;
    }
    let pick = state.rng.gen_range(0..active);
    state
        .active
        .iter()
        .enumerate()
        .filter(|(_, &x)| x)
        .nth(pick)
        .map(|(a, _)| a)
}

/// Agent i with probability y_{ij}/(p_j·m), otherwise discard. A draw that
/// lands on an inactive agent is also discarded.
pub fn lp_guided_policy(state: &mut PolicyState, item: ItemId, guidance: &LpGuidance) -> Result<Option<AgentId>> {
    if item >= guidance.probabilities.len() {
        return Err(Error::ItemOutOfRange {
            item,
            universe: guidance.probabilities.len(),
        });
    }
    let u: f64 = state.rng.gen();
    let mut acc = 0.0;
    for a in 0..guidance.y.len() {
        acc += guidance.probability(a, item);
        if u < acc {
            return Ok(state.active[a].then_some(a));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub stage: usize,
    pub item: ItemId,
    pub agent: Option<AgentId>,
    pub gain: f64,
    /// Σ of the gains so far.
    pub welfare: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub policy: String,
    pub seed: u64,
    pub steps: Vec<TraceStep>,
    pub allocation: Allocation,
    pub welfare: f64,
    /// Items received per agent per stage, `[agent][stage − 1]`.
    pub stage_counts: Vec<Vec<u32>>,
    pub schedule: Schedule,
}

impl RunTrace {
    /// Items received by each agent over the whole run.
    pub fn items_per_agent(&self) -> Vec<u32> {
        self.stage_counts.iter().map(|row| row.iter().sum()).collect()
    }

    /// CSV with columns step,item,agent,gain,welfare; discarded items leave
    /// the agent column empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,item,agent,gain,welfare\n");
        for st in &self.steps {
            let agent = st.agent.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", st.step, st.item, agent, st.gain, st.welfare);
        }
        s
    }
}

/// Independent RNG streams of one run.
#[derive(Clone, Copy, Debug)]
enum Stream {
    Schedule = 0,
    Arrivals = 1,
    Policy = 2,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// Deactivation schedule and arrival sequence of the run with this seed.
/// Policies do not influence either, so every policy sees the same ones.
pub fn realize(inst: &OnlineInstance, seed: u64) -> Result<(Schedule, Vec<ArrivalEvent>)> {
    let schedule = inst.materialize_schedule(&mut stream(seed, Stream::Schedule));
    let arrivals = inst.materialize_arrivals(&mut stream(seed, Stream::Arrivals))?;
    Ok((schedule, arrivals))
}

pub fn run_online(inst: &OnlineInstance, policy: &Policy, seed: u64) -> Result<RunTrace> {
    inst.validate()?;
    let (schedule, arrivals) = realize(inst, seed)?;
    let mut trace = run_sequence(&inst.agents, &arrivals, &schedule, policy, stream(seed, Stream::Policy))?;
    trace.seed = seed;
    Ok(trace)
}

/// Runs `policy` on a fixed arrival sequence and schedule.
pub fn run_sequence<V: Valuation>(
    valuations: &[V],
    arrivals: &[ArrivalEvent],
    schedule: &Schedule,
    policy: &Policy,
    rng: ChaCha8Rng,
) -> Result<RunTrace> {
    let n = valuations.len();
    if schedule.last_active.len() != n {
        return Err(Error::Input(
            "schedule and valuations disagree on the agent count".into(),
        ));
    }
    if let Policy::LpGuided(g) = policy {
        g.validate()?;
        if g.y.len() != n {
            return Err(Error::Input(
                "LP guidance and valuations disagree on the agent count".into(),
            ));
        }
    }
    let mut state = PolicyState::new(valuations, rng)?;
    let mut steps = Vec::with_capacity(arrivals.len());
    let mut stage_counts = vec![vec![0u32; schedule.num_stages.max(1)]; n];
    let mut running = 0.0;
    let mut current_stage = usize::MAX;
    for (step, ev) in arrivals.iter().enumerate() {
        if ev.stage != current_stage {
            current_stage = ev.stage;
            for (a, flag) in state.active.iter_mut().enumerate() {
                *flag = schedule.is_active(a, ev.stage);
            }
        }
        let agent = match policy {
            Policy::Greedy { tie } => greedy_policy(&mut state, valuations, ev.item, *tie)?,
            Policy::Random => random_policy(&mut state),
            Policy::LpGuided(g) => lp_guided_policy(&mut state, ev.item, g)?,
        };
        let gain = match agent {
            Some(a) => {
                let stage_slot = ev.stage.saturating_sub(1).min(stage_counts[a].len() - 1);
                stage_counts[a][stage_slot] += 1;
                state.assign(valuations, a, ev.item)?
            }
            None => 0.0,
        };
        running += gain;
        steps.push(TraceStep {
            step,
            stage: ev.stage,
            item: ev.item,
            agent,
            gain,
            welfare: running,
        });
    }
    let welfare = state.allocation.welfare(valuations)?;
    Ok(RunTrace {
        policy: policy.name().to_string(),
        seed: 0,
        steps,
        allocation: state.allocation,
        welfare,
        stage_counts,
        schedule: schedule.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineOptimum {
    pub allocation: Allocation,
    pub welfare: f64,
    /// Assignment explored per item copy (`None` = discarded).
    pub assignment: Vec<Option<AgentId>>,
}

/// Exact max Σᵢ wᵢ(Sᵢ) over assignments of the item copies `items`; copy c
/// may go to agent a only if `allowed[c][a]` (all agents when `None`), or be
/// discarded.
pub fn offline_opt_bruteforce<V: Valuation>(
    valuations: &[V],
    items: &[ItemId],
    allowed: Option<&[Vec<bool>]>,
    limit: u128,
) -> Result<OfflineOptimum> {
    let n = valuations.len();
    let m = valuations.first().map_or(0, |v| v.num_items());
    if let Some(mask) = allowed {
        if mask.len() != items.len() || mask.iter().any(|row| row.len() != n) {
            return Err(Error::Input("activity mask must be items × agents".into()));
        }
    }
    if let Some(&item) = items.iter().find(|&&i| i >= m) {
        return Err(Error::ItemOutOfRange { item, universe: m });
    }
    let choices: Vec<Vec<AgentId>> = (0..items.len())
        .map(|c| (0..n).filter(|&a| allowed.is_none_or(|mask| mask[c][a])).collect())
        .collect();
    let mut needed: u128 = 1;
    for ch in &choices {
        needed = needed.saturating_mul(ch.len() as u128 + 1);
    }
    if needed > limit {
        return Err(Error::Resource {
            what: "brute-force assignments",
            needed,
            limit,
            hint: "; use an LP upper bound instead",
        });
    }

    struct Search<'a, V> {
        valuations: &'a [V],
        items: &'a [ItemId],
        choices: &'a [Vec<AgentId>],
        bundles: Vec<ItemMultiset>,
        values: Vec<f64>,
        current: Vec<Option<AgentId>>,
        best: f64,
        best_assignment: Vec<Option<AgentId>>,
    }

    impl<V: Valuation> Search<'_, V> {
        fn go(&mut self, c: usize) -> Result<()> {
            if c == self.items.len() {
                let total: f64 = self.values.iter().sum();
                if total > self.best + 1e-12 {
                    self.best = total;
                    self.best_assignment.clone_from(&self.current);
                }
                return Ok(());
            }
            self.current[c] = None;
            self.go(c + 1)?;
            for k in 0..self.choices[c].len() {
                let a = self.choices[c][k];
                let before = self.values[a];
                self.bundles[a].add(self.items[c])?;
                self.values[a] = self.valuations[a].value(&self.bundles[a])?;
                self.current[c] = Some(a);
                self.go(c + 1)?;
                self.bundles[a].remove(self.items[c])?;
                self.values[a] = before;
            }
            self.current[c] = None;
            Ok(())
        }
    }

    let bundles = vec![ItemMultiset::empty(m); n];
    let values = bundles
        .iter()
        .zip(valuations)
        .map(|(b, v)| v.value(b))
        .collect::<Result<Vec<_>>>()?;
    let mut s = Search {
        valuations,
        items,
        choices: &choices,
        best: values.iter().sum(),
        bundles,
        values,
        current: vec![None; items.len()],
        best_assignment: vec![None; items.len()],
    };
    s.go(0)?;
    let mut allocation = Allocation::empty(n, m);
    for (c, who) in s.best_assignment.iter().enumerate() {
        if let Some(a) = who {
            allocation.bundles[*a].add(items[c])?;
        }
    }
    let welfare = allocation.welfare(valuations)?;
    Ok(OfflineOptimum {
        allocation,
        welfare,
        assignment: s.best_assignment,
    })
}

/// Offline optimum of one realized run, respecting the activity schedule.
pub fn offline_opt_for_run(
    inst: &OnlineInstance,
    arrivals: &[ArrivalEvent],
    schedule: &Schedule,
    limit: u128,
) -> Result<OfflineOptimum> {
    let items: Vec<ItemId> = arrivals.iter().map(|e| e.item).collect();
    let mask: Vec<Vec<bool>> = arrivals
        .iter()
        .map(|e| (0..inst.num_agents()).map(|a| schedule.is_active(a, e.stage)).collect())
        .collect();
    offline_opt_bruteforce(&inst.agents, &items, Some(&mask), limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_budget_block, make_budget_staged, make_cyclic_instance, make_planted_cover_system};
    use crate::valuations::{BudgetAdditiveValuation, CoverageValuation};

    fn empty_schedule(n: usize) -> Schedule {
        Schedule {
            num_stages: 1,
            last_active: vec![1; n],
        }
    }

    fn events(items: &[ItemId]) -> Vec<ArrivalEvent> {
        items.iter().map(|&item| ArrivalEvent { stage: 1, item }).collect()
    }

    #[test]
    fn greedy_on_block_first_item() {
        let inst = make_budget_block();
        let mut st = PolicyState::new(&inst.agents, ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(
            greedy_policy(&mut st, &inst.agents, 0, TieBreak::LowestId).unwrap(),
            Some(0)
        );
        assert_eq!(st.assign(&inst.agents, 0, 0).unwrap(), 2.0);
    }

    #[test]
    fn greedy_prefers_positive_gain() {
        let a = CoverageValuation::new(3, vec![vec![0], vec![1], vec![2]]).unwrap();
        let covers_two = |_: usize| CoverageValuation::new(3, vec![vec![2], vec![2], vec![2]]).unwrap();
        // agent 0 already covers everything, agent 1 gains on item 2
        let vals = vec![a, covers_two(0)];
        let mut st = PolicyState::new(&vals, ChaCha8Rng::seed_from_u64(0)).unwrap();
        for j in 0..3 {
            st.assign(&vals, 0, j).unwrap();
        }
        assert_eq!(greedy_policy(&mut st, &vals, 2, TieBreak::LowestId).unwrap(), Some(1));
    }

    #[test]
    fn saturated_agent_is_skipped() {
        let inst = make_budget_block();
        let trace = run_sequence(
            &inst.agents,
            &events(&[0, 1, 2]),
            &empty_schedule(2),
            &Policy::greedy(),
            ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let agents: Vec<_> = trace.steps.iter().map(|s| s.agent).collect();
        assert_eq!(agents, vec![Some(0), Some(1), Some(0)]);
        assert_eq!(trace.welfare, 5.0);
    }

    #[test]
    fn greedy_block_any_order_is_five() {
        let inst = make_budget_block();
        for order in [[0, 1, 2], [2, 1, 0], [1, 0, 2]] {
            for tie in [TieBreak::LowestId, TieBreak::Random] {
                let t = run_sequence(
                    &inst.agents,
                    &events(&order),
                    &empty_schedule(2),
                    &Policy::Greedy { tie },
                    ChaCha8Rng::seed_from_u64(3),
                )
                .unwrap();
                assert_eq!(t.welfare, 5.0);
            }
        }
    }

    #[test]
    fn empty_arrivals_give_zero() {
        let inst = make_budget_block();
        for p in [Policy::greedy(), Policy::Random] {
            let t = run_sequence(&inst.agents, &[], &empty_schedule(2), &p, ChaCha8Rng::seed_from_u64(0)).unwrap();
            assert_eq!(t.welfare, 0.0);
            assert!(t.steps.is_empty());
        }
    }

    #[test]
    fn no_active_agent_discards() {
        let inst = make_budget_block();
        let sched = Schedule {
            num_stages: 2,
            last_active: vec![1, 1],
        };
        let ev = vec![ArrivalEvent { stage: 2, item: 0 }];
        for p in [Policy::greedy(), Policy::Random] {
            let t = run_sequence(&inst.agents, &ev, &sched, &p, ChaCha8Rng::seed_from_u64(0)).unwrap();
            assert_eq!(t.steps[0].agent, None);
            assert_eq!(t.steps[0].gain, 0.0);
        }
    }

    #[test]
    fn random_policy_single_and_split() {
        let v = BudgetAdditiveValuation::new(vec![1.0], 100.0).unwrap();
        let mut st = PolicyState::new(std::slice::from_ref(&v), ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(random_policy(&mut st), Some(0));
        let mut st = PolicyState::new(&[v.clone(), v], ChaCha8Rng::seed_from_u64(1)).unwrap();
        let n = 10_000;
        let zeros = (0..n).filter(|_| random_policy(&mut st) == Some(0)).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((zeros - n as f64 / 2.0).abs() <= 3.0 * sigma, "{zeros}");
    }

    #[test]
    fn runs_are_deterministic() {
        let inst = make_budget_staged(6, 0).unwrap();
        for p in [
            Policy::greedy(),
            Policy::Random,
            Policy::Greedy { tie: TieBreak::Random },
        ] {
            let a = run_online(&inst, &p, 99).unwrap();
            let b = run_online(&inst, &p, 99).unwrap();
            assert_eq!(a, b);
        }
        let a = run_online(&inst, &Policy::greedy(), 1).unwrap();
        let b = run_online(&inst, &Policy::Random, 1).unwrap();
        assert_eq!(a.schedule, b.schedule);
    }

    #[test]
    fn trace_accounting() {
        let inst = make_budget_staged(5, 0).unwrap();
        let t = run_online(&inst, &Policy::Random, 4).unwrap();
        let mut sum = 0.0;
        for s in &t.steps {
            assert!(s.gain >= 0.0);
            sum += s.gain;
            assert!((s.welfare - sum).abs() < 1e-12);
        }
        assert!((t.welfare - sum).abs() < 1e-9);
        assert_eq!(
            t.items_per_agent().iter().sum::<u32>() as usize,
            t.steps.iter().filter(|s| s.agent.is_some()).count()
        );
        for s in &t.steps {
            if let Some(a) = s.agent {
                assert!(t.schedule.is_active(a, s.stage));
            }
        }
        let csv = t.to_csv();
        assert!(csv.starts_with("step,item,agent,gain,welfare\n"));
        assert_eq!(csv.lines().count(), t.steps.len() + 1);
    }

    #[test]
    fn lp_guidance_edges() {
        let v = BudgetAdditiveValuation::new(vec![1.0, 1.0], 2.0).unwrap();
        let vals = vec![v];
        let full = LpGuidance::new(vec![vec![1.0, 1.0]], vec![0.5, 0.5], 2).unwrap();
        let mut st = PolicyState::new(&vals, ChaCha8Rng::seed_from_u64(0)).unwrap();
        for _ in 0..100 {
            assert_eq!(lp_guided_policy(&mut st, 0, &full).unwrap(), Some(0));
        }
        let none = LpGuidance::new(vec![vec![0.0, 0.0]], vec![0.5, 0.5], 2).unwrap();
        for _ in 0..100 {
            assert_eq!(lp_guided_policy(&mut st, 1, &none).unwrap(), None);
        }
        assert!(LpGuidance::new(vec![vec![1.5, 0.0]], vec![0.5, 0.5], 2).is_err());
        assert!(LpGuidance::new(vec![vec![-0.5, 0.0]], vec![0.5, 0.5], 2).is_err());
    }

    #[test]
    fn bruteforce_values() {
        let inst = make_budget_block();
        let opt = offline_opt_bruteforce(&inst.agents, &[0, 1, 2], None, BRUTEFORCE_LIMIT).unwrap();
        assert_eq!(opt.welfare, 5.0);

        let base = make_cyclic_instance(make_planted_cover_system(2, 2, 2, 3).unwrap()).unwrap();
        let items: Vec<_> = (0..base.num_items()).collect();
        let opt = offline_opt_bruteforce(&base.valuations(), &items, None, BRUTEFORCE_LIMIT).unwrap();
        assert_eq!(opt.welfare, 8.0);

        let v = BudgetAdditiveValuation::new(vec![1.0, 2.0], 2.5).unwrap();
        let opt = offline_opt_bruteforce(&[v], &[0, 1, 1], None, BRUTEFORCE_LIMIT).unwrap();
        assert_eq!(opt.welfare, 2.5);

        let err = offline_opt_bruteforce(&inst.agents, &[0; 30], None, BRUTEFORCE_LIMIT).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn bruteforce_respects_activity() {
        let inst = make_budget_block();
        let mask = vec![vec![true, false]; 3];
        let opt = offline_opt_bruteforce(&inst.agents, &[0, 1, 2], Some(&mask), BRUTEFORCE_LIMIT).unwrap();
        assert_eq!(opt.welfare, 3.0);
        assert!(opt.allocation.bundles[1].is_empty());
    }
}
