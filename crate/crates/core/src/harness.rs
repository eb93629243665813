//! Seeded Monte Carlo experiments and claim checks.
//!
//! Every trial draws its seed from the master seed by a counter split, trials
//! run on the rayon pool and are merged in trial order, so a report depends
//! only on its spec.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    self, offline_opt_bruteforce, offline_opt_for_run, run_sequence, LpGuidance, Policy, RunTrace, TieBreak,
    BRUTEFORCE_LIMIT,
};
use crate::bounds::{
    budget_lp_for_instance, g_eval, harmonic_bound, solve_lp, staged_upper_bound, stochastic_lp_bound,
    StochasticLpOptions,
};
use crate::instances::{
    make_budget_block, make_budget_staged, make_cyclic_instance, make_iid_from, make_iid_instance,
    make_planted_cover_system, make_random_agents, make_random_system, make_staged_instance, Arrival, ArrivalEvent,
    OfflineCoverageInstance, OnlineInstance, Schedule,
};
use crate::stats::{trial_seed, Summary, Z_SCORE};
use crate::valuations::{AnyValuation, ItemMultiset, Valuation};
use crate::{Error, ItemId, Result};

/// Slack for exact (non-statistical) comparisons.
pub const EXACT_TOLERANCE: f64 = 1e-9;
/// Largest m^draws for which E[OPT] is computed by enumeration.
pub const EXHAUSTIVE_SEQUENCE_LIMIT: u128 = 100_000;

/// An auditable inequality: `lhs relation rhs` up to `tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub claim: String,
    pub inequality: String,
    /// `<=`, `>=` or `==`.
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Verdict {
    /// Passes iff lhs ≤ rhs + tolerance.
    pub fn at_most(
        claim: impl Into<String>,
        inequality: impl Into<String>,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            claim: claim.into(),
            inequality: inequality.into(),
            relation: "<=".into(),
            lhs,
            rhs,
            tolerance,
            passed: lhs <= rhs + tolerance,
        }
    }

    /// Passes iff lhs ≥ rhs − tolerance.
    pub fn at_least(
        claim: impl Into<String>,
        inequality: impl Into<String>,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            claim: claim.into(),
            inequality: inequality.into(),
            relation: ">=".into(),
            lhs,
            rhs,
            tolerance,
            passed: lhs >= rhs - tolerance,
        }
    }

    /// Passes iff |lhs − rhs| ≤ tolerance.
    pub fn equals(claim: impl Into<String>, inequality: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self {
            claim: claim.into(),
            inequality: inequality.into(),
            relation: "==".into(),
            lhs,
            rhs,
            tolerance,
            passed: (lhs - rhs).abs() <= tolerance,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {} ({} {} {} ± {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.claim,
            self.inequality,
            self.lhs,
            self.relation,
            self.rhs,
            self.tolerance
        )
    }
}

pub fn verdicts_csv(verdicts: &[Verdict]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for v in verdicts {
        w.serialize(v)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

fn default_true() -> bool {
    true
}

/// A named instance family with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InstanceSpec {
    BudgetBlock,
    BudgetStaged {
        t: usize,
    },
    /// Staged coverage instance over a planted (or uniformly random) set system.
    Staged {
        k: usize,
        n: usize,
        s: usize,
        t: usize,
        #[serde(default = "default_true")]
        planted: bool,
    },
    /// Replicated i.i.d. coverage instance.
    Iid {
        k: usize,
        n: usize,
        s: usize,
        t: usize,
        #[serde(default = "default_true")]
        planted: bool,
    },
    /// Budget-block valuations with uniform i.i.d. draws.
    BlockIid {
        draws: usize,
    },
}

impl InstanceSpec {
    pub fn base_instance(&self, seed: u64) -> Result<Option<OfflineCoverageInstance>> {
        let (k, n, s, planted) = match *self {
            InstanceSpec::Staged { k, n, s, planted, .. } | InstanceSpec::Iid { k, n, s, planted, .. } => {
                (k, n, s, planted)
            }
            _ => return Ok(None),
        };
        let system = if planted {
            make_planted_cover_system(k, n, s, seed)?
        } else {
            make_random_system(k, n, s, k * s, seed)?
        };
        Ok(Some(make_cyclic_instance(system)?))
    }

    pub fn build(&self, seed: u64) -> Result<OnlineInstance> {
        match *self {
            InstanceSpec::BudgetBlock => Ok(make_budget_block()),
            InstanceSpec::BudgetStaged { t } => make_budget_staged(t, seed),
            InstanceSpec::Staged { t, .. } => {
                let base = self.base_instance(seed)?.expect("coverage family");
                make_staged_instance(&base, t, seed)
            }
            InstanceSpec::Iid { t, .. } => {
                let base = self.base_instance(seed)?.expect("coverage family");
                let mut inst = make_iid_instance(&base, t)?;
                inst.meta.seed = Some(seed);
                Ok(inst)
            }
            InstanceSpec::BlockIid { draws } => {
                let block = make_budget_block();
                let mut inst = make_iid_from(block.agents, vec![1.0 / 3.0; 3], draws)?;
                inst.meta.family = "block-iid".into();
                Ok(inst)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Greedy,
    GreedyRandomTies,
    Random,
    /// Needs i.i.d. arrivals; guided by the full stochastic LP.
    LpGuided,
}

impl PolicyKind {
    pub fn resolve(self, inst: &OnlineInstance) -> Result<Policy> {
        Ok(match self {
            PolicyKind::Greedy => Policy::greedy(),
            PolicyKind::GreedyRandomTies => Policy::Greedy { tie: TieBreak::Random },
            PolicyKind::Random => Policy::Random,
            PolicyKind::LpGuided => {
                let Arrival::Iid { probabilities, draws } = &inst.arrival else {
                    return Err(Error::Precondition("the LP-guided policy needs i.i.d. arrivals".into()));
                };
                let bound = stochastic_lp_bound(&inst.agents, *draws, probabilities, StochasticLpOptions::default())?;
                Policy::LpGuided(LpGuidance::from_bound(&bound)?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    /// Per-trial brute-force offline optimum.
    BruteforceOpt,
    /// Budgeted-allocation LP of the first trial's realization.
    BudgetLp,
    /// Stochastic multiset LP at full size cap.
    StochasticLp,
    KnownValue {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum ClaimCheck {
    /// E[items to A_j] ≤ m·ln(t/(t−j)) + z·SE for j < t.
    HarmonicItems,
    /// mean welfare ≤ ratio·baseline + z·SE.
    RatioAtMost { ratio: f64 },
    /// mean welfare ≥ ratio·baseline − z·SE.
    RatioAtLeast { ratio: f64 },
    /// Σ_j V_j equals the welfare of every trial.
    StageAccounting,
    /// Budget-staged only: mean welfare ≤ Σ_{j=1}^t 2g(1.5·ln(t/(t−j))) + z·SE,
    /// the finite-t form of the 0.612 ceiling.
    StagedCeiling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub instance: InstanceSpec,
    #[serde(default)]
    pub policy: PolicyKind,
    pub trials: usize,
    pub seed: u64,
    pub baseline: Baseline,
    #[serde(default)]
    pub checks: Vec<ClaimCheck>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Input("need at least one trial".into()));
        }
        for c in &self.checks {
            if let ClaimCheck::RatioAtMost { ratio } | ClaimCheck::RatioAtLeast { ratio } = c {
                if !ratio.is_finite() {
                    return Err(Error::Input("ratio checks need a finite ratio".into()));
                }
            }
        }
        Ok(())
    }

    /// Named presets: `budget-block`, `budget-staged`, `harmonic`,
    /// `iid-greedy`.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        Ok(match name {
            "budget-block" => Self {
                instance: InstanceSpec::BudgetBlock,
                policy: PolicyKind::Greedy,
                trials: 1,
                seed,
                baseline: Baseline::BudgetLp,
                checks: vec![ClaimCheck::RatioAtLeast { ratio: 5.0 / 6.0 }],
            },
            "budget-staged" => Self {
                instance: InstanceSpec::BudgetStaged { t: 100 },
                policy: PolicyKind::Greedy,
                trials: 10_000,
                seed,
                baseline: Baseline::BudgetLp,
                checks: vec![
                    ClaimCheck::StagedCeiling,
                    ClaimCheck::HarmonicItems,
                    ClaimCheck::StageAccounting,
                ],
            },
            "harmonic" => {
                let instance = InstanceSpec::Staged {
                    k: 3,
                    n: 3,
                    s: 2,
                    t: 10,
                    planted: true,
                };
                Self {
                    instance,
                    policy: PolicyKind::Greedy,
                    trials: 10_000,
                    seed,
                    // YES-case optimum t·n·|U|
                    baseline: Baseline::KnownValue {
                        value: 10.0 * 3.0 * 6.0,
                    },
                    checks: vec![ClaimCheck::HarmonicItems, ClaimCheck::StageAccounting],
                }
            }
            "iid-greedy" => Self {
                instance: InstanceSpec::BlockIid { draws: 3 },
                policy: PolicyKind::Greedy,
                trials: 20_000,
                seed,
                baseline: Baseline::StochasticLp,
                checks: vec![ClaimCheck::RatioAtLeast {
                    ratio: 1.0 - (-1.0f64).exp(),
                }],
            },
            other => {
                return Err(Error::Input(format!(
                    "unknown preset {other:?}; expected one of {}",
                    Self::PRESETS.join(", ")
                )))
            }
        })
    }

    pub const PRESETS: [&'static str; 4] = ["budget-block", "budget-staged", "harmonic", "iid-greedy"];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub kind: String,
    pub value: f64,
    /// Standard error when the baseline is itself an average.
    pub se: Option<f64>,
}

/// Per-stage statistics over the agents A_j deactivated after stage j.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: usize,
    pub items_mean: f64,
    pub items_se: f64,
    /// V_j.
    pub value_mean: f64,
    pub value_se: f64,
    /// m·ln(t/(t−j)), absent for j = t.
    pub item_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub welfare: f64,
    pub opt: Option<f64>,
    /// Items held by A_j, j = 1..t.
    pub stage_items: Vec<f64>,
    /// Value held by A_j, j = 1..t.
    pub stage_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub policy: String,
    pub z: f64,
    pub summary: Summary,
    pub baseline: BaselineReport,
    pub ratio: f64,
    pub ratio_ci: [f64; 2],
    pub stages: Vec<StageStats>,
    pub verdicts: Vec<Verdict>,
    pub trials: Vec<TrialRecord>,
}

impl ExperimentReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// trial,seed,welfare,opt
    pub fn trials_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["trial", "seed", "welfare", "opt"])?;
        for t in &self.trials {
            w.write_record([
                t.trial.to_string(),
                t.seed.to_string(),
                t.welfare.to_string(),
                t.opt.map(|o| o.to_string()).unwrap_or_default(),
            ])?;
        }
        finish_csv(w)
    }

    /// stage,items_mean,items_se,value_mean,value_se,item_bound
    pub fn stages_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.stages {
            w.serialize(s)?;
        }
        if self.stages.is_empty() {
            w.write_record([
                "stage",
                "items_mean",
                "items_se",
                "value_mean",
                "value_se",
                "item_bound",
            ])?;
        }
        finish_csv(w)
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} on {}: N={} mean={:.6} se={:.6} baseline({})={:.6} ratio={:.6} [{:.6}, {:.6}]",
            self.policy,
            instance_label(&self.spec.instance),
            self.summary.n,
            self.summary.mean,
            self.summary.se,
            self.baseline.kind,
            self.baseline.value,
            self.ratio,
            self.ratio_ci[0],
            self.ratio_ci[1]
        );
        for v in &self.verdicts {
            let _ = writeln!(s, "{}", v.line());
        }
        s
    }
}

fn instance_label(spec: &InstanceSpec) -> String {
    serde_json::to_string(spec).unwrap_or_default()
}

fn stage_breakdown(inst: &OnlineInstance, trace: &RunTrace) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = trace.schedule.num_stages.max(1);
    let items = trace.items_per_agent();
    let values = trace.allocation.agent_values(&inst.agents)?;
    let mut stage_items = vec![0.0; t];
    let mut stage_values = vec![0.0; t];
    for (a, &last) in trace.schedule.last_active.iter().enumerate() {
        let j = last.clamp(1, t) - 1;
        stage_items[j] += items[a] as f64;
        stage_values[j] += values[a];
    }
    Ok((stage_items, stage_values))
}

fn run_trial(inst: &OnlineInstance, policy: &Policy, master: u64, trial: usize, want_opt: bool) -> Result<TrialRecord> {
    let seed = trial_seed(master, trial as u64);
    let trace = algorithms::run_online(inst, policy, seed)?;
    let opt = if want_opt {
        let arrivals: Vec<_> = trace
            .steps
            .iter()
            .map(|s| crate::instances::ArrivalEvent {
                stage: s.stage,
                item: s.item,
            })
            .collect();
        Some(offline_opt_for_run(inst, &arrivals, &trace.schedule, BRUTEFORCE_LIMIT)?.welfare)
    } else {
        None
    };
    let (stage_items, stage_values) = stage_breakdown(inst, &trace)?;
    Ok(TrialRecord {
        trial,
        seed,
        welfare: trace.welfare,
        opt,
        stage_items,
        stage_values,
    })
}

/// Runs `trials` seeded trials of `policy` on `inst` in parallel, in order.
pub fn run_trials(
    inst: &OnlineInstance,
    policy: &Policy,
    master: u64,
    trials: usize,
    want_opt: bool,
) -> Result<Vec<TrialRecord>> {
    inst.validate()?;
    (0..trials)
        .into_par_iter()
        .map(|i| run_trial(inst, policy, master, i, want_opt))
        .collect()
}

fn baseline_value(spec: &ExperimentSpec, inst: &OnlineInstance, records: &[TrialRecord]) -> Result<BaselineReport> {
    Ok(match &spec.baseline {
        Baseline::KnownValue { value } => BaselineReport {
            kind: "known_value".into(),
            value: *value,
            se: None,
        },
        Baseline::BruteforceOpt => {
            let opts: Vec<f64> = records.iter().map(|r| r.opt.unwrap_or(f64::NAN)).collect();
            let s = Summary::of(&opts);
            BaselineReport {
                kind: "bruteforce_opt".into(),
                value: s.mean,
                se: Some(s.se),
            }
        }
        Baseline::BudgetLp => {
            let (schedule, arrivals) = algorithms::realize(inst, trial_seed(spec.seed, 0))?;
            let lp = budget_lp_for_instance(inst, &arrivals, &schedule)?;
            BaselineReport {
                kind: "budget_lp".into(),
                value: solve_lp(&lp.lp)?.optimum()?,
                se: None,
            }
        }
        Baseline::StochasticLp => {
            let Arrival::Iid { probabilities, draws } = &inst.arrival else {
                return Err(Error::Precondition(
                    "the stochastic LP baseline needs i.i.d. arrivals".into(),
                ));
            };
            let b = stochastic_lp_bound(&inst.agents, *draws, probabilities, StochasticLpOptions::default())?;
            BaselineReport {
                kind: "stochastic_lp".into(),
                value: b.value,
                se: None,
            }
        }
    })
}

fn stage_stats(records: &[TrialRecord], items_per_stage: Option<usize>) -> Vec<StageStats> {
    let t = records.first().map_or(0, |r| r.stage_items.len());
    if t < 2 {
        return Vec::new();
    }
    (1..=t)
        .map(|j| {
            let items: Vec<f64> = records.iter().map(|r| r.stage_items[j - 1]).collect();
            let values: Vec<f64> = records.iter().map(|r| r.stage_values[j - 1]).collect();
            let si = Summary::of(&items);
            let sv = Summary::of(&values);
            StageStats {
                stage: j,
                items_mean: si.mean,
                items_se: si.se,
                value_mean: sv.mean,
                value_se: sv.se,
                item_bound: items_per_stage
                    .and_then(|m| harmonic_bound(m, t, j).ok())
                    .map(|h| h.bound),
            }
        })
        .collect()
}

fn items_per_stage(inst: &OnlineInstance) -> Option<usize> {
    match &inst.arrival {
        Arrival::Staged { stages } => {
            let m = stages.first()?.len();
            stages.iter().all(|s| s.len() == m).then_some(m)
        }
        Arrival::Iid { .. } => None,
    }
}

pub fn harmonic_verdicts(stages: &[StageStats], z: f64) -> Vec<Verdict> {
    stages
        .iter()
        .filter_map(|s| {
            let bound = s.item_bound?;
            Some(Verdict::at_most(
                format!("harmonic items j={}", s.stage),
                format!("E[items to A_{}] <= m ln(t/(t-j)) + {z} SE", s.stage),
                s.items_mean,
                bound,
                z * s.items_se,
            ))
        })
        .collect()
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let inst = spec.instance.build(spec.seed)?;
    let policy = spec.policy.resolve(&inst)?;
    let want_opt = spec.baseline == Baseline::BruteforceOpt;
    let records = run_trials(&inst, &policy, spec.seed, spec.trials, want_opt)?;
    let welfare: Vec<f64> = records.iter().map(|r| r.welfare).collect();
    let summary = Summary::of(&welfare);
    let baseline = baseline_value(spec, &inst, &records)?;
    let z = Z_SCORE;
    let ratio = summary.mean / baseline.value;
    let half = summary.half_width(z) / baseline.value;
    let stages = stage_stats(&records, items_per_stage(&inst));

    let mut verdicts = Vec::new();
    for check in &spec.checks {
        match check {
            ClaimCheck::HarmonicItems => {
                if stages.is_empty() {
                    return Err(Error::Precondition("harmonic check needs a staged instance".into()));
                }
                verdicts.extend(harmonic_verdicts(&stages, z));
            }
            ClaimCheck::RatioAtMost { ratio: r } => verdicts.push(Verdict::at_most(
                format!("welfare ratio at most {r}"),
                format!("mean welfare <= {r} * {} + {z} SE", baseline.kind),
                summary.mean,
                r * baseline.value,
                summary.half_width(z),
            )),
            ClaimCheck::RatioAtLeast { ratio: r } => verdicts.push(Verdict::at_least(
                format!("welfare ratio at least {r}"),
                format!("mean welfare >= {r} * {} - {z} SE", baseline.kind),
                summary.mean,
                r * baseline.value,
                summary.half_width(z),
            )),
            ClaimCheck::StagedCeiling => {
                if inst.meta.family != "budget-staged" {
                    return Err(Error::Precondition(
                        "the staged ceiling applies to budget-staged instances".into(),
                    ));
                }
                let bound = staged_upper_bound(inst.num_stages() as u64)?;
                verdicts.push(Verdict::at_most(
                    "staged welfare ceiling",
                    format!("mean welfare <= sum_j 2g(1.5 ln(t/(t-j))) + {z} SE"),
                    summary.mean,
                    bound.discrete_sum,
                    summary.half_width(z),
                ));
            }
            ClaimCheck::StageAccounting => {
                let worst = records
                    .iter()
                    .map(|r| (r.stage_values.iter().sum::<f64>() - r.welfare).abs())
                    .fold(0.0, f64::max);
                verdicts.push(Verdict::at_most(
                    "stage value accounting",
                    "max over trials |sum_j V_j - welfare| <= 1e-9",
                    worst,
                    0.0,
                    EXACT_TOLERANCE,
                ));
            }
        }
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        policy: policy.name().into(),
        z,
        summary,
        baseline,
        ratio,
        ratio_ci: [ratio - half, ratio + half],
        stages,
        verdicts,
        trials: records,
    })
}

/// Harmonic item check on the staged instance over `base`: for every
/// j < t, the mean number of items held by A_j is within z·SE of m·ln(t/(t−j)).
pub fn verify_harmonic_claim(
    base: &OfflineCoverageInstance,
    t: usize,
    policy: &Policy,
    trials: usize,
    seed: u64,
) -> Result<(Vec<StageStats>, Vec<Verdict>)> {
    if trials == 0 {
        return Err(Error::Input("need at least one trial".into()));
    }
    let inst = make_staged_instance(base, t, seed)?;
    let records = run_trials(&inst, policy, seed, trials, false)?;
    let stages = stage_stats(&records, Some(base.num_items()));
    let verdicts = harmonic_verdicts(&stages, Z_SCORE);
    Ok((stages, verdicts))
}

/// E[value] ≤ g(E[X]) + z·SE from paired samples of value and item count.
pub fn g_claim_verdict(values: &[f64], counts: &[f64]) -> Result<Verdict> {
    if values.is_empty() || values.len() != counts.len() {
        return Err(Error::Input("need equally many value and count samples".into()));
    }
    let v = Summary::of(values);
    let x = Summary::of(counts);
    Ok(Verdict::at_most(
        "value bounded by g(E[X])",
        format!("E[value] <= g(E[X]) + {Z_SCORE} SE"),
        v.mean,
        g_eval(x.mean)?,
        v.half_width(Z_SCORE),
    ))
}

/// E[value] ≤ g(E[items]) for `agent` (bids 2, budget 3) over seeded runs.
pub fn verify_g_claim(
    inst: &OnlineInstance,
    policy: &Policy,
    agent: usize,
    trials: usize,
    seed: u64,
) -> Result<Verdict> {
    match inst.agents.get(agent) {
        Some(AnyValuation::BudgetAdditive(b)) if b.budget() == 3.0 && b.bids().iter().all(|&x| x == 2.0) => {}
        Some(_) => {
            return Err(Error::Precondition(format!(
                "agent {agent} must bid 2 on every item with budget 3"
            )))
        }
        None => return Err(Error::Input(format!("agent {agent} out of range"))),
    }
    if trials == 0 {
        return Err(Error::Input("need at least one trial".into()));
    }
    inst.validate()?;
    let samples: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let trace = algorithms::run_online(inst, policy, trial_seed(seed, i as u64))?;
            let bundle = &trace.allocation.bundles[agent];
            Ok((inst.agents[agent].value(bundle)?, bundle.total() as f64))
        })
        .collect::<Result<_>>()?;
    let (values, counts): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    g_claim_verdict(&values, &counts)
}

/// Exact expected greedy gain Σ_j p_j·maxᵢ marginal(Tᵢ, j).
pub fn expected_greedy_gain<V: Valuation>(
    valuations: &[V],
    probabilities: &[f64],
    state: &[ItemMultiset],
) -> Result<f64> {
    let mut total = 0.0;
    for (j, &p) in probabilities.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut best = 0.0f64;
        for (v, t) in valuations.iter().zip(state) {
            best = best.max(v.marginal_gain(t, j)?);
        }
        total += p * best;
    }
    Ok(total)
}

/// Expected greedy gain ≥ (LP − welfare)/m at one state, against a known LP value.
pub fn greedy_step_verdict<V: Valuation>(
    valuations: &[V],
    probabilities: &[f64],
    draws: usize,
    lp_value: f64,
    state: &[ItemMultiset],
) -> Result<Verdict> {
    if state.len() != valuations.len() {
        return Err(Error::Input("state needs one bundle per agent".into()));
    }
    if draws == 0 {
        return Err(Error::Input("draw count must be positive".into()));
    }
    let gain = expected_greedy_gain(valuations, probabilities, state)?;
    let current: f64 = valuations
        .iter()
        .zip(state)
        .map(|(v, t)| v.value(t))
        .sum::<Result<f64>>()?;
    Ok(Verdict::at_least(
        "greedy step gain",
        "sum_j p_j max_i gain_i(T_i, j) >= (LP - sum_i w_i(T_i)) / m",
        gain,
        (lp_value - current) / draws as f64,
        EXACT_TOLERANCE,
    ))
}

pub fn verify_greedy_step<V: Valuation>(
    valuations: &[V],
    probabilities: &[f64],
    draws: usize,
    state: &[ItemMultiset],
) -> Result<Verdict> {
    let lp = stochastic_lp_bound(valuations, draws, probabilities, StochasticLpOptions::default())?;
    greedy_step_verdict(valuations, probabilities, draws, lp.value, state)
}

/// Every state greedy can reach after fewer than `draws` items (over all
/// item draws with p_j > 0 and all maximizing tie-breaks), each checked.
pub fn verify_greedy_reachable<V: Valuation>(
    valuations: &[V],
    probabilities: &[f64],
    draws: usize,
) -> Result<Vec<(Vec<ItemMultiset>, Verdict)>> {
    let lp = stochastic_lp_bound(valuations, draws, probabilities, StochasticLpOptions::default())?;
    let m = probabilities.len();
    let start: Vec<ItemMultiset> = vec![ItemMultiset::empty(m); valuations.len()];
    let mut seen: HashSet<Vec<ItemMultiset>> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    let mut out = Vec::new();
    while let Some((state, depth)) = queue.pop_front() {
        let verdict = greedy_step_verdict(valuations, probabilities, draws, lp.value, &state)?;
        out.push((state.clone(), verdict));
        if depth + 1 >= draws {
            continue;
        }
        for j in (0..m).filter(|&j| probabilities[j] > 0.0) {
            let gains: Vec<f64> = valuations
                .iter()
                .zip(&state)
                .map(|(v, t)| v.marginal_gain(t, j))
                .collect::<Result<_>>()?;
            let best = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (a, &g) in gains.iter().enumerate() {
                if (g - best).abs() <= 1e-12 * best.abs().max(1.0) {
                    let mut next = state.clone();
                    next[a].add(j)?;
                    if seen.insert(next.clone()) {
                        queue.push_back((next, depth + 1));
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMode {
    Exhaustive,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOpt {
    pub value: f64,
    /// Zero when exhaustive.
    pub se: f64,
    pub mode: OptMode,
}

fn multinomial_draws(m: usize, draws: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, left: usize, j: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if j + 1 == m {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in (0..=left).rev() {
            cur.push(c);
            rec(m, left - c, j + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(m, draws, 0, &mut Vec::new(), &mut out);
    }
    out
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// E[OPT] of an i.i.d. instance: exact over draw multisets when
/// m^draws ≤ 10⁵, otherwise the mean of `mc_trials` sampled optima.
pub fn expected_offline_opt(inst: &OnlineInstance, mc_trials: usize, seed: u64) -> Result<ExpectedOpt> {
    let Arrival::Iid { probabilities, draws } = &inst.arrival else {
        return Err(Error::Precondition("E[OPT] enumeration needs i.i.d. arrivals".into()));
    };
    inst.validate()?;
    let m = probabilities.len();
    let sequences = (m as u128).checked_pow(*draws as u32).unwrap_or(u128::MAX);
    if sequences <= EXHAUSTIVE_SEQUENCE_LIMIT {
        // OPT depends only on the multiset of draws
        let outcomes = multinomial_draws(m, *draws);
        let parts: Vec<f64> = outcomes
            .par_iter()
            .map(|counts| {
                let mut logp = ln_factorial(*draws);
                let mut items: Vec<ItemId> = Vec::with_capacity(*draws);
                for (j, &c) in counts.iter().enumerate() {
                    if c > 0 {
                        if probabilities[j] == 0.0 {
                            return Ok(0.0);
                        }
                        logp += c as f64 * probabilities[j].ln() - ln_factorial(c);
                        items.extend(std::iter::repeat_n(j, c));
                    }
                }
                let opt = offline_opt_bruteforce(&inst.agents, &items, None, BRUTEFORCE_LIMIT)?;
                Ok(logp.exp() * opt.welfare)
            })
            .collect::<Result<_>>()?;
        return Ok(ExpectedOpt {
            value: parts.iter().sum(),
            se: 0.0,
            mode: OptMode::Exhaustive,
        });
    }
    if mc_trials == 0 {
        return Err(Error::Input("Monte Carlo E[OPT] needs at least one trial".into()));
    }
    let opts: Vec<f64> = (0..mc_trials)
        .into_par_iter()
        .map(|i| {
            let (_, arrivals) = algorithms::realize(inst, trial_seed(seed, i as u64))?;
            let items: Vec<ItemId> = arrivals.iter().map(|e| e.item).collect();
            Ok(offline_opt_bruteforce(&inst.agents, &items, None, BRUTEFORCE_LIMIT)?.welfare)
        })
        .collect::<Result<_>>()?;
    let s = Summary::of(&opts);
    Ok(ExpectedOpt {
        value: s.mean,
        se: s.se,
        mode: OptMode::MonteCarlo,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidGreedyReport {
    pub summary: Summary,
    pub baseline: BaselineReport,
    /// Mean welfare after r items, r = 0..=draws.
    pub welfare_path: Vec<f64>,
    pub verdicts: Vec<Verdict>,
}

impl IidGreedyReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// (1−1/e) check on an i.i.d. instance: mean greedy welfare against
/// (1−1/e)·LP, plus the per-step recursion LP − W(r+1) ≤ (1 − 1/m)(LP − W(r)).
/// Falls back to E[OPT] when the LP is too large to build.
pub fn verify_iid_greedy_on(inst: &OnlineInstance, trials: usize, seed: u64) -> Result<IidGreedyReport> {
    let Arrival::Iid { probabilities, draws } = &inst.arrival else {
        return Err(Error::Precondition("needs i.i.d. arrivals".into()));
    };
    if trials == 0 {
        return Err(Error::Input("need at least one trial".into()));
    }
    let baseline = match stochastic_lp_bound(&inst.agents, *draws, probabilities, StochasticLpOptions::default()) {
        Ok(b) => BaselineReport {
            kind: "stochastic_lp".into(),
            value: b.value,
            se: None,
        },
        Err(Error::Resource { .. }) => {
            let e = expected_offline_opt(inst, trials.min(1000), seed)?;
            BaselineReport {
                kind: format!("expected_opt_{}", serde_json::to_value(e.mode)?.as_str().unwrap_or("")),
                value: e.value,
                se: Some(e.se),
            }
        }
        Err(e) => return Err(e),
    };
    inst.validate()?;
    let policy = Policy::greedy();
    let paths: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let trace = algorithms::run_online(inst, &policy, trial_seed(seed, i as u64))?;
            let mut path = Vec::with_capacity(trace.steps.len() + 1);
            path.push(0.0);
            path.extend(trace.steps.iter().map(|s| s.welfare));
            Ok(path)
        })
        .collect::<Result<_>>()?;
    let finals: Vec<f64> = paths.iter().map(|p| *p.last().unwrap_or(&0.0)).collect();
    let summary = Summary::of(&finals);
    let ratio = 1.0 - (-1.0f64).exp();
    let mut verdicts = vec![Verdict::at_least(
        "greedy (1-1/e)-competitive",
        format!("mean greedy welfare >= (1-1/e) * {} - {Z_SCORE} SE", baseline.kind),
        summary.mean,
        ratio * baseline.value,
        summary.half_width(Z_SCORE),
    )];
    let mf = *draws as f64;
    let lp = baseline.value;
    let welfare_path: Vec<f64> = (0..=*draws)
        .map(|r| paths.iter().map(|p| p[r]).sum::<f64>() / trials as f64)
        .collect();
    for r in 0..*draws {
        // d = (LP − W_r)(1 − 1/m) − (LP − W_{r+1}) per trial; its SE drives the slack
        let d: Vec<f64> = paths
            .iter()
            .map(|p| (1.0 - 1.0 / mf) * (lp - p[r]) - (lp - p[r + 1]))
            .collect();
        let sd = Summary::of(&d);
        verdicts.push(Verdict::at_most(
            format!("welfare recursion step {r}"),
            format!("LP - W({}) <= (1 - 1/m)(LP - W({r})) + {Z_SCORE} SE", r + 1),
            lp - welfare_path[r + 1],
            (1.0 - 1.0 / mf) * (lp - welfare_path[r]),
            sd.half_width(Z_SCORE),
        ));
    }
    Ok(IidGreedyReport {
        summary,
        baseline,
        welfare_path,
        verdicts,
    })
}

/// [`verify_iid_greedy_on`] for the replicated instance I^[t] over `base`.
pub fn verify_iid_greedy(
    base: &OfflineCoverageInstance,
    t: usize,
    trials: usize,
    seed: u64,
) -> Result<IidGreedyReport> {
    verify_iid_greedy_on(&make_iid_instance(base, t)?, trials, seed)
}

fn all_active(n: usize) -> Schedule {
    Schedule {
        num_stages: 1,
        last_active: vec![1; n],
    }
}

/// Smallest greedy/OPT ratio over every arrival order of `instances` random
/// instances with m ≤ 6 items and n ≤ 3 agents.
pub fn greedy_half_min_ratio(instances: usize, seed: u64) -> Result<(f64, usize)> {
    let per: Vec<(f64, usize)> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let m = rng.gen_range(1..=6usize);
            let n = rng.gen_range(1..=3usize);
            let agents = make_random_agents(n, m, s)?;
            let items: Vec<usize> = (0..m).collect();
            let opt = offline_opt_bruteforce(&agents, &items, None, BRUTEFORCE_LIMIT)?.welfare;
            let mut worst = f64::INFINITY;
            let mut orders = 0;
            for order in items.iter().copied().permutations(m) {
                let events: Vec<ArrivalEvent> = order.iter().map(|&item| ArrivalEvent { stage: 1, item }).collect();
                let w = run_sequence(
                    &agents,
                    &events,
                    &all_active(n),
                    &Policy::greedy(),
                    ChaCha8Rng::seed_from_u64(0),
                )?
                .welfare;
                orders += 1;
                if opt > 0.0 {
                    worst = worst.min(w / opt);
                }
            }
            Ok((if worst.is_finite() { worst } else { 1.0 }, orders))
        })
        .collect::<Result<_>>()?;
    let min = per.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    Ok((min, per.iter().map(|p| p.1).sum()))
}

/// Worst LP − E[OPT] over random i.i.d. instances with m ≤ 4, draws ≤ 4.
pub fn lp_dominance_worst_gap(instances: usize, seed: u64) -> Result<f64> {
    let gaps: Vec<f64> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let m = rng.gen_range(1..=4usize);
            let draws = rng.gen_range(1..=4usize);
            let n = rng.gen_range(1..=3usize);
            let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let inst = make_iid_from(make_random_agents(n, m, s)?, p.clone(), draws)?;
            let lp = stochastic_lp_bound(&inst.agents, draws, &p, StochasticLpOptions::default())?;
            let opt = expected_offline_opt(&inst, 0, s)?;
            Ok(lp.value - opt.value)
        })
        .collect::<Result<_>>()?;
    Ok(gaps.into_iter().fold(f64::INFINITY, f64::min))
}
