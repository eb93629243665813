//! Claim checks behind `owm verify`.

use clap::ValueEnum;
use serde::Serialize;

use owm_core::algorithms::{self, offline_opt_bruteforce, Policy, BRUTEFORCE_LIMIT};
use owm_core::bounds::{budget_lp_for_instance, solve_lp, staged_upper_bound};
use owm_core::harness::{
    greedy_half_min_ratio, harmonic_verdicts, lp_dominance_worst_gap, run_trials, verify_greedy_reachable,
    verify_harmonic_claim, verify_iid_greedy_on, InstanceSpec, Verdict, EXACT_TOLERANCE,
};
use owm_core::instances::{
    make_budget_block, make_budget_staged, make_cyclic_instance, make_planted_cover_system, make_staged_instance,
    staged_yes_assignment,
};
use owm_core::stats::{trial_seed, Summary, Z_SCORE};
use owm_core::valuations::check::check_property;
use owm_core::valuations::{cap_extension, CoverageValuation, PropertyKind, TabularValuation};
use owm_core::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    All,
    Block,
    StagedLp,
    StagedIntegral,
    Harmonic,
    YesOpt,
    GreedyHalf,
    IidGreedy,
    LpDominance,
    Dr,
    BudgetStaged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// Trial counts used for the published checks.
    Desk,
    /// A tenth of the trials, for smoke runs.
    Quick,
}

impl Scale {
    fn trials(self, desk: usize) -> usize {
        match self {
            Scale::Desk => desk,
            Scale::Quick => (desk / 10).max(1),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Section {
    pub name: &'static str,
    pub verdicts: Vec<Verdict>,
}

pub fn run(target: Target, scale: Scale, seed: u64) -> Result<Vec<Section>> {
    let all = [
        (Target::Block, "block"),
        (Target::StagedLp, "staged-lp"),
        (Target::StagedIntegral, "staged-integral"),
        (Target::Harmonic, "harmonic"),
        (Target::YesOpt, "yes-opt"),
        (Target::GreedyHalf, "greedy-half"),
        (Target::IidGreedy, "iid-greedy"),
        (Target::LpDominance, "lp-dominance"),
        (Target::Dr, "dr"),
        (Target::BudgetStaged, "budget-staged"),
    ];
    all.iter()
        .filter(|(t, _)| target == Target::All || target == *t)
        .map(|&(t, name)| {
            let verdicts = match t {
                Target::Block => block()?,
                Target::StagedLp => staged_lp(seed)?,
                Target::StagedIntegral => staged_integral()?,
                Target::Harmonic => harmonic(scale, seed)?,
                Target::YesOpt => yes_opt(seed)?,
                Target::GreedyHalf => greedy_half(scale, seed)?,
                Target::IidGreedy => iid_greedy(scale, seed)?,
                Target::LpDominance => lp_dominance(scale, seed)?,
                Target::Dr => dr()?,
                Target::BudgetStaged => budget_staged(scale, seed)?,
                Target::All => unreachable!(),
            };
            Ok(Section { name, verdicts })
        })
        .collect()
}

fn block() -> Result<Vec<Verdict>> {
    let inst = make_budget_block();
    let (schedule, arrivals) = algorithms::realize(&inst, 0)?;
    let lp = solve_lp(&budget_lp_for_instance(&inst, &arrivals, &schedule)?.lp)?.optimum()?;
    let opt = offline_opt_bruteforce(&inst.agents, &[0, 1, 2], None, BRUTEFORCE_LIMIT)?.welfare;
    let greedy = algorithms::run_online(&inst, &Policy::greedy(), 0)?.welfare;
    Ok(vec![
        Verdict::equals("budget block LP", "LP = 6", lp, 6.0, EXACT_TOLERANCE),
        Verdict::equals("budget block optimum", "OPT = 5", opt, 5.0, 0.0),
        Verdict::equals("budget block greedy", "greedy = 5", greedy, 5.0, 0.0),
    ])
}

fn staged_lp(seed: u64) -> Result<Vec<Verdict>> {
    [1usize, 5, 100]
        .iter()
        .map(|&t| {
            let inst = make_budget_staged(t, seed)?;
            let (schedule, arrivals) = algorithms::realize(&inst, seed)?;
            let lp = solve_lp(&budget_lp_for_instance(&inst, &arrivals, &schedule)?.lp)?.optimum()?;
            Ok(Verdict::equals(
                format!("staged budget LP t={t}"),
                "LP = 2 budgets per pair * 3 * t = 6t",
                lp,
                6.0 * t as f64,
                1e-7,
            ))
        })
        .collect()
}

fn staged_integral() -> Result<Vec<Verdict>> {
    let b = staged_upper_bound(1)?;
    let big = staged_upper_bound(10_000)?;
    Ok(vec![
        Verdict::equals(
            "staged integral quadrature",
            "quadrature = 3 - 1.5(e^(-2/3) + e^(-4/3))",
            b.integral_quadrature,
            b.integral_closed_form,
            1e-9,
        ),
        Verdict::at_most("staged ratio", "integral / 3 < 0.612", b.ratio, 0.612, 0.0),
        Verdict::equals(
            "discrete staged sum",
            "sum_j 2g(1.5 ln(t/(t-j))) / 6t at t=10^4 within 0.02 of the ratio",
            big.discrete_ratio,
            b.ratio,
            0.02,
        ),
    ])
}

fn harmonic(scale: Scale, seed: u64) -> Result<Vec<Verdict>> {
    let base = make_cyclic_instance(make_planted_cover_system(3, 3, 2, seed)?)?;
    let n = scale.trials(10_000);
    let mut out = Vec::new();
    for policy in [Policy::greedy(), Policy::Random] {
        let (_, verdicts) = verify_harmonic_claim(&base, 10, &policy, n, seed)?;
        out.extend(verdicts.into_iter().map(|mut v| {
            v.claim = format!("{} ({})", v.claim, policy.name());
            v
        }));
    }
    Ok(out)
}

fn yes_opt(seed: u64) -> Result<Vec<Verdict>> {
    let base = make_cyclic_instance(make_planted_cover_system(4, 5, 3, seed)?)?;
    let inst = make_staged_instance(&base, 3, seed)?;
    (0..5u64)
        .map(|i| {
            let (schedule, arrivals) = algorithms::realize(&inst, trial_seed(seed, i))?;
            let assignment = staged_yes_assignment(&base, &arrivals, &schedule)?;
            let welfare = inst
                .evaluate_assignment(&arrivals, &schedule, &assignment)?
                .welfare(&inst.agents)?;
            Ok(Verdict::equals(
                format!("YES staged optimum, schedule {i}"),
                "welfare of staged YES allocation = t n |U| = 180",
                welfare,
                180.0,
                0.0,
            ))
        })
        .collect()
}

fn greedy_half(scale: Scale, seed: u64) -> Result<Vec<Verdict>> {
    let instances = match scale {
        Scale::Desk => 100,
        Scale::Quick => 20,
    };
    let (min, orders) = greedy_half_min_ratio(instances, seed)?;
    Ok(vec![Verdict::at_least(
        format!("greedy 1/2-competitive ({instances} instances, {orders} orders)"),
        "min greedy / OPT >= 0.5",
        min,
        0.5,
        EXACT_TOLERANCE,
    )])
}

fn iid_greedy(scale: Scale, seed: u64) -> Result<Vec<Verdict>> {
    let inst = InstanceSpec::BlockIid { draws: 3 }.build(seed)?;
    let mut out = verify_iid_greedy_on(&inst, scale.trials(20_000), seed)?.verdicts;
    let states = verify_greedy_reachable(&inst.agents, &[1.0 / 3.0; 3], 3)?;
    let worst = states.iter().map(|(_, v)| v.lhs - v.rhs).fold(f64::INFINITY, f64::min);
    out.push(Verdict::at_least(
        format!("greedy step gain over {} reachable states", states.len()),
        "min over states of gain - (LP - welfare)/m >= 0",
        worst,
        0.0,
        EXACT_TOLERANCE,
    ));
    Ok(out)
}

fn lp_dominance(scale: Scale, seed: u64) -> Result<Vec<Verdict>> {
    let instances = match scale {
        Scale::Desk => 200,
        Scale::Quick => 40,
    };
    let worst = lp_dominance_worst_gap(instances, seed)?;
    Ok(vec![Verdict::at_least(
        format!("stochastic LP dominates E[OPT] ({instances} instances)"),
        "min over instances of LP - E[OPT] >= 0",
        worst,
        0.0,
        1e-7,
    )])
}

fn dr() -> Result<Vec<Verdict>> {
    let cov = CoverageValuation::new(4, vec![vec![0, 1], vec![1, 2], vec![2, 3]])?;
    let ext = cap_extension(cov);
    let mut out = Vec::new();
    for p in PropertyKind::ALL {
        let w = check_property(&ext, &[2, 2, 2], p)?;
        out.push(Verdict::equals(
            format!("cap-extended coverage {p:?}"),
            format!("{} holds on [0,2]^3", p.inequality()),
            w.holds as u8 as f64,
            1.0,
            0.0,
        ));
    }
    let sq = TabularValuation::from_fn(vec![5], |x| (x.count(0) as f64).powi(2))?;
    let lat = check_property(&sq, &[5], PropertyKind::LatticeSubmodular)?;
    out.push(Verdict::equals(
        "x^2 lattice submodular",
        "lattice inequality holds on [0,5]",
        lat.holds as u8 as f64,
        1.0,
        0.0,
    ));
    let dr = check_property(&sq, &[5], PropertyKind::DiminishingReturns)?;
    let reproduced = !dr.holds && dr.reverify(&sq)?;
    out.push(Verdict::equals(
        "x^2 fails diminishing returns",
        "violation found and re-verified",
        reproduced as u8 as f64,
        1.0,
        0.0,
    ));
    Ok(out)
}

fn budget_staged(scale: Scale, seed: u64) -> Result<Vec<Verdict>> {
    let t = 100;
    let inst = make_budget_staged(t, seed)?;
    let (schedule, arrivals) = algorithms::realize(&inst, seed)?;
    let lp = solve_lp(&budget_lp_for_instance(&inst, &arrivals, &schedule)?.lp)?.optimum()?;
    let ceiling = staged_upper_bound(t as u64)?.discrete_sum;
    let n = scale.trials(10_000);
    let mut out = vec![Verdict::equals("budget staged LP", "LP = 6t", lp, 6.0 * t as f64, 1e-7)];
    for policy in [Policy::greedy(), Policy::Random] {
        let records = run_trials(&inst, &policy, seed, n, false)?;
        let welfare = Summary::of(&records.iter().map(|r| r.welfare).collect::<Vec<_>>());
        out.push(Verdict::at_most(
            format!("budget staged ceiling ({})", policy.name()),
            format!("mean welfare <= sum_j 2g(1.5 ln(t/(t-j))) + {Z_SCORE} SE"),
            welfare.mean,
            ceiling,
            welfare.half_width(Z_SCORE),
        ));
        let stages: Vec<_> = (1..=t)
            .map(|j| {
                let items: Vec<f64> = records.iter().map(|r| r.stage_items[j - 1]).collect();
                let s = Summary::of(&items);
                owm_core::harness::StageStats {
                    stage: j,
                    items_mean: s.mean,
                    items_se: s.se,
                    value_mean: 0.0,
                    value_se: 0.0,
                    item_bound: owm_core::bounds::harmonic_bound(3, t, j).ok().map(|h| h.bound),
                }
            })
            .collect();
        let pairs = harmonic_verdicts(&stages, Z_SCORE);
        let failed = pairs.iter().filter(|v| !v.passed).count();
        let worst = pairs
            .iter()
            .map(|v| v.lhs - v.rhs - v.tolerance)
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(Verdict::at_most(
            format!(
                "pair item counts ({}, {} of {} stages fail)",
                policy.name(),
                failed,
                pairs.len()
            ),
            format!("max_j E[X1_j + X2_j] - 3 ln(t/(t-j)) - {Z_SCORE} SE <= 0"),
            worst,
            0.0,
            0.0,
        ));
    }
    Ok(out)
}
