use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use owm_core::algorithms::{self, offline_opt_for_run, BRUTEFORCE_LIMIT};
use owm_core::bounds::{
    budget_lp_for_instance, curve_csv, g_eval, harmonic_bound, no_case_value_bound, solve_lp, staged_upper_bound,
    stochastic_lp_build, NoCaseBoundParams, StochasticLpOptions,
};
use owm_core::harness::{run_experiment, ExperimentSpec, InstanceSpec, PolicyKind};
use owm_core::instances::{make_cyclic_instance, make_planted_cover_system, make_random_system, Arrival};
use owm_core::{Error, OnlineInstance, Result};

mod verify;

#[derive(Parser)]
#[command(
    name = "owm",
    version,
    about = "Online submodular welfare maximization: instances, policies, LP bounds and claim checks"
)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, env = "OWM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(short = 'o', long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for trials (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance as JSON.
    Gen(GenArgs),
    /// Run a policy on an instance (family name or JSON file).
    Run(RunArgs),
    /// Solve the LP relaxation of an instance.
    Lp(LpArgs),
    /// Evaluate analytic bounds.
    #[command(subcommand)]
    Bounds(BoundsCommand),
    /// Check claims; exits 1 if any verdict fails.
    Verify(VerifyArgs),
    /// Run an experiment preset or spec file.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    BudgetBlock,
    BudgetStaged,
    Staged,
    Iid,
    BlockIid,
    /// The offline cyclic-shift coverage instance (gen only).
    Offline,
}

#[derive(Args, Clone, Debug, Default)]
struct FamilyParams {
    /// Groups in the set system.
    #[arg(long)]
    k: Option<usize>,
    /// Sets per group (agents of the base instance).
    #[arg(long)]
    n: Option<usize>,
    /// Set size.
    #[arg(long)]
    s: Option<usize>,
    /// Stages or copies.
    #[arg(long)]
    t: Option<usize>,
    /// Number of i.i.d. draws (block-iid).
    #[arg(long)]
    draws: Option<usize>,
    /// Uniformly random set system instead of a planted cover.
    #[arg(long)]
    random: bool,
}

fn need(v: Option<usize>, flag: &str, family: &str) -> Result<usize> {
    v.ok_or_else(|| Error::Input(format!("{family} needs --{flag}")))
}

impl FamilyParams {
    fn spec(&self, family: Family) -> Result<InstanceSpec> {
        let name = family
            .to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default();
        let coverage = |t_required: bool| -> Result<(usize, usize, usize, usize)> {
            Ok((
                need(self.k, "k", &name)?,
                need(self.n, "n", &name)?,
                need(self.s, "s", &name)?,
                if t_required {
                    need(self.t, "t", &name)?
                } else {
                    self.t.unwrap_or(1)
                },
            ))
        };
        Ok(match family {
            Family::BudgetBlock => InstanceSpec::BudgetBlock,
            Family::BudgetStaged => InstanceSpec::BudgetStaged {
                t: need(self.t, "t", &name)?,
            },
            Family::Staged => {
                let (k, n, s, t) = coverage(true)?;
                InstanceSpec::Staged {
                    k,
                    n,
                    s,
                    t,
                    planted: !self.random,
                }
            }
            Family::Iid => {
                let (k, n, s, t) = coverage(true)?;
                InstanceSpec::Iid {
                    k,
                    n,
                    s,
                    t,
                    planted: !self.random,
                }
            }
            Family::BlockIid => InstanceSpec::BlockIid {
                draws: self.draws.unwrap_or(3),
            },
            Family::Offline => return Err(Error::Input("the offline family is not an online instance".into())),
        })
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    family: Family,
    #[command(flatten)]
    params: FamilyParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Greedy,
    GreedyRandomTies,
    Random,
    LpGuided,
    /// Exact offline optimum of the realized run.
    Bruteforce,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = PolicyArg::Greedy)]
    policy: PolicyArg,
    /// Family name (budget-block, budget-staged, staged, iid, block-iid) or instance JSON path.
    instance: String,
    #[command(flatten)]
    params: FamilyParams,
}

#[derive(Args)]
struct LpArgs {
    /// Family name or instance JSON path.
    instance: String,
    #[command(flatten)]
    params: FamilyParams,
    /// Largest multiset size for the stochastic LP (default: the draw count).
    #[arg(long)]
    size_cap: Option<usize>,
    /// Print the program in LP format instead of solving it.
    #[arg(long)]
    lp_text: bool,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// The staged upper-bound integral and discrete sum.
    StagedIntegral {
        #[arg(long, default_value_t = 1000)]
        t: u64,
    },
    /// m ln(t/(t-j)) and the exact harmonic sum.
    Harmonic {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        j: usize,
    },
    /// g at one point, or the g curve on [0, 3].
    G {
        #[arg(long)]
        x: Option<f64>,
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
    /// Raw and linearized NO-case value curves over ℓ ∈ [0, c0·k].
    NoCase {
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 3.0)]
        c0: f64,
        #[arg(long, default_value_t = 1000)]
        universe: usize,
        /// Tangent point (default k·ln 2).
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 31)]
        points: usize,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum, default_value_t = verify::Target::All)]
    target: verify::Target,
    #[arg(long, value_enum, default_value_t = verify::Scale::Desk)]
    scale: verify::Scale,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Preset name: budget-block, budget-staged, harmonic, iid-greedy.
    preset: Option<String>,
    /// Experiment spec JSON (instead of a preset).
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Also write the per-stage table as CSV here.
    #[arg(long)]
    stages_csv: Option<PathBuf>,
}

/// What a command produced and whether its checks passed.
struct Outcome {
    text: String,
    passed: bool,
}

impl From<String> for Outcome {
    fn from(text: String) -> Self {
        Self { text, passed: true }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn load_instance(arg: &str, params: &FamilyParams, seed: u64) -> Result<OnlineInstance> {
    if let Ok(family) = Family::from_str(arg, true) {
        return params.spec(family)?.build(seed);
    }
    let path = Path::new(arg);
    let text =
        fs::read_to_string(path).map_err(|e| Error::Input(format!("cannot read instance {}: {e}", path.display())))?;
    let inst: OnlineInstance = serde_json::from_str(&text)?;
    inst.validate()?;
    Ok(inst)
}

fn policy_kind(p: PolicyArg) -> Option<PolicyKind> {
    match p {
        PolicyArg::Greedy => Some(PolicyKind::Greedy),
        PolicyArg::GreedyRandomTies => Some(PolicyKind::GreedyRandomTies),
        PolicyArg::Random => Some(PolicyKind::Random),
        PolicyArg::LpGuided => Some(PolicyKind::LpGuided),
        PolicyArg::Bruteforce => None,
    }
}

fn gen(args: &GenArgs, cli: &Cli) -> Result<Outcome> {
    if cli.format == Format::Csv {
        return Err(Error::Input("instances are written as JSON; use --format json".into()));
    }
    if args.family == Family::Offline {
        let p = &args.params;
        let (k, n, s) = (
            need(p.k, "k", "offline")?,
            need(p.n, "n", "offline")?,
            need(p.s, "s", "offline")?,
        );
        let system = if p.random {
            make_random_system(k, n, s, k * s, cli.seed)?
        } else {
            make_planted_cover_system(k, n, s, cli.seed)?
        };
        return Ok(json(&make_cyclic_instance(system)?)?.into());
    }
    let inst = args.params.spec(args.family)?.build(cli.seed)?;
    Ok(json(&inst)?.into())
}

fn run(args: &RunArgs, cli: &Cli) -> Result<Outcome> {
    let inst = load_instance(&args.instance, &args.params, cli.seed)?;
    let Some(kind) = policy_kind(args.policy) else {
        let (schedule, arrivals) = algorithms::realize(&inst, cli.seed)?;
        let opt = offline_opt_for_run(&inst, &arrivals, &schedule, BRUTEFORCE_LIMIT)?;
        return Ok(match cli.format {
            Format::Text => format!("policy: bruteforce\nwelfare: {}\n", opt.welfare),
            Format::Json => json(&opt)?,
            Format::Csv => {
                let mut s = String::from("step,item,agent\n");
                for (c, (ev, who)) in arrivals.iter().zip(&opt.assignment).enumerate() {
                    let who = who.map(|a| a.to_string()).unwrap_or_default();
                    let _ = writeln!(s, "{c},{},{who}", ev.item);
                }
                s
            }
        }
        .into());
    };
    let policy = kind.resolve(&inst)?;
    let trace = algorithms::run_online(&inst, &policy, cli.seed)?;
    Ok(match cli.format {
        Format::Text => {
            let assigned = trace.steps.iter().filter(|s| s.agent.is_some()).count();
            format!(
                "policy: {}\nwelfare: {}\narrivals: {}\nassigned: {}\n",
                trace.policy,
                trace.welfare,
                trace.steps.len(),
                assigned
            )
        }
        Format::Json => json(&trace)?,
        Format::Csv => trace.to_csv(),
    }
    .into())
}

#[derive(Serialize)]
struct LpReport {
    kind: &'static str,
    status: owm_core::LpStatus,
    value: f64,
    variables: usize,
    constraints: usize,
    /// False when a size cap below the draw count was used.
    upper_bound: bool,
    pivots: usize,
    solution: Vec<f64>,
}

fn lp(args: &LpArgs, cli: &Cli) -> Result<Outcome> {
    let inst = load_instance(&args.instance, &args.params, cli.seed)?;
    let (kind, program, upper_bound) = match &inst.arrival {
        Arrival::Iid { probabilities, draws } => {
            let opts = StochasticLpOptions {
                size_cap: args.size_cap,
                ..Default::default()
            };
            let s = stochastic_lp_build(&inst.agents, *draws, probabilities, opts)?;
            let full = s.is_full();
            ("stochastic", s.lp, full)
        }
        Arrival::Staged { .. } => {
            let (schedule, arrivals) = algorithms::realize(&inst, cli.seed)?;
            ("budget", budget_lp_for_instance(&inst, &arrivals, &schedule)?.lp, true)
        }
    };
    if args.lp_text {
        return Ok(program.to_lp_text().into());
    }
    let sol = solve_lp(&program)?;
    let report = LpReport {
        kind,
        status: sol.status,
        value: sol.objective,
        variables: program.num_vars(),
        constraints: program.constraints.len(),
        upper_bound,
        pivots: sol.pivots,
        solution: sol.values,
    };
    Ok(match cli.format {
        Format::Text => format!(
            "value: {}\nstatus: {:?}\nkind: {}\nvariables: {}\nconstraints: {}\nupper_bound: {}\n",
            report.value, report.status, report.kind, report.variables, report.constraints, report.upper_bound
        ),
        Format::Json => json(&report)?,
        Format::Csv => {
            let points: Vec<(f64, f64)> = report
                .solution
                .iter()
                .enumerate()
                .map(|(j, &v)| (j as f64, v))
                .collect();
            curve_csv(&points)?
        }
    }
    .into())
}

fn key_values(format: Format, rows: &[(&str, String)]) -> Result<String> {
    Ok(match format {
        Format::Text => rows.iter().map(|(k, v)| format!("{k}: {v}\n")).collect(),
        Format::Json => {
            let map: serde_json::Map<String, serde_json::Value> = rows
                .iter()
                .map(|(k, v)| {
                    let value = v
                        .parse::<f64>()
                        .ok()
                        .and_then(serde_json::Number::from_f64)
                        .map(serde_json::Value::Number)
                        .or_else(|| v.parse::<bool>().ok().map(serde_json::Value::Bool))
                        .unwrap_or_else(|| serde_json::Value::String(v.clone()));
                    (k.to_string(), value)
                })
                .collect();
            json(&map)?
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in rows {
                w.write_record([*k, v.as_str()])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .map_err(|e| Error::Input(e.to_string()))?
        }
    })
}

fn bounds(cmd: &BoundsCommand, cli: &Cli) -> Result<Outcome> {
    let text = match *cmd {
        BoundsCommand::StagedIntegral { t } => {
            let b = staged_upper_bound(t)?;
            key_values(
                cli.format,
                &[
                    ("t", b.t.to_string()),
                    ("integral_closed_form", b.integral_closed_form.to_string()),
                    ("integral_quadrature", b.integral_quadrature.to_string()),
                    ("ratio", b.ratio.to_string()),
                    ("< 0.612", (b.ratio < 0.612).to_string()),
                    ("discrete_sum", b.discrete_sum.to_string()),
                    ("discrete_ratio", b.discrete_ratio.to_string()),
                ],
            )?
        }
        BoundsCommand::Harmonic { m, t, j } => {
            let h = harmonic_bound(m, t, j)?;
            key_values(
                cli.format,
                &[("bound", h.bound.to_string()), ("exact_sum", h.exact_sum.to_string())],
            )?
        }
        BoundsCommand::G { x: Some(x), .. } => {
            key_values(cli.format, &[("x", x.to_string()), ("g", g_eval(x)?.to_string())])?
        }
        BoundsCommand::G { x: None, points } => {
            let points = points.max(2);
            let curve = (0..points)
                .map(|i| {
                    let x = 3.0 * i as f64 / (points - 1) as f64;
                    Ok((x, g_eval(x)?))
                })
                .collect::<Result<Vec<_>>>()?;
            match cli.format {
                Format::Json => json(&curve)?,
                _ => curve_csv(&curve)?,
            }
        }
        BoundsCommand::NoCase {
            k,
            epsilon,
            c0,
            universe,
            mu,
            points,
        } => {
            let params = NoCaseBoundParams {
                k,
                epsilon,
                c0,
                universe_size: universe,
                mu: mu.unwrap_or(k as f64 * 2f64.ln()),
            };
            let points = points.max(2);
            let top = c0 * k as f64;
            let rows = (0..points)
                .map(|i| no_case_value_bound(&params, top * i as f64 / (points - 1) as f64))
                .collect::<Result<Vec<_>>>()?;
            match cli.format {
                Format::Json => json(&rows)?,
                _ => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                        .map_err(|e| Error::Input(e.to_string()))?
                }
            }
        }
    };
    Ok(text.into())
}

fn verify_cmd(args: &VerifyArgs, cli: &Cli) -> Result<Outcome> {
    let sections = verify::run(args.target, args.scale, cli.seed)?;
    let passed = sections.iter().flat_map(|s| &s.verdicts).all(|v| v.passed);
    let text = match cli.format {
        Format::Text => {
            let mut s = String::new();
            for sec in &sections {
                let _ = writeln!(s, "== {}", sec.name);
                for v in &sec.verdicts {
                    let _ = writeln!(s, "{}", v.line());
                }
            }
            let _ = writeln!(s, "overall: {}", if passed { "PASS" } else { "FAIL" });
            s
        }
        Format::Json => json(&sections)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "section",
                "claim",
                "inequality",
                "relation",
                "lhs",
                "rhs",
                "tolerance",
                "passed",
            ])?;
            for sec in &sections {
                for v in &sec.verdicts {
                    w.write_record([
                        sec.name.to_string(),
                        v.claim.clone(),
                        v.inequality.clone(),
                        v.relation.clone(),
                        v.lhs.to_string(),
                        v.rhs.to_string(),
                        v.tolerance.to_string(),
                        v.passed.to_string(),
                    ])?;
                }
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .map_err(|e| Error::Input(e.to_string()))?
        }
    };
    Ok(Outcome { text, passed })
}

fn experiment(args: &ExperimentArgs, cli: &Cli) -> Result<Outcome> {
    let mut spec = match (&args.preset, &args.spec) {
        (Some(name), None) => ExperimentSpec::preset(name, cli.seed)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read spec {}: {e}", path.display())))?;
            serde_json::from_str(&text)?
        }
        _ => return Err(Error::Input("give a preset name or --spec".into())),
    };
    if let Some(n) = args.trials {
        spec.trials = n;
    }
    if let Some(p) = args.policy {
        spec.policy = policy_kind(p).ok_or_else(|| Error::Input("bruteforce is not an online policy".into()))?;
    }
    let report = run_experiment(&spec)?;
    if let Some(path) = &args.stages_csv {
        fs::write(path, report.stages_csv()?)?;
    }
    let text = match cli.format {
        Format::Text => report.summary_text(),
        Format::Json => report.to_json()? + "\n",
        Format::Csv => report.trials_csv()?,
    };
    Ok(Outcome {
        text,
        passed: report.all_passed(),
    })
}

fn execute(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Input(format!("cannot start {n} threads: {e}")))?;
    }
    match &cli.command {
        Command::Gen(a) => gen(a, cli),
        Command::Run(a) => run(a, cli),
        Command::Lp(a) => lp(a, cli),
        Command::Bounds(c) => bounds(c, cli),
        Command::Verify(a) => verify_cmd(a, cli),
        Command::Experiment(a) => experiment(a, cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let written = match &cli.output {
        Some(path) => fs::write(path, &outcome.text),
        None => {
            print!("{}", outcome.text);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(2);
    }
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_documented_invocations() {
        let c = Cli::try_parse_from([
            "owm",
            "gen",
            "staged",
            "--k",
            "3",
            "--n",
            "3",
            "--s",
            "2",
            "--t",
            "5",
            "--seed",
            "1",
            "-o",
            "inst.json",
        ])
        .unwrap();
        assert!(matches!(c.command, Command::Gen(ref g) if g.family == Family::Staged && g.params.t == Some(5)));
        assert_eq!(c.seed, 1);
        let c = Cli::try_parse_from(["owm", "bounds", "staged-integral", "--t", "1000"]).unwrap();
        assert!(matches!(
            c.command,
            Command::Bounds(BoundsCommand::StagedIntegral { t: 1000 })
        ));
        assert!(Cli::try_parse_from(["owm", "run", "--bogus", "x"]).is_err());
        assert!(Cli::try_parse_from(["owm", "bounds", "harmonic", "--m", "x", "--t", "1", "--j", "0"]).is_err());
    }

    #[test]
    fn missing_family_parameter_is_an_input_error() {
        let p = FamilyParams::default();
        assert!(matches!(p.spec(Family::Staged), Err(Error::Input(_))));
        assert!(p.spec(Family::BudgetBlock).is_ok());
    }
}
