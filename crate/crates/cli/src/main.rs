use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use shtp_core::energymap::{write_map, MapError};
use shtp_core::mip::MipStatus;
use shtp_core::model::io::{read_instance, read_plan, status_label, write_instance_with, write_plan, FormatError};
use shtp_core::model::{verify_plan, ModelError, Node, Plan, ProblemInstance};
use shtp_core::oracle::{brute_force_oracle, OracleError};
use shtp_core::practical::{PracticalConfig, PracticalError};
use shtp_core::scenario::{generate_scenario, ScenarioConfig, ScenarioError, SpreadMode};
use shtp_core::simulate::{rollout, SimulateError};
use shtp_core::stochastic::{solve, CutForm, ModelKind, SolveOptions};
use shtp_core::suite::{run_experiment_suite, InstanceRecord, SuiteName, SuiteOptions};

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_TIME_LIMIT: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "shtp",
    version,
    about = "Teaming, routing and scheduling of heterogeneous vehicles under energy uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance.
    Gen(GenArgs),
    /// Solve an instance file under one model.
    Solve(SolveArgs),
    /// Run one of the experiment suites and write its CSV tables.
    Suite(SuiteArgs),
    /// Monte Carlo validation of a plan.
    Rollout(RolloutArgs),
    /// Exact optimum of a small instance by enumeration.
    Oracle(OracleArgs),
    /// Build and solve the map-based practical case.
    Practical(PracticalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Det,
    Ccp,
    Spr,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Det => ModelKind::Deterministic,
            Model::Ccp => ModelKind::Chance,
            Model::Spr => ModelKind::Recourse,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Spread {
    Stddev,
    Variance,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cut {
    Interior,
    FullRoute,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long = "n-v", default_value_t = 6)]
    n_vehicles: usize,
    #[arg(long = "n-m", default_value_t = 6)]
    n_tasks: usize,
    #[arg(long = "n-a", default_value_t = 2)]
    n_capabilities: usize,
    #[arg(long = "n-av", default_value_t = 2)]
    n_vehicle_types: usize,
    #[arg(long = "n-am", default_value_t = 3)]
    n_task_types: usize,
    /// Mean energy per unit distance.
    #[arg(long = "c-mu", default_value_t = 30.0)]
    cost_rate: f64,
    /// Spread coefficient per unit distance.
    #[arg(long = "c-sigma", default_value_t = 6.0)]
    spread: f64,
    #[arg(long, value_enum, default_value = "stddev")]
    spread_mode: Spread,
    /// Energy capacity of every vehicle.
    #[arg(long, default_value_t = 40_000.0)]
    capacity: f64,
    /// Chance-constraint confidence level.
    #[arg(long, default_value_t = 0.95)]
    beta: f64,
    /// Recourse penalty coefficient.
    #[arg(long = "c-g", default_value_t = 1.0)]
    recourse_penalty: f64,
    /// Time penalty coefficient.
    #[arg(long = "c-q", default_value_t = 1.0)]
    time_penalty: f64,
    #[arg(long, default_value_t = 1.0)]
    time_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    service_time: f64,
    /// Task region as xmin,xmax,ymin,ymax.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.0, 640.0, 0.0, 480.0])]
    region: Vec<f64>,
    /// Start/terminal region as xmin,xmax,ymin,ymax.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [310.0, 330.0, 230.0, 250.0])]
    depot_region: Vec<f64>,
}

impl ScenarioArgs {
    fn config(&self, seed: u64) -> ScenarioConfig {
        let quad = |v: &[f64]| [v[0], v[1], v[2], v[3]];
        ScenarioConfig {
            n_vehicles: self.n_vehicles,
            n_tasks: self.n_tasks,
            n_capabilities: self.n_capabilities,
            n_vehicle_types: self.n_vehicle_types,
            n_task_types: self.n_task_types,
            cost_rate: self.cost_rate,
            spread: self.spread,
            spread_mode: match self.spread_mode {
                Spread::Stddev => SpreadMode::StdDev,
                Spread::Variance => SpreadMode::Variance,
            },
            capacity: self.capacity,
            confidence: self.beta,
            recourse_penalty: self.recourse_penalty,
            time_penalty: self.time_penalty,
            time_rate: self.time_rate,
            service_time: self.service_time,
            seed,
            region: quad(&self.region),
            depot_region: quad(&self.depot_region),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum)]
    model: Model,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 500.0)]
    time_limit: f64,
    /// Edge set excluded by chance-constraint feasibility cuts.
    #[arg(long, value_enum, default_value = "interior")]
    cut_form: Cut,
    /// Plan output file.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    #[arg(value_parser = |s: &str| s.parse::<SuiteName>())]
    name: SuiteName,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 500.0)]
    time_limit: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Model::Det, Model::Ccp, Model::Spr])]
    models: Vec<Model>,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct RolloutArgs {
    instance: PathBuf,
    plan: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    /// Per-vehicle CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
    /// Model to enumerate; all three when omitted.
    #[arg(long, value_enum)]
    model: Option<Model>,
}

#[derive(Args)]
struct PracticalArgs {
    #[arg(long, default_value_t = 2021)]
    seed: u64,
    #[arg(long, default_value_t = 500.0)]
    time_limit: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Model::Ccp, Model::Spr])]
    models: Vec<Model>,
    #[arg(long, default_value = "results/practical")]
    out_dir: PathBuf,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn seconds(s: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(s)
        .map_err(|_| anyhow::anyhow!("time limit must be a non-negative number of seconds, got {s}"))
}

fn route_text(inst: &ProblemInstance, route: &[Node]) -> String {
    route
        .iter()
        .filter_map(|n| match *n {
            Node::Task(m) => Some(inst.tasks[m].name.as_str()),
            _ => None,
        })
        .collect::<Vec<_>>()
        .join(" -> ")
}

fn print_plan(inst: &ProblemInstance, plan: &Plan) {
    let o = &plan.objective;
    println!("energy      {:.3}", o.energy);
    println!("time        {:.3}", o.time);
    println!("recourse    {:.3}", o.recourse);
    println!("f           {:.3}", o.first_stage());
    println!("f + g       {:.3}", o.total());
    for (k, r) in plan.routes.iter().enumerate() {
        if !r.is_empty() {
            println!("{:>8}: {}", inst.vehicles[k].name, route_text(inst, r));
        }
    }
}

fn status_code(status: MipStatus) -> u8 {
    match status {
        MipStatus::Optimal => 0,
        MipStatus::Feasible => EXIT_TIME_LIMIT,
        MipStatus::Infeasible => EXIT_INFEASIBLE,
    }
}

fn cmd_gen(args: GenArgs) -> Result<u8> {
    let cfg = args.scenario.config(args.seed);
    let inst = generate_scenario(&cfg)?;
    let meta = BTreeMap::from([
        ("generator".to_owned(), "shtp gen".to_owned()),
        ("seed".to_owned(), args.seed.to_string()),
        ("spread".to_owned(), cfg.spread.to_string()),
        ("spread_mode".to_owned(), cfg.spread_mode.label().to_owned()),
    ]);
    let text = write_instance_with(&inst, &meta)?;
    match args.out {
        Some(p) => write_text(&p, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_solve(args: SolveArgs) -> Result<u8> {
    let inst = read_instance(&read_text(&args.instance)?)?;
    let model = ModelKind::from(args.model);
    let opts = SolveOptions {
        time_limit: Some(seconds(args.time_limit)?),
        cut_form: match args.cut_form {
            Cut::Interior => CutForm::Interior,
            Cut::FullRoute => CutForm::FullRoute,
        },
        ..SolveOptions::default()
    };
    let rep = solve(&inst, model, opts)?;
    let s = &rep.stats;
    println!(
        "model {model}: {} after {} nodes, {} callback cuts, {:.2}s",
        status_label(s.status),
        s.nodes,
        s.callback_cuts,
        s.elapsed.as_secs_f64()
    );
    if let Some(plan) = &rep.plan {
        print_plan(&inst, plan);
        if let Some(p) = &args.out {
            write_text(p, &write_plan(&inst, plan, Some(model.label()))?)?;
        }
    }
    Ok(status_code(s.status))
}

fn progress_line(r: &InstanceRecord) {
    let cell = |x: Option<f64>| x.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into());
    eprintln!(
        "  value={} seed={} {}: {} f={} f+g={} {:.2}s",
        r.value,
        r.seed,
        r.model,
        r.outcome.label(),
        cell(r.first_stage()),
        cell(r.total()),
        r.seconds
    );
}

fn cmd_suite(args: SuiteArgs) -> Result<u8> {
    let opts = SuiteOptions {
        instances: args.instances,
        first_seed: args.first_seed,
        time_limit: seconds(args.time_limit)?,
        models: args.models.iter().map(|&m| m.into()).collect(),
        base: args.scenario.config(args.first_seed),
        ..SuiteOptions::default()
    };
    if opts.instances == 0 {
        bail!(ValidationError("--instances must be at least 1".into()));
    }
    opts.base.validate()?;
    eprintln!("suite {}", args.name);
    let rep = run_experiment_suite(args.name, &opts, &mut progress_line)?;
    for p in rep.write(&args.out_dir)? {
        println!("{}", p.display());
    }
    let limited = rep.records.iter().any(|r| r.outcome.hit_limit());
    Ok(if limited { EXIT_TIME_LIMIT } else { 0 })
}

fn cmd_rollout(args: RolloutArgs) -> Result<u8> {
    let inst = read_instance(&read_text(&args.instance)?)?;
    let plan = read_plan(&inst, &read_text(&args.plan)?)?;
    let rep = rollout(&inst, &plan, args.samples, args.seed)?;
    println!("samples {} seed {}", rep.samples, rep.seed);
    println!(
        "energy   {:.3} +- {:.3} (analytic {:.3}, bias {:.3})",
        rep.energy.mean,
        rep.energy.std_error,
        rep.analytic_energy,
        rep.energy_bias()
    );
    println!(
        "recourse {:.3} +- {:.3} (analytic {:.3}, bias {:.3})",
        rep.recourse.mean,
        rep.recourse.std_error,
        rep.analytic_recourse,
        rep.recourse_bias()
    );
    println!("clamped draws {:.3e}", rep.clamped_fraction);
    for (k, v) in rep.vehicles.iter().enumerate() {
        if !plan.routes[k].is_empty() {
            println!(
                "{:>8}: failure rate {:.4} +- {:.4}",
                inst.vehicles[k].name, v.failure_rate.mean, v.failure_rate.std_error
            );
        }
    }
    if let Some(p) = &args.csv {
        write_text(p, &rep.to_csv())?;
    }
    Ok(0)
}

fn cmd_oracle(args: OracleArgs) -> Result<u8> {
    let inst = read_instance(&read_text(&args.instance)?)?;
    let models: Vec<ModelKind> = match args.model {
        Some(m) => vec![m.into()],
        None => ModelKind::ALL.to_vec(),
    };
    let mut code = 0;
    for m in models {
        let r = brute_force_oracle(&inst, m)?;
        match r.objective {
            Some(v) => println!("{m}: {v:.6} ({} combinations)", r.enumerated),
            None => {
                println!("{m}: infeasible ({} combinations)", r.enumerated);
                code = EXIT_INFEASIBLE;
            }
        }
    }
    Ok(code)
}

fn cmd_practical(args: PracticalArgs) -> Result<u8> {
    let opts = SuiteOptions {
        time_limit: seconds(args.time_limit)?,
        models: args.models.iter().map(|&m| m.into()).collect(),
        practical: PracticalConfig {
            seed: args.seed,
            ..PracticalConfig::default()
        },
        ..SuiteOptions::default()
    };
    eprintln!("practical case, seed {}", args.seed);
    let rep = run_experiment_suite(SuiteName::Practical, &opts, &mut progress_line)?;
    let outcome = rep.practical.as_ref().expect("practical suite");
    let inst = &outcome.case.instance;
    let dir = &args.out_dir;
    write_text(
        &dir.join("instance.toml"),
        &write_instance_with(inst, &BTreeMap::from([("seed".to_owned(), args.seed.to_string())]))?,
    )?;
    write_text(&dir.join("map.toml"), &write_map(&outcome.case.map)?)?;
    for r in &outcome.records {
        if let Some(plan) = &r.plan {
            verify_plan(inst, plan)?;
            write_text(
                &dir.join(format!("plan_{}.toml", r.model)),
                &write_plan(inst, plan, Some(r.model.label()))?,
            )?;
            println!("{}: {}", r.model, r.outcome.label());
            print_plan(inst, plan);
        }
    }
    for p in rep.write(dir)? {
        println!("{}", p.display());
    }
    let unmet: Vec<_> = outcome.team_replay().into_iter().filter(|t| !t.3).collect();
    if !unmet.is_empty() {
        bail!("{} teams fail their requirement on replay", unmet.len());
    }
    let limited = rep.records.iter().any(|r| r.outcome.hit_limit());
    let infeasible = rep.records.iter().any(|r| r.plan.is_none() && !r.outcome.hit_limit());
    Ok(if infeasible {
        EXIT_INFEASIBLE
    } else if limited {
        EXIT_TIME_LIMIT
    } else {
        0
    })
}

#[derive(Debug)]
struct ValidationError(String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<ValidationError>()
            || e.is::<FormatError>()
            || e.is::<ScenarioError>()
            || e.is::<ModelError>()
            || e.is::<MapError>()
            || e.is::<PracticalError>()
            || e.is::<OracleError>()
            || e.is::<SimulateError>()
    })
}

/// The error chain joined by `: `, skipping causes already quoted by
/// their parent's message.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for e in err.chain() {
        let msg = e.to_string();
        if last.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Suite(a) => cmd_suite(a),
        Command::Rollout(a) => cmd_rollout(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Practical(a) => cmd_practical(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(if is_validation(&e) {
                EXIT_VALIDATION
            } else {
                EXIT_FAILURE
            })
        }
    }
}
