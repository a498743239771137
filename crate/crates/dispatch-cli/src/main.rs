//! `dispatch` - experiment harness for the mine haulage simulator.
//!
//! Exit codes: 0 on success, 1 on validation/configuration errors, 2 on
//! runtime errors. `DISPATCH_THREADS` caps run concurrency.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dispatch_core::baselines::HeuristicConfig;
use dispatch_core::experiment::{
    run_experiment, ConstraintFamily, ExperimentError, PlannerKind, SweepSpec,
};
use dispatch_core::model::validate_scenario;
use dispatch_core::scenario::{load_scenario, save_scenario, reference_scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "dispatch", version, about = "Mine haulage dispatch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep of receding-horizon dispatch experiments.
    Run(RunArgs),
    /// Validate a scenario file and report every violated invariant.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Write the bundled reference scenario to a file.
    Init {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstraintArg {
    None,
    Battery,
    Tyre,
    CapacityRatio,
    /// Reserved; no model is specified in the source material.
    Window,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerArg {
    FastCon,
    FastHc,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    constraint: ConstraintArg,
    #[arg(long, value_enum, default_value = "fast-con")]
    planner: PlannerArg,
    /// Horizon factors f_hz (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    fhz: Vec<f64>,
    /// Halftime factors f_hf (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    fhf: Vec<f64>,
    /// MCTS iterations per decision.
    #[arg(long, default_value_t = 10_000)]
    iterations: u32,
    #[arg(long, default_value_t = 15)]
    replications: u32,
    /// Run length in seconds.
    #[arg(long, default_value_t = 86_400.0)]
    duration: f64,
    /// Reward discretization step in seconds.
    #[arg(long, default_value_t = 600.0)]
    dt: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Longest duration to observe reward, seconds (defaults per constraint:
    /// battery 7 h, tyre 4 h, capacity-ratio and none 1 h).
    #[arg(long)]
    dr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Scale on the UCB exploration constant (effective c = scale * sqrt(2)).
    #[arg(long, default_value_t = 1.0)]
    exploration: f64,
    /// Export a per-run activity trace CSV.
    #[arg(long)]
    trace: bool,
    /// Export per-decision search statistics (JSON lines).
    #[arg(long)]
    search_stats: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { scenario } => validate(scenario),
        Command::Init { out } => init(out),
    }
}

fn validate(path: PathBuf) -> ExitCode {
    let config = match load_scenario(&path) {
        Ok(config) => config,
        Err(err) => return scenario_failure(err),
    };
    let report = validate_scenario(&config);
    if report.is_empty() {
        println!("scenario ok: {} trucks, {} tasks, {} locations",
            config.trucks.len(), config.tasks.len(), config.network.locations.len());
        ExitCode::SUCCESS
    } else {
        eprintln!("scenario invalid:\n{report}");
        ExitCode::from(1)
    }
}

fn init(out: PathBuf) -> ExitCode {
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            let _ = std::fs::create_dir_all(parent);
        }
    }
    match save_scenario(&reference_scenario(), &out) {
        Ok(()) => {
            println!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(err) => scenario_failure(err),
    }
}

fn scenario_failure(err: ScenarioError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(1)
}

fn run(args: RunArgs) -> ExitCode {
    let family = match args.constraint {
        ConstraintArg::None => ConstraintFamily::None,
        ConstraintArg::Battery => ConstraintFamily::Battery,
        ConstraintArg::Tyre => ConstraintFamily::Tyre,
        ConstraintArg::CapacityRatio => ConstraintFamily::CapacityRatio,
        ConstraintArg::Window => {
            eprintln!("error: constraint `window` is unimplemented: no model specified in source");
            return ExitCode::from(1);
        }
    };
    let planner = match args.planner {
        PlannerArg::FastCon => PlannerKind::FastCon,
        PlannerArg::FastHc => PlannerKind::FastHc,
    };
    let config = match load_scenario(&args.scenario) {
        Ok(config) => config,
        Err(err) => return scenario_failure(err),
    };
    let sweep = SweepSpec {
        d_r: args.dr.unwrap_or_else(|| family.default_d_r()),
        f_hz: args.fhz.clone(),
        f_hf: args.fhf.clone(),
        replications: args.replications,
        base_seed: args.seed,
        duration: args.duration,
        iterations: args.iterations,
        dt: args.dt,
        exploration_scale: args.exploration,
    };

    let outcomes = match run_experiment(
        &config,
        family,
        planner,
        &sweep,
        &HeuristicConfig::default(),
        args.trace,
        args.search_stats,
        &args.out,
    ) {
        Ok(outcomes) => outcomes,
        Err(err @ (ExperimentError::InvalidSweep(_)
        | ExperimentError::Validation(_)
        | ExperimentError::Baseline(_))) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
        Err(err) => {
            eprintln!("runtime error: {err}");
            return ExitCode::from(2);
        }
    };

    println!(
        "{} runs ({} x {} cells x {} replications) -> {}",
        outcomes.len(),
        sweep.f_hz.len(),
        sweep.f_hf.len(),
        sweep.replications,
        args.out.display()
    );
    for outcome in &outcomes {
        let k = &outcome.kpi;
        println!(
            "  fhz={} fhf={} rep={} seed={} score={:.1} moved={:.0}t queue={:.0}s violations(batt/bin/tyre)={}/{}/{}",
            k.f_hz,
            k.f_hf,
            k.replication,
            k.seed,
            k.score,
            k.material_moved,
            k.queuing_time,
            k.battery_violations,
            k.bin_below_min_events,
            k.tyre_hard_crossings,
        );
    }
    ExitCode::SUCCESS
}
