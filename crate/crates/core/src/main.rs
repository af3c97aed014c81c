use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alloc_bandit::harness::{self, presets, run_experiment_with, ExperimentConfig};
use alloc_bandit::init::init_stats;
use alloc_bandit::io::atomic_write;
use alloc_bandit::{run_episode, run_modified, Executor, PolicyOptions, ProblemInstance, Weighting};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

const THREADS_VAR: &str = "ALLOC_BANDIT_THREADS";

#[derive(Parser)]
#[command(name = "alloc-bandit", version, about = "Optimistic resource allocation under a unit budget")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one episode and write its per-step trace.
    Run(RunArgs),
    /// Run a replicated experiment from a config file or preset.
    Experiment(ExperimentArgs),
    /// Worst-case regret over the adversarial instance family.
    Minimax(MinimaxArgs),
    /// Monte-Carlo statistics of the halving initializer.
    InitStats(InitStatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Weighted,
    Unweighted,
}

impl From<Mode> for Weighting {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Weighted => Weighting::Weighted,
            Mode::Unweighted => Weighting::Unweighted,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Instance document: {"nus": [...], "horizon": n, "seed": s}.
    #[arg(long, conflicts_with = "nus")]
    config: Option<PathBuf>,
    /// Job difficulties; `inf` marks an unbounded job.
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    nus: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "weighted")]
    mode: Mode,
    /// Known initial lower bounds; omit to self-initialize.
    #[arg(long, value_delimiter = ',')]
    lower_bounds: Option<Vec<f64>>,
    /// Overrides the default confidence level (nK)^-2.
    #[arg(long)]
    delta: Option<f64>,
    /// Trace CSV; metadata goes to the same path with `.meta.json` appended.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append per-job interval columns L_k, U_k to the trace.
    #[arg(long)]
    snapshot_intervals: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML or JSON experiment config.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in layout: tl, tr, bl or br.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MinimaxArgs {
    #[arg(long)]
    horizon: u64,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InitStatsArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.3,0.7,1.5,5")]
    nus: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn executor_from_env() -> Result<Executor> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(Executor::default()),
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{THREADS_VAR} must be a non-negative integer, got {v:?}"))?;
            Ok(Executor::with_threads(n))
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut instance = match (&args.config, &args.nus) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ProblemInstance>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(nus)) => {
            let horizon = args.horizon.context("--horizon is required with --nus")?;
            let nus: Vec<Option<f64>> = nus.iter().map(|&v| Some(v)).collect();
            ProblemInstance::new(&nus, horizon, args.seed.unwrap_or(0))?
        }
        (None, None) => bail!("one of --config or --nus is required"),
    };
    if let Some(h) = args.horizon {
        instance = instance.with_horizon(h)?;
    }
    if let Some(s) = args.seed {
        instance = instance.with_seed(s);
    }

    let options = PolicyOptions {
        mode: args.mode.into(),
        delta_override: args.delta,
        record_intervals: args.snapshot_intervals,
        seed: instance.base_seed(),
        ..PolicyOptions::default()
    };
    let trace = match &args.lower_bounds {
        Some(bounds) => run_episode(&instance, bounds, &options)?,
        None => run_modified(&instance, &options)?,
    };

    if let Some(out) = &args.out {
        trace.write_csv(out)?;
        atomic_write(&meta_path(out), trace.meta_json().as_bytes())?;
    }
    println!(
        "final cumulative regret {} over {} steps ({} jobs)",
        trace.final_regret(),
        trace.horizon(),
        instance.num_jobs()
    );
    Ok(())
}

fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => presets::by_name(name).with_context(|| format!("unknown preset {name:?}"))?,
        (None, None) => bail!("one of --config or --preset is required"),
    };
    if let Some(r) = args.reps {
        config.replications = r;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(o) = args.out {
        config.output = Some(o);
    }
    config.validate()?;

    let result = run_experiment_with(&config, &executor_from_env()?)?;
    if let Some(out) = &config.output {
        harness::emit_csv(&result, out)?;
    }
    let last_value = result.points.last().map(|p| p.grid_value);
    let finals: Vec<String> = result
        .points
        .iter()
        .filter(|p| Some(p.grid_value) == last_value)
        .map(|p| format!("{} {:.3} ± {:.3}", p.arm, p.mean_regret, p.stderr))
        .collect();
    println!(
        "experiment {}: final mean regret at {}: {}",
        result.id,
        last_value.unwrap_or(f64::NAN),
        finals.join(", ")
    );
    Ok(())
}

fn cmd_minimax(args: MinimaxArgs) -> Result<()> {
    let report = harness::minimax_stress(args.horizon, args.k, args.reps, args.seed, &executor_from_env()?)?;
    if let Some(out) = &args.out {
        atomic_write(out, report.to_csv().as_bytes())?;
    }
    println!(
        "sup mean regret {:.4}, ratio to sqrt(nK) {:.5} (lower bound {:.4}, eps {:.6})",
        report.sup_regret, report.ratio, report.lower_bound, report.epsilon
    );
    Ok(())
}

fn cmd_init_stats(args: InitStatsArgs) -> Result<()> {
    if args.reps == 0 {
        bail!("--reps must be at least 1");
    }
    if let Some(bad) = args.nus.iter().find(|v| v.is_nan() || **v <= 0.0) {
        bail!("--nus entries must be positive, got {bad}");
    }
    let stats = init_stats(&args.nus, args.reps, args.seed, &executor_from_env()?);
    if let Some(out) = &args.out {
        let mut csv = String::from("nu,mean_eta,stderr_eta,mean_steps,stderr_steps,reps\n");
        for s in &stats {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.nu, s.mean_eta, s.stderr_eta, s.mean_steps, s.stderr_steps, s.reps
            ));
        }
        atomic_write(out, csv.as_bytes())?;
    }
    let worst = stats.iter().map(|s| s.mean_eta).fold(f64::NEG_INFINITY, f64::max);
    println!("max mean eta {worst:.4} over {} difficulties", stats.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Minimax(a) => cmd_minimax(a),
        Command::InitStats(a) => cmd_init_stats(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
