use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mec_core::config::SystemConfig;
use mec_core::error::Result;
use mec_core::harness::{
    run_experiment, seed_means, sweep, write_summary_csv, Algorithm, ExperimentSpec, Metric, OutputFormat, SweepAxis,
    SweepParameter,
};
use mec_core::nn::gradient_audit;
use mec_core::oracle::{bellman_residual, build_kernel, run_oracle_suite, Schedule};

#[derive(Parser)]
#[command(name = "mec-offload", version, about = "Stochastic computation offloading experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train or evaluate one algorithm over a list of seeds.
    Run(RunArgs),
    /// Run several algorithms over a grid of arrival rates and write a summary table.
    Sweep(SweepArgs),
    /// Exact DP, tabular Q-learning and decomposition checks on a small instance.
    Oracle(OracleArgs),
    /// Finite-difference audit of the network gradients.
    Gradcheck(GradcheckArgs),
    /// Write the default six-BS configuration as TOML.
    InitConfig {
        #[arg(long, default_value = "config.toml")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        matrix_seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the default six-BS setup when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the random channel matrices of the default setup.
    #[arg(long, default_value_t = 0)]
    matrix_seed: u64,
    #[arg(long, default_value_t = 50_000)]
    epochs: u64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Epochs at the end of each run averaged into the summary.
    #[arg(long, default_value_t = 5_000)]
    tail: usize,
    #[arg(long)]
    task_arrival: Option<f64>,
    #[arg(long)]
    energy_arrival: Option<f64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    /// Directory for learned parameters of the deep agents.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "darling,deep-sarl,mobile,server,greedy")]
    algorithms: Vec<Algorithm>,
    #[arg(long, value_enum)]
    parameter: SweepParameter,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct OracleArgs {
    /// TOML configuration; the built-in 18-state instance when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 2_000_000)]
    epochs: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "oracle.json")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    nets: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn load_config(path: Option<&Path>, matrix_seed: u64) -> Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::load(p),
        None => Ok(SystemConfig::six_bs(matrix_seed)),
    }
}

fn spec_from(common: &Common, algorithm: Algorithm) -> Result<ExperimentSpec> {
    let mut cfg = load_config(common.config.as_deref(), common.matrix_seed)?;
    if let Some(v) = common.task_arrival {
        cfg.task_arrival_prob = v;
    }
    if let Some(v) = common.energy_arrival {
        cfg.energy_arrival_rate = v;
    }
    let mut spec = ExperimentSpec::new(cfg, algorithm, common.epochs, common.seeds.clone());
    spec.tail_window = common.tail;
    spec.output_dir = Some(common.out.clone());
    spec.format = match common.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    Ok(spec)
}

fn run(args: RunArgs) -> Result<bool> {
    let mut spec = spec_from(&args.common, args.algorithm)?;
    spec.checkpoint_dir = args.checkpoint_dir;
    let series = run_experiment(&spec)?;
    let rows: Vec<_> = series.iter().map(|s| s.summary(spec.tail_window)).collect();
    let mut ok = true;
    for (s, r) in series.iter().zip(&rows) {
        ok &= s.len() as u64 == spec.epochs;
        println!(
            "{} seed {}: tail utility {:.6}, mean utility {:.6}",
            s.algorithm,
            s.seed,
            r.tail_of(Metric::Utility),
            r.whole_of(Metric::Utility)
        );
    }
    let path = args.common.out.join(format!("{}-summary.csv", spec.algorithm.name()));
    write_summary_csv(&rows, fs::File::create(&path)?)?;
    println!("summary written to {}", path.display());
    Ok(ok)
}

fn run_sweep(args: SweepArgs) -> Result<bool> {
    let mut spec = spec_from(&args.common, args.algorithms[0])?;
    spec.sweep = Some(SweepAxis {
        parameter: args.parameter,
        values: args.values,
    });
    let rows = sweep(&spec, &args.algorithms)?;
    let path = args.common.out.join("sweep-summary.csv");
    write_summary_csv(&rows, fs::File::create(&path)?)?;
    for (g, alg, u) in seed_means(&rows, Metric::Utility) {
        println!("{g:>6} {alg:<16} {u:.6}");
    }
    println!("summary written to {}", path.display());
    Ok(rows.iter().all(|r| r.epochs == spec.epochs))
}

fn oracle(args: OracleArgs) -> Result<bool> {
    let cfg = match &args.config {
        Some(p) => SystemConfig::load(p)?,
        None => SystemConfig::tiny(),
    };
    let kernel = build_kernel(&cfg)?;
    let mut ok = kernel.validate().is_ok();
    let report = run_oracle_suite(&cfg, &Schedule::default(), args.epochs, args.seed)?;
    let residual = bellman_residual(&kernel, &report.value_iteration, cfg.discount);
    ok &= residual < 1e-10;
    println!("states {} actions {}", report.num_states, report.num_actions);
    println!(
        "value iteration: {} sweeps, residual {residual:.3e}",
        report.value_iteration.iterations
    );
    println!(
        "q-learning after {} epochs: sup-norm gap {:.4e}",
        report.q_learning_epochs, report.q_learning_gap
    );
    for (p, gap) in &report.additivity_gaps {
        println!("additivity gap with {} groups: {gap:.3e}", p.len());
        ok &= *gap < 1e-10;
    }
    report.save(&args.out)?;
    println!("report written to {}", args.out.display());
    Ok(ok)
}

fn gradcheck(args: GradcheckArgs) -> Result<bool> {
    let mut ok = true;
    for (i, hidden) in [40usize, 200].into_iter().enumerate() {
        let worst = gradient_audit(14, hidden, 35, args.nets, args.seed + i as u64)?;
        let pass = worst <= args.tolerance;
        println!("14-{hidden}-35 x{}: worst relative error {worst:.3e} {}", args.nets, if pass { "ok" } else { "FAIL" });
        ok &= pass;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Oracle(a) => oracle(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::InitConfig { out, matrix_seed } => SystemConfig::six_bs(matrix_seed).save(&out).map(|_| {
            println!("configuration written to {}", out.display());
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("invariant check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
