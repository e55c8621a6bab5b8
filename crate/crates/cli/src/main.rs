mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Context, Failure};
use config::LoadedConfig;

/// Quasi-stationary distributions, the Q-process and conditioned evolution
/// of finite absorbed Markov chains.
///
/// Exit codes: 0 success, 1 runtime error, 2 usage or invalid input,
/// 3 a certification or verification failed.
#[derive(Parser)]
#[command(name = "qsd", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Kernel file (`n <n> time_unit <u>` header, then n rows).
    #[arg(long, global = true)]
    kernel: Option<PathBuf>,
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: qsd-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for simulation and random models [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a kernel from a model description and tabulate c1(t0).
    Model(commands::ModelArgs),
    /// QSD, survival eigenvalue, right eigenvector and the minorization certificate.
    Spectral(commands::SpectralArgs),
    /// Check the eta, Q-process approximation and mixing bounds.
    Verify(commands::VerifyArgs),
    /// Check the sampling-plan bound and the conditional ergodic theorem.
    Ergodic(commands::ErgodicArgs),
    /// One Monte Carlo estimate of beta(f) from surviving trajectories.
    Estimate(commands::EstimateArgs),
    /// Error against the number of trajectories at the predicted horizon.
    Sweep(commands::SweepArgs),
    /// Bridge contraction certificate and the converse hypotheses.
    Converse(commands::ConverseArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Model(_) => "model",
            Command::Spectral(_) => "spectral",
            Command::Verify(_) => "verify",
            Command::Ergodic(_) => "ergodic",
            Command::Estimate(_) => "estimate",
            Command::Sweep(_) => "sweep",
            Command::Converse(_) => "converse",
        }
    }
}

fn run(cli: Cli) -> Result<Option<String>, Failure> {
    if let Some(threads) = cli.common.threads {
        if threads == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let config = match &cli.common.config {
        Some(path) => LoadedConfig::load(path).map_err(Failure::Usage)?,
        None => LoadedConfig::default(),
    };
    let seed = cli.common.seed.or(config.config.seed).unwrap_or(0);
    let out = cli
        .common
        .out
        .clone()
        .or_else(|| config.config.out.as_ref().map(|p| config.resolve(p)))
        .unwrap_or_else(|| PathBuf::from("qsd-out"));
    let name = cli.command.name();

    let (mut ctx, spec) = if let Command::Model(args) = &cli.command {
        let (ctx, spec) = commands::model_context(args, &config, cli.common.seed, &out)?;
        (ctx, Some(spec))
    } else {
        (Context::load(cli.common.kernel.as_deref(), &config, seed, &out)?, None)
    };
    let report = match &cli.command {
        Command::Model(args) => commands::model(&mut ctx, args, spec.as_ref().expect("model spec")),
        Command::Spectral(args) => commands::spectral(&mut ctx, args),
        Command::Verify(args) => commands::verify(&mut ctx, args),
        Command::Ergodic(args) => commands::ergodic(&mut ctx, args),
        Command::Estimate(args) => commands::estimate(&mut ctx, args),
        Command::Sweep(args) => commands::sweep(&mut ctx, args),
        Command::Converse(args) => commands::converse(&mut ctx, args),
    }?;
    for line in &report.summary {
        println!("{line}");
    }
    ctx.finish(name, report.results)?;
    Ok(report.refused)
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(reason)) => {
            eprintln!("qsd: {reason}");
            ExitCode::from(3)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("qsd: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("qsd: {msg}");
            ExitCode::from(1)
        }
    }
}
