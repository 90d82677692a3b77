use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use casper_cli::analyze::run_analyze;
use casper_cli::config::{parse_seeds, BenchConfig};
use casper_cli::train::run_train;
use casper_cli::{CliError, CliResult, OUT_ENV};
use casper_core::gradcheck::{run_gradcheck, GradcheckConfig};
use clap::{Parser, Subcommand};

/// Largest gradient relative error accepted by `gradcheck`.
const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "casper", version, about = "Eigengap-regularized replay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured method over a set of seeds.
    Train {
        /// TOML config, or a manifest.json from an earlier run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds, e.g. `1..5` (inclusive) or `1,4,9`; overrides the config.
        #[arg(long)]
        seeds: Option<String>,
        /// Dotted-path override, e.g. `casper.rho=0.5`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output root.
        #[arg(long, env = OUT_ENV, default_value = "runs")]
        out: PathBuf,
    },
    /// Aggregate σ curves, functional maps and k-NN tables over run reports.
    Analyze {
        /// Run directories, or train output roots containing them.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, env = OUT_ENV, default_value = "analysis")]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn train(config: Option<PathBuf>, seeds: Option<String>, overrides: Vec<String>, out: PathBuf) -> CliResult<()> {
    let base = match &config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    let cfg = base.with_overrides(&overrides)?;
    let seeds = match seeds {
        Some(s) => parse_seeds(&s)?,
        None => cfg.seeds.resolve()?,
    };
    let outcome = run_train(&cfg, &seeds, &out)?;
    println!("{} runs written to {}", outcome.rows.len(), out.display());
    println!("summary: {}", outcome.summary_path.display());
    Ok(())
}

fn analyze(reports: Vec<PathBuf>, out: PathBuf) -> CliResult<()> {
    let outcome = run_analyze(&reports, &out)?;
    for (dir, why) in &outcome.fmap_skipped {
        eprintln!("fmap skipped for {}: {why}", dir.display());
    }
    for (m, e) in &outcome.od_e {
        println!("{:<10} mean OD_E {e:.4}", m.name());
    }
    println!("tables written to {}", out.display());
    Ok(())
}

fn gradcheck(instances: usize, seed: u64) -> CliResult<()> {
    let start = Instant::now();
    let cfg = GradcheckConfig {
        instances,
        seed,
        ..Default::default()
    };
    let r = run_gradcheck(&cfg)?;
    println!(
        "features: {} instances ({} redrawn), max relative error {:.3e}",
        r.features.instances, r.features.redrawn, r.features.max_relative_error
    );
    println!(
        "model:    {} instances ({} redrawn), max relative error {:.3e}",
        r.model.instances, r.model.redrawn, r.model.max_relative_error
    );
    println!("max relative error: {:.3e} ({:.1?})", r.max_relative_error(), start.elapsed());
    if r.max_relative_error() > GRADCHECK_TOL {
        return Err(CliError::Runtime(format!(
            "max relative error {:.3e} exceeds {GRADCHECK_TOL:e}",
            r.max_relative_error()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage mistakes count as configuration errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            seeds,
            overrides,
            out,
        } => train(config, seeds, overrides, out),
        Command::Analyze { reports, out } => analyze(reports, out),
        Command::Gradcheck { instances, seed } => gradcheck(instances, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
