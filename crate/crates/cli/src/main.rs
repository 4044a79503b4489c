use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use rwpe_cli::config::{parse_config, RawConfig, RawPf, RawWalker};
use rwpe_cli::suite::run_suite;

/// Random walk phase estimation experiment suites.
#[derive(Debug, Parser)]
#[command(name = "rwpe", version)]
struct Args {
    /// single_trial, loss_histogram, heisenberg_scaling, risk_profile or pf_comparison.
    #[arg(long)]
    suite: Option<String>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_trials: Option<i64>,
    #[arg(long)]
    n_exp: Option<i64>,
    /// Number of unwinding steps; 0 disables consistency checks.
    #[arg(long, allow_negative_numbers = true)]
    n_unwind: Option<i64>,
    #[arg(long)]
    tau_check: Option<f64>,
    /// unconstrained or constrained.
    #[arg(long)]
    unwind_mode: Option<String>,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Particle count for pf_comparison; adds a [pf] block with default settings.
    #[arg(long)]
    pf_particles: Option<i64>,
    /// Time the optimal update and print the result as JSON instead of running a suite.
    #[arg(long)]
    bench_updates: bool,
}

impl Args {
    fn overrides(&self) -> RawConfig {
        let walker = RawWalker {
            n_exp: self.n_exp,
            n_unwind: self.n_unwind,
            tau_check: self.tau_check,
            unwind_mode: self.unwind_mode.clone(),
            ..RawWalker::default()
        };
        RawConfig {
            suite: self.suite.clone(),
            n_trials: self.n_trials,
            master_seed: self.seed,
            output_dir: self.out.clone(),
            walker: (walker != RawWalker::default()).then_some(walker),
            pf: self.pf_particles.map(|n| RawPf {
                n_particles: Some(n),
                ..RawPf::default()
            }),
            profile: None,
        }
    }
}

fn run(args: Args) -> Result<()> {
    if args.bench_updates {
        let timing = rwpe::bench::time_updates(21, 1_000_000, 0);
        println!("{}", serde_json::to_string_pretty(&timing)?);
        return Ok(());
    }
    let config = parse_config(args.config.as_deref(), args.overrides())?;
    let report = run_suite(&config)?;
    for line in &report.lines {
        println!("{line}");
    }
    println!("wrote {} files to {}", report.files.len(), config.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
