use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use opbns_cli::{Config, Ctx, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "opbns", version, about = "Monte Carlo verification of the operator-valued OU volatility model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML overrides of the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replaces every path and sample count.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rayon worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Lifted semigroups against the Kronecker matrix exponential.
    VerifyLifted,
    /// Closed-form cf of Y(t) against Monte Carlo.
    VerifyVolCf,
    /// Closed-form cf of X(t) against Monte Carlo, both routes.
    VerifyXCf,
    /// Moments of the scalar-times-U driver with Gamma jumps.
    VerifyGammaJumps,
    /// Wishart mark and driver cf against the determinant formula.
    VerifyWishartCf,
    /// Mean trace of the instantaneous covariance.
    VerifyTrace,
    /// Projected log-returns conditional on one variance path.
    VerifyReturns,
    /// Positivity, symmetry and L2 growth of variance paths.
    PositivitySuite,
    /// Laguerre basis, reproducing kernels and the truncated shift.
    VerifyKernels,
    /// Forward-curve surfaces and the spot-rate variance.
    SimulateForward,
    /// Every experiment in order.
    RunAll,
    /// Prints the built-in default configuration.
    Defaults,
}

impl Cmd {
    fn experiments(self) -> Vec<Experiment> {
        let one = match self {
            Self::VerifyLifted => Experiment::VerifyLifted,
            Self::VerifyVolCf => Experiment::VerifyVolCf,
            Self::VerifyXCf => Experiment::VerifyXCf,
            Self::VerifyGammaJumps => Experiment::VerifyGammaJumps,
            Self::VerifyWishartCf => Experiment::VerifyWishartCf,
            Self::VerifyTrace => Experiment::VerifyTrace,
            Self::VerifyReturns => Experiment::VerifyReturns,
            Self::PositivitySuite => Experiment::PositivitySuite,
            Self::VerifyKernels => Experiment::VerifyKernels,
            Self::SimulateForward => Experiment::SimulateForward,
            Self::RunAll | Self::Defaults => return Experiment::ALL.to_vec(),
        };
        vec![one]
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Cmd::Defaults = cli.cmd {
        print!("{}", opbns_cli::config::DEFAULTS);
        return ExitCode::SUCCESS;
    }
    let cfg = match &cli.config {
        Some(p) => Config::load(p),
        None => Config::defaults(),
    };
    let run = cfg.and_then(|cfg| {
        let ctx = Ctx::new(cfg, Overrides { seed: cli.seed, paths: cli.paths, out: cli.out.clone(), workers: cli.workers })?;
        ctx.run_all(&cli.cmd.experiments()).map(|m| (m, ctx.out.clone()))
    });
    match run {
        Ok((m, out)) => {
            for e in &m.experiments {
                println!("{} {} ({:.1} s)", if e.passed { "PASS" } else { "FAIL" }, e.name, e.seconds);
                for c in &e.checks {
                    println!("  {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                }
            }
            println!("manifest: {}", out.join("manifest.json").display());
            if m.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
