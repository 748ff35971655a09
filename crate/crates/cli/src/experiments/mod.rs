//! Experiment dispatch and shared plumbing.

mod forward;
mod lifted;
mod marks;
mod price;
mod vol;

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use opbns::vol::mild_solution;
use opbns::{DriverPath, HVec64, HsMat64, Tolerances, VolConfig64};
use rand::Rng;

use crate::config::{Config, Thresholds};
use crate::error::{CliResult, Context};
use crate::exec::Exec;
use crate::model;
use crate::report::{ExperimentReport, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    VerifyLifted,
    VerifyVolCf,
    VerifyXCf,
    VerifyGammaJumps,
    VerifyWishartCf,
    VerifyTrace,
    VerifyReturns,
    PositivitySuite,
    VerifyKernels,
    SimulateForward,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Self::VerifyLifted,
        Self::VerifyVolCf,
        Self::VerifyXCf,
        Self::VerifyGammaJumps,
        Self::VerifyWishartCf,
        Self::VerifyTrace,
        Self::VerifyReturns,
        Self::PositivitySuite,
        Self::VerifyKernels,
        Self::SimulateForward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::VerifyLifted => "verify-lifted",
            Self::VerifyVolCf => "verify-vol-cf",
            Self::VerifyXCf => "verify-x-cf",
            Self::VerifyGammaJumps => "verify-gamma-jumps",
            Self::VerifyWishartCf => "verify-wishart-cf",
            Self::VerifyTrace => "verify-trace",
            Self::VerifyReturns => "verify-returns",
            Self::PositivitySuite => "positivity-suite",
            Self::VerifyKernels => "verify-kernels",
            Self::SimulateForward => "simulate-forward",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Stream-key word separating the experiments' random streams.
    fn stream_id(self) -> u64 {
        Self::ALL.iter().position(|e| *e == self).unwrap_or(0) as u64 + 1
    }

    fn body(self, ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
        match self {
            Self::VerifyLifted => lifted::run(ctx, rep),
            Self::VerifyVolCf => vol::vol_cf(ctx, rep),
            Self::VerifyXCf => price::x_cf(ctx, rep),
            Self::VerifyGammaJumps => marks::gamma_jumps(ctx, rep),
            Self::VerifyWishartCf => marks::wishart_cf(ctx, rep),
            Self::VerifyTrace => vol::trace(ctx, rep),
            Self::VerifyReturns => price::returns(ctx, rep),
            Self::PositivitySuite => vol::positivity(ctx, rep),
            Self::VerifyKernels => forward::kernels(ctx, rep),
            Self::SimulateForward => forward::simulate(ctx, rep),
        }
    }

    /// Runs the experiment. Errors become a failed `run` check naming the sub-check.
    pub fn run(self, ctx: &Ctx) -> ExperimentReport {
        let start = Instant::now();
        let mut rep = ExperimentReport::new(self.name());
        if let Err(e) = self.body(ctx, &mut rep) {
            rep = ExperimentReport { files: rep.files, ..ExperimentReport::failed(self.name(), e.to_string()) };
        }
        rep.seconds = start.elapsed().as_secs_f64();
        rep
    }
}

/// Command-line overrides of the `[run]` section.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    /// Replaces every path and sample count when set.
    pub paths: Option<usize>,
    pub out: PathBuf,
    pub exec: Exec,
    pub tol: Tolerances<f64>,
}

impl Ctx {
    pub fn new(mut cfg: Config, o: Overrides) -> CliResult<Self> {
        if let Some(s) = o.seed {
            cfg.run.seed = s;
        }
        if let Some(w) = o.workers {
            cfg.run.workers = w;
        }
        if let Some(d) = o.out {
            cfg.run.out = d;
        }
        if o.paths == Some(0) {
            return Err(crate::error::CliError::Config("--paths must be >= 1".into()));
        }
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.run.out)?;
        Ok(Self {
            seed: cfg.run.seed,
            paths: o.paths,
            out: cfg.run.out.clone(),
            exec: Exec::new(cfg.run.workers, cfg.run.chunk)?,
            tol: model::tolerances(&cfg.tolerances)?,
            cfg,
        })
    }

    pub fn count(&self, default: usize) -> usize {
        self.paths.unwrap_or(default)
    }

    pub fn th(&self) -> &Thresholds {
        &self.cfg.thresholds
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    /// Runs `exps` in order and assembles the manifest.
    pub fn run_all(&self, exps: &[Experiment]) -> CliResult<RunManifest> {
        let start = Instant::now();
        let experiments: Vec<ExperimentReport> = exps.iter().map(|e| e.run(self)).collect();
        let m = RunManifest {
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            workers: self.exec.workers(),
            paths_override: self.paths,
            config: serde_json::to_value(&self.cfg)?,
            passed: experiments.iter().all(|r| r.passed),
            experiments,
            seconds: start.elapsed().as_secs_f64(),
        };
        m.write(&self.path("manifest.json"))?;
        let resolved = toml::to_string(&self.cfg).map_err(|e| crate::error::CliError::Config(e.to_string()))?;
        std::fs::write(self.path("config.resolved.toml"), resolved)?;
        Ok(m)
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Random self-adjoint operator with entries of size `scale`.
fn random_sym<R: Rng>(n: usize, scale: f64, rng: &mut R) -> HsMat64 {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
    HsMat64::from_matrix((&g + g.transpose()) * 0.5).expect("finite entries")
}

fn random_vec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> HVec64 {
    HVec64::new((0..n).map(|_| rng.random_range(-scale..scale)).collect()).expect("finite entries")
}

/// Mild solution at fixed times with the deterministic drift-rate integral
/// computed once instead of per path.
struct YEval<'a> {
    vol: &'a VolConfig64,
    times: Vec<f64>,
    rate: Option<Vec<HsMat64>>,
}

impl<'a> YEval<'a> {
    fn new(vol: &'a VolConfig64, times: &[f64], what: &str) -> CliResult<Self> {
        let d = model::drift_rate_part(&vol.driver);
        let rate = if d.matrix().iter().any(|v| *v != 0.0) {
            Some(
                times
                    .iter()
                    .map(|&t| vol.drift.integrated_semigroup(t, &d, &vol.tol))
                    .collect::<opbns::Result<Vec<_>>>()
                    .ctx(format!("{what}: drift-rate integral"))?,
            )
        } else {
            None
        };
        Ok(Self { vol, times: times.to_vec(), rate })
    }

    /// `Y(times[k])` for every `k`.
    fn states(&self, path: &DriverPath<f64>, what: &str) -> CliResult<Vec<HsMat64>> {
        let jumps = DriverPath { horizon: path.horizon, events: path.events.clone(), drift_rate_part: HsMat64::zeros(path.dim()) };
        let mut out = Vec::with_capacity(self.times.len());
        for (k, &t) in self.times.iter().enumerate() {
            let y = mild_solution(&self.vol.drift, &self.vol.y0, &jumps, t, &self.vol.tol).ctx(format!("{what}: mild solution"))?;
            out.push(match &self.rate {
                Some(r) => &y + &r[k],
                None => y,
            });
        }
        Ok(out)
    }
}
