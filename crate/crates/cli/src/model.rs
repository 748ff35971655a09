//! Builds core models from configuration specs.

use std::sync::Arc;

use nalgebra::DMatrix;
use opbns::{
    FwSpace64, HVec64, HsMat64, JumpLaw, LevyDriver64, LiftedDrift64, ScalarTimesU, StateSemigroup, SubordinatorSpec,
    Tolerances, VolConfig64, WishartCp, XConfig64,
};

use crate::config::{DriftSpec, DriverSpec, JumpLawSpec, MatSpec, ModelSpec, StateSpec, TolSection};
use crate::error::{CliError, CliResult, Context};

pub fn tolerances(t: &TolSection) -> CliResult<Tolerances<f64>> {
    Tolerances::new(t.eps_sym, t.eps_psd, t.eps_quad, t.eps_series).ctx("tolerances")
}

pub fn hs(spec: &MatSpec, n: usize, what: &str) -> CliResult<HsMat64> {
    HsMat64::from_rows(&spec.to_rows(n, what)?).ctx(what)
}

fn dense(spec: &MatSpec, n: usize, what: &str) -> CliResult<DMatrix<f64>> {
    let rows = spec.to_rows(n, what)?;
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn drift(spec: &DriftSpec, n: usize, name: &str) -> CliResult<LiftedDrift64> {
    let what = format!("{name}.drift");
    match spec {
        DriftSpec::Zero => Ok(LiftedDrift64::Zero),
        DriftSpec::Lyapunov { c } => LiftedDrift64::lyapunov(dense(c, n, &what)?).ctx(what),
        DriftSpec::Sandwich { c } => LiftedDrift64::sandwich(dense(c, n, &what)?).ctx(what),
    }
}

pub fn driver(spec: &DriverSpec, n: usize, tol: &Tolerances<f64>, name: &str) -> CliResult<LevyDriver64> {
    let what = format!("{name}.driver");
    match spec {
        DriverSpec::Zero => Ok(LevyDriver64::zero(n)),
        DriverSpec::Wishart { gaussian_part: Some(_), .. } | DriverSpec::ScalarTimesU { gaussian_part: Some(_), .. } => {
            Err(CliError::Config(format!("{what}: a Gaussian part is not allowed")))
        }
        DriverSpec::Wishart { lambda, qz, .. } => {
            let qz = hs(qz, n, &format!("{what}.qz"))?;
            Ok(LevyDriver64::Wishart(WishartCp::new(*lambda, qz, tol).ctx(what)?))
        }
        DriverSpec::ScalarTimesU { drift_rate, intensity, u, jump_law, .. } => {
            let law = match *jump_law {
                JumpLawSpec::Exponential { mean } => JumpLaw::Exponential { mean },
                JumpLawSpec::Gamma { shape, scale } => JumpLaw::Gamma { shape, scale },
                JumpLawSpec::Deterministic { size } => JumpLaw::Deterministic { size },
            };
            let sub = SubordinatorSpec::new(*drift_rate, *intensity, law).ctx(format!("{what}.jump_law"))?;
            let u = hs(u, n, &format!("{what}.u"))?;
            Ok(LevyDriver64::ScalarTimesU(ScalarTimesU::new(sub, u, tol).ctx(what)?))
        }
    }
}

pub fn vol(spec: &ModelSpec, tol: &Tolerances<f64>, name: &str) -> CliResult<VolConfig64> {
    spec.validate(name)?;
    let n = spec.dim;
    let y0 = hs(&spec.y0, n, &format!("{name}.y0"))?;
    VolConfig64::new(y0, drift(&spec.drift, n, name)?, driver(&spec.driver, n, tol, name)?, *tol).ctx(name)
}

/// Full price model; `space` is required for a shift state.
pub fn price(spec: &ModelSpec, tol: &Tolerances<f64>, name: &str, space: Option<Arc<FwSpace64>>) -> CliResult<XConfig64> {
    let n = spec.dim;
    let v = vol(spec, tol, name)?;
    let missing = |k: &str| CliError::Config(format!("{name}.{k} is required"));
    let q = hs(spec.q.as_ref().ok_or_else(|| missing("q"))?, n, &format!("{name}.q"))?;
    let x0 = HVec64::new(spec.x0.clone().ok_or_else(|| missing("x0"))?).ctx(format!("{name}.x0"))?;
    let semigroup = match spec.state.as_ref().ok_or_else(|| missing("state"))? {
        StateSpec::Identity => StateSemigroup::Identity(n),
        StateSpec::Diagonal { generator } => StateSemigroup::Diagonal(generator.clone()),
        StateSpec::Shift => {
            let s = space.ok_or_else(|| CliError::Config(format!("{name}.state: shift needs a Filipović space")))?;
            if s.dim() != n {
                return Err(CliError::Config(format!("{name}: space dimension {} differs from model dimension {n}", s.dim())));
            }
            StateSemigroup::Shift(s)
        }
    };
    XConfig64::new(x0, semigroup, q, v).ctx(name)
}

/// `D` in `𝔏(t) = t D + jumps`, which is deterministic for every path.
pub fn drift_rate_part(driver: &LevyDriver64) -> HsMat64 {
    match driver {
        LevyDriver64::ScalarTimesU(d) => d.u.scaled(d.sub.drift_rate),
        LevyDriver64::Wishart(d) => HsMat64::zeros(d.qz.dim()),
    }
}
