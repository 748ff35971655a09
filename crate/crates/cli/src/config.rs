//! Experiment configuration: TOML, deep-merged over built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULTS: &str = include_str!("defaults.toml");

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub tolerances: TolSection,
    pub thresholds: Thresholds,
    pub lifted: LiftedSection,
    pub vol_cf: VolCfSection,
    pub x_cf: XCfSection,
    pub gamma_jumps: GammaSection,
    pub wishart_cf: WishartCfSection,
    pub trace: TraceSection,
    pub returns: ReturnsSection,
    pub positivity: PositivitySection,
    pub kernels: KernelSection,
    pub forward: ForwardSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    /// Paths per reduction chunk. Part of the numerics: changing it changes
    /// the summation order.
    pub chunk: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TolSection {
    pub eps_sym: f64,
    pub eps_psd: f64,
    pub eps_quad: f64,
    pub eps_series: f64,
}

/// Pass/fail thresholds. Reports only ever read these.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub z_max: f64,
    pub abs_floor: f64,
    pub lifted_abs: f64,
    pub route_agreement: f64,
    pub det_identity: f64,
    pub gamma_mean_rel: f64,
    pub gamma_var_rel: f64,
    pub trace_rel: f64,
    pub psd_floor: f64,
    pub sym_max: f64,
    pub skew_max: f64,
    pub kurt_max: f64,
    pub returns_var_rel: f64,
    pub split_rel: f64,
    pub kernel_repro: f64,
    pub gram_max: f64,
    pub shift_law: f64,
    pub adjoint_kernel: f64,
    pub roundoff_floor: f64,
    pub sigma2_routes: f64,
    pub spot_var_rel: f64,
}

/// A matrix given by rows, by its diagonal, or as a multiple of the identity.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MatSpec {
    Rows(Vec<Vec<f64>>),
    Diag { diag: Vec<f64> },
    Identity { identity: f64 },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    Lyapunov { c: MatSpec },
    Sandwich { c: MatSpec },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLawSpec {
    Exponential { mean: f64 },
    Gamma { shape: f64, scale: f64 },
    Deterministic { size: f64 },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    Zero,
    Wishart {
        lambda: f64,
        qz: MatSpec,
        /// Present only to be rejected with a clear message.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gaussian_part: Option<MatSpec>,
    },
    ScalarTimesU {
        drift_rate: f64,
        intensity: f64,
        u: MatSpec,
        jump_law: JumpLawSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gaussian_part: Option<MatSpec>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Identity,
    Diagonal { generator: Vec<f64> },
    /// Right shift on the Filipović space of the enclosing section.
    Shift,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dim: usize,
    pub y0: MatSpec,
    pub drift: DriftSpec,
    pub driver: DriverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<MatSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSpec>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    pub alpha: f64,
    pub x_max: f64,
    pub resolution: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LiftedSection {
    pub cases: usize,
    pub max_dim: usize,
    pub max_time: f64,
    pub entry_scale: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VolCfSection {
    pub paths: usize,
    pub t: f64,
    pub tests: usize,
    pub test_scale: f64,
    pub model: ModelSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct XCfSection {
    pub paths: usize,
    pub t: f64,
    pub tests: usize,
    pub test_scale: f64,
    pub cases: Vec<ModelSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSection {
    pub samples: usize,
    pub tests: usize,
    pub qz: MatSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WishartCfSection {
    pub samples: usize,
    pub tests: usize,
    pub test_scale: f64,
    pub lambda: f64,
    pub qz: MatSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub paths: usize,
    pub times: Vec<f64>,
    pub model: ModelSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnsSection {
    pub samples: usize,
    pub t: f64,
    pub dt: f64,
    pub substeps: usize,
    pub projections: usize,
    pub model: ModelSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PositivitySection {
    pub paths: usize,
    pub times: usize,
    pub horizon: f64,
    pub semigroup_samples: usize,
    pub nondecreasing_vectors: usize,
    pub l2_paths: usize,
    pub models: Vec<ModelSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub dims: Vec<usize>,
    pub shift_dim: usize,
    pub points: usize,
    pub max_x: f64,
    pub max_shift: f64,
    pub weight: WeightSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    pub paths: usize,
    pub t: f64,
    pub surface_paths: usize,
    pub surface_steps: usize,
    pub max_maturity: f64,
    pub maturities: usize,
    pub weight: WeightSection,
    pub model: ModelSpec,
}

/// Recursive merge: tables merge key by key, everything else is replaced.
/// A table whose `kind` differs from the base is replaced as a whole.
pub fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let kind_changed = matches!((b.get("kind"), o.get("kind")), (Some(x), Some(y)) if x != y);
                if kind_changed {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl Config {
    pub fn defaults() -> CliResult<Self> {
        Self::from_overrides("")
    }

    /// Parses `text` as overrides of the built-in defaults and validates.
    pub fn from_overrides(text: &str) -> CliResult<Self> {
        let mut base: toml::Table = DEFAULTS.parse().map_err(|e| CliError::Config(format!("built-in defaults: {e}")))?;
        let over: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        merge(&mut base, over);
        let cfg: Config = toml::Value::Table(base).try_into().map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_overrides(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks everything that does not need a model build. Model-level
    /// invariants (PSD, dimensions, commutation) are checked when each
    /// experiment builds its model and surface as named errors.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.run.workers == 0 {
            return bad("run.workers must be >= 1".into());
        }
        if self.run.chunk == 0 {
            return bad("run.chunk must be >= 1".into());
        }
        let t = &self.thresholds;
        for (name, v) in [
            ("z_max", t.z_max),
            ("abs_floor", t.abs_floor),
            ("lifted_abs", t.lifted_abs),
            ("route_agreement", t.route_agreement),
            ("det_identity", t.det_identity),
            ("gamma_mean_rel", t.gamma_mean_rel),
            ("gamma_var_rel", t.gamma_var_rel),
            ("trace_rel", t.trace_rel),
            ("psd_floor", t.psd_floor),
            ("sym_max", t.sym_max),
            ("skew_max", t.skew_max),
            ("kurt_max", t.kurt_max),
            ("returns_var_rel", t.returns_var_rel),
            ("split_rel", t.split_rel),
            ("kernel_repro", t.kernel_repro),
            ("gram_max", t.gram_max),
            ("shift_law", t.shift_law),
            ("adjoint_kernel", t.adjoint_kernel),
            ("roundoff_floor", t.roundoff_floor),
            ("sigma2_routes", t.sigma2_routes),
            ("spot_var_rel", t.spot_var_rel),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("thresholds.{name} must be finite and >= 0, got {v}"));
            }
        }
        let mut models: Vec<(String, &ModelSpec)> = vec![
            ("vol_cf.model".into(), &self.vol_cf.model),
            ("trace.model".into(), &self.trace.model),
            ("returns.model".into(), &self.returns.model),
            ("forward.model".into(), &self.forward.model),
        ];
        models.extend(self.x_cf.cases.iter().enumerate().map(|(i, m)| (format!("x_cf.cases[{i}]"), m)));
        models.extend(self.positivity.models.iter().enumerate().map(|(i, m)| (format!("positivity.models[{i}]"), m)));
        for (name, m) in models {
            m.validate(&name)?;
        }
        for (name, need) in [
            ("returns.model", &self.returns.model),
            ("forward.model", &self.forward.model),
        ] {
            if need.q.is_none() || need.x0.is_none() || need.state.is_none() {
                return bad(format!("{name}: q, x0 and state are required"));
            }
        }
        for (i, m) in self.x_cf.cases.iter().enumerate() {
            if m.q.is_none() || m.x0.is_none() || m.state.is_none() {
                return bad(format!("x_cf.cases[{i}]: q, x0 and state are required"));
            }
        }
        if self.trace.model.q.is_none() {
            return bad("trace.model: q is required".into());
        }
        if !matches!(self.forward.model.state, Some(StateSpec::Shift)) {
            return bad("forward.model.state must be the shift".into());
        }
        if self.trace.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("trace.times must be finite and >= 0".into());
        }
        if self.returns.substeps == 0 {
            return bad("returns.substeps must be >= 1".into());
        }
        if self.kernels.dims.is_empty() {
            return bad("kernels.dims must not be empty".into());
        }
        if self.forward.maturities < 2 {
            return bad("forward.maturities must be >= 2".into());
        }
        for (name, v) in [
            ("vol_cf.t", self.vol_cf.t),
            ("x_cf.t", self.x_cf.t),
            ("returns.t", self.returns.t),
            ("returns.dt", self.returns.dt),
            ("positivity.horizon", self.positivity.horizon),
            ("forward.t", self.forward.t),
            ("lifted.max_time", self.lifted.max_time),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        Ok(())
    }
}

impl MatSpec {
    pub fn to_rows(&self, n: usize, what: &str) -> CliResult<Vec<Vec<f64>>> {
        let rows = match self {
            Self::Rows(r) => r.clone(),
            Self::Diag { diag } => {
                if diag.len() != n {
                    return Err(CliError::Config(format!("{what}: diagonal has {} entries, expected {n}", diag.len())));
                }
                (0..n).map(|i| (0..n).map(|j| if i == j { diag[i] } else { 0.0 }).collect()).collect()
            }
            Self::Identity { identity } => (0..n).map(|i| (0..n).map(|j| if i == j { *identity } else { 0.0 }).collect()).collect(),
        };
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(CliError::Config(format!("{what}: expected a {n}x{n} matrix")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CliError::Config(format!("{what}: entries must be finite")));
        }
        Ok(rows)
    }

    /// Dimension fixed by this matrix description, if any.
    pub fn implied_dim(&self) -> Option<usize> {
        match self {
            Self::Rows(r) => Some(r.len()),
            Self::Diag { diag } => Some(diag.len()),
            Self::Identity { .. } => None,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self, name: &str) -> CliResult<()> {
        let n = self.dim;
        if n == 0 {
            return Err(CliError::Config(format!("{name}.dim must be >= 1")));
        }
        self.y0.to_rows(n, &format!("{name}.y0"))?;
        match &self.drift {
            DriftSpec::Zero => {}
            DriftSpec::Lyapunov { c } | DriftSpec::Sandwich { c } => {
                c.to_rows(n, &format!("{name}.drift.c"))?;
            }
        }
        match &self.driver {
            DriverSpec::Zero => {}
            DriverSpec::Wishart { gaussian_part: Some(_), .. } | DriverSpec::ScalarTimesU { gaussian_part: Some(_), .. } => {
                return Err(CliError::Config(format!(
                    "{name}.driver: a Gaussian part is not allowed; the driver must have non-decreasing paths"
                )));
            }
            DriverSpec::Wishart { lambda, qz, .. } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(CliError::Config(format!("{name}.driver.lambda must be finite and >= 0")));
                }
                qz.to_rows(n, &format!("{name}.driver.qz"))?;
            }
            DriverSpec::ScalarTimesU { u, .. } => {
                u.to_rows(n, &format!("{name}.driver.u"))?;
            }
        }
        if let Some(q) = &self.q {
            q.to_rows(n, &format!("{name}.q"))?;
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(CliError::Config(format!("{name}.x0 has {} entries, expected {n}", x0.len())));
            }
        }
        if let Some(StateSpec::Diagonal { generator }) = &self.state {
            if generator.len() != n {
                return Err(CliError::Config(format!("{name}.state.generator has {} entries, expected {n}", generator.len())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let c = Config::defaults().unwrap();
        assert_eq!(c.vol_cf.model.dim, 3);
        assert_eq!(c.x_cf.cases.len(), 2);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = Config::from_overrides("[vol_cf]\npaht = 3\n").unwrap_err();
        assert!(e.to_string().contains("paht"), "{e}");
    }

    #[test]
    fn gaussian_part_is_rejected() {
        let e = Config::from_overrides(
            "[vol_cf.model]\ndriver = { kind = \"wishart\", lambda = 1.0, qz = { identity = 1.0 }, gaussian_part = { identity = 0.1 } }\n",
        )
        .unwrap_err();
        assert!(e.to_string().contains("Gaussian part"), "{e}");
    }

    #[test]
    fn kind_change_replaces_table() {
        let c = Config::from_overrides("[vol_cf.model]\ndrift = { kind = \"zero\" }\n").unwrap();
        assert!(matches!(c.vol_cf.model.drift, DriftSpec::Zero));
    }

    #[test]
    fn overrides_merge_into_nested_tables() {
        let c = Config::from_overrides("[vol_cf.model.driver]\nlambda = 0.5\n").unwrap();
        match c.vol_cf.model.driver {
            DriverSpec::Wishart { lambda, .. } => assert_eq!(lambda, 0.5),
            _ => panic!("driver kind changed"),
        }
        assert_eq!(c.vol_cf.paths, 100000);
    }

    #[test]
    fn wrong_dimension_is_named() {
        let e = Config::from_overrides("[vol_cf.model]\ny0 = { diag = [1.0, 2.0] }\n").unwrap_err();
        assert!(e.to_string().contains("vol_cf.model.y0"), "{e}");
    }
}
