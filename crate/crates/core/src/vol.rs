//! The operator-valued variance process
//! `dY(t) = 𝕮 Y(t) dt + d𝔏(t)` and its exact simulation.

use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hs::{check_dim, hs_inner, psd_sqrt, trace_sandwich, HsMat, Tolerances};
use crate::levy::{DriverPath, LevyDriver};
use crate::lifted::LiftedDrift;
use crate::quadrature::simpson_doubling;
use crate::scalar::{cexp, Scalar};

/// Initial state, drift and driver of the variance process.
#[derive(Clone, Debug)]
pub struct VolConfig<T: Scalar> {
    pub y0: HsMat<T>,
    pub drift: LiftedDrift<T>,
    pub driver: LevyDriver<T>,
    pub tol: Tolerances<T>,
}

impl<T: Scalar> VolConfig<T> {
    pub fn new(y0: HsMat<T>, drift: LiftedDrift<T>, driver: LevyDriver<T>, tol: Tolerances<T>) -> Result<Self> {
        drift.check_dim(y0.dim())?;
        check_dim(y0.dim(), driver.dim())?;
        y0.ensure_psd(&tol)?;
        Ok(Self { y0: y0.sym_part(), drift, driver, tol })
    }

    pub fn dim(&self) -> usize {
        self.y0.dim()
    }

    /// Same drift and driver, started from `y0`.
    pub fn restarted(&self, y0: HsMat<T>) -> Result<Self> {
        Self::new(y0, self.drift.clone(), self.driver.clone(), self.tol)
    }
}

/// `𝔖(t) Y0 + Σ_{τ_i ≤ t} 𝔖(t - τ_i) mark_i + ∫_0^t 𝔖(u) D du`.
pub fn mild_solution<T: Scalar>(
    drift: &LiftedDrift<T>,
    y0: &HsMat<T>,
    path: &DriverPath<T>,
    t: T,
    tol: &Tolerances<T>,
) -> Result<HsMat<T>> {
    if t > path.horizon || t < T::zero() {
        return Err(Error::OutsideHorizon { time: t.as_f64(), horizon: path.horizon.as_f64() });
    }
    let mut acc = drift.apply_semigroup(t, y0, false, tol)?.into_matrix();
    for e in path.events.iter().take_while(|e| e.time <= t) {
        acc += drift.apply_semigroup(t - e.time, &e.mark, false, tol)?.matrix();
    }
    if path.has_drift_rate() {
        acc += drift.integrated_semigroup(t, &path.drift_rate_part, tol)?.matrix();
    }
    Ok(HsMat::wrap(acc))
}

/// A simulated variance path: the driver path plus states on a grid.
#[derive(Debug)]
pub struct VolPath<T: Scalar> {
    pub grid: Vec<T>,
    pub states: Vec<HsMat<T>>,
    pub driver_path: DriverPath<T>,
    y0: HsMat<T>,
    drift: LiftedDrift<T>,
    tol: Tolerances<T>,
    sqrt_cache: Vec<OnceLock<HsMat<T>>>,
}

impl<T: Scalar> VolPath<T> {
    /// Evaluates the mild solution of `cfg` driven by `path` on `grid`.
    pub fn from_driver_path(cfg: &VolConfig<T>, path: DriverPath<T>, grid: &[T]) -> Result<Self> {
        check_dim(cfg.dim(), path.dim())?;
        let mut states = Vec::with_capacity(grid.len());
        let mut prev = T::zero();
        for &t in grid {
            if t < prev {
                return Err(Error::InvalidParameter("time grid must be non-decreasing and start at >= 0".into()));
            }
            prev = t;
            let y = mild_solution(&cfg.drift, &cfg.y0, &path, t, &cfg.tol)?;
            let asym = y.asymmetry();
            if asym > cfg.tol.eps_sym {
                return Err(Error::NotSelfAdjoint { asymmetry: asym.as_f64() });
            }
            let l = y.min_eigenvalue();
            if l < -cfg.tol.eps_psd {
                return Err(Error::PositivityViolation { time: t.as_f64(), min_eigenvalue: l.as_f64() });
            }
            states.push(y);
        }
        Ok(Self {
            grid: grid.to_vec(),
            states,
            driver_path: path,
            y0: cfg.y0.clone(),
            drift: cfg.drift.clone(),
            tol: cfg.tol,
            sqrt_cache: (0..grid.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn horizon(&self) -> T {
        self.driver_path.horizon
    }

    pub fn dim(&self) -> usize {
        self.y0.dim()
    }

    pub fn drift(&self) -> &LiftedDrift<T> {
        &self.drift
    }

    pub fn y0(&self) -> &HsMat<T> {
        &self.y0
    }

    /// `Y(t)` at an arbitrary time in `[0, horizon]`.
    pub fn state_at(&self, t: T) -> Result<HsMat<T>> {
        mild_solution(&self.drift, &self.y0, &self.driver_path, t, &self.tol)
    }

    /// `Y(t_k)^{1/2}`, computed on first use.
    pub fn sqrt_at(&self, k: usize) -> Result<&HsMat<T>> {
        let cell = self
            .sqrt_cache
            .get(k)
            .ok_or_else(|| Error::InvalidParameter(format!("grid index {k} out of range")))?;
        if let Some(v) = cell.get() {
            return Ok(v);
        }
        let v = psd_sqrt(&self.states[k], &self.tol)?;
        Ok(cell.get_or_init(|| v))
    }

    /// CSV with columns `time`, `y_i_j` (column-major), `lambda_min`, `trace`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let n = self.dim();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        for j in 0..n {
            for i in 0..n {
                header.push(format!("y_{i}_{j}"));
            }
        }
        header.push("lambda_min".into());
        header.push("trace".into());
        out.write_record(&header)?;
        for (t, y) in self.grid.iter().zip(&self.states) {
            let mut rec = vec![format!("{t:e}")];
            rec.extend(y.matrix().iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", y.min_eigenvalue()));
            rec.push(format!("{:e}", y.trace()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Samples a driver path on `[0, horizon]` and evaluates the exact mild solution on `grid`.
pub fn simulate_y<T: Scalar, R: Rng + ?Sized>(cfg: &VolConfig<T>, horizon: T, grid: &[T], rng: &mut R) -> Result<VolPath<T>> {
    if let Some(&last) = grid.last() {
        if last > horizon {
            return Err(Error::OutsideHorizon { time: last.as_f64(), horizon: horizon.as_f64() });
        }
    }
    let path = cfg.driver.sample_path(horizon, rng)?;
    VolPath::from_driver_path(cfg, path, grid)
}

/// `∫_0^τ Ψ_𝔏(𝔖^*(u) T) du` by Simpson's rule with doubling.
pub fn cumulant_integral<T: Scalar>(cfg: &VolConfig<T>, tau: T, t: &HsMat<T>) -> Result<Complex<T>> {
    if tau == T::zero() || cfg.driver.is_zero() {
        return Ok(Complex::new(T::zero(), T::zero()));
    }
    let tol = &cfg.tol;
    simpson_doubling(
        |u| {
            let s = cfg.drift.apply_semigroup(u, t, true, tol)?.sym_part();
            cfg.driver.cumulant(&s, tol)
        },
        T::zero(),
        tau,
        tol.eps_quad,
        tol.eps_quad * T::lit(1e-4),
        20,
        "variance cumulant integral",
    )
}

/// `E[exp(i⟨Y(t), T⟩) | Y(s) = ys]` for self-adjoint `T`.
pub fn cf_y<T: Scalar>(cfg: &VolConfig<T>, s: T, ys: &HsMat<T>, t: T, op: &HsMat<T>) -> Result<Complex<T>> {
    if t < s {
        return Err(Error::InvalidParameter(format!("need t >= s, got s = {s}, t = {t}")));
    }
    check_dim(cfg.dim(), op.dim())?;
    check_dim(cfg.dim(), ys.dim())?;
    op.ensure_self_adjoint(&cfg.tol)?;
    let tau = t - s;
    let flowed = cfg.drift.apply_semigroup(tau, op, true, &cfg.tol)?;
    let lin = hs_inner(ys, &flowed)?;
    let integral = cumulant_integral(cfg, tau, op)?;
    Ok(cexp(Complex::new(T::zero(), lin) + integral))
}

/// `E[tr(Q^{1/2} Y(t) Q^{1/2})]`.
pub fn expected_trace<T: Scalar>(cfg: &VolConfig<T>, q: &HsMat<T>, t: T) -> Result<T> {
    check_dim(cfg.dim(), q.dim())?;
    let q_half = psd_sqrt(q, &cfg.tol)?;
    let y = cfg.drift.apply_semigroup(t, &cfg.y0, false, &cfg.tol)?;
    let m = cfg.drift.integrated_semigroup(t, &cfg.driver.mean_l1(), &cfg.tol)?;
    Ok(trace_sandwich(&q_half, &y)? + trace_sandwich(&q_half, &m)?)
}

/// `E[Y(t)] = 𝔖(t) Y0 + ∫_0^t 𝔖(s) E[𝔏(1)] ds`.
pub fn expected_state<T: Scalar>(cfg: &VolConfig<T>, t: T) -> Result<HsMat<T>> {
    let y = cfg.drift.apply_semigroup(t, &cfg.y0, false, &cfg.tol)?;
    let m = cfg.drift.integrated_semigroup(t, &cfg.driver.mean_l1(), &cfg.tol)?;
    Ok(&y + &m)
}

/// Outcome of [`l2_bound_check`].
#[derive(Clone, Debug)]
pub struct L2BoundReport {
    pub t: f64,
    pub paths: usize,
    /// Monte Carlo `E‖Y(t)‖²`.
    pub raw_second_moment: f64,
    /// Monte Carlo `E‖Y(t) - ∫_0^t 𝔖(s) E[𝔏(1)] ds‖²`, the quantity the bound controls.
    pub centred_second_moment: f64,
    pub centred_se: f64,
    /// `max(2‖Y0‖², tr 𝔔 / ‖𝕮‖) e^{2t‖𝕮‖}`.
    pub bound: f64,
    /// `2‖Y0‖² e^{2t‖𝕮‖} + tr 𝔔 (e^{2t‖𝕮‖} - 1) / ‖𝕮‖`, the constant the proof yields.
    pub proof_bound: f64,
}

impl L2BoundReport {
    pub fn passed(&self) -> bool {
        self.centred_second_moment <= self.bound
    }
}

/// Monte Carlo check of the exponential `L²` bound on the variance process.
///
/// The bound is proved for the compensated driver, so the deterministic
/// contribution of the driver mean is removed before comparing. For a zero
/// drift the `‖𝕮‖ → 0` limit `2‖Y0‖² + 2t tr 𝔔` is used.
pub fn l2_bound_check<T: Scalar, R: Rng + ?Sized>(cfg: &VolConfig<T>, t: T, paths: usize, rng: &mut R) -> Result<L2BoundReport> {
    let mean_part = cfg.drift.integrated_semigroup(t, &cfg.driver.mean_l1(), &cfg.tol)?;
    let mut raw = 0.0;
    let mut centred = Vec::with_capacity(paths);
    let horizon = if t > T::zero() { t } else { T::one() };
    for _ in 0..paths {
        let p = cfg.driver.sample_path(horizon, rng)?;
        let y = mild_solution(&cfg.drift, &cfg.y0, &p, t, &cfg.tol)?;
        raw += y.hs_norm().as_f64().powi(2);
        centred.push((&y - &mean_part).hs_norm().as_f64().powi(2));
    }
    let n = paths.max(1) as f64;
    let mean = centred.iter().sum::<f64>() / n;
    let var = centred.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let c_norm = cfg.drift.op_norm_bound().as_f64();
    let y0n = cfg.y0.hs_norm().as_f64().powi(2);
    let trq = cfg.driver.covariance_trace().as_f64();
    let tf = t.as_f64();
    let (bound, proof_bound) = if c_norm > 0.0 {
        let g = (2.0 * tf * c_norm).exp();
        ((2.0 * y0n).max(trq / c_norm) * g, 2.0 * y0n * g + trq * (g - 1.0) / c_norm)
    } else {
        let b = 2.0 * y0n + 2.0 * tf * trq;
        (b, b)
    };
    Ok(L2BoundReport {
        t: tf,
        paths,
        raw_second_moment: raw / n,
        centred_second_moment: mean,
        centred_se: (var / n).sqrt(),
        bound,
        proof_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpLaw, ScalarTimesU, SubordinatorSpec, WishartCp};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wishart_cfg(drift: LiftedDrift<f64>) -> VolConfig<f64> {
        let tol = Tolerances::default();
        let qz = HsMat::from_rows(&[vec![0.5, 0.1, 0.0], vec![0.1, 0.4, 0.05], vec![0.0, 0.05, 0.3]]).unwrap();
        let driver = LevyDriver::Wishart(WishartCp::new(2.0, qz, &tol).unwrap());
        VolConfig::new(HsMat::diag(&[0.3, 0.2, 0.1]), drift, driver, tol).unwrap()
    }

    fn stu_cfg(drift: LiftedDrift<f64>) -> VolConfig<f64> {
        let tol = Tolerances::default();
        let sub = SubordinatorSpec::new(0.3, 1.5, JumpLaw::Gamma { shape: 2.0, scale: 0.2 }).unwrap();
        let u = HsMat::from_rows(&[vec![1.0, 0.2, 0.0], vec![0.2, 0.6, 0.1], vec![0.0, 0.1, 0.4]]).unwrap();
        let driver = LevyDriver::ScalarTimesU(ScalarTimesU::new(sub, u, &tol).unwrap());
        VolConfig::new(HsMat::diag(&[0.3, 0.2, 0.1]), drift, driver, tol).unwrap()
    }

    fn lyap() -> LiftedDrift<f64> {
        LiftedDrift::lyapunov(DMatrix::from_row_slice(3, 3, &[-0.5, 0.1, 0.0, 0.05, -0.3, 0.1, 0.0, -0.1, -0.4])).unwrap()
    }

    #[test]
    fn zero_driver_is_deterministic_flow() {
        let tol = Tolerances::default();
        let cfg = VolConfig::new(HsMat::diag(&[1.0, 2.0, 3.0]), lyap(), LevyDriver::zero(3), tol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = simulate_y(&cfg, 1.0, &[0.0, 0.5, 1.0], &mut rng).unwrap();
        for (t, y) in p.grid.iter().zip(&p.states) {
            let e = cfg.drift.apply_semigroup(*t, &cfg.y0, false, &tol).unwrap();
            assert!((&e - y).hs_norm() < 1e-14);
        }
        let op = HsMat::diag(&[0.2, -0.1, 0.4]);
        let cf = cf_y(&cfg, 0.0, &cfg.y0, 1.0, &op).unwrap();
        let lin = hs_inner(&cfg.y0, &cfg.drift.apply_semigroup(1.0, &op, true, &tol).unwrap()).unwrap();
        assert!((cf - Complex::new(lin.cos(), lin.sin())).norm() < 1e-14);
    }

    #[test]
    fn zero_drift_adds_driver() {
        let cfg = wishart_cfg(LiftedDrift::Zero);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = simulate_y(&cfg, 2.0, &[0.3, 1.0, 2.0], &mut rng).unwrap();
        for (t, y) in p.grid.iter().zip(&p.states) {
            let e = &cfg.y0 + &p.driver_path.value_at(*t).unwrap();
            assert!((&e - y).hs_norm() < 1e-14);
        }
    }

    #[test]
    fn cf_at_equal_times() {
        let cfg = wishart_cfg(lyap());
        let op = HsMat::from_rows(&[vec![0.2, 0.1, 0.0], vec![0.1, -0.3, 0.0], vec![0.0, 0.0, 0.5]]).unwrap();
        let ys = HsMat::diag(&[1.0, 0.5, 0.2]);
        let cf = cf_y(&cfg, 0.7, &ys, 0.7, &op).unwrap();
        let v = hs_inner(&ys, &op).unwrap();
        assert!((cf - Complex::new(v.cos(), v.sin())).norm() < 1e-15);
        assert!(cf_y(&cfg, 1.0, &ys, 0.5, &op).is_err());
        let cf = cf_y(&cfg, 0.0, &ys, 1.5, &op).unwrap();
        assert!(cf.norm() <= 1.0);
    }

    #[test]
    fn expected_trace_closed_form_without_drift() {
        let cfg = wishart_cfg(LiftedDrift::Zero);
        let q = HsMat::from_rows(&[vec![1.0, 0.2, 0.0], vec![0.2, 0.5, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let q_half = psd_sqrt(&q, &cfg.tol).unwrap();
        assert!((expected_trace(&cfg, &q, 0.0).unwrap() - trace_sandwich(&q_half, &cfg.y0).unwrap()).abs() < 1e-14);
        let LevyDriver::Wishart(w) = &cfg.driver else { unreachable!() };
        let t = 1.3;
        let exact = trace_sandwich(&q_half, &(&cfg.y0 + &w.qz.scaled(t * w.lambda))).unwrap();
        assert!((expected_trace(&cfg, &q, t).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn flow_property_restart() {
        for cfg in [wishart_cfg(lyap()), stu_cfg(lyap()), stu_cfg(LiftedDrift::sandwich(DMatrix::identity(3, 3) * 0.4).unwrap())] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let full = simulate_y(&cfg, 2.0, &[0.8, 2.0], &mut rng).unwrap();
            let restart = cfg.restarted(full.states[0].clone()).unwrap();
            let tail = full.driver_path.tail(0.8).unwrap();
            let again = VolPath::from_driver_path(&restart, tail, &[1.2]).unwrap();
            assert!((&again.states[0] - &full.states[1]).hs_norm() < 1e-10);
        }
    }

    #[test]
    fn states_match_direct_mild_sum() {
        let cfg = wishart_cfg(lyap());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = simulate_y(&cfg, 1.0, &[0.25, 0.5, 1.0], &mut rng).unwrap();
        let c = cfg.drift.generator().unwrap();
        for (t, y) in p.grid.iter().zip(&p.states) {
            let e = (c * *t).exp();
            let mut m = &e * cfg.y0.matrix() * e.transpose();
            for ev in p.driver_path.events.iter().filter(|ev| ev.time <= *t) {
                let e = (c * (*t - ev.time)).exp();
                m += &e * ev.mark.matrix() * e.transpose();
            }
            assert!((y.matrix() - m).norm() < 1e-10);
        }
    }

    #[test]
    fn sqrt_cache_and_csv() {
        let cfg = stu_cfg(lyap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = simulate_y(&cfg, 1.0, &[0.0, 0.5, 1.0], &mut rng).unwrap();
        let s = p.sqrt_at(1).unwrap().clone();
        assert!((&(&s * &s) - &p.states[1]).hs_norm() < 1e-10);
        assert!(p.sqrt_at(7).is_err());
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,y_0_0,y_1_0,y_2_0"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn l2_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for cfg in [wishart_cfg(lyap()), stu_cfg(lyap()), wishart_cfg(LiftedDrift::Zero)] {
            let rep = l2_bound_check(&cfg, 1.0, 2000, &mut rng).unwrap();
            assert!(rep.passed(), "{rep:?}");
            assert!(rep.bound <= rep.proof_bound * 2.0 + 1e-12);
        }
        let cfg = VolConfig::new(HsMat::diag(&[1.0, 2.0]), LiftedDrift::Zero, LevyDriver::zero(2), Tolerances::default()).unwrap();
        let rep = l2_bound_check(&cfg, 1.0, 10, &mut rng).unwrap();
        assert!((rep.raw_second_moment - 5.0).abs() < 1e-12 && rep.passed());
    }
}
