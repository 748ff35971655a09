//! The volatility-modulated OU process
//! `dX(t) = A X(t) dt + Y^{1/2}(t) dB(t)` with `B` a `Q`-Wiener process.
//!
//! Given the variance path, `X` is Gaussian, so each step is sampled
//! exactly from its conditional covariance.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forward::FwSpace;
use crate::hs::{check_dim, psd_sqrt, tensor_square, HVec, HsMat, Tolerances};
use crate::levy::{DriverPath, LevyDriver};
use crate::quadrature::{gauss_legendre_adaptive, simpson_doubling, CompositeRule};
use crate::scalar::{cexp, Scalar};
use crate::vol::{mild_solution, VolConfig, VolPath};

/// Semigroup `S_A(t)` of the state drift `A`.
#[derive(Clone, Debug)]
pub enum StateSemigroup<T: Scalar> {
    /// `A = 0`
    Identity(usize),
    /// `A = diag(a)`
    Diagonal(Vec<T>),
    /// Right shift on a truncated Filipović space.
    Shift(Arc<FwSpace<T>>),
}

impl<T: Scalar> StateSemigroup<T> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Identity(n) => *n,
            Self::Diagonal(a) => a.len(),
            Self::Shift(s) => s.dim(),
        }
    }

    pub fn matrix(&self, t: T) -> Result<DMatrix<T>> {
        if t < T::zero() {
            return Err(Error::InvalidParameter(format!("semigroup time must be >= 0, got {t}")));
        }
        Ok(match self {
            Self::Identity(n) => DMatrix::identity(*n, *n),
            Self::Diagonal(a) => DMatrix::from_diagonal(&DVector::from_iterator(a.len(), a.iter().map(|v| (*v * t).exp()))),
            Self::Shift(s) => s.shift_matrix(t)?,
        })
    }

    /// `S_A^*(t)`; the bases are orthonormal so this is the transpose.
    pub fn adjoint_matrix(&self, t: T) -> Result<DMatrix<T>> {
        Ok(self.matrix(t)?.transpose())
    }
}

/// Time-dependent factor `Ψ(t)` multiplying the volatility.
#[derive(Clone)]
pub enum VolScale<T: Scalar> {
    /// `Ψ(t) = e^{-κ t} I`
    ExpDecay { kappa: T },
    Fixed(HsMat<T>),
    Custom(Arc<dyn Fn(T) -> DMatrix<T> + Send + Sync>),
}

impl<T: Scalar> fmt::Debug for VolScale<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ExpDecay { kappa } => f.debug_struct("ExpDecay").field("kappa", kappa).finish(),
            Self::Fixed(m) => f.debug_tuple("Fixed").field(m).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl<T: Scalar> VolScale<T> {
    /// `Ψ(t) M Ψ(t)^*`
    fn apply(&self, t: T, m: &DMatrix<T>) -> DMatrix<T> {
        match self {
            Self::ExpDecay { kappa } => m * (-T::lit(2.0) * *kappa * t).exp(),
            Self::Fixed(p) => p.matrix() * m * p.matrix().transpose(),
            Self::Custom(f) => {
                let p = f(t);
                &p * m * p.transpose()
            }
        }
    }

    fn is_finite_at(&self, t: T, n: usize) -> bool {
        match self {
            Self::ExpDecay { kappa } => (*kappa * t).is_finite(),
            Self::Fixed(p) => p.matrix().iter().all(|v| v.is_finite()),
            Self::Custom(f) => {
                let p = f(t);
                p.nrows() == n && p.ncols() == n && p.iter().all(|v| v.is_finite())
            }
        }
    }
}

/// Full model: state semigroup, Wiener covariance `Q` and the variance process.
#[derive(Clone, Debug)]
pub struct XConfig<T: Scalar> {
    pub x0: HVec<T>,
    pub semigroup: StateSemigroup<T>,
    pub q: HsMat<T>,
    pub vol: VolConfig<T>,
    pub scale: Option<VolScale<T>>,
}

impl<T: Scalar> XConfig<T> {
    pub fn new(x0: HVec<T>, semigroup: StateSemigroup<T>, q: HsMat<T>, vol: VolConfig<T>) -> Result<Self> {
        let n = x0.dim();
        check_dim(n, semigroup.dim())?;
        check_dim(n, q.dim())?;
        check_dim(n, vol.dim())?;
        q.ensure_psd(&vol.tol)?;
        Ok(Self { x0, semigroup, q: q.sym_part(), vol, scale: None })
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    pub fn tol(&self) -> &Tolerances<T> {
        &self.vol.tol
    }
}

/// Attaches a volatility scale `Ψ(t)`; fails if `Ψ` is not finite on `grid`.
pub fn samuelson_wrap<T: Scalar>(cfg: &XConfig<T>, scale: VolScale<T>, grid: &[T]) -> Result<XConfig<T>> {
    for &t in grid {
        if !scale.is_finite_at(t, cfg.dim()) {
            return Err(Error::UnboundedScale { time: t.as_f64() });
        }
    }
    if let VolScale::Fixed(p) = &scale {
        check_dim(cfg.dim(), p.dim())?;
    }
    let mut out = cfg.clone();
    out.scale = Some(scale);
    Ok(out)
}

/// Outcome of [`commutativity_check`].
#[derive(Clone, Debug, Default)]
pub struct CommutationReport {
    /// `‖Q Y0 - Y0 Q‖`
    pub initial: f64,
    /// `‖[Q, U]‖` or `‖[Q, Qz]‖`
    pub driver: f64,
    /// Largest commutator with sampled Wishart marks.
    pub marks: f64,
    /// Largest of `‖𝕮(T)Q - 𝕮(TQ)‖`, `‖Q𝕮(T) - 𝕮(QT)‖` over a random battery.
    pub drift: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CommutationReport {
    pub fn worst(&self) -> f64 {
        self.initial.max(self.driver).max(self.marks).max(self.drift)
    }
}

fn commutator_norm<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (a * b - b * a).norm()
}

/// Checks the sufficient conditions for `Q` to commute with `Y(t)` for all `t`.
pub fn commutativity_check<T: Scalar>(q: &HsMat<T>, vol: &VolConfig<T>, tol: &Tolerances<T>) -> Result<CommutationReport> {
    let n = vol.dim();
    check_dim(n, q.dim())?;
    let qm = q.matrix();
    let qn = q.hs_norm().max(T::one());
    let mut rep = CommutationReport::default();
    rep.initial = commutator_norm(qm, vol.y0.matrix()).as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0_33u64);
    match &vol.driver {
        LevyDriver::ScalarTimesU(d) => rep.driver = commutator_norm(qm, d.u.matrix()).as_f64(),
        LevyDriver::Wishart(d) => {
            rep.driver = commutator_norm(qm, d.qz.matrix()).as_f64();
            if d.lambda > T::zero() {
                for _ in 0..64 {
                    let m = d.sample_mark(&mut rng);
                    let c = commutator_norm(qm, m.matrix()) / m.hs_norm().max(T::one());
                    rep.marks = rep.marks.max(c.as_f64());
                }
            }
        }
    }
    for _ in 0..8 {
        let t = HsMat::wrap(DMatrix::<T>::from_fn(n, n, |_, _| T::lit(rng.random_range(-1.0..1.0))));
        let tq = HsMat::wrap(t.matrix() * qm);
        let qt = HsMat::wrap(qm * t.matrix());
        let ct = vol.drift.apply_drift(&t)?;
        let a = (ct.matrix() * qm - vol.drift.apply_drift(&tq)?.matrix()).norm();
        let b = (qm * ct.matrix() - vol.drift.apply_drift(&qt)?.matrix()).norm();
        rep.drift = rep.drift.max(a.as_f64()).max(b.as_f64());
    }
    rep.threshold = (tol.eps_sym * qn * T::lit(10.0)).as_f64();
    rep.passed = rep.worst() <= rep.threshold;
    Ok(rep)
}

/// The driver path of `𝔏_Q = Q 𝔏`; every mark must commute with `Q`.
pub fn lifted_lq_path<T: Scalar>(path: &DriverPath<T>, q: &HsMat<T>, tol: &Tolerances<T>) -> Result<DriverPath<T>> {
    check_dim(path.dim(), q.dim())?;
    let qm = q.matrix();
    let limit = tol.eps_sym * q.hs_norm().max(T::one()) * T::lit(10.0);
    let check = |m: &HsMat<T>| -> Result<()> {
        let c = commutator_norm(qm, m.matrix()) / m.hs_norm().max(T::one());
        if c > limit {
            return Err(Error::CommutationFailed { detail: "driver mark does not commute with Q".into(), norm: c.as_f64() });
        }
        Ok(())
    };
    for e in &path.events {
        check(&e.mark)?;
    }
    check(&path.drift_rate_part)?;
    Ok(path.map_marks(|m| HsMat::wrap(qm * m.matrix())))
}

/// `Y_Q(t) = 𝔖(t) Q Y0 + ∫_0^t 𝔖(t - s) d𝔏_Q(s)` along a driver path.
pub fn yq_at<T: Scalar>(vol: &VolConfig<T>, q: &HsMat<T>, path: &DriverPath<T>, t: T) -> Result<HsMat<T>> {
    let lq = lifted_lq_path(path, q, &vol.tol)?;
    let qy0 = HsMat::wrap(q.matrix() * vol.y0.matrix());
    mild_solution(&vol.drift, &qy0, &lq, t, &vol.tol)
}

/// Evaluates `Y(s)` inside a jump-free piece starting at `p` with `Y(p) = yp`.
struct Piece<'a, T: Scalar> {
    vol: &'a VolPath<T>,
    p: T,
    yp: HsMat<T>,
}

impl<T: Scalar> Piece<'_, T> {
    fn state(&self, s: T, tol: &Tolerances<T>) -> Result<HsMat<T>> {
        let drift = self.vol.drift();
        let mut y = drift.apply_semigroup(s - self.p, &self.yp, false, tol)?;
        let path = &self.vol.driver_path;
        if path.has_drift_rate() {
            y = &y + &drift.integrated_semigroup(s - self.p, &path.drift_rate_part, tol)?;
        }
        Ok(y)
    }
}

/// `∫_a^b S_A(b - s) Ψ(s) Y^{1/2}(s) Q Y^{1/2}(s) Ψ(s)^* S_A^*(b - s) ds`.
///
/// The interval is split at jump times so that `Y` is smooth on every
/// piece, and `Y` is evaluated exactly at each quadrature node. When `Q`
/// commutes with the variance process the integrand uses `Q Y(s)`.
pub fn step_covariance<T: Scalar>(cfg: &XConfig<T>, vol: &VolPath<T>, a: T, b: T, commuting: bool) -> Result<HsMat<T>> {
    check_dim(cfg.dim(), vol.dim())?;
    if b > vol.horizon() || a < T::zero() || b < a {
        return Err(Error::OutsideHorizon { time: b.as_f64(), horizon: vol.horizon().as_f64() });
    }
    let n = cfg.dim();
    let tol = cfg.tol();
    let mut cuts = vec![a];
    cuts.extend(vol.driver_path.events.iter().map(|e| e.time).filter(|&t| t > a && t < b));
    cuts.push(b);
    let qm = cfg.q.matrix();
    let mut acc = DMatrix::<T>::zeros(n, n);
    for w in cuts.windows(2) {
        let (p, r) = (w[0], w[1]);
        if r <= p {
            continue;
        }
        let piece = Piece { vol, p, yp: vol.state_at(p)? };
        let integrand = |s: T| -> Result<DMatrix<T>> {
            let y = piece.state(s, tol)?;
            let m = if commuting {
                let qy = qm * y.matrix();
                (&qy + qy.transpose()) * T::lit(0.5)
            } else {
                let h = psd_sqrt(&y.sym_part(), tol)?;
                h.matrix() * qm * h.matrix()
            };
            let m = match &cfg.scale {
                Some(sc) => sc.apply(s, &m),
                None => m,
            };
            let sa = cfg.semigroup.matrix(b - s)?;
            Ok(&sa * m * sa.transpose())
        };
        let rule = CompositeRule::new(8, 1, tol.eps_quad);
        acc += gauss_legendre_adaptive(integrand, p, r, &rule, "step covariance")?;
    }
    let sym = (&acc + acc.transpose()) * T::lit(0.5);
    let out = HsMat::wrap(sym);
    let l = out.min_eigenvalue();
    if l < -tol.eps_psd * out.hs_norm().max(T::one()) {
        return Err(Error::NotPsd { min_eigenvalue: l.as_f64() });
    }
    Ok(out)
}

/// Conditional covariance of `R(t, Δt) = X(t + Δt) - S_A(Δt) X(t)` given the variance path.
pub fn adjusted_return_cov<T: Scalar>(cfg: &XConfig<T>, vol: &VolPath<T>, t: T, dt: T) -> Result<HsMat<T>> {
    if t < T::zero() || dt < T::zero() || t + dt > vol.horizon() {
        return Err(Error::OutsideHorizon { time: (t + dt).as_f64(), horizon: vol.horizon().as_f64() });
    }
    let commuting = cfg.scale.is_none() && commutativity_check(&cfg.q, &cfg.vol, cfg.tol())?.passed;
    step_covariance(cfg, vol, t, t + dt, commuting)
}

/// Precomputed exact transition of `X` along the grid of a fixed variance path.
#[derive(Clone, Debug)]
pub struct XStepper<T: Scalar> {
    pub grid: Vec<T>,
    x0: DVector<T>,
    transitions: Vec<DMatrix<T>>,
    roots: Vec<DMatrix<T>>,
}

impl<T: Scalar> XStepper<T> {
    pub fn new(cfg: &XConfig<T>, vol: &VolPath<T>) -> Result<Self> {
        let commuting = match &cfg.scale {
            None => commutativity_check(&cfg.q, &cfg.vol, cfg.tol())?.passed,
            Some(_) => false,
        };
        Self::with_commuting(cfg, vol, commuting)
    }

    /// As [`XStepper::new`] with a known outcome of [`commutativity_check`].
    pub fn with_commuting(cfg: &XConfig<T>, vol: &VolPath<T>, commuting: bool) -> Result<Self> {
        let mut prev = T::zero();
        let mut transitions = Vec::with_capacity(vol.grid.len());
        let mut roots = Vec::with_capacity(vol.grid.len());
        for &t in &vol.grid {
            transitions.push(cfg.semigroup.matrix(t - prev)?);
            let cov = step_covariance(cfg, vol, prev, t, commuting)?;
            roots.push(psd_sqrt(&cov, cfg.tol())?.into_matrix());
            prev = t;
        }
        Ok(Self { grid: vol.grid.clone(), x0: cfg.x0.as_vector().clone(), transitions, roots })
    }

    /// `(S_A(Δ_k), Cov_k^{1/2})` for step `k`.
    pub fn step(&self, k: usize) -> (&DMatrix<T>, &DMatrix<T>) {
        (&self.transitions[k], &self.roots[k])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> XPath<T> {
        let n = self.x0.len();
        let mut x = self.x0.clone();
        let mut states = Vec::with_capacity(self.grid.len());
        for (s, r) in self.transitions.iter().zip(&self.roots) {
            let xi = DVector::<T>::from_fn(n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
            x = s * x + r * xi;
            states.push(HVec::from_vector(x.clone()));
        }
        XPath { grid: self.grid.clone(), states }
    }
}

/// Simulated price-process states on the variance-path grid.
#[derive(Clone, Debug, PartialEq)]
pub struct XPath<T: Scalar> {
    pub grid: Vec<T>,
    pub states: Vec<HVec<T>>,
}

impl<T: Scalar> XPath<T> {
    /// CSV with columns `time`, `x_k`, and `proj_j = (X, f_j)`.
    pub fn write_csv<W: Write>(&self, w: W, projections: &[HVec<T>]) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.states.first().map(|s| s.dim()).unwrap_or(0);
        let mut header = vec!["time".to_string()];
        header.extend((0..n).map(|k| format!("x_{k}")));
        header.extend((0..projections.len()).map(|j| format!("proj_{j}")));
        out.write_record(&header)?;
        for (t, x) in self.grid.iter().zip(&self.states) {
            let mut rec = vec![format!("{t:e}")];
            rec.extend(x.coeffs().iter().map(|v| format!("{v:e}")));
            for f in projections {
                rec.push(format!("{:e}", x.inner(f)?));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Samples `X` along the grid of `vol` with exact Gaussian steps.
pub fn simulate_x<T: Scalar, R: Rng + ?Sized>(cfg: &XConfig<T>, vol: &VolPath<T>, rng: &mut R) -> Result<XPath<T>> {
    Ok(XStepper::new(cfg, vol)?.sample(rng))
}

/// How the commuting characteristic functional is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfRoute {
    /// `T(u) = (Q^{1/2} S_A^*(u) f)^{⊗2}` against `Y`.
    SqrtD,
    /// `T(u) = (S_A^*(u) f)^{⊗2}` against `Y_Q = Q Y`, driven by `𝔏_Q`.
    LiftedQ,
}

/// `E[exp(i (X(t), f))]` when `Q` commutes with the variance process.
pub fn cf_x<T: Scalar>(cfg: &XConfig<T>, t: T, f: &HVec<T>, route: CfRoute) -> Result<Complex<T>> {
    check_dim(cfg.dim(), f.dim())?;
    if cfg.scale.is_some() {
        return Err(Error::Unsupported("characteristic functional with a volatility scale".into()));
    }
    if t < T::zero() {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    let tol = cfg.tol();
    let rep = commutativity_check(&cfg.q, &cfg.vol, tol)?;
    if !rep.passed {
        return Err(Error::CommutationFailed {
            detail: format!(
                "Q does not commute with the variance process (initial {:.3e}, driver {:.3e}, marks {:.3e}, drift {:.3e})",
                rep.initial, rep.driver, rep.marks, rep.drift
            ),
            norm: rep.worst(),
        });
    }
    if f.norm() == T::zero() {
        return Ok(Complex::new(T::one(), T::zero()));
    }
    let phase = cfg.x0.as_vector().dot(&(cfg.semigroup.adjoint_matrix(t)? * f.as_vector()));
    if t == T::zero() {
        return Ok(cexp(Complex::new(T::zero(), phase)));
    }
    let q_half = psd_sqrt(&cfg.q, tol)?;
    let qm = cfg.q.matrix();
    let drift = &cfg.vol.drift;
    let t_of = |u: T| -> Result<HsMat<T>> {
        let g = HVec::from_vector(cfg.semigroup.adjoint_matrix(u)? * f.as_vector());
        Ok(match route {
            CfRoute::SqrtD => tensor_square(&q_half.apply(&g)?),
            CfRoute::LiftedQ => tensor_square(&g),
        })
    };
    // W(s) = ∫_0^s 𝔖^*(s - u) T(u) du
    let w_of = |s: T| -> Result<HsMat<T>> {
        if s == T::zero() {
            return Ok(HsMat::zeros(cfg.dim()));
        }
        let rule = CompositeRule::per_unit_length(8, 32, s, tol.eps_quad);
        gauss_legendre_adaptive(|u| drift.apply_semigroup(s - u, &t_of(u)?, true, tol), T::zero(), s, &rule, "price cumulant inner integral")
    };
    let half = T::lit(0.5);
    let y0_eff = match route {
        CfRoute::SqrtD => cfg.vol.y0.clone(),
        CfRoute::LiftedQ => HsMat::wrap(qm * cfg.vol.y0.matrix()),
    };
    let wt = w_of(t)?;
    let quad = y0_eff.matrix().dot(wt.matrix());
    let driver = &cfg.vol.driver;
    let outer = if driver.is_zero() {
        T::zero()
    } else {
        simpson_doubling(
            |s| {
                let w = w_of(s)?.sym_part();
                let arg = match route {
                    CfRoute::SqrtD => w.scaled(half),
                    CfRoute::LiftedQ => HsMat::wrap(qm * w.matrix() * half).sym_part(),
                };
                driver.laplace_exponent(&arg, tol)
            },
            T::zero(),
            t,
            tol.eps_quad,
            tol.eps_quad * T::lit(1e-4),
            16,
            "price cumulant outer integral",
        )?
    };
    Ok(cexp(Complex::new(-half * quad + outer, phase)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{JumpLaw, ScalarTimesU, SubordinatorSpec, WishartCp};
    use crate::lifted::LiftedDrift;
    use crate::vol::simulate_y;

    fn diag_cfg() -> XConfig<f64> {
        let tol = Tolerances::default();
        let sub = SubordinatorSpec::new(0.0, 2.0, JumpLaw::Gamma { shape: 2.0, scale: 0.25 }).unwrap();
        let driver = LevyDriver::ScalarTimesU(ScalarTimesU::new(sub, HsMat::diag(&[1.0, 0.5, 0.8]), &tol).unwrap());
        let drift = LiftedDrift::lyapunov(DMatrix::from_diagonal(&DVector::from_vec(vec![-0.5, -0.3, -0.8]))).unwrap();
        let vol = VolConfig::new(HsMat::diag(&[0.4, 0.2, 0.3]), drift, driver, tol).unwrap();
        XConfig::new(
            HVec::new(vec![0.1, -0.2, 0.3]).unwrap(),
            StateSemigroup::Diagonal(vec![-0.2, 0.1, -0.4]),
            HsMat::diag(&[1.0, 2.0, 0.5]),
            vol,
        )
        .unwrap()
    }

    #[test]
    fn semigroup_variants() {
        let d = StateSemigroup::Diagonal(vec![-1.0, 0.5]);
        assert_eq!(d.matrix(0.0).unwrap(), DMatrix::identity(2, 2));
        let m = d.matrix(2.0).unwrap();
        assert!((m[(0, 0)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(StateSemigroup::<f64>::Identity(3).matrix(4.0).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn commutation_examples() {
        let tol = Tolerances::default();
        let cfg = diag_cfg();
        assert!(commutativity_check(&cfg.q, &cfg.vol, &tol).unwrap().passed);
        assert!(commutativity_check(&HsMat::identity(3), &cfg.vol, &tol).unwrap().passed);
        let sub = SubordinatorSpec::new(0.0, 1.0, JumpLaw::Exponential { mean: 1.0 }).unwrap();
        let u = HsMat::from_rows(&[vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let driver = LevyDriver::ScalarTimesU(ScalarTimesU::new(sub, u, &tol).unwrap());
        let vol = VolConfig::new(HsMat::identity(2), LiftedDrift::Zero, driver, tol).unwrap();
        let rep = commutativity_check(&HsMat::diag(&[1.0, 2.0]), &vol, &tol).unwrap();
        assert!(!rep.passed);
        // [diag(1,2), U] has off-diagonal entries ±0.3
        assert!((rep.driver - 0.3 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_volatility_is_transport() {
        let tol = Tolerances::default();
        let vol = VolConfig::new(HsMat::zeros(2), LiftedDrift::Zero, LevyDriver::zero(2), tol).unwrap();
        let cfg = XConfig::new(HVec::new(vec![1.0, 2.0]).unwrap(), StateSemigroup::Diagonal(vec![-1.0, 0.3]), HsMat::identity(2), vol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vp = simulate_y(&cfg.vol, 1.0, &[0.5, 1.0], &mut rng).unwrap();
        let xp = simulate_x(&cfg, &vp, &mut rng).unwrap();
        for (t, x) in xp.grid.iter().zip(&xp.states) {
            let e = cfg.semigroup.matrix(*t).unwrap() * cfg.x0.as_vector();
            assert!((x.as_vector() - e).norm() < 1e-15);
        }
        assert_eq!(adjusted_return_cov(&cfg, &vp, 0.2, 0.5).unwrap(), HsMat::zeros(2));
    }

    #[test]
    fn constant_volatility_closed_form() {
        let tol = Tolerances::default();
        let y = HsMat::from_rows(&[vec![0.5, 0.1], vec![0.1, 0.3]]).unwrap();
        let vol = VolConfig::new(y.clone(), LiftedDrift::Zero, LevyDriver::zero(2), tol).unwrap();
        let q = HsMat::from_rows(&[vec![1.0, 0.4], vec![0.4, 2.0]]).unwrap();
        let cfg = XConfig::new(HVec::zeros(2), StateSemigroup::Identity(2), q.clone(), vol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vp = simulate_y(&cfg.vol, 2.0, &[2.0], &mut rng).unwrap();
        let cov = adjusted_return_cov(&cfg, &vp, 0.5, 1.2).unwrap();
        let h = psd_sqrt(&y, &tol).unwrap();
        let exact = (&(&h * &q) * &h).scaled(1.2);
        assert!((&cov - &exact).hs_norm() < 1e-13);
        assert!(adjusted_return_cov(&cfg, &vp, 1.5, 1.0).is_err());
    }

    #[test]
    fn cf_trivial_cases() {
        let cfg = diag_cfg();
        assert_eq!(cf_x(&cfg, 1.0, &HVec::zeros(3), CfRoute::SqrtD).unwrap(), Complex::new(1.0, 0.0));
        // frozen volatility: Gaussian closed form
        let tol = Tolerances::default();
        let y0 = HsMat::diag(&[0.4, 0.2, 0.3]);
        let vol = VolConfig::new(y0.clone(), LiftedDrift::Zero, LevyDriver::zero(3), tol).unwrap();
        let q = HsMat::diag(&[1.0, 2.0, 0.5]);
        let x0 = HVec::new(vec![0.1, -0.2, 0.3]).unwrap();
        let cfg = XConfig::new(x0.clone(), StateSemigroup::Identity(3), q.clone(), vol).unwrap();
        let f = HVec::new(vec![0.5, 1.0, -0.7]).unwrap();
        let t = 1.4;
        let dh = q.apply(&f).unwrap().coeffs().iter().zip(f.coeffs()).zip(y0.matrix().diagonal().iter()).map(|((a, b), y)| a * b * y).sum::<f64>();
        let exact = cexp(Complex::new(-0.5 * t * dh, x0.inner(&f).unwrap()));
        for route in [CfRoute::SqrtD, CfRoute::LiftedQ] {
            assert!((cf_x(&cfg, t, &f, route).unwrap() - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn cf_routes_agree_and_bounded() {
        let cfg = diag_cfg();
        let f = HVec::new(vec![0.6, -0.4, 0.9]).unwrap();
        let a = cf_x(&cfg, 1.0, &f, CfRoute::SqrtD).unwrap();
        let b = cf_x(&cfg, 1.0, &f, CfRoute::LiftedQ).unwrap();
        assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        assert!(a.norm() <= 1.0);
        let wrapped = samuelson_wrap(&cfg, VolScale::ExpDecay { kappa: 0.5 }, &[1.0]).unwrap();
        assert!(matches!(cf_x(&wrapped, 1.0, &f, CfRoute::SqrtD), Err(Error::Unsupported(_))));
    }

    #[test]
    fn cf_refuses_non_commuting() {
        let tol = Tolerances::default();
        let qz = HsMat::diag(&[1.0, 0.5]);
        let driver = LevyDriver::Wishart(WishartCp::new(1.0, qz, &tol).unwrap());
        let vol = VolConfig::new(HsMat::identity(2), LiftedDrift::Zero, driver, tol).unwrap();
        let cfg = XConfig::new(HVec::zeros(2), StateSemigroup::Identity(2), HsMat::diag(&[1.0, 2.0]), vol).unwrap();
        let f = HVec::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(cf_x(&cfg, 1.0, &f, CfRoute::SqrtD), Err(Error::CommutationFailed { .. })));
    }

    #[test]
    fn lifted_q_path_identities() {
        let cfg = diag_cfg();
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vp = simulate_y(&cfg.vol, 2.0, &[], &mut rng).unwrap();
        let same = lifted_lq_path(&vp.driver_path, &HsMat::identity(3), &tol).unwrap();
        assert_eq!(same, vp.driver_path);
        let zero = lifted_lq_path(&vp.driver_path, &HsMat::zeros(3), &tol).unwrap();
        assert!(zero.events.iter().all(|e| e.mark.hs_norm() == 0.0));
        for k in 0..20 {
            let t = 0.1 * k as f64;
            let y = vp.state_at(t).unwrap();
            let yq = yq_at(&cfg.vol, &cfg.q, &vp.driver_path, t).unwrap();
            let qy = HsMat::wrap(cfg.q.matrix() * y.matrix());
            let yq2 = HsMat::wrap(y.matrix() * cfg.q.matrix());
            assert!((&yq - &qy).hs_norm() < 1e-10 && (&yq - &yq2).hs_norm() < 1e-10);
        }
    }

    #[test]
    fn commuting_and_general_covariance_agree() {
        let cfg = diag_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vp = simulate_y(&cfg.vol, 1.0, &[1.0], &mut rng).unwrap();
        let a = step_covariance(&cfg, &vp, 0.0, 1.0, true).unwrap();
        let b = step_covariance(&cfg, &vp, 0.0, 1.0, false).unwrap();
        assert!((&a - &b).hs_norm() < 1e-10 * a.hs_norm().max(1.0));
    }

    #[test]
    fn identity_scale_leaves_paths_unchanged() {
        let cfg = diag_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vp = simulate_y(&cfg.vol, 1.0, &[0.5, 1.0], &mut rng).unwrap();
        let wrapped = samuelson_wrap(&cfg, VolScale::Fixed(HsMat::identity(3)), &vp.grid).unwrap();
        let a = XStepper::with_commuting(&cfg, &vp, false).unwrap().sample(&mut ChaCha8Rng::seed_from_u64(9));
        let b = XStepper::new(&wrapped, &vp).unwrap().sample(&mut ChaCha8Rng::seed_from_u64(9));
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x.as_vector() - y.as_vector()).norm() < 1e-12);
        }
        let bad = VolScale::Custom(Arc::new(|t: f64| DMatrix::from_element(3, 3, 1.0 / (1.0 - t))));
        assert!(matches!(samuelson_wrap(&cfg, bad, &[0.5, 1.0]), Err(Error::UnboundedScale { .. })));
    }
}
