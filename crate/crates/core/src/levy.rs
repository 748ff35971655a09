//! Non-decreasing operator-valued Lévy drivers.
//!
//! Two families are provided. [`ScalarTimesU`] multiplies a scalar
//! subordinator by a fixed non-negative operator `U`. [`WishartCp`] is a
//! compound Poisson process whose marks are tensor squares `Z ⊗ Z` of
//! centred Gaussian vectors. Neither has a Gaussian part.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::hs::{check_dim, fredholm_det_with_sqrt, hs_inner, psd_sqrt, HVec, HsMat, Tolerances};
use crate::scalar::{cexp, cis, cln, Scalar};

/// Law of the jump sizes of a scalar subordinator, supported on `(0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JumpLaw<T> {
    Exponential { mean: T },
    Gamma { shape: T, scale: T },
    Deterministic { size: T },
}

impl<T: Scalar> JumpLaw<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Exponential { mean } => mean > T::zero() && mean.is_finite(),
            Self::Gamma { shape, scale } => shape > T::zero() && scale > T::zero() && (shape * scale).is_finite(),
            Self::Deterministic { size } => size > T::zero() && size.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("jump law parameters must be positive and finite: {self:?}")))
        }
    }

    /// `E[e^{iuJ}]`
    pub fn cf(&self, u: T) -> Complex<T> {
        let one = Complex::new(T::one(), T::zero());
        match *self {
            Self::Exponential { mean } => one / Complex::new(T::one(), -u * mean),
            Self::Gamma { shape, scale } => cexp(cln(Complex::new(T::one(), -u * scale)) * (-shape)),
            Self::Deterministic { size } => cis(u * size),
        }
    }

    /// `E[e^{-uJ}]`, defined for `u` above the left end of the convergence strip.
    pub fn laplace(&self, u: T) -> Result<T> {
        let v = match *self {
            Self::Exponential { mean } => T::one() / (T::one() + u * mean),
            Self::Gamma { shape, scale } => (T::one() + u * scale).powf(-shape),
            Self::Deterministic { size } => (-u * size).exp(),
        };
        if v.is_finite() && v > T::zero() && match *self {
            Self::Exponential { mean } => T::one() + u * mean > T::zero(),
            Self::Gamma { scale, .. } => T::one() + u * scale > T::zero(),
            Self::Deterministic { .. } => true,
        } {
            Ok(v)
        } else {
            Err(Error::InvalidParameter(format!("Laplace transform of {self:?} diverges at {u}")))
        }
    }

    pub fn mean(&self) -> T {
        match *self {
            Self::Exponential { mean } => mean,
            Self::Gamma { shape, scale } => shape * scale,
            Self::Deterministic { size } => size,
        }
    }

    /// `E[J²]`
    pub fn second_moment(&self) -> T {
        match *self {
            Self::Exponential { mean } => T::lit(2.0) * mean * mean,
            Self::Gamma { shape, scale } => shape * (shape + T::one()) * scale * scale,
            Self::Deterministic { size } => size * size,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let v = match *self {
            Self::Exponential { mean } => Exp::new(1.0 / mean.as_f64()).expect("validated").sample(rng),
            Self::Gamma { shape, scale } => {
                Gamma::new(shape.as_f64(), scale.as_f64()).expect("validated").sample(rng)
            }
            Self::Deterministic { size } => return size,
        };
        T::lit(v)
    }
}

/// Scalar subordinator: non-negative drift plus compound Poisson jumps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubordinatorSpec<T> {
    pub drift_rate: T,
    pub intensity: T,
    pub jump_law: JumpLaw<T>,
}

impl<T: Scalar> SubordinatorSpec<T> {
    pub fn new(drift_rate: T, intensity: T, jump_law: JumpLaw<T>) -> Result<Self> {
        if !(drift_rate >= T::zero() && drift_rate.is_finite()) || !(intensity >= T::zero() && intensity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "subordinator drift rate and intensity must be non-negative, got {drift_rate} and {intensity}"
            )));
        }
        jump_law.validate()?;
        Ok(Self { drift_rate, intensity, jump_law })
    }

    /// Characteristic exponent `ψ(u) = iγu + λ(E[e^{iuJ}] - 1)`.
    pub fn exponent(&self, u: T) -> Complex<T> {
        Complex::new(T::zero(), self.drift_rate * u)
            + (self.jump_law.cf(u) - Complex::new(T::one(), T::zero())) * self.intensity
    }

    pub fn mean(&self) -> T {
        self.drift_rate + self.intensity * self.jump_law.mean()
    }

    /// `Var(L(1)) = λ E[J²]`
    pub fn variance(&self) -> T {
        self.intensity * self.jump_law.second_moment()
    }
}

/// `𝔏(t) = L(t) U` for a scalar subordinator `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarTimesU<T: Scalar> {
    pub sub: SubordinatorSpec<T>,
    pub u: HsMat<T>,
}

impl<T: Scalar> ScalarTimesU<T> {
    pub fn new(sub: SubordinatorSpec<T>, u: HsMat<T>, tol: &Tolerances<T>) -> Result<Self> {
        u.ensure_psd(tol)?;
        Ok(Self { sub, u: u.sym_part() })
    }
}

/// Compound Poisson process with marks `Z ⊗ Z`, `Z ~ N(0, Qz)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WishartCp<T: Scalar> {
    pub lambda: T,
    pub qz: HsMat<T>,
    qz_half: HsMat<T>,
}

impl<T: Scalar> WishartCp<T> {
    pub fn new(lambda: T, qz: HsMat<T>, tol: &Tolerances<T>) -> Result<Self> {
        if !(lambda >= T::zero() && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("Poisson intensity must be >= 0, got {lambda}")));
        }
        qz.ensure_psd(tol)?;
        let qz = qz.sym_part();
        let qz_half = psd_sqrt(&qz, tol)?;
        Ok(Self { lambda, qz, qz_half })
    }

    pub fn qz_half(&self) -> &HsMat<T> {
        &self.qz_half
    }

    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> HsMat<T> {
        let n = self.qz.dim();
        let xi = DMatrix::<T>::from_fn(n, 1, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
        let z = self.qz_half.matrix() * xi;
        HsMat::wrap(&z * z.transpose())
    }
}

/// Operator-valued Lévy driver with non-decreasing paths.
#[derive(Clone, Debug, PartialEq)]
pub enum LevyDriver<T: Scalar> {
    ScalarTimesU(ScalarTimesU<T>),
    Wishart(WishartCp<T>),
}

/// One jump of a driver path.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpEvent<T: Scalar> {
    pub time: T,
    pub mark: HsMat<T>,
}

/// A sampled driver path on `[0, horizon]`:
/// `𝔏(t) = Σ_{τ_i ≤ t} mark_i + t · drift_rate_part`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriverPath<T: Scalar> {
    pub horizon: T,
    pub events: Vec<JumpEvent<T>>,
    pub drift_rate_part: HsMat<T>,
}

impl<T: Scalar> DriverPath<T> {
    pub fn empty(dim: usize, horizon: T) -> Self {
        Self { horizon, events: Vec::new(), drift_rate_part: HsMat::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.drift_rate_part.dim()
    }

    pub fn has_drift_rate(&self) -> bool {
        self.drift_rate_part.matrix().iter().any(|v| *v != T::zero())
    }

    pub fn jump_count(&self) -> usize {
        self.events.len()
    }

    /// `𝔏(t)`
    pub fn value_at(&self, t: T) -> Result<HsMat<T>> {
        self.increment(T::zero(), t)
    }

    /// `𝔏(t) - 𝔏(s)`
    pub fn increment(&self, s: T, t: T) -> Result<HsMat<T>> {
        if t > self.horizon {
            return Err(Error::OutsideHorizon { time: t.as_f64(), horizon: self.horizon.as_f64() });
        }
        let mut acc = self.drift_rate_part.matrix() * (t - s);
        for e in self.events.iter().filter(|e| e.time > s && e.time <= t) {
            acc += e.mark.matrix();
        }
        Ok(HsMat::wrap(acc))
    }

    /// The path of `u ↦ 𝔏(s + u) - 𝔏(s)` on `[0, horizon - s]`.
    pub fn tail(&self, s: T) -> Result<Self> {
        if s > self.horizon || s < T::zero() {
            return Err(Error::OutsideHorizon { time: s.as_f64(), horizon: self.horizon.as_f64() });
        }
        Ok(Self {
            horizon: self.horizon - s,
            events: self
                .events
                .iter()
                .filter(|e| e.time > s)
                .map(|e| JumpEvent { time: e.time - s, mark: e.mark.clone() })
                .collect(),
            drift_rate_part: self.drift_rate_part.clone(),
        })
    }

    /// Applies `f` to every mark and to the drift-rate part.
    pub fn map_marks<F: FnMut(&HsMat<T>) -> HsMat<T>>(&self, mut f: F) -> Self {
        Self {
            horizon: self.horizon,
            events: self.events.iter().map(|e| JumpEvent { time: e.time, mark: f(&e.mark) }).collect(),
            drift_rate_part: f(&self.drift_rate_part),
        }
    }
}

impl<T: Scalar> LevyDriver<T> {
    /// The driver that is identically zero.
    pub fn zero(dim: usize) -> Self {
        Self::ScalarTimesU(ScalarTimesU {
            sub: SubordinatorSpec {
                drift_rate: T::zero(),
                intensity: T::zero(),
                jump_law: JumpLaw::Deterministic { size: T::one() },
            },
            u: HsMat::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::ScalarTimesU(d) => d.u.dim(),
            Self::Wishart(d) => d.qz.dim(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::ScalarTimesU(d) => {
                (d.sub.drift_rate == T::zero() && d.sub.intensity == T::zero()) || d.u.hs_norm() == T::zero()
            }
            Self::Wishart(d) => d.lambda == T::zero() || d.qz.hs_norm() == T::zero(),
        }
    }

    fn jump_intensity(&self) -> T {
        match self {
            Self::ScalarTimesU(d) => d.sub.intensity,
            Self::Wishart(d) => d.lambda,
        }
    }

    /// Exact path sampling: Poisson jump count and uniform order statistics for the times.
    pub fn sample_path<R: Rng + ?Sized>(&self, horizon: T, rng: &mut R) -> Result<DriverPath<T>> {
        if !(horizon > T::zero()) {
            return Err(Error::InvalidParameter(format!("horizon must be > 0, got {horizon}")));
        }
        let n = self.dim();
        let rate = (self.jump_intensity() * horizon).as_f64();
        let count = if rate > 0.0 {
            Poisson::new(rate).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng) as usize
        } else {
            0
        };
        let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        let mut events = Vec::with_capacity(count);
        for u in times {
            // (0, horizon]
            let time = horizon * T::lit(1.0 - u);
            let mark = match self {
                Self::ScalarTimesU(d) => d.u.scaled(d.sub.jump_law.sample(rng)),
                Self::Wishart(d) => d.sample_mark(rng),
            };
            events.push(JumpEvent { time, mark });
        }
        events.reverse();
        let drift_rate_part = match self {
            Self::ScalarTimesU(d) => d.u.scaled(d.sub.drift_rate),
            Self::Wishart(_) => HsMat::zeros(n),
        };
        Ok(DriverPath { horizon, events, drift_rate_part })
    }

    /// Lévy exponent `Ψ(T)` with `E[e^{i⟨𝔏(1), T⟩}] = e^{Ψ(T)}`, for self-adjoint `T`.
    pub fn cumulant(&self, t: &HsMat<T>, tol: &Tolerances<T>) -> Result<Complex<T>> {
        check_dim(self.dim(), t.dim())?;
        t.ensure_self_adjoint(tol)?;
        match self {
            Self::ScalarTimesU(d) => Ok(d.sub.exponent(hs_inner(&d.u, t)?)),
            Self::Wishart(d) => {
                if d.lambda == T::zero() {
                    return Ok(Complex::new(T::zero(), T::zero()));
                }
                let f = fredholm_det_with_sqrt(t, &d.qz_half, tol)?;
                Ok((f.inv_sqrt - Complex::new(T::one(), T::zero())) * d.lambda)
            }
        }
    }

    /// Laplace exponent `Φ(S) = log E[e^{-⟨𝔏(1), S⟩}]`, i.e. `Ψ(iS)`.
    ///
    /// Defined for self-adjoint `S` with `I + 2 Qz^{1/2} S Qz^{1/2}` positive
    /// definite (Wishart) or `⟨U, S⟩` inside the jump law's strip.
    pub fn laplace_exponent(&self, s: &HsMat<T>, tol: &Tolerances<T>) -> Result<T> {
        check_dim(self.dim(), s.dim())?;
        s.ensure_self_adjoint(tol)?;
        match self {
            Self::ScalarTimesU(d) => {
                let u = hs_inner(&d.u, s)?;
                if d.sub.intensity == T::zero() {
                    return Ok(-d.sub.drift_rate * u);
                }
                Ok(-d.sub.drift_rate * u + d.sub.intensity * (d.sub.jump_law.laplace(u)? - T::one()))
            }
            Self::Wishart(d) => {
                if d.lambda == T::zero() {
                    return Ok(T::zero());
                }
                let h = d.qz_half.matrix();
                let inner = h * s.sym_part().matrix() * h;
                let sym = (&inner + inner.transpose()) * T::lit(0.5);
                let mut log_det = T::zero();
                for mu in nalgebra::SymmetricEigen::new(sym).eigenvalues.iter() {
                    let f = T::one() + T::lit(2.0) * *mu;
                    if !(f > T::zero()) {
                        return Err(Error::SingularDeterminant { modulus: f.as_f64() });
                    }
                    log_det += f.ln();
                }
                Ok(d.lambda * ((-T::lit(0.5) * log_det).exp() - T::one()))
            }
        }
    }

    /// `E[𝔏(1)]`
    pub fn mean_l1(&self) -> HsMat<T> {
        match self {
            Self::ScalarTimesU(d) => d.u.scaled(d.sub.mean()),
            Self::Wishart(d) => d.qz.scaled(d.lambda),
        }
    }

    /// Covariance operator `𝔔` of `𝔏(1)` applied to `T`.
    ///
    /// For the Wishart driver the identity
    /// `𝔔T = λ (Qz tr(T Qz) + 2 Qz T Qz)` (symmetric `T`) is checked
    /// against Monte Carlo once per process before its first use.
    pub fn covariance_apply(&self, t: &HsMat<T>) -> Result<HsMat<T>> {
        check_dim(self.dim(), t.dim())?;
        match self {
            Self::ScalarTimesU(d) => Ok(d.u.scaled(d.sub.variance() * hs_inner(&d.u, t)?)),
            Self::Wishart(d) => {
                wishart_covariance_self_test()?;
                let s = t.sym_part();
                let q = d.qz.matrix();
                let tr = (s.matrix() * q).trace();
                let m = q * tr + q * s.matrix() * q * T::lit(2.0);
                Ok(HsMat::wrap(m * d.lambda))
            }
        }
    }

    /// `tr 𝔔 = E‖𝔏(1) - E𝔏(1)‖²_HS`
    pub fn covariance_trace(&self) -> T {
        match self {
            Self::ScalarTimesU(d) => {
                let n = d.u.hs_norm();
                d.sub.variance() * n * n
            }
            Self::Wishart(d) => {
                let tr = d.qz.trace();
                let q = d.qz.matrix();
                d.lambda * (tr * tr + T::lit(2.0) * (q * q).trace())
            }
        }
    }
}

static WISHART_SELF_TEST: OnceLock<std::result::Result<(), String>> = OnceLock::new();

/// Monte Carlo check of the Wishart compound Poisson covariance identity.
///
/// Runs once per process with a fixed seed; the outcome is cached.
pub fn wishart_covariance_self_test() -> Result<()> {
    WISHART_SELF_TEST.get_or_init(run_wishart_self_test).clone().map_err(Error::SelfTestFailed)
}

fn run_wishart_self_test() -> std::result::Result<(), String> {
    let tol = Tolerances::<f64>::default();
    let qz = HsMat::from_rows(&[vec![1.0, 0.3, 0.0], vec![0.3, 0.8, 0.2], vec![0.0, 0.2, 0.5]])
        .map_err(|e| e.to_string())?;
    let lambda = 2.0;
    let driver = WishartCp::new(lambda, qz.clone(), &tol).map_err(|e| e.to_string())?;
    let tests = [
        HsMat::from_rows(&[vec![1.0, 0.5, -0.2], vec![0.5, -0.3, 0.4], vec![-0.2, 0.4, 0.7]]).map_err(|e| e.to_string())?,
        HsMat::from_rows(&[vec![0.2, -0.6, 0.1], vec![-0.6, 0.9, 0.0], vec![0.1, 0.0, -0.4]]).map_err(|e| e.to_string())?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    let samples = 100_000usize;
    let poisson = Poisson::new(lambda).map_err(|e| e.to_string())?;
    let mut vals = vec![[0.0f64; 2]; samples];
    for v in vals.iter_mut() {
        let k = poisson.sample(&mut rng) as usize;
        let mut l = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..k {
            l += driver.sample_mark(&mut rng).matrix();
        }
        let l = HsMat::wrap(l);
        for (j, t) in tests.iter().enumerate() {
            v[j] = hs_inner(&l, t).map_err(|e| e.to_string())?;
        }
    }
    let n = samples as f64;
    let mean = [0, 1].map(|j| vals.iter().map(|v| v[j]).sum::<f64>() / n);
    for (a, b) in [(0, 0), (0, 1), (1, 1)] {
        let prods: Vec<f64> = vals.iter().map(|v| (v[a] - mean[a]) * (v[b] - mean[b])).collect();
        let emp = prods.iter().sum::<f64>() / n;
        let se = (prods.iter().map(|p| (p - emp) * (p - emp)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let q = driver.qz.matrix();
        let s = tests[a].matrix();
        let formula = lambda * ((s * q).trace() * (tests[b].matrix() * q).trace() + 2.0 * (s * q * tests[b].matrix() * q).trace());
        if (emp - formula).abs() > 5.0 * se {
            return Err(format!(
                "Wishart covariance identity rejected: entry ({a},{b}) empirical {emp:.6} vs formula {formula:.6}, se {se:.2e}"
            ));
        }
    }
    Ok(())
}

/// Outcome of [`verify_nondecreasing`].
#[derive(Clone, Debug, Default)]
pub struct NondecreasingReport {
    pub checked: usize,
    /// `(event index or None for the drift-rate part, test vector index, value)`.
    pub violations: Vec<(Option<usize>, usize, f64)>,
    /// Always false: drivers carry no Gaussian part by construction.
    pub gaussian_part: bool,
}

impl NondecreasingReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && !self.gaussian_part
    }
}

/// Checks `(mark f, f) ≥ -eps_psd` for every event and test vector, and
/// that the drift-rate part is non-negative.
pub fn verify_nondecreasing<T: Scalar>(path: &DriverPath<T>, test_vectors: &[HVec<T>], tol: &Tolerances<T>) -> Result<NondecreasingReport> {
    let mut rep = NondecreasingReport::default();
    for (j, f) in test_vectors.iter().enumerate() {
        check_dim(path.dim(), f.dim())?;
        let quad = |m: &HsMat<T>| -> Result<T> { f.inner(&m.apply(f)?) };
        for (i, e) in path.events.iter().enumerate() {
            let v = quad(&e.mark)?;
            rep.checked += 1;
            if v < -tol.eps_psd {
                rep.violations.push((Some(i), j, v.as_f64()));
            }
        }
        let v = quad(&path.drift_rate_part)?;
        rep.checked += 1;
        if v < -tol.eps_psd {
            rep.violations.push((None, j, v.as_f64()));
        }
    }
    if !path.drift_rate_part.is_psd(tol) {
        rep.violations.push((None, usize::MAX, path.drift_rate_part.min_eigenvalue().as_f64()));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wishart(lambda: f64, qz: &[Vec<f64>]) -> LevyDriver<f64> {
        LevyDriver::Wishart(WishartCp::new(lambda, HsMat::from_rows(qz).unwrap(), &Tolerances::default()).unwrap())
    }

    fn stu(law: JumpLaw<f64>, lambda: f64, drift: f64, u: HsMat<f64>) -> LevyDriver<f64> {
        let sub = SubordinatorSpec::new(drift, lambda, law).unwrap();
        LevyDriver::ScalarTimesU(ScalarTimesU::new(sub, u, &Tolerances::default()).unwrap())
    }

    #[test]
    fn jump_law_cf_at_zero_and_moments() {
        for law in [
            JumpLaw::<f64>::Exponential { mean: 0.7 },
            JumpLaw::Gamma { shape: 2.5, scale: 0.4 },
            JumpLaw::Deterministic { size: 1.3 },
        ] {
            assert_eq!(law.cf(0.0), Complex::new(1.0, 0.0));
            // derivative of Im cf at 0 is the mean
            let h = 1e-6;
            let d = (law.cf(h).im - law.cf(-h).im) / (2.0 * h);
            assert!((d - law.mean()).abs() < 1e-8);
            let d2 = -(law.cf(h).re - 2.0 + law.cf(-h).re) / (h * h);
            assert!((d2 - law.second_moment()).abs() < 1e-3 * law.second_moment().max(1.0));
        }
        assert!(JumpLaw::Gamma { shape: 0.0, scale: 1.0 }.validate().is_err());
        assert!(SubordinatorSpec::new(-1.0, 1.0, JumpLaw::Deterministic { size: 1.0 }).is_err());
    }

    #[test]
    fn zero_driver_has_empty_paths() {
        let d = LevyDriver::<f64>::zero(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = d.sample_path(5.0, &mut rng).unwrap();
        assert!(p.events.is_empty());
        assert_eq!(p.value_at(5.0).unwrap(), HsMat::zeros(3));
        assert_eq!(d.mean_l1(), HsMat::zeros(3));
        let t = HsMat::identity(3);
        assert_eq!(d.cumulant(&t, &Tolerances::default()).unwrap(), Complex::new(0.0, 0.0));
        assert!(d.is_zero());
    }

    #[test]
    fn wishart_scalar_cumulant() {
        let (lambda, q, theta) = (1.7, 0.6, 0.9);
        let d = wishart(lambda, &[vec![q]]);
        let got = d.cumulant(&HsMat::diag(&[theta]), &Tolerances::default()).unwrap();
        let exact = (Complex::new(1.0, -2.0 * theta * q).powf(-0.5) - 1.0) * lambda;
        assert!((got - exact).norm() < 1e-14);
        assert_eq!(d.cumulant(&HsMat::zeros(1), &Tolerances::default()).unwrap(), Complex::new(0.0, 0.0));
    }

    #[test]
    fn cumulant_hermitian_symmetry_and_mean_derivative() {
        let tol = Tolerances::default();
        let t = HsMat::from_rows(&[vec![0.4, -0.2], vec![-0.2, 0.9]]).unwrap();
        for d in [
            wishart(2.0, &[vec![1.0, 0.2], vec![0.2, 0.5]]),
            stu(JumpLaw::Gamma { shape: 2.0, scale: 0.3 }, 1.5, 0.2, HsMat::diag(&[1.0, 0.4])),
        ] {
            let a = d.cumulant(&t, &tol).unwrap();
            let b = d.cumulant(&t.scaled(-1.0), &tol).unwrap();
            assert!((a.conj() - b).norm() < 1e-13);
            let h = 1e-5;
            let deriv = (d.cumulant(&t.scaled(h), &tol).unwrap().im - d.cumulant(&t.scaled(-h), &tol).unwrap().im) / (2.0 * h);
            assert!((deriv - hs_inner(&d.mean_l1(), &t).unwrap()).abs() < 1e-6);
        }
        let asym = HsMat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            wishart(1.0, &[vec![1.0, 0.0], vec![0.0, 1.0]]).cumulant(&asym, &tol),
            Err(Error::NotSelfAdjoint { .. })
        ));
    }

    #[test]
    fn laplace_exponent_matches_imaginary_cumulant() {
        // Φ(S) = Ψ(iS): compare with the scalar closed forms
        let d = wishart(1.5, &[vec![0.8]]);
        let s = 0.7;
        let phi = d.laplace_exponent(&HsMat::diag(&[s]), &Tolerances::default()).unwrap();
        assert!((phi - 1.5 * ((1.0 + 2.0 * s * 0.8f64).powf(-0.5) - 1.0)).abs() < 1e-14);
        let d = stu(JumpLaw::Gamma { shape: 2.0, scale: 0.3 }, 1.5, 0.2, HsMat::diag(&[1.0, 0.4]));
        let sm = HsMat::diag(&[0.5, 1.0]);
        let u = 0.5 + 0.4;
        let exact = -0.2 * u + 1.5 * ((1.0 + 0.3 * u as f64).powf(-2.0) - 1.0);
        assert!((d.laplace_exponent(&sm, &Tolerances::default()).unwrap() - exact).abs() < 1e-14);
        assert!(d.laplace_exponent(&sm.scaled(-100.0), &Tolerances::default()).is_err());
    }

    #[test]
    fn means_closed_form() {
        let d = wishart(2.0, &[vec![1.0, 0.0], vec![0.0, 3.0]]);
        assert_eq!(d.mean_l1(), HsMat::diag(&[2.0, 6.0]));
        let u = HsMat::diag(&[1.0, 2.0]);
        let d = stu(JumpLaw::Exponential { mean: 0.5 }, 3.0, 0.25, u.clone());
        assert_eq!(d.mean_l1(), u.scaled(0.25 + 3.0 * 0.5));
    }

    #[test]
    fn scalar_times_u_covariance() {
        let u = HsMat::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let d = stu(JumpLaw::Exponential { mean: 0.5 }, 3.0, 0.25, u.clone());
        let var = 3.0 * 2.0 * 0.25;
        let orth = HsMat::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(hs_inner(&u, &orth).unwrap(), 0.0);
        assert_eq!(d.covariance_apply(&orth).unwrap(), HsMat::zeros(2));
        let n2 = u.hs_norm().powi(2);
        assert!((&d.covariance_apply(&u).unwrap() - &u.scaled(var * n2)).hs_norm() < 1e-14);
        assert!((d.covariance_trace() - var * n2).abs() < 1e-14);
    }

    #[test]
    fn wishart_self_test_passes() {
        wishart_covariance_self_test().unwrap();
        let d = wishart(2.0, &[vec![1.0, 0.0], vec![0.0, 3.0]]);
        // trace of the covariance equals Σ over an orthonormal basis of ⟨𝔔E, E⟩
        let mut tr = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = HsMat::unit(2, i, j);
                tr += hs_inner(&d.covariance_apply(&e).unwrap(), &e).unwrap();
            }
        }
        assert!((tr - d.covariance_trace()).abs() < 1e-12);
    }

    #[test]
    fn sampled_marks_and_times() {
        let d = wishart(4.0, &[vec![1.0, 0.3, 0.0], vec![0.3, 0.8, 0.2], vec![0.0, 0.2, 0.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tol = Tolerances::default();
        for _ in 0..50 {
            let p = d.sample_path(2.0, &mut rng).unwrap();
            for w in p.events.windows(2) {
                assert!(w[0].time < w[1].time);
            }
            for e in &p.events {
                assert!(e.time > 0.0 && e.time <= 2.0);
                let ev = nalgebra::SymmetricEigen::new(e.mark.matrix().clone()).eigenvalues;
                let big = ev.iter().filter(|v| v.abs() > 1e-12).count();
                assert_eq!(big, 1);
            }
            let fs: Vec<_> = (0..3).map(|k| HVec::basis(3, k)).collect();
            assert!(verify_nondecreasing(&p, &fs, &tol).unwrap().passed());
        }
    }

    #[test]
    fn path_tail_and_increments() {
        let d = stu(JumpLaw::Deterministic { size: 1.0 }, 5.0, 0.5, HsMat::identity(2));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = d.sample_path(3.0, &mut rng).unwrap();
        let s = 1.2;
        let tail = p.tail(s).unwrap();
        for &u in &[0.0, 0.4, 1.8] {
            let a = tail.value_at(u).unwrap();
            let b = p.increment(s, s + u).unwrap();
            assert!((&a - &b).hs_norm() < 1e-13);
        }
        assert!(p.value_at(3.5).is_err());
    }
}
