//! Bounded drifts acting on the Hilbert–Schmidt operators and their
//! uniformly continuous semigroups.
//!
//! Two closed-form families are supported:
//!
//! * sandwich: `T ↦ C T C^*`, semigroup `Σ_n t^n/n! C^n T (C^*)^n`;
//! * Lyapunov: `T ↦ C T + T C^*`, semigroup `e^{tC} T e^{tC^*}`.
//!
//! Both commute with taking adjoints and both semigroups map non-negative
//! operators to non-negative operators.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hs::{check_dim, op_norm, HsMat, Tolerances};
use crate::quadrature::{gauss_legendre_adaptive, CompositeRule};
use crate::scalar::Scalar;

/// Default truncation cap for the sandwich semigroup series.
pub const DEFAULT_SERIES_CAP: usize = 64;
/// Largest dimension for which the `N^2 x N^2` lifted matrix is built.
pub const DEFAULT_ORACLE_CAP: usize = 8;

/// Drift operator on the Hilbert–Schmidt space.
#[derive(Clone, Debug, PartialEq)]
pub enum LiftedDrift<T: Scalar> {
    /// `T ↦ C T C^*`
    Sandwich { c: DMatrix<T>, series_cap: usize },
    /// `T ↦ C T + T C^*`
    Lyapunov { c: DMatrix<T> },
    Zero,
}

impl<T: Scalar> LiftedDrift<T> {
    pub fn sandwich(c: DMatrix<T>) -> Result<Self> {
        square(&c)?;
        Ok(Self::Sandwich { c, series_cap: DEFAULT_SERIES_CAP })
    }

    pub fn lyapunov(c: DMatrix<T>) -> Result<Self> {
        square(&c)?;
        Ok(Self::Lyapunov { c })
    }

    /// Dimension of the underlying `H`, if the drift fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Sandwich { c, .. } | Self::Lyapunov { c } => Some(c.nrows()),
            Self::Zero => None,
        }
    }

    pub fn generator(&self) -> Option<&DMatrix<T>> {
        match self {
            Self::Sandwich { c, .. } | Self::Lyapunov { c } => Some(c),
            Self::Zero => None,
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim(d, n),
            None => Ok(()),
        }
    }

    /// Upper bound on the operator norm of the drift on `ℋ`:
    /// `‖C‖²` for the sandwich form, `2‖C‖` for the Lyapunov form.
    pub fn op_norm_bound(&self) -> T {
        match self {
            Self::Sandwich { c, .. } => {
                let n = op_norm(c);
                n * n
            }
            Self::Lyapunov { c } => T::lit(2.0) * op_norm(c),
            Self::Zero => T::zero(),
        }
    }

    pub fn apply_drift(&self, t: &HsMat<T>) -> Result<HsMat<T>> {
        self.check_dim(t.dim())?;
        let m = t.matrix();
        Ok(match self {
            Self::Sandwich { c, .. } => HsMat::wrap(c * m * c.transpose()),
            Self::Lyapunov { c } => HsMat::wrap(c * m + m * c.transpose()),
            Self::Zero => HsMat::zeros(t.dim()),
        })
    }

    /// Precomputes `𝔖(t)` (or its adjoint `𝔖^*(t)`) for repeated application.
    pub fn propagator(&self, t: T, adjoint: bool, tol: &Tolerances<T>) -> Result<Propagator<T>> {
        if t < T::zero() {
            return Err(Error::InvalidParameter(format!("semigroup time must be >= 0, got {t}")));
        }
        if t == T::zero() {
            return Ok(Propagator::Identity);
        }
        Ok(match self {
            Self::Zero => Propagator::Identity,
            Self::Lyapunov { c } => {
                let gen = if adjoint { c.transpose() } else { c.clone() };
                Propagator::Congruence((gen * t).exp())
            }
            Self::Sandwich { c, series_cap } => {
                let gen = if adjoint { c.transpose() } else { c.clone() };
                let cn = op_norm(c);
                let a = t * cn * cn;
                // powers scaled by sqrt(t^n / n!)
                let mut powers = Vec::with_capacity(16);
                let mut p = DMatrix::identity(c.nrows(), c.nrows());
                powers.push(p.clone());
                let mut coeff = T::one();
                let reference = T::lit(1e6);
                for k in 1..=*series_cap {
                    if series_tail(a, k - 1) * reference <= tol.eps_series {
                        break;
                    }
                    coeff *= t / T::from_usize_lossy(k);
                    p = &gen * p;
                    powers.push(&p * coeff.sqrt());
                }
                Propagator::Series { powers, a, eps: tol.eps_series, cap: *series_cap, gen, t }
            }
        })
    }

    /// `𝔖(t) T`, or `𝔖^*(t) T` when `adjoint` is set.
    pub fn apply_semigroup(&self, t: T, op: &HsMat<T>, adjoint: bool, tol: &Tolerances<T>) -> Result<HsMat<T>> {
        self.check_dim(op.dim())?;
        self.propagator(t, adjoint, tol)?.apply(op)
    }

    /// Bochner integral `∫_0^t 𝔖(s) T ds` by composite Gauss–Legendre with
    /// 32 nodes per unit time, doubled until stable to `eps_quad`.
    pub fn integrated_semigroup(&self, t: T, op: &HsMat<T>, tol: &Tolerances<T>) -> Result<HsMat<T>> {
        self.check_dim(op.dim())?;
        if t < T::zero() {
            return Err(Error::InvalidParameter(format!("integration horizon must be >= 0, got {t}")));
        }
        if t == T::zero() {
            return Ok(HsMat::zeros(op.dim()));
        }
        if let Self::Zero = self {
            return Ok(op.scaled(t));
        }
        let rule = CompositeRule::per_unit_length(8, 32, t, tol.eps_quad);
        gauss_legendre_adaptive(
            |s| self.apply_semigroup(s, op, false, tol),
            T::zero(),
            t,
            &rule,
            "integrated semigroup",
        )
    }

    /// Matrix of the drift acting on column-major vectorised operators.
    pub fn brute_lift(&self, n: usize, cap: usize) -> Result<DMatrix<T>> {
        if n > cap {
            return Err(Error::OracleCapExceeded { n, cap });
        }
        self.check_dim(n)?;
        let id = DMatrix::<T>::identity(n, n);
        Ok(match self {
            // vec(A X B) = (B^T ⊗ A) vec(X)
            Self::Sandwich { c, .. } => c.kronecker(c),
            Self::Lyapunov { c } => id.kronecker(c) + c.kronecker(&id),
            Self::Zero => DMatrix::zeros(n * n, n * n),
        })
    }

    /// `exp(t L)` for the lifted matrix `L`; the adjoint uses `L^T`.
    pub fn brute_semigroup(&self, n: usize, t: T, adjoint: bool, cap: usize) -> Result<DMatrix<T>> {
        let l = self.brute_lift(n, cap)?;
        let l = if adjoint { l.transpose() } else { l };
        Ok((l * t).exp())
    }
}

fn square<T: Scalar>(c: &DMatrix<T>) -> Result<()> {
    if c.nrows() != c.ncols() || c.nrows() == 0 {
        return Err(Error::InvalidParameter(format!(
            "drift generator must be square, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// `a^{k+1}/(k+1)! e^a`, the remainder bound after the degree-`k` term.
fn series_tail<T: Scalar>(a: T, k: usize) -> T {
    let mut v = a.exp();
    for j in 1..=(k + 1) {
        v *= a / T::from_usize_lossy(j);
    }
    v
}

/// `𝔖(t)` (or `𝔖^*(t)`) frozen at a fixed time.
#[derive(Clone, Debug)]
pub enum Propagator<T: Scalar> {
    Identity,
    /// `T ↦ E T E^T`
    Congruence(DMatrix<T>),
    /// `T ↦ Σ_n B_n T B_n^T` with `B_n = sqrt(t^n/n!) G^n`.
    Series { powers: Vec<DMatrix<T>>, a: T, eps: T, cap: usize, gen: DMatrix<T>, t: T },
}

impl<T: Scalar> Propagator<T> {
    pub fn apply(&self, op: &HsMat<T>) -> Result<HsMat<T>> {
        let m = op.matrix();
        match self {
            Self::Identity => Ok(op.clone()),
            Self::Congruence(e) => {
                check_dim(e.nrows(), op.dim())?;
                Ok(HsMat::wrap(e * m * e.transpose()))
            }
            Self::Series { powers, a, eps, cap, gen, t } => {
                check_dim(gen.nrows(), op.dim())?;
                let norm = op.hs_norm();
                if norm == T::zero() {
                    return Ok(op.clone());
                }
                let mut k = 0;
                while series_tail(*a, k) * norm > *eps {
                    k += 1;
                    if k > *cap {
                        return Err(Error::SeriesTailUnreachable {
                            bound: (series_tail(*a, *cap) * norm).as_f64(),
                            cap: *cap,
                        });
                    }
                }
                let mut acc = m.clone();
                let mut extra: Option<(DMatrix<T>, T)> = None;
                for n in 1..=k {
                    let b = if n < powers.len() {
                        powers[n].clone()
                    } else {
                        // beyond the precomputed range
                        let (p, c) = extra.take().unwrap_or_else(|| {
                            let last = powers.len() - 1;
                            let mut c = T::one();
                            for j in 1..=last {
                                c *= *t / T::from_usize_lossy(j);
                            }
                            (&powers[last] / c.sqrt(), c)
                        });
                        let p = gen * p;
                        let c = c * *t / T::from_usize_lossy(n);
                        let b = &p * c.sqrt();
                        extra = Some((p, c));
                        b
                    };
                    acc += &b * m * b.transpose();
                }
                Ok(HsMat::wrap(acc))
            }
        }
    }
}

/// Outcome of [`positivity_preservation_check`].
#[derive(Clone, Debug, Default)]
pub struct PositivityReport {
    pub checked: usize,
    /// `(time, min eigenvalue)` of every violation.
    pub violations: Vec<(f64, f64)>,
    pub worst_min_eigenvalue: f64,
}

impl PositivityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples random non-negative operators and checks `λ_min(𝔖(t) T) ≥ -eps_psd`
/// at every time in `grid`.
pub fn positivity_preservation_check<T: Scalar, R: Rng + ?Sized>(
    drift: &LiftedDrift<T>,
    n: usize,
    grid: &[T],
    samples: usize,
    rng: &mut R,
    tol: &Tolerances<T>,
) -> Result<PositivityReport> {
    drift.check_dim(n)?;
    let props = grid
        .iter()
        .map(|&t| drift.propagator(t, false, tol).map(|p| (t, p)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = PositivityReport { worst_min_eigenvalue: f64::INFINITY, ..Default::default() };
    let scale = T::one() / T::from_usize_lossy(n);
    for _ in 0..samples {
        let g = DMatrix::<T>::from_fn(n, n, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
        let op = HsMat::wrap(&g * g.transpose() * scale);
        for (t, p) in &props {
            let out = p.apply(&op)?;
            let l = out.min_eigenvalue();
            report.checked += 1;
            report.worst_min_eigenvalue = report.worst_min_eigenvalue.min(l.as_f64());
            if l < -tol.eps_psd {
                report.violations.push((t.as_f64(), l.as_f64()));
            }
        }
    }
    Ok(report)
}
