//! Galerkin-truncated Hilbert space `H` (dimension `N`) and the Hilbert–Schmidt
//! operators on it, with the linear-algebra kernels the rest of the crate uses.
//!
//! Elements of `H` are coordinate vectors with respect to a fixed orthonormal
//! basis `e_1, ..., e_N`; Hilbert–Schmidt operators are dense `N x N` matrices
//! and the Hilbert–Schmidt inner product is the entrywise (Frobenius) one.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cabs, csqrt, Scalar};

/// Numerical tolerances used by the validators and the iterative kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances<T> {
    /// Maximum entrywise asymmetry accepted as self-adjoint.
    pub eps_sym: T,
    /// Eigenvalues in `[-eps_psd, 0)` are treated as zero; below that is an error.
    pub eps_psd: T,
    /// Stability target for quadrature refinement.
    pub eps_quad: T,
    /// Tail bound target for truncated operator series.
    pub eps_series: T,
}

impl<T: Scalar> Tolerances<T> {
    pub fn new(eps_sym: T, eps_psd: T, eps_quad: T, eps_series: T) -> Result<Self> {
        for (name, v) in [
            ("eps_sym", eps_sym),
            ("eps_psd", eps_psd),
            ("eps_quad", eps_quad),
            ("eps_series", eps_series),
        ] {
            if !(v > T::zero()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self { eps_sym, eps_psd, eps_quad, eps_series })
    }
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        if T::machine_eps() < T::lit(1e-12) {
            Self {
                eps_sym: T::lit(1e-10),
                eps_psd: T::lit(1e-9),
                eps_quad: T::lit(1e-8),
                eps_series: T::lit(1e-13),
            }
        } else {
            // single precision
            Self {
                eps_sym: T::lit(1e-4),
                eps_psd: T::lit(1e-4),
                eps_quad: T::lit(1e-5),
                eps_series: T::lit(1e-6),
            }
        }
    }
}

/// Element of the truncated Hilbert space `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct HVec<T: Scalar>(DVector<T>);

impl<T: Scalar> HVec<T> {
    pub fn new(coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter("HVec needs dimension >= 1".into()));
        }
        Ok(Self(DVector::from_vec(coeffs)))
    }

    pub fn from_vector(v: DVector<T>) -> Self {
        assert!(!v.is_empty(), "HVec needs dimension >= 1");
        Self(v)
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    /// The basis vector `e_k` (zero-based `k`).
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = T::one();
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<T> {
        self.0
    }

    pub fn coeffs(&self) -> &[T] {
        self.0.as_slice()
    }

    pub fn inner(&self, other: &Self) -> Result<T> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.0.dot(&other.0))
    }

    pub fn norm(&self) -> T {
        self.0.norm()
    }
}

#[derive(Clone, Copy, Debug)]
struct Checks<T> {
    asymmetry: T,
    min_eigenvalue: T,
}

/// Hilbert–Schmidt operator on the truncated `H`.
///
/// The asymmetry and the smallest eigenvalue of the symmetric part are measured
/// once on demand and cached; the flag queries compare them against a tolerance.
#[derive(Clone, Debug)]
pub struct HsMat<T: Scalar> {
    m: DMatrix<T>,
    checks: OnceLock<Checks<T>>,
}

impl<T: Scalar> PartialEq for HsMat<T> {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl<T: Scalar> HsMat<T> {
    pub fn from_matrix(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "operator matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m, checks: OnceLock::new() })
    }

    /// Wraps a square matrix; panics if it is not square.
    pub(crate) fn wrap(m: DMatrix<T>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self { m, checks: OnceLock::new() }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("rows must form a square matrix".into()));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Self {
        Self::wrap(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self::wrap(DMatrix::identity(n, n))
    }

    pub fn diag(d: &[T]) -> Self {
        Self::wrap(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Matrix unit `E_ij` (zero-based).
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(n, n);
        m[(i, j)] = T::one();
        Self::wrap(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.m[(i, j)]
    }

    pub fn transpose(&self) -> Self {
        Self::wrap(self.m.transpose())
    }

    /// `(A + A^T) / 2`
    pub fn sym_part(&self) -> Self {
        Self::wrap((&self.m + self.m.transpose()) * T::lit(0.5))
    }

    pub fn hs_norm(&self) -> T {
        self.m.norm()
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> T {
        op_norm(&self.m)
    }

    pub fn trace(&self) -> T {
        self.m.trace()
    }

    pub fn scaled(&self, a: T) -> Self {
        Self::wrap(&self.m * a)
    }

    pub fn apply(&self, f: &HVec<T>) -> Result<HVec<T>> {
        check_dim(self.dim(), f.dim())?;
        Ok(HVec(&self.m * &f.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::wrap(&self.m * &other.m))
    }

    /// `A B - B A`
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::wrap(&self.m * &other.m - &other.m * &self.m))
    }

    fn checks(&self) -> Checks<T> {
        *self.checks.get_or_init(|| {
            let n = self.dim();
            let mut asym = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    asym = asym.max((self.m[(i, j)] - self.m[(j, i)]).abs());
                }
            }
            let sym = (&self.m + self.m.transpose()) * T::lit(0.5);
            let ev = SymmetricEigen::new(sym).eigenvalues;
            let min_eigenvalue = ev.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b));
            Checks { asymmetry: asym, min_eigenvalue }
        })
    }

    /// Largest entrywise asymmetry `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        self.checks().asymmetry
    }

    /// Smallest eigenvalue of the symmetric part.
    pub fn min_eigenvalue(&self) -> T {
        self.checks().min_eigenvalue
    }

    pub fn is_self_adjoint(&self, tol: &Tolerances<T>) -> bool {
        self.asymmetry() <= tol.eps_sym
    }

    pub fn is_psd(&self, tol: &Tolerances<T>) -> bool {
        self.min_eigenvalue() >= -tol.eps_psd
    }

    pub fn ensure_self_adjoint(&self, tol: &Tolerances<T>) -> Result<()> {
        if self.is_self_adjoint(tol) {
            Ok(())
        } else {
            Err(Error::NotSelfAdjoint { asymmetry: self.asymmetry().as_f64() })
        }
    }

    /// Self-adjoint and non-negative definite, both within tolerance.
    pub fn ensure_psd(&self, tol: &Tolerances<T>) -> Result<()> {
        self.ensure_self_adjoint(tol)?;
        if self.is_psd(tol) {
            Ok(())
        } else {
            Err(Error::NotPsd { min_eigenvalue: self.min_eigenvalue().as_f64() })
        }
    }

    /// Column-major vectorisation, matching the brute-force lifted operators.
    pub fn vectorize(&self) -> DVector<T> {
        DVector::from_column_slice(self.m.as_slice())
    }

    pub fn from_vectorized(v: &DVector<T>, n: usize) -> Result<Self> {
        check_dim(n * n, v.len())?;
        Ok(Self::wrap(DMatrix::from_column_slice(n, n, v.as_slice())))
    }
}

impl<'a, T: Scalar> Add<&'a HsMat<T>> for &'a HsMat<T> {
    type Output = HsMat<T>;
    fn add(self, rhs: &'a HsMat<T>) -> HsMat<T> {
        HsMat::wrap(&self.m + &rhs.m)
    }
}

impl<'a, T: Scalar> Sub<&'a HsMat<T>> for &'a HsMat<T> {
    type Output = HsMat<T>;
    fn sub(self, rhs: &'a HsMat<T>) -> HsMat<T> {
        HsMat::wrap(&self.m - &rhs.m)
    }
}

impl<'a, T: Scalar> Mul<&'a HsMat<T>> for &'a HsMat<T> {
    type Output = HsMat<T>;
    fn mul(self, rhs: &'a HsMat<T>) -> HsMat<T> {
        HsMat::wrap(&self.m * &rhs.m)
    }
}

impl<T: Scalar> Mul<T> for &HsMat<T> {
    type Output = HsMat<T>;
    fn mul(self, rhs: T) -> HsMat<T> {
        self.scaled(rhs)
    }
}

impl<T: Scalar> Neg for &HsMat<T> {
    type Output = HsMat<T>;
    fn neg(self) -> HsMat<T> {
        HsMat::wrap(-&self.m)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn op_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.singular_values().iter().copied().fold(T::zero(), |a, b| a.max(b))
}

/// Hilbert–Schmidt inner product `sum_ij A_ij B_ij`.
pub fn hs_inner<T: Scalar>(a: &HsMat<T>, b: &HsMat<T>) -> Result<T> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.m.dot(&b.m))
}

/// Rank-one operator `f ⊗ f = f f^T`.
pub fn tensor_square<T: Scalar>(f: &HVec<T>) -> HsMat<T> {
    HsMat::wrap(&f.0 * f.0.transpose())
}

/// Unique non-negative square root of a self-adjoint non-negative operator.
///
/// Eigenvalues in `[-eps_psd, 0)` are clipped to zero.
pub fn psd_sqrt<T: Scalar>(a: &HsMat<T>, tol: &Tolerances<T>) -> Result<HsMat<T>> {
    a.ensure_self_adjoint(tol)?;
    let eig = SymmetricEigen::new(a.sym_part().m);
    let mut roots = eig.eigenvalues.clone();
    for l in roots.iter_mut() {
        if *l < -tol.eps_psd {
            return Err(Error::NotPsd { min_eigenvalue: l.as_f64() });
        }
        *l = l.max(T::zero()).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(HsMat::wrap(v * DMatrix::from_diagonal(&roots) * v.transpose()))
}

/// `det(I - 2i T Qz)` together with its continuity-tracked inverse square root.
#[derive(Clone, Debug)]
pub struct FredholmDet<T> {
    pub det: Complex<T>,
    /// `det^{-1/2}` on the branch continuous along `θ T`, `θ ∈ [0, 1]`, starting at 1.
    pub inv_sqrt: Complex<T>,
    /// Eigenvalues `μ_k` of `Qz^{1/2} T Qz^{1/2}`; `det = Π (1 - 2i μ_k)`.
    pub eigenvalues: Vec<T>,
}

/// Truncated Fredholm determinant `det(I - 2i T Qz)` for self-adjoint `T`, PSD `Qz`.
pub fn fredholm_det_shifted<T: Scalar>(
    t: &HsMat<T>,
    qz: &HsMat<T>,
    tol: &Tolerances<T>,
) -> Result<FredholmDet<T>> {
    check_dim(t.dim(), qz.dim())?;
    qz.ensure_psd(tol)?;
    let half = psd_sqrt(qz, tol)?;
    fredholm_det_with_sqrt(t, &half, tol)
}

/// Same as [`fredholm_det_shifted`] with a precomputed `Qz^{1/2}`.
///
/// `T Qz` is similar to the symmetric `Qz^{1/2} T Qz^{1/2}`, so the determinant is
/// a product of factors `1 - 2i μ` with real `μ`. Every factor stays in the right
/// half-plane along `θ ↦ 1 - 2iθμ`, so the product of principal roots is the
/// continuous branch.
pub fn fredholm_det_with_sqrt<T: Scalar>(
    t: &HsMat<T>,
    qz_half: &HsMat<T>,
    tol: &Tolerances<T>,
) -> Result<FredholmDet<T>> {
    check_dim(t.dim(), qz_half.dim())?;
    t.ensure_self_adjoint(tol)?;
    let inner = &qz_half.m * t.sym_part().m * &qz_half.m;
    let sym = (&inner + inner.transpose()) * T::lit(0.5);
    let mu: Vec<T> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    let two = T::lit(2.0);
    let mut det = Complex::new(T::one(), T::zero());
    let mut inv_sqrt = Complex::new(T::one(), T::zero());
    for &m in &mu {
        let factor = Complex::new(T::one(), -two * m);
        det *= factor;
        inv_sqrt /= csqrt(factor);
    }
    let modulus = cabs(det);
    if !modulus.is_finite() || modulus < T::machine_eps() {
        return Err(Error::SingularDeterminant { modulus: modulus.as_f64() });
    }
    Ok(FredholmDet { det, inv_sqrt, eigenvalues: mu })
}

/// Coefficients of a symmetric operator in the `e_k ⊗ e_l` expansion together
/// with its re-expansion into rank-one symmetric terms `e_k ⊗ e_k` and
/// `(e_k + e_l) ⊗ (e_k + e_l)`.
#[derive(Clone, Debug)]
pub struct SymDecomposition<T: Scalar> {
    /// `γ_{k,l} = A_{k,l}`, symmetric.
    pub gamma: DMatrix<T>,
    /// `(k, c)`: coefficient `c` on `e_k ⊗ e_k`.
    pub diagonal_terms: Vec<(usize, T)>,
    /// `(k, l, c)` with `l < k`: coefficient `c` on `(e_k + e_l) ⊗ (e_k + e_l)`.
    pub pair_terms: Vec<(usize, usize, T)>,
}

impl<T: Scalar> SymDecomposition<T> {
    /// Re-sums the rank-one terms.
    pub fn reconstruct(&self) -> HsMat<T> {
        let n = self.gamma.nrows();
        let mut m = DMatrix::zeros(n, n);
        for &(k, c) in &self.diagonal_terms {
            m[(k, k)] += c;
        }
        for &(k, l, c) in &self.pair_terms {
            m[(k, k)] += c;
            m[(l, l)] += c;
            m[(k, l)] += c;
            m[(l, k)] += c;
        }
        HsMat::wrap(m)
    }

    /// Re-sums `Σ γ_{k,l} e_k ⊗ e_l`.
    pub fn reconstruct_gamma(&self) -> HsMat<T> {
        HsMat::wrap(self.gamma.clone())
    }
}

pub fn sym_decompose<T: Scalar>(a: &HsMat<T>, tol: &Tolerances<T>) -> Result<SymDecomposition<T>> {
    a.ensure_self_adjoint(tol)?;
    let gamma = a.sym_part().m;
    let n = gamma.nrows();
    let mut diagonal_terms = Vec::with_capacity(n);
    let mut pair_terms = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    // e_k⊗e_l + e_l⊗e_k = (e_k+e_l)⊗(e_k+e_l) - e_k⊗e_k - e_l⊗e_l
    for k in 0..n {
        let off: T = (0..n).filter(|&l| l != k).fold(T::zero(), |s, l| s + gamma[(k, l)]);
        diagonal_terms.push((k, gamma[(k, k)] - off));
        for l in 0..k {
            pair_terms.push((k, l, gamma[(k, l)]));
        }
    }
    Ok(SymDecomposition { gamma, diagonal_terms, pair_terms })
}

/// `tr(Q^{1/2} Y Q^{1/2})`
pub fn trace_sandwich<T: Scalar>(q_half: &HsMat<T>, y: &HsMat<T>) -> Result<T> {
    check_dim(q_half.dim(), y.dim())?;
    Ok((&q_half.m * &y.m * &q_half.m).trace())
}
