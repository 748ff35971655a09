//! Forward curves in the Filipović space `H_w` with `w(x) = e^{αx}`.
//!
//! The norm is `|f|²_w = f(0)² + ∫_0^∞ w(x) f'(x)² dx`. Through the isometry
//! `f ↦ (f(0), w^{1/2} f')` onto `ℝ ⊕ L²(ℝ₊)` the basis is
//!
//! * `φ_0 = 1`,
//! * `φ_k(0) = 0`, `φ_k'(y) = e^{-βy} L_{k-1}(y)` for `k ≥ 1`, `β = (1 + α)/2`,
//!
//! with `L_j` the Laguerre polynomials. The derivative span is invariant
//! under the right shift, so the truncated shift matrices form an exact
//! semigroup and map truncated kernels onto truncated kernels.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hs::{check_dim, HVec, HsMat};
use crate::quadrature::{gauss_laguerre, gauss_legendre, gauss_legendre_adaptive, laguerre_values, CompositeRule};
use crate::scalar::Scalar;

/// Gauss–Legendre points per unit-length panel for the basis integrals.
const PANEL_ORDER: usize = 16;

/// Exponential weight `w(x) = e^{αx}` and quadrature settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSpec<T> {
    pub alpha: T,
    /// Upper limit for quadratures over `ℝ₊`.
    pub x_max: T,
    /// Gauss–Laguerre nodes for the shift matrix; must be at least the dimension.
    pub resolution: usize,
}

impl<T: Scalar> Default for WeightSpec<T> {
    fn default() -> Self {
        Self { alpha: T::lit(0.5), x_max: T::lit(150.0), resolution: 32 }
    }
}

impl<T: Scalar> WeightSpec<T> {
    pub fn weight(&self, x: T) -> T {
        (self.alpha * x).exp()
    }

    /// `h_x(y) = 1 + (1 - e^{-α (x ∧ y)}) / α`
    pub fn kernel(&self, x: T, y: T) -> T {
        let m = if x < y { x } else { y };
        T::one() + (T::one() - (-self.alpha * m).exp()) / self.alpha
    }

    /// `h_x'(y) = w^{-1}(y) 1(y < x)`
    pub fn kernel_derivative(&self, x: T, y: T) -> T {
        if y < x {
            (-self.alpha * y).exp()
        } else {
            T::zero()
        }
    }
}

/// Truncated Filipović space spanned by the first `dim` basis functions.
#[derive(Clone, Debug)]
pub struct FwSpace<T: Scalar> {
    pub weight: WeightSpec<T>,
    dim: usize,
    beta: T,
    lag_nodes: Vec<T>,
    lag_weights: Vec<T>,
    /// `max |G - I|` of the quadrature Gram matrix at construction.
    pub gram_error: T,
}

/// Builds the space and verifies orthonormality by quadrature.
pub fn build_space<T: Scalar>(weight: WeightSpec<T>, dim: usize) -> Result<FwSpace<T>> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("space dimension must be >= 2, got {dim}")));
    }
    if !(weight.alpha > T::zero()) || !weight.alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("weight exponent must be > 0, got {}", weight.alpha)));
    }
    if weight.resolution < dim {
        return Err(Error::InvalidParameter(format!(
            "quadrature resolution {} is below the dimension {dim}",
            weight.resolution
        )));
    }
    let rule = gauss_laguerre(weight.resolution);
    let mut space = FwSpace {
        weight,
        dim,
        beta: (T::one() + weight.alpha) * T::lit(0.5),
        lag_nodes: rule.0.iter().map(|v| T::lit(*v)).collect(),
        lag_weights: rule.1.iter().map(|v| T::lit(*v)).collect(),
        gram_error: T::zero(),
    };
    let g = space.gram();
    let err = (g - DMatrix::identity(dim, dim)).abs().max();
    space.gram_error = err;
    if err > T::lit(1e-6) {
        return Err(Error::QuadratureNotConverged { what: "Filipovic basis Gram matrix", change: err.as_f64() });
    }
    Ok(space)
}

impl<T: Scalar> FwSpace<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// `(φ_0'(y), ..., φ_{N-1}'(y))`
    pub fn basis_derivatives(&self, y: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        laguerre_values(self.dim - 1, y, &mut out[1..]);
        let e = (-self.beta * y).exp();
        for v in &mut out[1..] {
            *v *= e;
        }
        out
    }

    /// `(φ_0(x), ..., φ_{N-1}(x))` by composite Gauss–Legendre on `[0, x]`.
    pub fn basis_values(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        out[0] = T::one();
        if x <= T::zero() {
            return out;
        }
        let rule = gauss_legendre(PANEL_ORDER);
        let panels = x.as_f64().ceil().max(1.0) as usize;
        let h = x / T::from_usize_lossy(panels);
        let half = h * T::lit(0.5);
        let mut lag = vec![T::zero(); self.dim - 1];
        for p in 0..panels {
            let mid = h * (T::from_usize_lossy(p) + T::lit(0.5));
            for (node, w) in rule.0.iter().zip(rule.1.iter()) {
                let y = mid + half * T::lit(*node);
                laguerre_values(self.dim - 1, y, &mut lag);
                let f = half * T::lit(*w) * (-self.beta * y).exp();
                for (o, l) in out[1..].iter_mut().zip(&lag) {
                    *o += f * *l;
                }
            }
        }
        out
    }

    /// Coefficients of the (projected) reproducing kernel `h_x`. These are
    /// `(h_x, φ_k)_w = φ_k(x)`.
    pub fn hx_coeffs(&self, x: T) -> Result<HVec<T>> {
        if x < T::zero() {
            return Err(Error::InvalidParameter(format!("maturity must be >= 0, got {x}")));
        }
        Ok(HVec::from_vector(self.basis_values(x).into()))
    }

    /// `f(x) = (f, h_x)_w` for `f` with coefficients `c`.
    pub fn evaluate(&self, c: &HVec<T>, x: T) -> Result<T> {
        check_dim(self.dim, c.dim())?;
        c.inner(&self.hx_coeffs(x)?)
    }

    /// `𝓘_x(f) = f(0) + ∫_0^x f'(y) dy`.
    pub fn evaluate_by_integral(&self, c: &HVec<T>, x: T) -> Result<T> {
        check_dim(self.dim, c.dim())?;
        if x <= T::zero() {
            return Ok(c.coeffs()[0]);
        }
        let rule = CompositeRule::new(8, 4, T::lit(1e-12));
        let integral = gauss_legendre_adaptive(
            |y| Ok(self.basis_derivatives(y).iter().zip(c.coeffs()).fold(T::zero(), |a, (d, k)| a + *d * *k)),
            T::zero(),
            x,
            &rule,
            "forward curve integral",
        )?;
        Ok(c.coeffs()[0] + integral)
    }

    /// Orthogonal projection of a curve given by `f(0)` and `f'`.
    pub fn project<F: FnMut(T) -> T>(&self, f0: T, mut df: F) -> Result<HVec<T>> {
        let mut c = vec![T::zero(); self.dim];
        c[0] = f0;
        let rule = gauss_legendre(PANEL_ORDER);
        let panels = self.weight.x_max.as_f64().ceil().max(1.0) as usize;
        let h = self.weight.x_max / T::from_usize_lossy(panels);
        let half = h * T::lit(0.5);
        for p in 0..panels {
            let mid = h * (T::from_usize_lossy(p) + T::lit(0.5));
            for (node, w) in rule.0.iter().zip(rule.1.iter()) {
                let y = mid + half * T::lit(*node);
                let d = self.basis_derivatives(y);
                let f = half * T::lit(*w) * self.weight.weight(y) * df(y);
                for (ck, dk) in c.iter_mut().zip(&d).skip(1) {
                    *ck += f * *dk;
                }
            }
        }
        HVec::new(c)
    }

    /// Quadrature Gram matrix `(φ_i, φ_j)_w` over `[0, x_max]`.
    pub fn gram(&self) -> DMatrix<T> {
        let n = self.dim;
        let mut g = DMatrix::<T>::zeros(n, n);
        g[(0, 0)] = T::one();
        let rule = gauss_legendre(PANEL_ORDER);
        let panels = self.weight.x_max.as_f64().ceil().max(1.0) as usize;
        let h = self.weight.x_max / T::from_usize_lossy(panels);
        let half = h * T::lit(0.5);
        for p in 0..panels {
            let mid = h * (T::from_usize_lossy(p) + T::lit(0.5));
            for (node, w) in rule.0.iter().zip(rule.1.iter()) {
                let y = mid + half * T::lit(*node);
                let d = self.basis_derivatives(y);
                let f = half * T::lit(*w) * self.weight.weight(y);
                for i in 1..n {
                    for j in 1..n {
                        g[(i, j)] += f * d[i] * d[j];
                    }
                }
            }
        }
        g
    }

    /// Matrix of the right shift `f ↦ f(· + t)`: entry `(n, m)` is `(𝒮(t)φ_m, φ_n)_w`.
    pub fn shift_matrix(&self, t: T) -> Result<DMatrix<T>> {
        if t < T::zero() {
            return Err(Error::InvalidParameter(format!("shift must be >= 0, got {t}")));
        }
        let n = self.dim;
        if t == T::zero() {
            return Ok(DMatrix::identity(n, n));
        }
        let mut s = DMatrix::<T>::zeros(n, n);
        for (m, v) in self.basis_values(t).into_iter().enumerate() {
            s[(0, m)] = v;
        }
        let mut a = vec![T::zero(); n - 1];
        let mut b = vec![T::zero(); n - 1];
        let decay = (-self.beta * t).exp();
        for (x, w) in self.lag_nodes.iter().zip(&self.lag_weights) {
            laguerre_values(n - 1, *x + t, &mut a);
            laguerre_values(n - 1, *x, &mut b);
            for i in 1..n {
                for j in 1..n {
                    s[(i, j)] += decay * *w * a[j - 1] * b[i - 1];
                }
            }
        }
        Ok(s)
    }

    /// `|h_x|²_w = h_x(x)` in closed form.
    pub fn kernel_self_pairing(&self, x: T) -> T {
        self.weight.kernel(x, x)
    }

    /// `‖P h_x - h_x‖_w` where `P` is the orthogonal projection onto the span.
    pub fn kernel_projection_error(&self, x: T) -> Result<T> {
        let c = self.hx_coeffs(x)?;
        let diff = self.kernel_self_pairing(x) - c.inner(&c)?;
        Ok(if diff > T::zero() { diff.sqrt() } else { T::zero() })
    }
}

/// `σ²(t, s, x) = (Y^{1/2}(s) Q Y^{1/2}(s) h_{x+t-s}, h_{x+t-s})_w`.
pub fn sigma2_field<T: Scalar>(space: &FwSpace<T>, ys_half: &HsMat<T>, q: &HsMat<T>, t: T, s: T, x: T) -> Result<T> {
    check_dim(space.dim(), ys_half.dim())?;
    check_dim(space.dim(), q.dim())?;
    if s > t {
        return Err(Error::InvalidParameter(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let m = space.hx_coeffs(x + t - s)?;
    let v = ys_half.apply(&m)?;
    v.inner(&q.apply(&v)?)
}

/// `⟨Y_Q(s), h_{x+t-s} ⊗ h_{x+t-s}⟩` for `Y_Q = Q Y(s)` in the commuting case.
pub fn sigma2_field_commuting<T: Scalar>(space: &FwSpace<T>, yq: &HsMat<T>, t: T, s: T, x: T) -> Result<T> {
    check_dim(space.dim(), yq.dim())?;
    if s > t {
        return Err(Error::InvalidParameter(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let m = space.hx_coeffs(x + t - s)?;
    m.inner(&yq.apply(&m)?)
}

/// Samples of `w(y) (Y^{1/2}(s) h_{x+t-s})'(y)`, the integrand of the
/// random-field representation of the forward curve.
pub fn ambit_integrand<T: Scalar>(space: &FwSpace<T>, ys_half: &HsMat<T>, t: T, s: T, x: T, ys: &[T]) -> Result<Vec<T>> {
    check_dim(space.dim(), ys_half.dim())?;
    let v = ys_half.apply(&space.hx_coeffs(x + t - s)?)?;
    Ok(ys
        .iter()
        .map(|&y| {
            let d = space.basis_derivatives(y);
            space.weight.weight(y) * d.iter().zip(v.coeffs()).fold(T::zero(), |a, (p, q)| a + *p * *q)
        })
        .collect())
}

/// Forward prices `f(t, x)` on a time-by-maturity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardSurface<T> {
    pub times: Vec<T>,
    pub maturities: Vec<T>,
    /// Row `i` holds `f(times[i], ·)` on `maturities`.
    pub values: Vec<Vec<T>>,
    /// `f(t, 0)`
    pub spot: Vec<T>,
}

/// Evaluates `f(t, x) = (X(t), h_x)_w` for every state of a path.
pub fn forward_surface<T: Scalar>(space: &FwSpace<T>, times: &[T], states: &[HVec<T>], maturities: &[T]) -> Result<ForwardSurface<T>> {
    if times.len() != states.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: states.len() });
    }
    if let Some(s) = states.iter().find(|s| s.dim() != space.dim()) {
        return Err(Error::SpaceMismatch(format!(
            "state dimension {} does not match the forward space dimension {}",
            s.dim(),
            space.dim()
        )));
    }
    let kernels = maturities.iter().map(|&x| space.hx_coeffs(x)).collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(states.len());
    let mut spot = Vec::with_capacity(states.len());
    for st in states {
        values.push(kernels.iter().map(|k| st.inner(k)).collect::<Result<Vec<_>>>()?);
        spot.push(st.coeffs()[0]);
    }
    Ok(ForwardSurface { times: times.to_vec(), maturities: maturities.to_vec(), values, spot })
}

impl<T: Scalar> ForwardSurface<T> {
    /// Long format: `t,x,value`.
    pub fn write_long_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x", "value"])?;
        for (t, row) in self.times.iter().zip(&self.values) {
            for (x, v) in self.maturities.iter().zip(row) {
                out.write_record([format!("{t:e}"), format!("{x:e}"), format!("{v:e}")])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_spot_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "spot"])?;
        for (t, v) in self.times.iter().zip(&self.spot) {
            out.write_record([format!("{t:e}"), format!("{v:e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Per time, `|f(t, x_last) - f(t, x_prev)| / (x_last - x_prev)`: the
    /// slope at the far end of the maturity grid.
    pub fn long_maturity_slope(&self) -> Vec<T> {
        let k = self.maturities.len();
        if k < 2 {
            return vec![T::zero(); self.times.len()];
        }
        let dx = self.maturities[k - 1] - self.maturities[k - 2];
        self.values.iter().map(|r| (r[k - 1] - r[k - 2]).abs() / dx).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hs::Tolerances;

    fn space(n: usize) -> FwSpace<f64> {
        build_space(WeightSpec::default(), n).unwrap()
    }

    #[test]
    fn constant_function_and_orthogonality() {
        let sp = space(6);
        assert!(sp.gram_error < 1e-10, "{}", sp.gram_error);
        let g = sp.gram();
        assert_eq!(g[(0, 0)], 1.0);
        for k in 1..6 {
            assert_eq!(g[(0, k)], 0.0);
        }
        assert!(build_space(WeightSpec::<f64>::default(), 1).is_err());
        assert!(build_space(WeightSpec { resolution: 3, ..WeightSpec::<f64>::default() }, 6).is_err());
    }

    #[test]
    fn basis_values_match_simpson_oracle() {
        let sp = space(8);
        for &x in &[0.3, 1.0, 4.5, 17.0] {
            let v = sp.basis_values(x);
            // composite Simpson with a fine uniform grid
            let m = 20_000;
            let h = x / m as f64;
            let mut acc = vec![0.0; 8];
            for i in 0..=m {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                let d = sp.basis_derivatives(i as f64 * h);
                for k in 1..8 {
                    acc[k] += w * d[k];
                }
            }
            for k in 1..8 {
                assert!((v[k] - acc[k] * h / 3.0).abs() < 1e-10, "x={x} k={k}");
            }
        }
    }

    #[test]
    fn kernel_at_zero() {
        let sp = space(5);
        let c = sp.hx_coeffs(0.0).unwrap();
        assert_eq!(c.coeffs(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(sp.hx_coeffs(-1.0).is_err());
    }

    #[test]
    fn shift_matrix_properties() {
        let sp = space(12);
        assert_eq!(sp.shift_matrix(0.0).unwrap(), DMatrix::identity(12, 12));
        let a = sp.shift_matrix(0.4).unwrap();
        let b = sp.shift_matrix(0.7).unwrap();
        let ab = sp.shift_matrix(1.1).unwrap();
        assert!((&a * &b - &ab).norm() < 1e-10);
        // shifted basis function evaluated pointwise
        let x = 2.3;
        let lhs = a.transpose() * sp.hx_coeffs(x).unwrap().into_vector();
        let rhs = sp.hx_coeffs(x + 0.4).unwrap().into_vector();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn reproducing_property_and_integral_route() {
        let sp = space(9);
        let c = HVec::new(vec![0.5, -1.0, 0.3, 0.2, -0.1, 0.05, 0.4, -0.2, 0.1]).unwrap();
        for &x in &[0.0, 0.5, 2.0, 7.5] {
            let a = sp.evaluate(&c, x).unwrap();
            let b = sp.evaluate_by_integral(&c, x).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_of_span_member_is_exact() {
        let sp = space(6);
        let beta = sp.beta();
        // f(x) = 2 + 3 φ_1(x), φ_1' = e^{-βy}
        let c = sp.project(2.0, |y| 3.0 * (-beta * y).exp()).unwrap();
        let mut expect = vec![0.0; 6];
        expect[0] = 2.0;
        expect[1] = 3.0;
        for (a, b) in c.coeffs().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sigma2_identity_case() {
        let sp = space(10);
        let id = HsMat::identity(10);
        let (t, s, x) = (1.0, 0.25, 0.5);
        let v = sigma2_field(&sp, &id, &id, t, s, x).unwrap();
        let m = sp.hx_coeffs(x + t - s).unwrap();
        assert!((v - m.inner(&m).unwrap()).abs() < 1e-14);
        // the projected kernel approaches the closed form from below
        let exact = sp.kernel_self_pairing(x + t - s);
        assert!(v <= exact + 1e-12);
        assert_eq!(sigma2_field(&sp, &HsMat::zeros(10), &id, t, s, x).unwrap(), 0.0);
        assert!(sigma2_field(&sp, &id, &id, 0.1, 0.2, x).is_err());
        let q = HsMat::diag(&[2.0; 10]);
        let yq = q.scaled(1.0);
        let a = sigma2_field_commuting(&sp, &yq, t, s, x).unwrap();
        let b = sigma2_field(&sp, &id, &q, t, s, x).unwrap();
        assert!((a - b).abs() < 1e-12);
        let _ = Tolerances::<f64>::default();
    }

    #[test]
    fn surface_and_csv() {
        let sp = space(4);
        let st = vec![HVec::new(vec![1.0, 0.5, 0.0, 0.0]).unwrap(); 2];
        let surf = forward_surface(&sp, &[0.0, 1.0], &st, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(surf.spot, vec![1.0, 1.0]);
        assert!((surf.values[0][2] - (1.0 + 0.5 * sp.basis_values(2.0)[1])).abs() < 1e-14);
        let mut buf = Vec::new();
        surf.write_long_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
        let bad = vec![HVec::new(vec![1.0, 0.0]).unwrap()];
        assert!(matches!(forward_surface(&sp, &[0.0], &bad, &[0.0]), Err(Error::SpaceMismatch(_))));
    }
}
