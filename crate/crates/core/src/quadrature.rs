//! Gauss rules and refinement drivers used for Bochner integrals of
//! operator-valued integrands.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::hs::HsMat;
use crate::scalar::{cabs, Scalar};

/// Values that can be accumulated by a quadrature rule.
pub trait QuadValue<T: Scalar>: Clone {
    /// `self += w * x`
    fn axpy(&mut self, w: T, x: &Self);
    fn scale(&mut self, w: T);
    /// Distance used for convergence tests.
    fn dist(&self, other: &Self) -> T;
    /// Magnitude used for relative convergence tests.
    fn size(&self) -> T;
}

impl<T: Scalar> QuadValue<T> for T {
    fn axpy(&mut self, w: T, x: &Self) {
        *self += w * *x;
    }
    fn scale(&mut self, w: T) {
        *self *= w;
    }
    fn dist(&self, other: &Self) -> T {
        (*self - *other).abs()
    }
    fn size(&self) -> T {
        self.abs()
    }
}

impl<T: Scalar> QuadValue<T> for Complex<T> {
    fn axpy(&mut self, w: T, x: &Self) {
        self.re += w * x.re;
        self.im += w * x.im;
    }
    fn scale(&mut self, w: T) {
        self.re *= w;
        self.im *= w;
    }
    fn dist(&self, other: &Self) -> T {
        cabs(*self - *other)
    }
    fn size(&self) -> T {
        cabs(*self)
    }
}

impl<T: Scalar> QuadValue<T> for DMatrix<T> {
    fn axpy(&mut self, w: T, x: &Self) {
        *self += x * w;
    }
    fn scale(&mut self, w: T) {
        *self *= w;
    }
    fn dist(&self, other: &Self) -> T {
        (self - other).norm()
    }
    fn size(&self) -> T {
        self.norm()
    }
}

impl<T: Scalar> QuadValue<T> for HsMat<T> {
    fn axpy(&mut self, w: T, x: &Self) {
        *self = &*self + &x.scaled(w);
    }
    fn scale(&mut self, w: T) {
        *self = self.scaled(w);
    }
    fn dist(&self, other: &Self) -> T {
        (self - other).hs_norm()
    }
    fn size(&self) -> T {
        self.hs_norm()
    }
}

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

fn cached(cache: &'static OnceLock<Mutex<HashMap<usize, Rule>>>, n: usize, build: fn(usize) -> (Vec<f64>, Vec<f64>)) -> Rule {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("quadrature cache poisoned");
    guard.entry(n).or_insert_with(|| Arc::new(build(n))).clone()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    cached(&CACHE, n, build_legendre)
}

/// Gauss–Laguerre nodes and weights for `∫_0^∞ e^{-x} f(x) dx`.
pub fn gauss_laguerre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    cached(&CACHE, n, build_laguerre)
}

fn build_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Laguerre polynomials `L_0(x), ..., L_{n-1}(x)`.
pub fn laguerre_values<T: Scalar>(n: usize, x: T, out: &mut [T]) {
    debug_assert!(out.len() >= n);
    if n == 0 {
        return;
    }
    out[0] = T::one();
    if n > 1 {
        out[1] = T::one() - x;
    }
    for k in 2..n {
        let kf = T::from_usize_lossy(k);
        out[k] = ((T::lit(2.0) * kf - T::one() - x) * out[k - 1] - (kf - T::one()) * out[k - 2]) / kf;
    }
}

fn build_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    // Golub–Welsch initial guess, Newton polish on L_n.
    let jac = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            2.0 * i as f64 + 1.0
        } else if i + 1 == j || j + 1 == i {
            (i.max(j)) as f64
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut buf = vec![0.0; n + 2];
    let mut weights = vec![0.0; n];
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        for _ in 0..50 {
            laguerre_values(n + 1, *x, &mut buf);
            let (ln, lnm1) = (buf[n], buf[n - 1]);
            let d = n as f64 * (ln - lnm1) / *x;
            let dx = ln / d;
            *x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        laguerre_values(n + 2, *x, &mut buf);
        let lnp1 = buf[n + 1];
        *w = *x / (((n + 1) * (n + 1)) as f64 * lnp1 * lnp1);
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre refinement settings.
#[derive(Clone, Copy, Debug)]
pub struct CompositeRule<T> {
    /// Points per panel.
    pub order: usize,
    /// Initial panel count (before any doubling).
    pub panels: usize,
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_doublings: usize,
}

impl<T: Scalar> CompositeRule<T> {
    pub fn new(order: usize, panels: usize, rel_tol: T) -> Self {
        Self { order, panels: panels.max(1), rel_tol, abs_tol: rel_tol * T::lit(1e-6), max_doublings: 10 }
    }

    /// A rule sized to `nodes_per_unit` nodes per unit length on an interval of length `len`.
    pub fn per_unit_length(order: usize, nodes_per_unit: usize, len: T, rel_tol: T) -> Self {
        let panels = (len.as_f64() * nodes_per_unit as f64 / order as f64).ceil().max(1.0) as usize;
        Self::new(order, panels, rel_tol)
    }
}

/// Fixed composite Gauss–Legendre rule with `panels` panels of `order` points.
pub fn gauss_legendre_fixed<T, V, F>(mut f: F, a: T, b: T, order: usize, panels: usize) -> Result<V>
where
    T: Scalar,
    V: QuadValue<T>,
    F: FnMut(T) -> Result<V>,
{
    let rule = gauss_legendre(order);
    let (xs, ws) = (&rule.0, &rule.1);
    let h = (b - a) / T::from_usize_lossy(panels);
    let half = h * T::lit(0.5);
    let mut acc: Option<V> = None;
    for p in 0..panels {
        let mid = a + h * (T::from_usize_lossy(p) + T::lit(0.5));
        for (x, w) in xs.iter().zip(ws.iter()) {
            let v = f(mid + half * T::lit(*x))?;
            let w = half * T::lit(*w);
            match acc.as_mut() {
                Some(s) => s.axpy(w, &v),
                None => {
                    let mut s = v;
                    s.scale(w);
                    acc = Some(s);
                }
            }
        }
    }
    Ok(acc.expect("at least one node"))
}

/// Composite Gauss–Legendre with panel doubling until two successive
/// estimates agree to `rel_tol * |estimate| + abs_tol`.
pub fn gauss_legendre_adaptive<T, V, F>(mut f: F, a: T, b: T, rule: &CompositeRule<T>, what: &'static str) -> Result<V>
where
    T: Scalar,
    V: QuadValue<T>,
    F: FnMut(T) -> Result<V>,
{
    let mut panels = rule.panels;
    let mut prev = gauss_legendre_fixed(&mut f, a, b, rule.order, panels)?;
    let mut change = T::zero();
    for _ in 0..rule.max_doublings {
        panels *= 2;
        let next = gauss_legendre_fixed(&mut f, a, b, rule.order, panels)?;
        change = next.dist(&prev);
        if change <= rule.rel_tol * next.size() + rule.abs_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNotConverged { what, change: change.as_f64() })
}

/// Composite Simpson rule with interval halving. Previously computed
/// function values are reused, so each level costs only the new midpoints.
pub fn simpson_doubling<T, V, F>(
    mut f: F,
    a: T,
    b: T,
    rel_tol: T,
    abs_tol: T,
    max_levels: usize,
    what: &'static str,
) -> Result<V>
where
    T: Scalar,
    V: QuadValue<T>,
    F: FnMut(T) -> Result<V>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    let len = b - a;
    // trapezoid sums: ends carry weight 1/2, interior points weight 1
    let mut ends = fa.clone();
    ends.axpy(T::one(), &fb);
    ends.scale(T::lit(0.5));
    let mut interior: Option<V> = None;
    let mut prev_trap = {
        let mut t = ends.clone();
        t.scale(len);
        t
    };
    let mut prev_simpson: Option<V> = None;
    let mut n: usize = 1;
    let mut change = T::zero();
    for level in 1..=max_levels {
        let h = len / T::from_usize_lossy(2 * n);
        let mut mids: Option<V> = None;
        for k in 0..n {
            let x = a + h * T::from_usize_lossy(2 * k + 1);
            let v = f(x)?;
            match mids.as_mut() {
                Some(s) => s.axpy(T::one(), &v),
                None => mids = Some(v),
            }
        }
        let mids = mids.expect("n >= 1");
        interior = Some(match interior {
            Some(mut s) => {
                s.axpy(T::one(), &mids);
                s
            }
            None => mids,
        });
        n *= 2;
        let mut trap = ends.clone();
        trap.axpy(T::one(), interior.as_ref().unwrap());
        trap.scale(h);
        // S = (4 T_{2n} - T_n) / 3
        let mut simpson = trap.clone();
        simpson.scale(T::lit(4.0));
        simpson.axpy(-T::one(), &prev_trap);
        simpson.scale(T::one() / T::lit(3.0));
        if let Some(ps) = prev_simpson.as_ref() {
            change = simpson.dist(ps);
            if level >= 3 && change <= rel_tol * simpson.size() + abs_tol {
                return Ok(simpson);
            }
        }
        prev_simpson = Some(simpson);
        prev_trap = trap;
    }
    Err(Error::QuadratureNotConverged { what, change: change.as_f64() })
}
