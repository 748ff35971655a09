//! Mergeable sample moments and the empirical characteristic function.

use num_complex::Complex64;

use crate::error::{CliError, CliResult};
use crate::exec::Merge;

/// Count, mean and central moment sums up to order four.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.merge(Moments { n: 1.0, mean: x, ..Default::default() });
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        self.m2 / (self.n - 1.0)
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.variance() / self.n).sqrt()
    }

    pub fn skewness(&self) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        self.n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        if self.m2 == 0.0 {
            return 0.0;
        }
        self.n * self.m4 / (self.m2 * self.m2) - 3.0
    }

    /// Standard error of the unbiased variance, from the fourth moment.
    pub fn variance_se(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let mu4 = self.m4 / self.n;
        let s2 = self.m2 / self.n;
        ((mu4 - s2 * s2 * (self.n - 3.0) / (self.n - 1.0)) / self.n).max(0.0).sqrt()
    }
}

impl Merge for Moments {
    fn merge(&mut self, o: Self) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = o;
            return;
        }
        let (na, nb) = (self.n, o.n);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d2 = d * d;
        let m4 = self.m4
            + o.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        let m3 = self.m3 + o.m3 + d2 * d * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        self.mean += d * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n = n;
    }
}

/// Running estimate of `E[e^{iX}]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CfAcc {
    pub re: Moments,
    pub im: Moments,
}

impl CfAcc {
    pub fn push(&mut self, x: f64) {
        let (s, c) = x.sin_cos();
        self.re.push(c);
        self.im.push(s);
    }

    pub fn estimate(&self) -> CfEstimate {
        let n = self.re.count();
        CfEstimate {
            value: Complex64::new(self.re.mean(), self.im.mean()),
            se_re: self.re.se(),
            se_im: self.im.se(),
            se_abs: if n < 2 { 0.0 } else { ((self.re.variance() + self.im.variance()) / n as f64).sqrt() },
        }
    }
}

impl Merge for CfAcc {
    fn merge(&mut self, o: Self) {
        self.re.merge(o.re);
        self.im.merge(o.im);
    }
}

/// Empirical characteristic function with component-wise standard errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CfEstimate {
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
    /// Standard error of the complex mean, `sqrt(E|e^{iX} - φ|² / n)`.
    pub se_abs: f64,
}

/// Mean of `e^{i x}` over `samples`; needs at least two samples.
pub fn empirical_cf(samples: &[f64]) -> CliResult<CfEstimate> {
    if samples.len() < 2 {
        return Err(CliError::Stats {
            check: "empirical_cf".into(),
            detail: format!("need at least 2 samples, got {}", samples.len()),
        });
    }
    let mut acc = CfAcc::default();
    for &x in samples {
        acc.push(x);
    }
    Ok(acc.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_zero_samples() {
        let e = empirical_cf(&[0.0; 10]).unwrap();
        assert_eq!(e.value, Complex64::new(1.0, 0.0));
        assert_eq!((e.se_re, e.se_im), (0.0, 0.0));
    }

    #[test]
    fn antipodal_samples_cancel() {
        let e = empirical_cf(&[0.0, std::f64::consts::PI]).unwrap();
        assert!(e.value.norm() < 1e-15);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(empirical_cf(&[]).is_err());
        assert!(empirical_cf(&[1.0]).is_err());
    }

    #[test]
    fn gaussian_cf_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();
        let e = empirical_cf(&xs).unwrap();
        let target = (-0.5f64).exp();
        assert!((e.value.re - target).abs() <= 3.0 * e.se_re, "{:?}", e);
        assert!(e.value.im.abs() <= 3.0 * e.se_im, "{:?}", e);
        assert!(e.value.norm() <= 1.0);
    }

    #[test]
    fn merged_moments_match_direct_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..1001).map(|_| rng.random::<f64>().powi(3) * 4.0 - 1.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..317].iter().for_each(|&x| a.push(x));
        xs[317..].iter().for_each(|&x| b.push(x));
        a.merge(b);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |k: i32| xs.iter().map(|x| (x - mean).powi(k)).sum::<f64>() / n;
        let skew = c(3) / c(2).powf(1.5);
        let kurt = c(4) / (c(2) * c(2)) - 3.0;
        for m in [whole, a] {
            assert!((m.mean() - mean).abs() < 1e-13);
            assert!((m.variance() - c(2) * n / (n - 1.0)).abs() < 1e-12);
            assert!((m.skewness() - skew).abs() < 1e-10);
            assert!((m.excess_kurtosis() - kurt).abs() < 1e-10);
        }
    }
}
