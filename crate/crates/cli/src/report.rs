//! Check results, comparison tables and the run manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::CliResult;
use crate::stats::CfEstimate;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), passed: true, checks: Vec::new(), files: Vec::new(), seconds: 0.0 }
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn failed(name: &str, detail: String) -> Self {
        let mut r = Self::new(name);
        r.check(Check::new("run", false, detail));
        r
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub paths_override: Option<usize>,
    pub config: serde_json::Value,
    pub experiments: Vec<ExperimentReport>,
    pub passed: bool,
    pub seconds: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// `(empirical - analytic) / se`, with `0` for an exact match at zero error bar.
pub fn z_score(analytic: f64, empirical: f64, se: f64) -> f64 {
    let d = empirical - analytic;
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// Real analytic-vs-empirical comparison.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub label: String,
    pub analytic: f64,
    pub empirical: f64,
    pub se: f64,
    pub tol: f64,
}

impl Comparison {
    pub fn z(&self) -> f64 {
        z_score(self.analytic, self.empirical, self.se)
    }

    pub fn passed(&self) -> bool {
        (self.empirical - self.analytic).abs() <= self.tol
    }
}

pub fn write_comparisons(path: &Path, rows: &[Comparison]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "analytic", "empirical", "se", "z", "tol", "pass"])?;
    for r in rows {
        w.write_record([r.label.clone(), fmt(r.analytic), fmt(r.empirical), fmt(r.se), fmt(r.z()), fmt(r.tol), r.passed().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// How a complex comparison is gated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfRule {
    /// Real and imaginary parts separately within `tol`.
    Componentwise,
    /// `|empirical - analytic| ≤ tol`.
    Modulus,
}

#[derive(Clone, Debug)]
pub struct CfComparison {
    pub label: String,
    pub analytic: Complex64,
    pub empirical: CfEstimate,
    pub tol: f64,
    pub rule: CfRule,
}

impl CfComparison {
    pub fn passed(&self) -> bool {
        let d = self.empirical.value - self.analytic;
        match self.rule {
            CfRule::Componentwise => d.re.abs() <= self.tol && d.im.abs() <= self.tol,
            CfRule::Modulus => d.norm() <= self.tol,
        }
    }

    /// Largest deviation in the gated metric.
    pub fn deviation(&self) -> f64 {
        let d = self.empirical.value - self.analytic;
        match self.rule {
            CfRule::Componentwise => d.re.abs().max(d.im.abs()),
            CfRule::Modulus => d.norm(),
        }
    }
}

pub fn write_cf_comparisons(path: &Path, rows: &[CfComparison]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "label", "analytic_re", "analytic_im", "empirical_re", "empirical_im", "se_re", "se_im", "se_abs", "z_re", "z_im", "z_abs",
        "tol", "pass",
    ])?;
    for r in rows {
        let e = &r.empirical;
        let d = e.value - r.analytic;
        w.write_record([
            r.label.clone(),
            fmt(r.analytic.re),
            fmt(r.analytic.im),
            fmt(e.value.re),
            fmt(e.value.im),
            fmt(e.se_re),
            fmt(e.se_im),
            fmt(e.se_abs),
            fmt(z_score(r.analytic.re, e.value.re, e.se_re)),
            fmt(z_score(r.analytic.im, e.value.im, e.se_im)),
            fmt(z_score(0.0, d.norm(), e.se_abs)),
            fmt(r.tol),
            r.passed().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic (non-Monte Carlo) metric against a threshold.
#[derive(Clone, Debug)]
pub struct Metric {
    pub label: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Metric {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(label: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { label: label.into(), value, threshold, passed: value <= threshold }
    }
}

pub fn write_metrics(path: &Path, rows: &[Metric]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "value", "threshold", "pass"])?;
    for r in rows {
        w.write_record([r.label.clone(), fmt(r.value), fmt(r.threshold), r.passed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Summarises a group of rows as one check.
pub fn summarize<I: IntoIterator<Item = (bool, f64)>>(name: &str, rows: I, what: &str) -> Check {
    let mut n = 0;
    let mut failed = 0;
    let mut worst: f64 = 0.0;
    for (ok, v) in rows {
        n += 1;
        if !ok {
            failed += 1;
        }
        worst = worst.max(v);
    }
    Check::new(name, failed == 0 && n > 0, format!("{failed}/{n} failed, worst {what} {}", fmt(worst)))
}
