//! Acceptance gate: one `[PASS]`/`[FAIL] criterion N` line per criterion.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use opbns_cli::config::{Config, DriftSpec, DriverSpec, MatSpec, StateSpec};
use opbns_cli::{Ctx, Experiment, ExperimentReport, Overrides};

struct Outcome {
    passed: bool,
    detail: String,
}

fn run(exp: Experiment, cfg: Config, out: &Path, workers: usize, paths: Option<usize>) -> ExperimentReport {
    let ctx = Ctx::new(cfg, Overrides { out: Some(out.to_path_buf()), workers: Some(workers), paths, ..Default::default() })
        .expect("context");
    exp.run(&ctx)
}

/// Passes when every check passed, the sizes match the criterion and the
/// run finished inside `limit` seconds.
fn gate(exp: Experiment, cfg: Config, limit: f64, sizes_ok: Result<(), String>) -> Outcome {
    if let Err(e) = sizes_ok {
        return Outcome { passed: false, detail: format!("configuration does not match the criterion: {e}") };
    }
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let rep = run(exp, cfg, dir.path(), 1, None);
    let secs = start.elapsed().as_secs_f64();
    let mut detail = String::new();
    for c in &rep.checks {
        detail.push_str(&format!("\n      {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail));
    }
    Outcome { passed: rep.passed && secs < limit, detail: format!("{} in {secs:.1} s (limit {limit} s){detail}", exp.name()) }
}

fn require(ok: bool, what: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

fn is_diag(m: &MatSpec) -> bool {
    match m {
        MatSpec::Rows(r) => r.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, v)| i == j || *v == 0.0)),
        MatSpec::Diag { .. } | MatSpec::Identity { .. } => true,
    }
}

fn common(c: &Config) -> Result<(), String> {
    require(c.thresholds.z_max == 3.0, "z_max = 3")?;
    require(c.thresholds.abs_floor == 0.01, "abs_floor = 0.01")
}

fn criterion_sizes(n: usize, c: &Config) -> Result<(), String> {
    let t = &c.thresholds;
    match n {
        1 => {
            require(c.lifted.cases == 50 && c.lifted.max_dim <= 4 && c.lifted.max_time <= 2.0, "50 cases, N <= 4, t <= 2")?;
            require(t.lifted_abs == 1e-10, "tolerance 1e-10")
        }
        2 => {
            common(c)?;
            let m = &c.vol_cf.model;
            require(m.dim == 3 && c.vol_cf.t == 1.0 && c.vol_cf.tests == 5 && c.vol_cf.paths == 100_000, "N = 3, t = 1, 5 ops, 1e5 paths")?;
            require(matches!(m.drift, DriftSpec::Lyapunov { .. }), "Lyapunov drift")?;
            require(matches!(m.driver, DriverSpec::Wishart { lambda, .. } if lambda == 2.0), "Wishart driver, lambda = 2")
        }
        3 => {
            common(c)?;
            let s = &c.x_cf;
            require(s.t == 1.0 && s.tests == 5 && s.paths == 100_000 && !s.cases.is_empty(), "t = 1, 5 vectors, 1e5 paths")?;
            for m in &s.cases {
                require(m.dim == 3, "N = 3")?;
                require(is_diag(m.q.as_ref().ok_or("q")?) && is_diag(&m.y0), "diagonal Q and Y0")?;
                require(matches!(&m.drift, DriftSpec::Lyapunov { c } | DriftSpec::Sandwich { c } if is_diag(c)), "diagonal C")?;
                require(
                    match &m.driver {
                        DriverSpec::Wishart { qz, .. } => is_diag(qz),
                        DriverSpec::ScalarTimesU { u, .. } => is_diag(u),
                        DriverSpec::Zero => true,
                    },
                    "diagonal driver",
                )?;
                require(!matches!(m.state, Some(StateSpec::Shift)), "finite-dimensional state")?;
            }
            Ok(())
        }
        4 => {
            let s = &c.gamma_jumps;
            require(s.samples == 1_000_000 && s.tests == 5, "1e6 marks, 5 vectors")?;
            require(t.gamma_mean_rel == 0.02 && t.gamma_var_rel == 0.05, "2% / 5%")
        }
        5 => {
            let s = &c.wishart_cf;
            require(s.samples == 1_000_000 && s.tests == 10 && s.qz.implied_dim().is_some_and(|n| n <= 4), "1e6 samples, 10 ops, N <= 4")?;
            require(t.z_max == 3.0, "3 SE")
        }
        6 => {
            let s = &c.trace;
            require(s.paths == 100_000 && s.times == [0.5, 1.0, 2.0], "1e5 paths, t in {0.5, 1, 2}")?;
            require(t.trace_rel == 0.01, "1%")
        }
        7 => {
            let s = &c.positivity;
            require(s.paths * s.times >= 10_000, "1e4 states per model")?;
            require(t.psd_floor == 1e-9 && t.sym_max == 1e-10, "-1e-9 / 1e-10")
        }
        8 => {
            let s = &c.returns;
            require(s.samples == 1_000_000 && s.projections == 3, "1e6 samples, 3 projections")?;
            require(t.skew_max == 0.02 && t.kurt_max == 0.05 && t.returns_var_rel == 0.01, "0.02 / 0.05 / 1%")
        }
        9 => {
            let s = &c.kernels;
            require(s.shift_dim == 12 && s.dims == [6, 9, 12] && s.max_shift <= 1.0, "N = 12, N in {6, 9, 12}")?;
            require(t.kernel_repro == 1e-6 && t.shift_law == 1e-4, "1e-6 / 1e-4")
        }
        10 => {
            require(c.forward.paths == 100_000, "1e5 paths")?;
            require(t.spot_var_rel == 0.02, "2%")
        }
        _ => Ok(()),
    }
}

fn read_csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).expect("read dir") {
        let p = e.expect("entry").path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).expect("read csv"));
        }
    }
    out
}

/// Every experiment at 1 and 8 workers with small chunks, plus full-size
/// verify-trace; all CSV files must be byte-identical.
fn determinism() -> Outcome {
    let mut jobs: Vec<(Experiment, Option<usize>)> = Experiment::ALL.iter().map(|e| (*e, Some(3000))).collect();
    jobs.push((Experiment::VerifyTrace, None));
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (exp, paths) in jobs {
        let mut cfg = Config::defaults().expect("defaults");
        cfg.run.chunk = 64;
        let a = tempfile::tempdir().expect("tempdir");
        let b = tempfile::tempdir().expect("tempdir");
        let ra = run(exp, cfg.clone(), a.path(), 1, paths);
        let rb = run(exp, cfg, b.path(), 8, paths);
        let (fa, fb) = (read_csvs(a.path()), read_csvs(b.path()));
        for r in [&ra, &rb] {
            if let Some(c) = r.checks.iter().find(|c| c.name == "run" && !c.passed) {
                mismatches.push(format!("{}: {}", exp.name(), c.detail));
            }
        }
        if fa.is_empty() || fa.keys().ne(fb.keys()) {
            mismatches.push(format!("{}: file sets differ", exp.name()));
        }
        for (k, v) in &fa {
            compared += 1;
            if fb.get(k) != Some(v) {
                mismatches.push(format!("{}: {k}", exp.name()));
            }
        }
    }
    Outcome {
        passed: mismatches.is_empty() && compared > 0,
        detail: format!("{compared} CSV files compared at 1 vs 8 workers, mismatches: {mismatches:?}"),
    }
}

fn main() -> ExitCode {
    let plan: [(usize, Experiment, f64); 10] = [
        (1, Experiment::VerifyLifted, 5.0),
        (2, Experiment::VerifyVolCf, 60.0),
        (3, Experiment::VerifyXCf, 120.0),
        (4, Experiment::VerifyGammaJumps, 30.0),
        (5, Experiment::VerifyWishartCf, 60.0),
        (6, Experiment::VerifyTrace, 60.0),
        (7, Experiment::PositivitySuite, 30.0),
        (8, Experiment::VerifyReturns, 60.0),
        (9, Experiment::VerifyKernels, 30.0),
        (10, Experiment::SimulateForward, 120.0),
    ];
    let mut all = true;
    for (n, exp, limit) in plan {
        let cfg = Config::defaults().expect("defaults");
        let sizes = criterion_sizes(n, &cfg);
        let o = gate(exp, cfg, limit, sizes);
        all &= o.passed;
        println!("[{}] criterion {n}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let o = determinism();
    all &= o.passed;
    println!("[{}] criterion 11: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
