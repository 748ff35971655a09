//! Variance-process experiments: characteristic function, trace identity, positivity.

use opbns::hs::{psd_sqrt, trace_sandwich};
use opbns::levy::verify_nondecreasing;
use opbns::lifted::positivity_preservation_check;
use opbns::vol::{cf_y, expected_trace, l2_bound_check};
use opbns::HsMat64;

use super::{file_name, random_sym, random_vec, Ctx, Experiment, YEval};
use crate::error::{CliResult, Context};
use crate::exec::Merge;
use crate::model;
use crate::report::{
    fmt, summarize, write_cf_comparisons, write_comparisons, write_metrics, CfComparison, CfRule, Check, Comparison,
    ExperimentReport, Metric,
};
use crate::seed::{stream, StreamTag};
use crate::stats::{CfAcc, Moments};

pub fn vol_cf(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.vol_cf;
    let id = Experiment::VerifyVolCf.stream_id();
    let vol = model::vol(&sec.model, &ctx.tol, "vol_cf.model")?;
    let n = vol.dim();
    let mut rng = stream(ctx.seed, id, 0, StreamTag::TestOps);
    let ops: Vec<HsMat64> = (0..sec.tests).map(|_| random_sym(n, sec.test_scale, &mut rng)).collect();
    let analytic = ops
        .iter()
        .enumerate()
        .map(|(j, op)| cf_y(&vol, 0.0, &vol.y0, sec.t, op).ctx(format!("vol_cf: analytic cf for T{j}")))
        .collect::<CliResult<Vec<_>>>()?;
    let eval = YEval::new(&vol, &[sec.t], "vol_cf")?;
    let paths = ctx.count(sec.paths);
    let acc = ctx.exec.reduce(
        paths,
        || vec![CfAcc::default(); ops.len()],
        |i, acc| {
            let mut rng = stream(ctx.seed, id, i as u64, StreamTag::Driver);
            let path = vol.driver.sample_path(sec.t, &mut rng).ctx("vol_cf: driver path")?;
            let y = eval.states(&path, "vol_cf")?.pop().expect("one time");
            for (a, op) in acc.iter_mut().zip(&ops) {
                a.push(opbns::hs::hs_inner(&y, op).ctx("vol_cf: pairing")?);
            }
            Ok(())
        },
    )?;
    let th = ctx.th();
    let rows: Vec<CfComparison> = analytic
        .iter()
        .zip(&acc)
        .enumerate()
        .map(|(j, (a, e))| {
            let est = e.estimate();
            CfComparison {
                label: format!("T{j}"),
                analytic: *a,
                empirical: est,
                tol: th.abs_floor.max(th.z_max * est.se_re.max(est.se_im)),
                rule: CfRule::Componentwise,
            }
        })
        .collect();
    let path = ctx.path("vol_cf.csv");
    write_cf_comparisons(&path, &rows)?;
    rep.files.push(file_name(&path));
    rep.check(summarize("cf_Y analytic vs empirical", rows.iter().map(|r| (r.passed(), r.deviation())), "deviation"));
    let modulus = analytic.iter().map(|a| a.norm()).fold(0.0, f64::max);
    rep.check(Check::new("|cf_Y| <= 1", modulus <= 1.0 + 1e-12, format!("max modulus {}", fmt(modulus))));
    Ok(())
}

pub fn trace(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.trace;
    let id = Experiment::VerifyTrace.stream_id();
    let vol = model::vol(&sec.model, &ctx.tol, "trace.model")?;
    let n = vol.dim();
    let q = model::hs(sec.model.q.as_ref().expect("validated"), n, "trace.model.q")?;
    let q_half = psd_sqrt(&q, &ctx.tol).ctx("trace: Q^{1/2}")?;
    let analytic = sec
        .times
        .iter()
        .map(|&t| expected_trace(&vol, &q, t).ctx(format!("trace: analytic at t = {t}")))
        .collect::<CliResult<Vec<_>>>()?;
    let horizon = sec.times.iter().copied().fold(0.0, f64::max);
    let eval = YEval::new(&vol, &sec.times, "trace")?;
    let paths = ctx.count(sec.paths);
    let acc = ctx.exec.reduce(
        paths,
        || vec![Moments::default(); sec.times.len()],
        |i, acc| {
            let mut rng = stream(ctx.seed, id, i as u64, StreamTag::Driver);
            let path = vol.driver.sample_path(horizon, &mut rng).ctx("trace: driver path")?;
            for (a, y) in acc.iter_mut().zip(eval.states(&path, "trace")?) {
                a.push(trace_sandwich(&q_half, &y).ctx("trace: tr(Q^{1/2} Y Q^{1/2})")?);
            }
            Ok(())
        },
    )?;
    let rows: Vec<Comparison> = sec
        .times
        .iter()
        .zip(analytic.iter().zip(&acc))
        .map(|(t, (a, m))| Comparison {
            label: format!("t={t}"),
            analytic: *a,
            empirical: m.mean(),
            se: m.se(),
            tol: ctx.th().trace_rel * a.abs(),
        })
        .collect();
    let path = ctx.path("trace.csv");
    write_comparisons(&path, &rows)?;
    rep.files.push(file_name(&path));
    rep.check(summarize(
        "E tr(Q^{1/2} Y Q^{1/2}) analytic vs empirical",
        rows.iter().map(|r| (r.passed(), (r.empirical - r.analytic).abs() / r.analytic.abs())),
        "relative error",
    ));
    Ok(())
}

/// Violation counts over sampled states; merges by addition and min/max.
#[derive(Clone, Copy, Debug)]
struct PosAcc {
    states: usize,
    eig_violations: usize,
    sym_violations: usize,
    worst_eig: f64,
    worst_asym: f64,
    nd_checked: usize,
    nd_violations: usize,
}

impl Default for PosAcc {
    fn default() -> Self {
        Self {
            states: 0,
            eig_violations: 0,
            sym_violations: 0,
            worst_eig: f64::INFINITY,
            worst_asym: 0.0,
            nd_checked: 0,
            nd_violations: 0,
        }
    }
}

impl Merge for PosAcc {
    fn merge(&mut self, o: Self) {
        self.states += o.states;
        self.eig_violations += o.eig_violations;
        self.sym_violations += o.sym_violations;
        self.worst_eig = self.worst_eig.min(o.worst_eig);
        self.worst_asym = self.worst_asym.max(o.worst_asym);
        self.nd_checked += o.nd_checked;
        self.nd_violations += o.nd_violations;
    }
}

pub fn positivity(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.positivity;
    let id = Experiment::PositivitySuite.stream_id();
    let th = *ctx.th();
    let grid: Vec<f64> = (1..=sec.times).map(|k| sec.horizon * k as f64 / sec.times as f64).collect();
    let mut metrics = Vec::new();
    let mut l2_rows = Vec::new();
    for (m, spec) in sec.models.iter().enumerate() {
        let name = format!("positivity.models[{m}]");
        let vol = model::vol(spec, &ctx.tol, &name)?;
        let n = vol.dim();
        let eval = YEval::new(&vol, &grid, &name)?;
        let mut rng = stream(ctx.seed, id, (m as u64) << 32, StreamTag::TestOps);
        let vectors: Vec<_> = (0..sec.nondecreasing_vectors).map(|_| random_vec(n, 1.0, &mut rng)).collect();
        let acc = ctx.exec.reduce(ctx.count(sec.paths), PosAcc::default, |i, acc| {
            let mut rng = stream(ctx.seed, id, ((m as u64) << 32) | i as u64, StreamTag::Driver);
            let path = vol.driver.sample_path(sec.horizon, &mut rng).ctx(format!("{name}: driver path"))?;
            for y in eval.states(&path, &name)? {
                let l = y.min_eigenvalue();
                let a = y.asymmetry();
                acc.states += 1;
                acc.eig_violations += usize::from(l < -th.psd_floor);
                acc.sym_violations += usize::from(a > th.sym_max);
                acc.worst_eig = acc.worst_eig.min(l);
                acc.worst_asym = acc.worst_asym.max(a);
            }
            let nd = verify_nondecreasing(&path, &vectors, &ctx.tol).ctx(format!("{name}: non-decreasing paths"))?;
            acc.nd_checked += nd.checked;
            acc.nd_violations += nd.violations.len() + usize::from(nd.gaussian_part);
            Ok(())
        })?;
        let label = |k: &str| format!("model{m}/{k}");
        metrics.push(Metric::at_most(label("min_eigenvalue_violations"), acc.eig_violations as f64, 0.0));
        metrics.push(Metric::at_most(label("asymmetry_violations"), acc.sym_violations as f64, 0.0));
        metrics.push(Metric::at_most(label("negative_worst_min_eigenvalue"), -acc.worst_eig, th.psd_floor));
        metrics.push(Metric::at_most(label("worst_asymmetry"), acc.worst_asym, th.sym_max));
        metrics.push(Metric::at_most(label("nondecreasing_violations"), acc.nd_violations as f64, 0.0));
        rep.check(Check::new(
            format!("model {m}: Y(t) self-adjoint and PSD"),
            acc.eig_violations == 0 && acc.sym_violations == 0 && acc.states > 0,
            format!(
                "{} states, {} eigenvalue and {} symmetry violations, worst lambda_min {}, worst asymmetry {}",
                acc.states,
                acc.eig_violations,
                acc.sym_violations,
                fmt(acc.worst_eig),
                fmt(acc.worst_asym)
            ),
        ));
        rep.check(Check::new(
            format!("model {m}: driver increments non-negative"),
            acc.nd_violations == 0,
            format!("{} pairings, {} violations", acc.nd_checked, acc.nd_violations),
        ));

        let mut rng = stream(ctx.seed, id, (m as u64) << 32, StreamTag::Aux);
        let pp = positivity_preservation_check(&vol.drift, n, &grid, sec.semigroup_samples, &mut rng, &ctx.tol)
            .ctx(format!("{name}: semigroup positivity"))?;
        metrics.push(Metric::at_most(label("semigroup_psd_violations"), pp.violations.len() as f64, 0.0));
        rep.check(Check::new(
            format!("model {m}: lifted semigroup preserves PSD"),
            pp.passed(),
            format!("{} checks, worst lambda_min {}", pp.checked, fmt(pp.worst_min_eigenvalue)),
        ));

        let mut rng = stream(ctx.seed, id, ((m as u64) << 32) | 1, StreamTag::Aux);
        let l2 = l2_bound_check(&vol, sec.horizon, ctx.count(sec.l2_paths), &mut rng).ctx(format!("{name}: L2 bound"))?;
        rep.check(Check::new(
            format!("model {m}: L2 growth bound"),
            l2.passed(),
            format!("centred {} (se {}), bound {}", fmt(l2.centred_second_moment), fmt(l2.centred_se), fmt(l2.bound)),
        ));
        l2_rows.push((m, l2));
    }
    let path = ctx.path("positivity.csv");
    write_metrics(&path, &metrics)?;
    rep.files.push(file_name(&path));
    let path = ctx.path("l2_bound.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["model", "t", "paths", "raw_second_moment", "centred_second_moment", "centred_se", "bound", "proof_bound", "pass"])?;
    for (m, r) in &l2_rows {
        w.write_record([
            m.to_string(),
            fmt(r.t),
            r.paths.to_string(),
            fmt(r.raw_second_moment),
            fmt(r.centred_second_moment),
            fmt(r.centred_se),
            fmt(r.bound),
            fmt(r.proof_bound),
            r.passed().to_string(),
        ])?;
    }
    w.flush()?;
    rep.files.push(file_name(&path));
    Ok(())
}
