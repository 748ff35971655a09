//! Distribution of single Wishart marks and of the compound Poisson driver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use opbns::hs::{fredholm_det_shifted, hs_inner};
use opbns::{HsMat64, LevyDriver64, WishartCp};

use super::{file_name, random_sym, random_vec, Ctx, Experiment};
use crate::error::{CliResult, Context};
use crate::model;
use crate::report::{
    fmt, summarize, write_cf_comparisons, write_comparisons, CfComparison, CfRule, Check, Comparison, ExperimentReport,
};
use crate::seed::{stream, StreamTag};
use crate::stats::{CfAcc, Moments};

fn qz_dim(spec: &crate::config::MatSpec, what: &str) -> CliResult<usize> {
    spec.implied_dim()
        .ok_or_else(|| crate::error::CliError::Config(format!("{what}: give rows or a diagonal so the dimension is fixed")))
}

/// `(Z, f)²` for `Z ~ N(0, Qz)` is Gamma with shape 1/2 and scale `2 (Qz f, f)`.
pub fn gamma_jumps(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.gamma_jumps;
    let id = Experiment::VerifyGammaJumps.stream_id();
    let n = qz_dim(&sec.qz, "gamma_jumps.qz")?;
    let qz = model::hs(&sec.qz, n, "gamma_jumps.qz")?;
    let w = WishartCp::new(1.0, qz.clone(), &ctx.tol).ctx("gamma_jumps: Wishart law")?;
    let mut rng = stream(ctx.seed, id, 0, StreamTag::TestOps);
    let fs: Vec<_> = (0..sec.tests).map(|_| random_vec(n, 1.0, &mut rng)).collect();
    let samples = ctx.count(sec.samples);
    let acc = ctx.exec.reduce(
        samples,
        || vec![Moments::default(); fs.len()],
        |i, acc| {
            let mut rng = stream(ctx.seed, id, i as u64, StreamTag::Driver);
            let mark = w.sample_mark(&mut rng);
            for (a, f) in acc.iter_mut().zip(&fs) {
                a.push(f.inner(&mark.apply(f).ctx("gamma_jumps: mark action")?).ctx("gamma_jumps: pairing")?);
            }
            Ok(())
        },
    )?;
    let th = ctx.th();
    let mut rows = Vec::new();
    for (j, (f, m)) in fs.iter().zip(&acc).enumerate() {
        let s = f.inner(&qz.apply(f).ctx("gamma_jumps: Qz f")?).ctx("gamma_jumps: (Qz f, f)")?;
        rows.push(Comparison { label: format!("f{j}/mean"), analytic: s, empirical: m.mean(), se: m.se(), tol: th.gamma_mean_rel * s });
        let v = 2.0 * s * s;
        rows.push(Comparison {
            label: format!("f{j}/variance"),
            analytic: v,
            empirical: m.variance(),
            se: m.variance_se(),
            tol: th.gamma_var_rel * v,
        });
    }
    let path = ctx.path("gamma_jumps.csv");
    write_comparisons(&path, &rows)?;
    rep.files.push(file_name(&path));
    let rel = |r: &Comparison| (r.empirical - r.analytic).abs() / r.analytic;
    rep.check(summarize("sample mean vs (Qz f, f)", rows.iter().step_by(2).map(|r| (r.passed(), rel(r))), "relative error"));
    rep.check(summarize(
        "sample variance vs 2 (Qz f, f)^2",
        rows.iter().skip(1).step_by(2).map(|r| (r.passed(), rel(r))),
        "relative error",
    ));
    Ok(())
}

/// Direct complex LU determinant of `I - 2i T Qz`.
fn det_direct(t: &HsMat64, qz: &HsMat64) -> Complex64 {
    let n = t.dim();
    let tq = t.matrix() * qz.matrix();
    DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        Complex64::new(id, -2.0 * tq[(i, j)])
    })
    .determinant()
}

pub fn wishart_cf(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.wishart_cf;
    let id = Experiment::VerifyWishartCf.stream_id();
    let n = qz_dim(&sec.qz, "wishart_cf.qz")?;
    let qz = model::hs(&sec.qz, n, "wishart_cf.qz")?;
    let w = WishartCp::new(sec.lambda, qz.clone(), &ctx.tol).ctx("wishart_cf: Wishart law")?;
    let driver = LevyDriver64::Wishart(w.clone());
    let mut rng = stream(ctx.seed, id, 0, StreamTag::TestOps);
    let ops: Vec<HsMat64> = (0..sec.tests).map(|_| random_sym(n, sec.test_scale, &mut rng)).collect();

    let mut mark_cf = Vec::new();
    let mut driver_cf = Vec::new();
    let mut ident = 0.0f64;
    for (j, op) in ops.iter().enumerate() {
        let f = fredholm_det_shifted(op, &qz, &ctx.tol).ctx(format!("wishart_cf: determinant for T{j}"))?;
        ident = ident.max((f.inv_sqrt * f.inv_sqrt * det_direct(op, &qz) - 1.0).norm());
        mark_cf.push(f.inv_sqrt);
        driver_cf.push(driver.cumulant(op, &ctx.tol).ctx(format!("wishart_cf: cumulant for T{j}"))?.exp());
    }
    rep.check(Check::new(
        "det^{-1/2} squared times direct LU determinant equals 1",
        ident <= ctx.th().det_identity,
        format!("max deviation {}", fmt(ident)),
    ));

    let samples = ctx.count(sec.samples);
    let k = ops.len();
    let acc = ctx.exec.reduce(
        samples,
        || vec![CfAcc::default(); 2 * k],
        |i, acc| {
            let mut rng = stream(ctx.seed, id, i as u64, StreamTag::Driver);
            let mark = w.sample_mark(&mut rng);
            let mut rng = stream(ctx.seed, id, i as u64, StreamTag::Aux);
            let l1 = driver.sample_path(1.0, &mut rng).ctx("wishart_cf: driver path")?.value_at(1.0).ctx("wishart_cf: L(1)")?;
            for (j, op) in ops.iter().enumerate() {
                acc[j].push(hs_inner(&mark, op).ctx("wishart_cf: pairing")?);
                acc[k + j].push(hs_inner(&l1, op).ctx("wishart_cf: pairing")?);
            }
            Ok(())
        },
    )?;
    let z = ctx.th().z_max;
    let rows: Vec<CfComparison> = mark_cf
        .iter()
        .chain(&driver_cf)
        .zip(&acc)
        .enumerate()
        .map(|(r, (a, e))| {
            let est = e.estimate();
            let label = if r < k { format!("mark/T{r}") } else { format!("driver/T{}", r - k) };
            CfComparison { label, analytic: *a, empirical: est, tol: z * est.se_abs, rule: CfRule::Modulus }
        })
        .collect();
    let path = ctx.path("wishart_cf.csv");
    write_cf_comparisons(&path, &rows)?;
    rep.files.push(file_name(&path));
    rep.check(summarize("mark cf vs det(I - 2i T Qz)^{-1/2}", rows[..k].iter().map(|r| (r.passed(), r.deviation())), "|diff|"));
    rep.check(summarize(
        "L(1) cf vs exp(lambda (det^{-1/2} - 1))",
        rows[k..].iter().map(|r| (r.passed(), r.deviation())),
        "|diff|",
    ));
    Ok(())
}
