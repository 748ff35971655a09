//! Price-process experiments: characteristic functional and adjusted returns.

use nalgebra::DMatrix;
use opbns::ou::{adjusted_return_cov, cf_x, commutativity_check, step_covariance};
use opbns::{CfRoute, HVec64, VolPath, XStepper};

use super::{file_name, random_vec, Ctx, Experiment};
use crate::error::{CliResult, Context};
use crate::model;
use crate::report::{
    fmt, summarize, write_cf_comparisons, write_comparisons, write_metrics, CfComparison, CfRule, Check, Comparison,
    ExperimentReport, Metric,
};
use crate::seed::{stream, StreamTag};
use crate::stats::{CfAcc, Moments};

pub fn x_cf(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.x_cf;
    let id = Experiment::VerifyXCf.stream_id();
    let th = *ctx.th();
    let mut rows = Vec::new();
    let mut routes = Vec::new();
    for (c, spec) in sec.cases.iter().enumerate() {
        let name = format!("x_cf.cases[{c}]");
        let x = model::price(spec, &ctx.tol, &name, None)?;
        let n = x.dim();
        let comm = commutativity_check(&x.q, &x.vol, &ctx.tol).ctx(format!("{name}: commutativity"))?;
        rep.check(Check::new(
            format!("case {c}: Q commutes with the variance process"),
            comm.passed,
            format!("worst commutator {} vs threshold {}", fmt(comm.worst()), fmt(comm.threshold)),
        ));
        if !comm.passed {
            continue;
        }
        let mut rng = stream(ctx.seed, id, c as u64, StreamTag::TestOps);
        let fs: Vec<HVec64> = (0..sec.tests).map(|_| random_vec(n, sec.test_scale, &mut rng)).collect();
        let mut analytic = Vec::new();
        for (j, f) in fs.iter().enumerate() {
            let a = cf_x(&x, sec.t, f, CfRoute::SqrtD).ctx(format!("{name}: cf_X for f{j}, square-root route"))?;
            let b = cf_x(&x, sec.t, f, CfRoute::LiftedQ).ctx(format!("{name}: cf_X for f{j}, lifted-Q route"))?;
            routes.push(Metric::at_most(format!("case{c}/f{j}"), (a - b).norm(), th.route_agreement));
            analytic.push(a);
        }
        let base = (c as u64) << 32;
        let acc = ctx.exec.reduce(
            ctx.count(sec.paths),
            || vec![CfAcc::default(); fs.len()],
            |i, acc| {
                let mut rd = stream(ctx.seed, id, base | i as u64, StreamTag::Driver);
                let mut rw = stream(ctx.seed, id, base | i as u64, StreamTag::Wiener);
                let dp = x.vol.driver.sample_path(sec.t, &mut rd).ctx(format!("{name}: driver path"))?;
                let vp = VolPath::from_driver_path(&x.vol, dp, &[sec.t]).ctx(format!("{name}: variance path"))?;
                // The simulation keeps the general square-root covariance so
                // it does not share the commuting shortcut with the oracle.
                let stepper = XStepper::with_commuting(&x, &vp, false).ctx(format!("{name}: step covariance"))?;
                let xt = stepper.sample(&mut rw).states.pop().expect("one step");
                for (a, f) in acc.iter_mut().zip(&fs) {
                    a.push(xt.inner(f).ctx("x_cf: projection")?);
                }
                Ok(())
            },
        )?;
        for (j, (a, e)) in analytic.iter().zip(&acc).enumerate() {
            let est = e.estimate();
            rows.push(CfComparison {
                label: format!("case{c}/f{j}"),
                analytic: *a,
                empirical: est,
                tol: th.abs_floor.max(th.z_max * est.se_re.max(est.se_im)),
                rule: CfRule::Componentwise,
            });
        }
    }
    let path = ctx.path("x_cf.csv");
    write_cf_comparisons(&path, &rows)?;
    rep.files.push(file_name(&path));
    let path = ctx.path("x_cf_routes.csv");
    write_metrics(&path, &routes)?;
    rep.files.push(file_name(&path));
    rep.check(summarize("cf_X analytic vs empirical", rows.iter().map(|r| (r.passed(), r.deviation())), "deviation"));
    rep.check(summarize("cf_X square-root vs lifted-Q route", routes.iter().map(|m| (m.passed, m.value)), "gap"));
    Ok(())
}

pub fn returns(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.returns;
    let id = Experiment::VerifyReturns.stream_id();
    let th = *ctx.th();
    let x = model::price(&sec.model, &ctx.tol, "returns.model", None)?;
    let n = x.dim();
    let end = sec.t + sec.dt;
    let mut grid = vec![sec.t];
    grid.extend((1..=sec.substeps).map(|k| sec.t + sec.dt * k as f64 / sec.substeps as f64));
    *grid.last_mut().expect("non-empty") = end;

    let mut rng = stream(ctx.seed, id, 0, StreamTag::Driver);
    let dp = x.vol.driver.sample_path(end, &mut rng).ctx("returns: frozen driver path")?;
    let vp = VolPath::from_driver_path(&x.vol, dp, &grid).ctx("returns: frozen variance path")?;
    let path = ctx.path("returns_vol_path.csv");
    vp.write_csv(std::fs::File::create(&path)?).ctx("returns: write variance path")?;
    rep.files.push(file_name(&path));

    let cov = adjusted_return_cov(&x, &vp, sec.t, sec.dt).ctx("returns: adjusted_return_cov")?;
    let commuting = commutativity_check(&x.q, &x.vol, &ctx.tol).ctx("returns: commutativity")?.passed;
    let mut split = DMatrix::<f64>::zeros(n, n);
    for w in grid.windows(2) {
        let c = step_covariance(&x, &vp, w[0], w[1], commuting).ctx("returns: step covariance")?;
        let s = x.semigroup.matrix(end - w[1]).ctx("returns: state semigroup")?;
        split += &s * c.matrix() * s.transpose();
    }
    let split_err = (&split - cov.matrix()).norm() / cov.matrix().norm();
    rep.check(Check::new(
        "covariance over [t, t+dt] equals the composition of sub-steps",
        split_err <= th.split_rel,
        format!("relative gap {}", fmt(split_err)),
    ));

    let stepper = XStepper::with_commuting(&x, &vp, commuting).ctx("returns: stepper")?;
    let s_dt = x.semigroup.matrix(sec.dt).ctx("returns: S(dt)")?;
    let mut rng = stream(ctx.seed, id, 0, StreamTag::TestOps);
    let fs: Vec<HVec64> = (0..sec.projections).map(|_| random_vec(n, 1.0, &mut rng)).collect();
    let samples = ctx.count(sec.samples);
    let acc = ctx.exec.reduce(
        samples,
        || vec![Moments::default(); fs.len()],
        |i, acc| {
            let mut rng = stream(ctx.seed, id, i as u64, StreamTag::Wiener);
            let xp = stepper.sample(&mut rng);
            let r = xp.states.last().expect("steps").as_vector() - &s_dt * xp.states[0].as_vector();
            for (a, f) in acc.iter_mut().zip(&fs) {
                a.push(r.dot(f.as_vector()));
            }
            Ok(())
        },
    )?;
    let ns = samples as f64;
    let mut rows = Vec::new();
    for (j, (f, m)) in fs.iter().zip(&acc).enumerate() {
        let v = f.inner(&cov.apply(f).ctx("returns: Cov f")?).ctx("returns: (Cov f, f)")?;
        rows.push(Comparison { label: format!("f{j}/variance"), analytic: v, empirical: m.variance(), se: m.variance_se(), tol: th.returns_var_rel * v });
        rows.push(Comparison { label: format!("f{j}/skewness"), analytic: 0.0, empirical: m.skewness(), se: (6.0 / ns).sqrt(), tol: th.skew_max });
        rows.push(Comparison {
            label: format!("f{j}/excess_kurtosis"),
            analytic: 0.0,
            empirical: m.excess_kurtosis(),
            se: (24.0 / ns).sqrt(),
            tol: th.kurt_max,
        });
    }
    let path = ctx.path("returns.csv");
    write_comparisons(&path, &rows)?;
    rep.files.push(file_name(&path));
    let dev = |r: &Comparison| (r.empirical - r.analytic).abs();
    rep.check(summarize(
        "return variance vs adjusted_return_cov",
        rows.iter().step_by(3).map(|r| (r.passed(), dev(r) / r.analytic)),
        "relative error",
    ));
    rep.check(summarize("|skewness|", rows.iter().skip(1).step_by(3).map(|r| (r.passed(), dev(r))), "value"));
    rep.check(summarize("|excess kurtosis|", rows.iter().skip(2).step_by(3).map(|r| (r.passed(), dev(r))), "value"));
    Ok(())
}
