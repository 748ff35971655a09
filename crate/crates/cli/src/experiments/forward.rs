//! Filipović-space kernel suite and forward-curve simulation.

use std::fs::File;
use std::sync::Arc;

use opbns::forward::{forward_surface, sigma2_field, sigma2_field_commuting};
use opbns::ou::commutativity_check;
use opbns::quadrature::simpson_doubling;
use opbns::vol::expected_state;
use opbns::{build_space, FwSpace64, HVec64, HsMat64, VolPath, WeightSpec, XStepper};
use rand::Rng;

use super::{file_name, random_vec, Ctx, Experiment};
use crate::config::WeightSection;
use crate::error::{CliResult, Context};
use crate::model;
use crate::report::{fmt, summarize, write_comparisons, write_metrics, Check, Comparison, ExperimentReport, Metric};
use crate::seed::{stream, StreamTag};
use crate::stats::Moments;

fn space(w: &WeightSection, dim: usize, what: &str) -> CliResult<FwSpace64> {
    build_space(WeightSpec { alpha: w.alpha, x_max: w.x_max, resolution: w.resolution }, dim).ctx(format!("{what}: space N = {dim}"))
}

pub fn kernels(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.kernels;
    let id = Experiment::VerifyKernels.stream_id();
    let th = *ctx.th();
    let mut metrics = Vec::new();
    let mut rng = stream(ctx.seed, id, 0, StreamTag::TestOps);
    let pairs: Vec<(f64, f64)> =
        (0..sec.points).map(|_| (sec.max_shift * rng.random::<f64>(), sec.max_x * rng.random::<f64>())).collect();

    let mut dims = sec.dims.clone();
    dims.sort_unstable();
    let spaces = dims.iter().map(|&n| space(&sec.weight, n, "kernels")).collect::<CliResult<Vec<_>>>()?;
    let mut repro = Vec::new();
    for sp in &spaces {
        let n = sp.dim();
        metrics.push(Metric::at_most(format!("gram/N={n}"), sp.gram_error, th.gram_max));
        for (k, &(_, x)) in pairs.iter().enumerate() {
            let c = random_vec(n, 1.0, &mut rng);
            let a = sp.evaluate(&c, x).ctx("kernels: (f, h_x)")?;
            let b = sp.evaluate_by_integral(&c, x).ctx("kernels: f(0) + integral of f'")?;
            let m = Metric::at_most(format!("reproducing/N={n}/k={k}/x={}", fmt(x)), (a - b).abs(), th.kernel_repro);
            repro.push((m.passed, m.value));
            metrics.push(m);
        }
    }
    let gram_ok = spaces.iter().all(|s| s.gram_error <= th.gram_max);
    rep.check(Check::new("Gram matrix is the identity", gram_ok, format!("worst {}", fmt(spaces.iter().map(|s| s.gram_error).fold(0.0, f64::max)))));
    rep.check(summarize("reproducing property", repro, "error"));

    let big = space(&sec.weight, sec.shift_dim, "kernels")?;
    let mut law = Vec::new();
    for (k, _) in pairs.iter().enumerate() {
        let a = sec.max_shift * rng.random::<f64>();
        let b = sec.max_shift * rng.random::<f64>();
        let lhs = big.shift_matrix(a).ctx("kernels: S(a)")? * big.shift_matrix(b).ctx("kernels: S(b)")?;
        let rhs = big.shift_matrix(a + b).ctx("kernels: S(a+b)")?;
        let m = Metric::at_most(format!("shift_law/N={}/k={k}", sec.shift_dim), (lhs - rhs).abs().max(), th.shift_law);
        law.push((m.passed, m.value));
        metrics.push(m);
    }
    rep.check(summarize("S(a) S(b) = S(a+b)", law, "max entry error"));

    // Per pair: kernel-shift error and projection error across increasing N.
    let mut adj_ok = true;
    let mut adj_worst: f64 = 0.0;
    let mut mono_ok = true;
    let mut proj_ok = true;
    for (k, &(t, x)) in pairs.iter().enumerate() {
        let mut prev: Option<(f64, f64)> = None;
        for sp in &spaces {
            let n = sp.dim();
            let hx = sp.hx_coeffs(x).ctx("kernels: h_x")?;
            let hxt = sp.hx_coeffs(x + t).ctx("kernels: h_{x+t}")?;
            let moved = HVec64::from_vector(sp.shift_matrix(t).ctx("kernels: S(t)")?.transpose() * hx.as_vector());
            let err = (moved.as_vector() - hxt.as_vector()).norm();
            let proj = sp.kernel_projection_error(x + t).ctx("kernels: projection error")?;
            metrics.push(Metric::at_most(format!("adjoint_kernel/N={n}/k={k}"), err, th.adjoint_kernel));
            metrics.push(Metric { label: format!("kernel_projection_error/N={n}/k={k}"), value: proj, threshold: f64::NAN, passed: true });
            adj_ok &= err <= th.adjoint_kernel;
            adj_worst = adj_worst.max(err);
            if let Some((pe, pp)) = prev {
                mono_ok &= err <= pe || err <= th.roundoff_floor;
                // compare squared deficits, which carry absolute roundoff
                proj_ok &= proj * proj <= pp * pp + th.roundoff_floor * sp.kernel_self_pairing(x + t);
            }
            prev = Some((err, proj));
        }
    }
    rep.check(Check::new("S_N(t)^* h_x = h_{x+t}", adj_ok, format!("worst {}", fmt(adj_worst))));
    rep.check(Check::new(
        "kernel-shift error non-increasing in N (or at roundoff)",
        mono_ok,
        format!("dims {dims:?}, roundoff floor {}", fmt(th.roundoff_floor)),
    ));
    rep.check(Check::new("||P h_x - h_x|| non-increasing in N", proj_ok, format!("dims {dims:?}")));
    let path = ctx.path("kernels.csv");
    write_metrics(&path, &metrics)?;
    rep.files.push(file_name(&path));
    Ok(())
}

pub fn simulate(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.forward;
    let id = Experiment::SimulateForward.stream_id();
    let th = *ctx.th();
    let sp = Arc::new(space(&sec.weight, sec.model.dim, "forward")?);
    let x = model::price(&sec.model, &ctx.tol, "forward.model", Some(sp.clone()))?;
    let t = sec.t;

    // Sample paths on a grid: surfaces, spot and variance paths.
    let grid: Vec<f64> = (1..=sec.surface_steps.max(1)).map(|k| t * k as f64 / sec.surface_steps.max(1) as f64).collect();
    let mut times = vec![0.0];
    times.extend(&grid);
    let maturities: Vec<f64> = (0..sec.maturities).map(|k| sec.max_maturity * k as f64 / (sec.maturities - 1) as f64).collect();
    let mut slope: f64 = 0.0;
    let mut sigma_rows = Vec::new();
    for p in 0..sec.surface_paths {
        let idx = (1u64 << 40) | p as u64;
        let mut rd = stream(ctx.seed, id, idx, StreamTag::Driver);
        let mut rw = stream(ctx.seed, id, idx, StreamTag::Wiener);
        let dp = x.vol.driver.sample_path(t, &mut rd).ctx("forward: driver path")?;
        let vp = VolPath::from_driver_path(&x.vol, dp, &grid).ctx("forward: variance path")?;
        let xp = XStepper::new(&x, &vp).ctx("forward: stepper")?.sample(&mut rw);
        let mut states = vec![x.x0.clone()];
        states.extend(xp.states.iter().cloned());
        let surf = forward_surface(&sp, &times, &states, &maturities).ctx("forward: surface")?;
        slope = surf.long_maturity_slope().into_iter().fold(slope, f64::max);
        for (file, w) in [("forward_surface", 0), ("forward_spot", 1), ("forward_vol", 2)] {
            let path = ctx.path(&format!("{file}_p{p}.csv"));
            let f = File::create(&path)?;
            match w {
                0 => surf.write_long_csv(f),
                1 => surf.write_spot_csv(f),
                _ => vp.write_csv(f),
            }
            .ctx(format!("forward: write {file}"))?;
            rep.files.push(file_name(&path));
        }
        if p == 0 {
            for (k, &s) in grid.iter().enumerate() {
                let half = vp.sqrt_at(k).ctx("forward: Y^{1/2}")?;
                let qy = HsMat64::from_matrix(x.q.matrix() * vp.states[k].matrix()).ctx("forward: QY")?.sym_part();
                for xm in [0.0, 1.0, 2.5] {
                    let a = sigma2_field(&sp, half, &x.q, t, s, xm).ctx("forward: sigma^2")?;
                    let b = sigma2_field_commuting(&sp, &qy, t, s, xm).ctx("forward: sigma^2 commuting")?;
                    sigma_rows.push(Metric::at_most(
                        format!("sigma2/s={}/x={}", fmt(s), fmt(xm)),
                        (a - b).abs() / a.abs().max(1.0),
                        th.sigma2_routes,
                    ));
                }
            }
        }
    }
    rep.check(Check::new("long-maturity slope of the surfaces", slope.is_finite(), format!("max {}", fmt(slope))));
    let path = ctx.path("sigma2_routes.csv");
    write_metrics(&path, &sigma_rows)?;
    rep.files.push(file_name(&path));
    rep.check(summarize("sigma^2 square-root vs commuting form", sigma_rows.iter().map(|m| (m.passed, m.value)), "relative gap"));

    // Spot variance: Monte Carlo vs the integral of E sigma^2(t, s, 0).
    let comm = commutativity_check(&x.q, &x.vol, &ctx.tol).ctx("forward: commutativity")?;
    if !comm.passed {
        rep.check(Check::new("spot variance", false, "needs Q to commute with the variance process"));
        return Ok(());
    }
    let target = simpson_doubling(
        |s: f64| {
            let ey = expected_state(&x.vol, s)?;
            let yq = HsMat64::from_matrix(x.q.matrix() * ey.matrix())?.sym_part();
            sigma2_field_commuting(&sp, &yq, t, s, 0.0)
        },
        0.0,
        t,
        ctx.tol.eps_quad,
        ctx.tol.eps_quad * 1e-3,
        20,
        "spot variance",
    )
    .ctx("forward: sigma^2 quadrature")?;
    let h0 = sp.hx_coeffs(0.0).ctx("forward: h_0")?;
    let mean0 = HVec64::from_vector(x.semigroup.matrix(t).ctx("forward: S(t)")? * x.x0.as_vector());
    let f0 = mean0.inner(&h0).ctx("forward: f_0(t)")?;
    let acc = ctx.exec.reduce(ctx.count(sec.paths), Moments::default, |i, acc| {
        let mut rd = stream(ctx.seed, id, i as u64, StreamTag::Driver);
        let mut rw = stream(ctx.seed, id, i as u64, StreamTag::Wiener);
        let dp = x.vol.driver.sample_path(t, &mut rd).ctx("forward: driver path")?;
        let vp = VolPath::from_driver_path(&x.vol, dp, &[t]).ctx("forward: variance path")?;
        let xt = XStepper::with_commuting(&x, &vp, false).ctx("forward: stepper")?.sample(&mut rw).states.pop().expect("one step");
        acc.push(xt.inner(&h0).ctx("forward: f(t, 0)")? - f0);
        Ok(())
    })?;
    let rows = vec![
        Comparison { label: "spot_variance".into(), analytic: target, empirical: acc.variance(), se: acc.variance_se(), tol: th.spot_var_rel * target },
        Comparison { label: "spot_mean".into(), analytic: 0.0, empirical: acc.mean(), se: acc.se(), tol: th.z_max * acc.se() },
    ];
    let path = ctx.path("spot_variance.csv");
    write_comparisons(&path, &rows)?;
    rep.files.push(file_name(&path));
    rep.check(Check::new(
        "Var f(t,0) vs integral of sigma^2",
        rows[0].passed(),
        format!("mc {} vs quadrature {} (rel {})", fmt(rows[0].empirical), fmt(target), fmt((rows[0].empirical - target).abs() / target)),
    ));
    rep.check(Check::new("E f(t,0) = f_0(t)", rows[1].passed(), format!("mean {} (se {})", fmt(acc.mean()), fmt(acc.se()))));
    Ok(())
}
