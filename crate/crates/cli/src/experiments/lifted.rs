//! Lifted semigroups against the brute-force Kronecker exponential.

use nalgebra::DMatrix;
use opbns::lifted::DEFAULT_ORACLE_CAP;
use opbns::{HsMat64, LiftedDrift64};
use rand::Rng;

use super::{file_name, Ctx, Experiment};
use crate::error::{CliResult, Context};
use crate::report::{summarize, write_metrics, ExperimentReport, Metric};
use crate::seed::{stream, StreamTag};

pub fn run(ctx: &Ctx, rep: &mut ExperimentReport) -> CliResult<()> {
    let sec = &ctx.cfg.lifted;
    let id = Experiment::VerifyLifted.stream_id();
    let tol = ctx.tol;
    let rows = ctx.exec.map(sec.cases, |i| {
        let mut rng = stream(ctx.seed, id, i as u64, StreamTag::TestOps);
        let n = rng.random_range(1..=sec.max_dim.max(1));
        let s = sec.entry_scale;
        let c = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-s..s));
        let (variant, drift) = match i % 3 {
            0 => ("sandwich", LiftedDrift64::sandwich(c).ctx("lifted: drift")?),
            1 => ("lyapunov", LiftedDrift64::lyapunov(c).ctx("lifted: drift")?),
            _ => ("zero", LiftedDrift64::Zero),
        };
        let adjoint = (i / 3) % 2 == 1;
        let t = sec.max_time * (1.0 - rng.random::<f64>());
        let op = HsMat64::from_matrix(DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))).ctx("lifted: operator")?;
        let fast = drift.apply_semigroup(t, &op, adjoint, &tol).ctx(format!("lifted case {i}: semigroup"))?;
        let big = drift.brute_semigroup(n, t, adjoint, DEFAULT_ORACLE_CAP).ctx(format!("lifted case {i}: oracle"))?;
        let slow = HsMat64::from_vectorized(&(big * op.vectorize()), n).ctx("lifted: unvectorize")?;
        let err = (&fast - &slow).hs_norm();
        let label = format!("case{i}/{variant}/adjoint={adjoint}/n={n}/t={t:.4}");
        Ok(Metric::at_most(label, err, ctx.th().lifted_abs))
    })?;
    let path = ctx.path("lifted.csv");
    write_metrics(&path, &rows)?;
    rep.files.push(file_name(&path));
    rep.check(summarize("semigroup vs Kronecker exponential", rows.iter().map(|m| (m.passed, m.value)), "HS error"));
    Ok(())
}
