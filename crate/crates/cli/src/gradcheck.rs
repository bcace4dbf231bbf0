//! `gradcheck`: finite-difference audit of the analytic bound gradient
//! over seeded random configurations, one row per configuration with the
//! worst relative error in every parameter block.

use anyhow::Result;
use gpident_core::{
    elbo_grad, fd_check_against, InducingSet, KernelParams, MaternOrder, MeanFn, SparseGPModel,
    VariationalParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::path::Path;

use crate::config::RunConfig;
use crate::output::{config_hash, fmt_f64, CsvFile};

pub fn random_model<R: Rng + ?Sized>(rng: &mut R, max_inducing: usize) -> SparseGPModel {
    let order = match rng.gen_range(0..3) {
        0 => MaternOrder::Half,
        1 => MaternOrder::ThreeHalves,
        _ => MaternOrder::FiveHalves,
    };
    let kernel = KernelParams::new(
        rng.gen_range(0.3..3.0),
        rng.gen_range(0.2..1.5),
        order,
    )
    .unwrap();
    let mean = if rng.gen_bool(0.5) {
        MeanFn::Identity
    } else {
        MeanFn::Zero
    };
    let l = rng.gen_range(2..=max_inducing.max(2));
    let inducing = InducingSet::grid(-1.0, 2.0, l).unwrap();
    let noise = rng.gen_range(0.05..0.5);
    let prior = SparseGPModel::prior(kernel, mean, noise, inducing.clone()).unwrap();
    let mut m = prior.q.mean().clone();
    for v in m.iter_mut() {
        *v += rng.gen_range(-0.6..0.6);
    }
    let mut c = prior.q.s_factor().clone();
    for j in 0..l {
        c[(j, j)] *= rng.gen_range(-0.4..0.4f64).exp();
        for i in (j + 1)..l {
            c[(i, j)] += rng.gen_range(-0.1..0.1);
        }
    }
    let q = VariationalParams::new(m, c).unwrap();
    SparseGPModel::new(prior.kernel, prior.mean, noise, inducing, q).unwrap()
}

pub fn random_batch<R: Rng + ?Sized>(rng: &mut R, max_batch: usize) -> Vec<(f64, f64)> {
    let n = rng.gen_range(1..=max_batch.max(1));
    (0..n)
        .map(|_| (rng.gen_range(-1.2..2.2), rng.gen_range(-2.0..2.0)))
        .collect()
}

pub fn cmd_gradcheck(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let hash = config_hash(&cfg.canonical()?, seed);
    let gc = &cfg.gradcheck;

    let mut report = CsvFile::create(
        &out.join("gradcheck.csv"),
        &hash,
        &[
            "case",
            "err_m",
            "err_s_factor",
            "err_noise",
            "err_kernel",
            "pass",
        ],
    )?;

    let mut failures = 0usize;
    let mut worst: f64 = 0.0;
    for case in 0..gc.seeds {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(case + 1);
        let model = random_model(&mut rng, gc.max_inducing);
        let batch = random_batch(&mut rng, gc.max_batch);
        let scale = rng.gen_range(0.5..40.0);
        let mut grad = elbo_grad(&model, &batch, scale)?;
        if gc.corrupt {
            grad.log_noise_var += 0.2 * (grad.log_noise_var.abs() + 1.0);
        }
        let r = fd_check_against(&grad, &model, &batch, scale, gc.eps)?;
        let pass = r.max_err() < gc.tolerance;
        if !pass {
            failures += 1;
        }
        worst = worst.max(r.max_err());
        report.row(&[
            case.to_string(),
            fmt_f64(r.m),
            fmt_f64(r.s_factor),
            fmt_f64(r.noise),
            fmt_f64(r.kernel),
            (pass as u8).to_string(),
        ])?;
    }

    println!(
        "gradcheck: {}/{} configurations passed (tolerance {}, worst {:.3e}){}",
        gc.seeds as usize - failures,
        gc.seeds,
        gc.tolerance,
        worst,
        if gc.corrupt { " [corrupted]" } else { "" }
    );
    Ok(())
}
