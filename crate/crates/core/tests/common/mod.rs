#![allow(dead_code)]

use gpident_core::{
    InducingSet, KernelParams, MaternOrder, MeanFn, SparseGPModel, VariationalParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_order<R: Rng + ?Sized>(rng: &mut R) -> MaternOrder {
    match rng.gen_range(0..3) {
        0 => MaternOrder::Half,
        1 => MaternOrder::ThreeHalves,
        _ => MaternOrder::FiveHalves,
    }
}

pub fn random_kernel<R: Rng + ?Sized>(rng: &mut R) -> KernelParams {
    KernelParams::new(
        rng.gen_range(0.3..3.0),
        rng.gen_range(0.2..1.5),
        random_order(rng),
    )
    .unwrap()
}

/// A sparse model with `l` gridded inducing points and `q` perturbed away
/// from the prior so no block of the gradient is trivially zero.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, l: usize) -> SparseGPModel {
    let kernel = random_kernel(rng);
    let mean = if rng.gen_bool(0.5) {
        MeanFn::Identity
    } else {
        MeanFn::Zero
    };
    let inducing = InducingSet::grid(-1.0, 2.0, l).unwrap();
    let noise = rng.gen_range(0.05..0.5);
    let model = SparseGPModel::prior(kernel, mean, noise, inducing.clone()).unwrap();
    let mut m = model.q.mean().clone();
    for v in m.iter_mut() {
        *v += rng.gen_range(-0.6..0.6);
    }
    let mut c = model.q.s_factor().clone();
    for j in 0..l {
        c[(j, j)] *= rng.gen_range(-0.4..0.4f64).exp();
        for i in (j + 1)..l {
            c[(i, j)] += rng.gen_range(-0.1..0.1);
        }
    }
    let q = VariationalParams::new(m, c).unwrap();
    SparseGPModel::new(model.kernel, model.mean, noise, inducing, q).unwrap()
}

pub fn random_batch<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| (rng.gen_range(-1.2..2.2), rng.gen_range(-2.0..2.0)))
        .collect()
}
