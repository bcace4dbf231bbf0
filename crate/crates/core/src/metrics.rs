//! Evaluation metrics: held-out prediction error and likelihood of the
//! learned model, tracking error in dB, likelihood of the ground-truth
//! function under the learned GP, and KNN curve smoothing for plots.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
// Needed for float math in no_std builds; unused when std is in the crate graph.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gp::{chol_with_jitter, LN_2PI};
use crate::kernel::kernel_matrix;
use crate::svsgp::{predict, SparseGPModel};

/// Floor applied to the dB tracking error when sequences coincide.
pub const MSE_FLOOR_DB: f64 = -120.0;

/// Mean squared error of the model's predictive mean over transition pairs.
pub fn test_mse(model: &SparseGPModel, test: &[(f64, f64)]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut sum = 0.0;
    for &(x_prev, x_curr) in test {
        let (mean, _) = predict(model, x_prev)?;
        sum += (x_curr - mean) * (x_curr - mean);
    }
    Ok(sum / test.len() as f64)
}

/// Mean log likelihood of the targets under the full predictive
/// distribution (model plus dynamic-noise variance).
pub fn test_mll(model: &SparseGPModel, test: &[(f64, f64)]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut sum = 0.0;
    for &(x_prev, x_curr) in test {
        let (mean, var) = predict(model, x_prev)?;
        let r = x_curr - mean;
        sum += -0.5 * (LN_2PI + var.ln()) - r * r / (2.0 * var);
    }
    Ok(sum / test.len() as f64)
}

/// Per-trajectory tracking error `10 log10( Σ (x̂_t − x_t)² / T )`,
/// clamped at `floor_db`.
pub fn tracking_mse_db(estimates: &[f64], truth: &[f64], floor_db: f64) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mse: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum::<f64>()
        / estimates.len() as f64;
    if mse <= 0.0 {
        return Ok(floor_db);
    }
    Ok((10.0 * mse.log10()).max(floor_db))
}

/// Joint log-density of the ground-truth function values on a uniform
/// grid over `[0, 1]` under the model's predictive distribution,
/// evaluated in blocks of `block_size` points.
///
/// Within a block the full joint sparse predictive is used (including the
/// dynamic-noise variance on the diagonal); cross-block couplings are
/// dropped. Comparisons are only meaningful between runs using the same
/// `n_points` and `block_size`.
pub fn groundtruth_loglik<F: Fn(f64) -> f64>(
    model: &SparseGPModel,
    truth: F,
    n_points: usize,
    block_size: usize,
) -> Result<f64> {
    if n_points == 0 {
        return Err(Error::InvalidConfig("n_points must be >= 1"));
    }
    if block_size == 0 {
        return Err(Error::InvalidConfig("block_size must be >= 1"));
    }
    let grid: Vec<f64> = (0..n_points)
        .map(|j| (j as f64 + 0.5) / n_points as f64)
        .collect();
    let chol = model.kll_chol()?;
    let z = model.inducing.points();
    let delta_m = {
        let prior = DVector::from_vec(model.mean.eval_vec(z));
        model.q.mean() - prior
    };
    let s = model.q.cov();

    let mut total = 0.0;
    for block in grid.chunks(block_size) {
        let b = block.len();
        let k_lb = kernel_matrix(&model.kernel, z, block)?; // L x b
        let w = chol.solve(&k_lb); // K⁻¹ K_L*
        let mu = DVector::from_vec(model.mean.eval_vec(block)) + w.transpose() * &delta_m;
        let k_bb = kernel_matrix(&model.kernel, block, block)?;
        let mut cov = k_bb - k_lb.transpose() * &w + w.transpose() * &s * &w;
        for i in 0..b {
            cov[(i, i)] += model.noise_var();
        }
        let block_chol = chol_with_jitter(cov, model.kernel.jitter(), "block predictive")?;
        let y = DVector::from_iterator(b, block.iter().map(|&x| truth(x)));
        let resid = y - mu;
        let alpha = block_chol.solve(&resid);
        let log_det: f64 = block_chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
            * 2.0;
        total += -0.5 * (b as f64 * LN_2PI + log_det + resid.dot(&alpha));
    }
    Ok(total)
}

/// Joint predictive covariance pieces for a block, exposed for the dense
/// cross-check in tests.
pub fn predictive_joint(
    model: &SparseGPModel,
    points: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = model.kll_chol()?;
    let z = model.inducing.points();
    let delta_m = {
        let prior = DVector::from_vec(model.mean.eval_vec(z));
        model.q.mean() - prior
    };
    let s = model.q.cov();
    let k_lb = kernel_matrix(&model.kernel, z, points)?;
    let w = chol.solve(&k_lb);
    let mu = DVector::from_vec(model.mean.eval_vec(points)) + w.transpose() * &delta_m;
    let k_bb = kernel_matrix(&model.kernel, points, points)?;
    let mut cov = k_bb - k_lb.transpose() * &w + w.transpose() * &s * &w;
    for i in 0..points.len() {
        cov[(i, i)] += model.noise_var();
    }
    Ok((mu, cov))
}

/// KNN smoothing of a scatter `(x, y)`: for every point, the mean `y`
/// of the `k` nearest points by `|Δx|`, ties broken by earliest index.
pub fn knn_average(points: &[(f64, f64)], k: usize) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::Empty("scatter"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidConfig("k must satisfy 1 <= k <= |points|"));
    }
    let mut smoothed = Vec::with_capacity(points.len());
    let mut order: Vec<usize> = (0..points.len()).collect();
    for &(xq, _) in points {
        let key = |&i: &usize| {
            let d = (points[i].0 - xq).abs();
            (d, i)
        };
        order.sort_unstable_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        let mean: f64 = order[..k].iter().map(|&i| points[i].1).sum::<f64>() / k as f64;
        smoothed.push(mean);
    }
    Ok(smoothed)
}
