//! Exact (dense) Gaussian-process regression.
//!
//! This is the O(N^3) reference: the sparse variational module is checked
//! against these posteriors and marginal likelihoods in tests, and the
//! variational objective is a lower bound of [`gp_log_marginal`].

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
// Needed for float math in no_std builds; unused when std is in the crate graph.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, KernelParams, MeanFn};

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// Regression training set: inputs and noisy function values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if inputs
            .iter()
            .chain(targets.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn empty() -> Self {
        Dataset::default()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

pub(crate) fn chol_with_jitter(
    mut m: DMatrix<f64>,
    jitter: f64,
    what: &'static str,
) -> Result<Cholesky<f64, Dyn>> {
    for i in 0..m.nrows() {
        m[(i, i)] += jitter;
    }
    Cholesky::new(m).ok_or(Error::Conditioning(what))
}

fn validate_noise(noise_var: f64) -> Result<()> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::InvalidConfig("noise_var must be non-negative"));
    }
    Ok(())
}

/// Exact GP posterior mean and covariance at the query points `xstar`.
pub fn gp_posterior(
    data: &Dataset,
    p: &KernelParams,
    mean: MeanFn,
    noise_var: f64,
    xstar: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    p.validate()?;
    validate_noise(noise_var)?;
    let prior_mean = DVector::from_vec(mean.eval_vec(xstar));
    let k_ss = kernel_matrix(p, xstar, xstar)?;
    if data.is_empty() {
        return Ok((prior_mean, k_ss));
    }
    let k_xx = kernel_matrix(p, data.inputs(), data.inputs())?;
    let mut gram = k_xx;
    for i in 0..gram.nrows() {
        gram[(i, i)] += noise_var;
    }
    let chol = chol_with_jitter(gram, p.jitter(), "K_NN + noise")?;
    let k_sx = kernel_matrix(p, xstar, data.inputs())?;
    let resid = DVector::from_iterator(
        data.len(),
        data.targets()
            .iter()
            .zip(data.inputs())
            .map(|(&y, &x)| y - mean.eval(x)),
    );
    let alpha = chol.solve(&resid);
    let post_mean = prior_mean + &k_sx * alpha;
    let w = chol.solve(&k_sx.transpose());
    let post_cov = k_ss - &k_sx * w;
    Ok((post_mean, post_cov))
}

/// Log marginal likelihood `log N(y; f̄(X), K_NN + noise_var I)`.
pub fn gp_log_marginal(
    data: &Dataset,
    p: &KernelParams,
    mean: MeanFn,
    noise_var: f64,
) -> Result<f64> {
    p.validate()?;
    validate_noise(noise_var)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let n = data.len();
    let mut gram = kernel_matrix(p, data.inputs(), data.inputs())?;
    for i in 0..n {
        gram[(i, i)] += noise_var;
    }
    let chol = chol_with_jitter(gram, p.jitter(), "K_NN + noise")?;
    let resid = DVector::from_iterator(
        n,
        data.targets()
            .iter()
            .zip(data.inputs())
            .map(|(&y, &x)| y - mean.eval(x)),
    );
    let alpha = chol.solve(&resid);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (n as f64 * LN_2PI + log_det + resid.dot(&alpha)))
}
