//! Matérn covariance functions and mean functions.

use alloc::vec::Vec;

use nalgebra::DMatrix;
// Needed for float math in no_std builds; unused when std is in the crate graph.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness order of the Matérn family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternOrder {
    Half,
    ThreeHalves,
    FiveHalves,
}

/// Stationary Matérn kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Output-space variance; `k(x, x) = signal_variance`.
    pub signal_variance: f64,
    /// Input-space length scale.
    pub lengthscale: f64,
    pub order: MaternOrder,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscale: f64, order: MaternOrder) -> Result<Self> {
        let p = KernelParams {
            signal_variance,
            lengthscale,
            order,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::InvalidConfig("signal_variance must be positive"));
        }
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            return Err(Error::InvalidConfig("lengthscale must be positive"));
        }
        Ok(())
    }

    /// Diagonal jitter added before factorizing kernel matrices.
    pub fn jitter(&self) -> f64 {
        1e-8 * self.signal_variance
    }

    pub(crate) fn eval_unchecked(&self, x: f64, y: f64) -> f64 {
        let r = (x - y).abs();
        let v = self.signal_variance;
        match self.order {
            MaternOrder::Half => {
                let s = r / self.lengthscale;
                v * (-s).exp()
            }
            MaternOrder::ThreeHalves => {
                let s = 3.0f64.sqrt() * r / self.lengthscale;
                v * (1.0 + s) * (-s).exp()
            }
            MaternOrder::FiveHalves => {
                let s = 5.0f64.sqrt() * r / self.lengthscale;
                v * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Partial derivatives of `eval` w.r.t. `(signal_variance, lengthscale)`
    /// in the linear parameterization.
    pub(crate) fn grad_unchecked(&self, x: f64, y: f64) -> (f64, f64) {
        let r = (x - y).abs();
        let v = self.signal_variance;
        let ell = self.lengthscale;
        match self.order {
            MaternOrder::Half => {
                let s = r / ell;
                let e = (-s).exp();
                (e, v * s * e / ell)
            }
            MaternOrder::ThreeHalves => {
                let s = 3.0f64.sqrt() * r / ell;
                let e = (-s).exp();
                ((1.0 + s) * e, v * s * s * e / ell)
            }
            MaternOrder::FiveHalves => {
                let s = 5.0f64.sqrt() * r / ell;
                let e = (-s).exp();
                (
                    (1.0 + s + s * s / 3.0) * e,
                    v * (s * s / 3.0) * (1.0 + s) * e / ell,
                )
            }
        }
    }
}

/// Matérn covariance of two state values.
pub fn kernel_eval(p: &KernelParams, x: f64, y: f64) -> Result<f64> {
    p.validate()?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    Ok(p.eval_unchecked(x, y))
}

/// Gradient of [`kernel_eval`] w.r.t. `(signal_variance, lengthscale)`,
/// linear parameterization.
pub fn kernel_grad(p: &KernelParams, x: f64, y: f64) -> Result<(f64, f64)> {
    p.validate()?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    Ok(p.grad_unchecked(x, y))
}

/// Cross-covariance matrix with entries `k(a_i, b_j)`.
pub fn kernel_matrix(p: &KernelParams, a: &[f64], b: &[f64]) -> Result<DMatrix<f64>> {
    p.validate()?;
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel matrix input"));
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        p.eval_unchecked(a[i], b[j])
    }))
}

/// Entrywise derivative matrices of [`kernel_matrix`] w.r.t.
/// `(signal_variance, lengthscale)`, linear parameterization.
pub(crate) fn kernel_matrix_grads(
    p: &KernelParams,
    a: &[f64],
    b: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.len();
    let m = b.len();
    let mut dv = DMatrix::zeros(n, m);
    let mut dl = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let (gv, gl) = p.grad_unchecked(a[i], b[j]);
            dv[(i, j)] = gv;
            dl[(i, j)] = gl;
        }
    }
    (dv, dl)
}

/// Prior mean function of the dynamics GP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeanFn {
    Zero,
    /// `f̄(x) = x`: a random-walk prior that keeps the filter usable
    /// before any learning has happened.
    Identity,
}

impl MeanFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MeanFn::Zero => 0.0,
            MeanFn::Identity => x,
        }
    }

    pub fn eval_vec(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn params(order: MaternOrder) -> KernelParams {
        KernelParams::new(1.0, 1.0, order).unwrap()
    }

    #[test]
    fn zero_distance_returns_signal_variance() {
        for order in [
            MaternOrder::Half,
            MaternOrder::ThreeHalves,
            MaternOrder::FiveHalves,
        ] {
            let p = KernelParams::new(2.3, 0.7, order).unwrap();
            assert_relative_eq!(kernel_eval(&p, 0.4, 0.4).unwrap(), 2.3);
        }
    }

    #[test]
    fn matern52_closed_form_at_unit_distance() {
        // (1 + sqrt(5) + 5/3) * exp(-sqrt(5))
        let expected = (1.0 + 5.0f64.sqrt() + 5.0 / 3.0) * (-(5.0f64.sqrt())).exp();
        assert_relative_eq!(expected, 0.52400, epsilon = 1e-5);
        let p = params(MaternOrder::FiveHalves);
        assert_relative_eq!(kernel_eval(&p, 0.0, 1.0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn symmetry_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let p = KernelParams::new(1.4, 0.3, MaternOrder::FiveHalves).unwrap();
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-5.0..5.0);
            let y: f64 = rng.gen_range(-5.0..5.0);
            assert_eq!(
                kernel_eval(&p, x, y).unwrap(),
                kernel_eval(&p, y, x).unwrap()
            );
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = params(MaternOrder::Half);
        assert_eq!(
            kernel_eval(&p, f64::NAN, 0.0),
            Err(Error::NonFinite("kernel input"))
        );
        assert_eq!(
            kernel_eval(&p, 0.0, f64::INFINITY),
            Err(Error::NonFinite("kernel input"))
        );
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(KernelParams::new(-1.0, 1.0, MaternOrder::Half).is_err());
        assert!(KernelParams::new(1.0, 0.0, MaternOrder::Half).is_err());
    }

    #[test]
    fn matrix_single_point_is_variance() {
        let p = KernelParams::new(3.5, 1.0, MaternOrder::ThreeHalves).unwrap();
        let m = kernel_matrix(&p, &[0.2], &[0.2]).unwrap();
        assert_eq!(m.nrows(), 1);
        assert_relative_eq!(m[(0, 0)], 3.5);
    }

    #[test]
    fn matrix_psd_after_jitter() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let p = KernelParams::new(1.0, 0.5, MaternOrder::FiveHalves).unwrap();
        let xs: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut k = kernel_matrix(&p, &xs, &xs).unwrap();
        for i in 0..5 {
            k[(i, i)] += p.jitter();
        }
        let eig = k.symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-10), "eigenvalues {eig:?}");
    }

    #[test]
    fn cross_matrix_transpose() {
        let p = params(MaternOrder::FiveHalves);
        let a = vec![0.0, 0.3, 1.1];
        let b = vec![-0.5, 0.8];
        let kab = kernel_matrix(&p, &a, &b).unwrap();
        let kba = kernel_matrix(&p, &b, &a).unwrap();
        assert_eq!(kab, kba.transpose());
    }

    #[test]
    fn grad_at_zero_distance() {
        for order in [
            MaternOrder::Half,
            MaternOrder::ThreeHalves,
            MaternOrder::FiveHalves,
        ] {
            let p = KernelParams::new(2.0, 0.5, order).unwrap();
            let (gv, gl) = kernel_grad(&p, 1.3, 1.3).unwrap();
            assert_relative_eq!(gv, 1.0);
            assert_relative_eq!(gl, 0.0);
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let order = match rng.gen_range(0..3) {
                0 => MaternOrder::Half,
                1 => MaternOrder::ThreeHalves,
                _ => MaternOrder::FiveHalves,
            };
            let v: f64 = rng.gen_range(0.2..3.0);
            let ell: f64 = rng.gen_range(0.1..2.0);
            let x: f64 = rng.gen_range(-2.0..2.0);
            let y: f64 = rng.gen_range(-2.0..2.0);
            let p = KernelParams::new(v, ell, order).unwrap();
            let (gv, gl) = kernel_grad(&p, x, y).unwrap();

            let hv = 1e-6 * v;
            let pv = |dv: f64| {
                KernelParams::new(v + dv, ell, order)
                    .unwrap()
                    .eval_unchecked(x, y)
            };
            let fd_v = (pv(hv) - pv(-hv)) / (2.0 * hv);
            let hl = 1e-6 * ell;
            let pl = |dl: f64| {
                KernelParams::new(v, ell + dl, order)
                    .unwrap()
                    .eval_unchecked(x, y)
            };
            let fd_l = (pl(hl) - pl(-hl)) / (2.0 * hl);

            assert_relative_eq!(gv, fd_v, max_relative = 1e-6, epsilon = 1e-10);
            assert_relative_eq!(gl, fd_l, max_relative = 1e-6, epsilon = 1e-10);
        }
    }
}
