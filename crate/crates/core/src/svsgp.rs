//! Sparse variational GP over inducing points, trained by stochastic
//! gradient ascent on an explicit-variational evidence lower bound.
//!
//! The bound over a mini-batch of input/target pairs is
//!
//! ```text
//! L' = scale * sum_i { log N(y_i | f̄(x_i) + k_iᵀ K⁻¹ (m − f̄(Z)), σ)
//!                      − k̃_ii / (2σ) − tr(S Λ_i) / 2 }
//!      − KL(q(u) ‖ p(u))
//! ```
//!
//! with `Λ_i = σ⁻¹ K⁻¹ k_i k_iᵀ K⁻¹`, `k̃_ii` the Nyström residual variance,
//! `p(u) = N(f̄(Z), K)` and `q(u) = N(m, S)`; `σ` is the dynamic-noise
//! variance and `K = K_LL`. Free parameters are `(log σ, log θ, m, C)` where
//! `S = C Cᵀ` with a log-parameterized diagonal, so positivity and SPD hold
//! by construction under unconstrained steps.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
// Needed for float math in no_std builds; unused when std is in the crate graph.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{chol_with_jitter, LN_2PI};
use crate::kernel::{kernel_matrix, kernel_matrix_grads, KernelParams, MeanFn};
use crate::particle::TransitionModel;

/// How the inducing inputs were placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InducingLayout {
    Grid { lo: f64, hi: f64 },
    Explicit,
}

/// Fixed inducing inputs. Positions are never optimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducingSet {
    z: Vec<f64>,
    layout: InducingLayout,
}

impl InducingSet {
    /// Uniform grid of `count` points over `[lo, hi]`.
    pub fn grid(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("inducing grid needs count >= 1"));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig("inducing grid needs finite lo < hi"));
        }
        let z = if count == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect()
        };
        Ok(InducingSet {
            z,
            layout: InducingLayout::Grid { lo, hi },
        })
    }

    pub fn explicit(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Empty("inducing set"));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("inducing points"));
        }
        Ok(InducingSet {
            z,
            layout: InducingLayout::Explicit,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn layout(&self) -> InducingLayout {
        self.layout
    }

    /// Width of the covered interval.
    pub fn span(&self) -> f64 {
        let lo = self.z.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Variational Gaussian `q(u) = N(m, S)` with `S = C Cᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VariationalParamsRepr", into = "VariationalParamsRepr")]
pub struct VariationalParams {
    m: DVector<f64>,
    s_chol: DMatrix<f64>,
}

/// Flat serialization proxy (dynamic nalgebra storage is not
/// serde-enabled without std).
#[derive(Serialize, Deserialize, Clone)]
struct VariationalParamsRepr {
    m: Vec<f64>,
    /// Row-major `L x L` factor.
    s_chol: Vec<f64>,
}

impl From<VariationalParams> for VariationalParamsRepr {
    fn from(p: VariationalParams) -> Self {
        let l = p.m.len();
        let mut s_chol = Vec::with_capacity(l * l);
        for i in 0..l {
            for j in 0..l {
                s_chol.push(p.s_chol[(i, j)]);
            }
        }
        VariationalParamsRepr {
            m: p.m.iter().cloned().collect(),
            s_chol,
        }
    }
}

impl TryFrom<VariationalParamsRepr> for VariationalParams {
    type Error = Error;

    fn try_from(r: VariationalParamsRepr) -> Result<Self> {
        let l = r.m.len();
        if r.s_chol.len() != l * l {
            return Err(Error::LengthMismatch {
                expected: l * l,
                got: r.s_chol.len(),
            });
        }
        let s_chol = DMatrix::from_fn(l, l, |i, j| r.s_chol[i * l + j]);
        VariationalParams::new(DVector::from_vec(r.m), s_chol)
    }
}

impl VariationalParams {
    pub fn new(m: DVector<f64>, s_chol: DMatrix<f64>) -> Result<Self> {
        let l = m.len();
        if s_chol.nrows() != l || s_chol.ncols() != l {
            return Err(Error::LengthMismatch {
                expected: l,
                got: s_chol.nrows(),
            });
        }
        if m.iter().chain(s_chol.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("variational parameters"));
        }
        for j in 0..l {
            if s_chol[(j, j)] <= 0.0 {
                return Err(Error::InvalidConfig("S factor diagonal must be positive"));
            }
            for i in 0..j {
                if s_chol[(i, j)] != 0.0 {
                    return Err(Error::InvalidConfig("S factor must be lower triangular"));
                }
            }
        }
        Ok(VariationalParams { m, s_chol })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.m
    }

    pub fn s_factor(&self) -> &DMatrix<f64> {
        &self.s_chol
    }

    /// Dense covariance `S = C Cᵀ`.
    pub fn cov(&self) -> DMatrix<f64> {
        &self.s_chol * self.s_chol.transpose()
    }
}

/// The learned dynamics model: kernel hyperparameters, dynamic-noise
/// variance, inducing inputs and the variational posterior over their
/// function values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGPModel {
    pub kernel: KernelParams,
    pub mean: MeanFn,
    noise_var: f64,
    pub inducing: InducingSet,
    pub q: VariationalParams,
}

impl SparseGPModel {
    pub fn new(
        kernel: KernelParams,
        mean: MeanFn,
        noise_var: f64,
        inducing: InducingSet,
        q: VariationalParams,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::InvalidConfig("noise_var must be positive"));
        }
        if q.mean().len() != inducing.len() {
            return Err(Error::LengthMismatch {
                expected: inducing.len(),
                got: q.mean().len(),
            });
        }
        Ok(SparseGPModel {
            kernel,
            mean,
            noise_var,
            inducing,
            q,
        })
    }

    /// Model with `q(u)` at its prior: `m = f̄(Z)`, `S = K_LL`, so the
    /// KL term starts at zero.
    pub fn prior(
        kernel: KernelParams,
        mean: MeanFn,
        noise_var: f64,
        inducing: InducingSet,
    ) -> Result<Self> {
        let kll = kernel_matrix(&kernel, inducing.points(), inducing.points())?;
        let chol = chol_with_jitter(kll, kernel.jitter(), "K_LL")?;
        let m = DVector::from_vec(mean.eval_vec(inducing.points()));
        let q = VariationalParams::new(m, chol.l())?;
        SparseGPModel::new(kernel, mean, noise_var, inducing, q)
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    pub(crate) fn kll_chol(&self) -> Result<Cholesky<f64, Dyn>> {
        let kll = kernel_matrix(&self.kernel, self.inducing.points(), self.inducing.points())?;
        chol_with_jitter(kll, self.kernel.jitter(), "K_LL")
    }

    /// `m − f̄(Z)`: the variational mean as a deviation from the prior mean.
    fn mean_offset(&self) -> DVector<f64> {
        let prior = DVector::from_vec(self.mean.eval_vec(self.inducing.points()));
        self.q.mean() - prior
    }
}

impl TransitionModel for SparseGPModel {
    fn predict_dist(&self, x: f64) -> Result<(f64, f64)> {
        predict(self, x)
    }
}

/// Plain-SGD state with a Robbins–Monro rate schedule
/// `rate(t) = base_rate / (1 + t / decay_tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step_count: u64,
    pub base_rate: f64,
    pub decay_tau: f64,
    /// Rate multiplier applied to the hyperparameter blocks (log σ, log θ).
    pub hyper_rate_mult: f64,
    /// Optional per-coordinate cap on the parameter change of one step.
    pub step_clip: Option<f64>,
}

impl OptimizerState {
    pub fn new(base_rate: f64, decay_tau: f64, hyper_rate_mult: f64) -> Result<Self> {
        if !(base_rate.is_finite() && base_rate >= 0.0) {
            return Err(Error::InvalidConfig("base_rate must be non-negative"));
        }
        if !(decay_tau.is_finite() && decay_tau > 0.0) {
            return Err(Error::InvalidConfig("decay_tau must be positive"));
        }
        if !(hyper_rate_mult.is_finite() && hyper_rate_mult >= 0.0) {
            return Err(Error::InvalidConfig("hyper_rate_mult must be non-negative"));
        }
        Ok(OptimizerState {
            step_count: 0,
            base_rate,
            decay_tau,
            hyper_rate_mult,
            step_clip: None,
        })
    }

    /// Learning rate at the current step; positive and non-increasing
    /// in `step_count`.
    pub fn rate(&self) -> f64 {
        self.base_rate / (1.0 + self.step_count as f64 / self.decay_tau)
    }
}

/// Gradient of the bound in the optimizer's parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboGrad {
    pub log_noise_var: f64,
    pub log_signal_variance: f64,
    pub log_lengthscale: f64,
    pub m: DVector<f64>,
    /// Lower triangle w.r.t. the factor `C`; diagonal entries are
    /// w.r.t. `log C_jj`.
    pub s_factor: DMatrix<f64>,
}

impl ElboGrad {
    pub fn is_finite(&self) -> bool {
        self.log_noise_var.is_finite()
            && self.log_signal_variance.is_finite()
            && self.log_lengthscale.is_finite()
            && self.m.iter().all(|v| v.is_finite())
            && self.s_factor.iter().all(|v| v.is_finite())
    }

    pub fn zeros(l: usize) -> Self {
        ElboGrad {
            log_noise_var: 0.0,
            log_signal_variance: 0.0,
            log_lengthscale: 0.0,
            m: DVector::zeros(l),
            s_factor: DMatrix::zeros(l, l),
        }
    }
}

fn validate_batch(batch: &[(f64, f64)]) -> Result<()> {
    if batch
        .iter()
        .any(|&(x, y)| !(x.is_finite() && y.is_finite()))
    {
        return Err(Error::NonFinite("mini-batch"));
    }
    Ok(())
}

fn validate_scale(scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(Error::InvalidConfig("scale must be non-negative"));
    }
    Ok(())
}

/// KL divergence between `q(u) = N(m, S)` and the prior `p(u) = N(f̄(Z), K_LL)`.
pub fn kl_q_p(model: &SparseGPModel) -> Result<f64> {
    let chol = model.kll_chol()?;
    Ok(kl_from_chol(model, &chol))
}

fn kl_from_chol(model: &SparseGPModel, chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = model.num_inducing() as f64;
    let s = model.q.cov();
    let trace = chol.solve(&s).trace();
    let delta = model.mean_offset();
    let quad = delta.dot(&chol.solve(&delta));
    let log_det_k: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let log_det_s: f64 = model
        .q
        .s_factor()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
        * 2.0;
    0.5 * (trace + quad - l + log_det_k - log_det_s)
}

/// The stochastic variational lower bound over a mini-batch.
///
/// `scale` weights the data sum (total count over batch size); `scale = 1`
/// treats the batch as the whole realized data set.
pub fn elbo(model: &SparseGPModel, batch: &[(f64, f64)], scale: f64) -> Result<f64> {
    validate_batch(batch)?;
    validate_scale(scale)?;
    let chol = model.kll_chol()?;
    let kl = kl_from_chol(model, &chol);
    let delta = model.mean_offset();
    let sigma = model.noise_var;
    let s = model.q.s_factor();
    let z = model.inducing.points();

    let mut data_sum = 0.0;
    for &(x, y) in batch {
        let ki = kernel_matrix(&model.kernel, z, &[x])?;
        let ki = DVector::from_column_slice(ki.as_slice());
        let alpha = chol.solve(&ki);
        let mu = model.mean.eval(x) + alpha.dot(&delta);
        let kss = model.kernel.eval_unchecked(x, x);
        let ktilde = kss - ki.dot(&alpha);
        let s_alpha = (s.transpose() * &alpha).norm_squared();
        let r = y - mu;
        let log_lik = -0.5 * (LN_2PI + sigma.ln()) - r * r / (2.0 * sigma);
        data_sum += log_lik - ktilde / (2.0 * sigma) - s_alpha / (2.0 * sigma);
    }
    Ok(scale * data_sum - kl)
}

/// Analytic gradient of [`elbo`] w.r.t. every free parameter, in the
/// parameterization the optimizer steps in.
pub fn elbo_grad(model: &SparseGPModel, batch: &[(f64, f64)], scale: f64) -> Result<ElboGrad> {
    if batch.is_empty() {
        return Err(Error::Empty("mini-batch"));
    }
    validate_batch(batch)?;
    validate_scale(scale)?;

    let l = model.num_inducing();
    let z = model.inducing.points();
    let sigma = model.noise_var;
    let v = model.kernel.signal_variance;
    let ell = model.kernel.lengthscale;
    let chol = model.kll_chol()?;
    let delta = model.mean_offset();
    let beta = chol.solve(&delta);
    let c = model.q.s_factor();
    let s = model.q.cov();

    // dK/dv includes the jitter term (jitter = 1e-8 * v); dK/dl does not.
    let kll = kernel_matrix(&model.kernel, z, z)?;
    let mut k_full = kll;
    for i in 0..l {
        k_full[(i, i)] += model.kernel.jitter();
    }
    let kdot_v = &k_full / v;
    let (_, kdot_l) = kernel_matrix_grads(&model.kernel, z, z);

    // KL contributions (gradient of -KL).
    let k_inv = chol.inverse();
    let c_inv = c
        .clone()
        .try_inverse()
        .ok_or(Error::Conditioning("S factor"))?;
    let s_inv = c_inv.transpose() * &c_inv;
    let mut g_m = -&beta;
    let mut g_s_dense = 0.5 * (&s_inv - &k_inv);
    let kl_theta = |kdot: &DMatrix<f64>| -> f64 {
        let a = chol.solve(kdot); // K⁻¹ K̇
        let b = chol.solve(&s); // K⁻¹ S
        let tr_ks = (&a * &b).trace();
        let quad = beta.dot(&(kdot * &beta));
        let tr_k = a.trace();
        0.5 * (tr_ks + quad - tr_k)
    };
    let mut g_v = kl_theta(&kdot_v);
    let mut g_l = kl_theta(&kdot_l);
    let mut g_log_sigma = 0.0;

    let mut alpha_outer = DMatrix::<f64>::zeros(l, l);
    for &(x, y) in batch {
        let ki_m = kernel_matrix(&model.kernel, z, &[x])?;
        let ki = DVector::from_column_slice(ki_m.as_slice());
        let alpha = chol.solve(&ki);
        let mu = model.mean.eval(x) + alpha.dot(&delta);
        let r = y - mu;
        let kss = model.kernel.eval_unchecked(x, x);
        let ktilde = kss - ki.dot(&alpha);
        let s_alpha_vec = &s * &alpha;
        let s_alpha = alpha.dot(&s_alpha_vec);

        g_m += scale * (r / sigma) * &alpha;
        alpha_outer += &alpha * alpha.transpose();
        g_log_sigma += scale * (-0.5 + (r * r + ktilde + s_alpha) / (2.0 * sigma));

        // Hyperparameter blocks.
        let (kdot_i_v, kdot_i_l) = {
            let (dv, dl) = kernel_matrix_grads(&model.kernel, z, &[x]);
            (
                DVector::from_column_slice(dv.as_slice()),
                DVector::from_column_slice(dl.as_slice()),
            )
        };
        let (kdot_ss_v, kdot_ss_l) = model.kernel.grad_unchecked(x, x);
        let accum = |kdot: &DMatrix<f64>, kdot_i: &DVector<f64>, kdot_ss: f64| -> f64 {
            let alpha_dot = chol.solve(&(kdot_i - kdot * &alpha));
            let t1 = (r / sigma) * alpha_dot.dot(&delta);
            let ktilde_dot = kdot_ss - 2.0 * kdot_i.dot(&alpha) + alpha.dot(&(kdot * &alpha));
            let t2 = -ktilde_dot / (2.0 * sigma);
            let t3 = -alpha_dot.dot(&s_alpha_vec) / sigma;
            scale * (t1 + t2 + t3)
        };
        g_v += accum(&kdot_v, &kdot_i_v, kdot_ss_v);
        g_l += accum(&kdot_l, &kdot_i_l, kdot_ss_l);
    }
    g_s_dense -= (scale / (2.0 * sigma)) * alpha_outer;

    // Chain to the factor: dL/dC = (G + Gᵀ) C, lower triangle; the diagonal
    // is log-parameterized.
    let g_sym = &g_s_dense + g_s_dense.transpose();
    let mut g_c = g_sym * c;
    for j in 0..l {
        for i in 0..j {
            g_c[(i, j)] = 0.0;
        }
        g_c[(j, j)] *= c[(j, j)];
    }

    Ok(ElboGrad {
        log_noise_var: g_log_sigma,
        log_signal_variance: v * g_v,
        log_lengthscale: ell * g_l,
        m: g_m,
        s_factor: g_c,
    })
}

fn clip(step: f64, limit: Option<f64>) -> f64 {
    match limit {
        Some(c) => step.clamp(-c, c),
        None => step,
    }
}

/// One ascent step on the bound. Returns the updated model and optimizer
/// state; the input model is untouched on error.
pub fn sgd_step(
    model: &SparseGPModel,
    grad: &ElboGrad,
    opt: &OptimizerState,
) -> Result<(SparseGPModel, OptimizerState)> {
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    if grad.m.len() != model.num_inducing() {
        return Err(Error::LengthMismatch {
            expected: model.num_inducing(),
            got: grad.m.len(),
        });
    }
    let rate = opt.rate();
    let hrate = rate * opt.hyper_rate_mult;
    let lim = opt.step_clip;

    let noise_var = (model.noise_var.ln() + clip(hrate * grad.log_noise_var, lim)).exp();
    let signal_variance = (model.kernel.signal_variance.ln()
        + clip(hrate * grad.log_signal_variance, lim))
    .exp();
    let lengthscale =
        (model.kernel.lengthscale.ln() + clip(hrate * grad.log_lengthscale, lim)).exp();

    let l = model.num_inducing();
    let mut m = model.q.mean().clone();
    for i in 0..l {
        m[i] += clip(rate * grad.m[i], lim);
    }
    let mut s_chol = model.q.s_factor().clone();
    for j in 0..l {
        for i in (j + 1)..l {
            s_chol[(i, j)] += clip(rate * grad.s_factor[(i, j)], lim);
        }
        // Floor keeps the factor invertible when aggressive steps drive a
        // variance toward zero; inactive at any realistic posterior scale.
        s_chol[(j, j)] =
            (s_chol[(j, j)].ln() + clip(rate * grad.s_factor[(j, j)], lim)).exp().max(1e-8);
    }

    let all_finite = noise_var.is_finite()
        && noise_var > 0.0
        && signal_variance.is_finite()
        && lengthscale.is_finite()
        && m.iter().all(|x| x.is_finite())
        && s_chol.iter().all(|x| x.is_finite())
        && (0..l).all(|j| s_chol[(j, j)] > 0.0);
    if !all_finite {
        return Err(Error::NonFinite("parameter update"));
    }

    let kernel = KernelParams::new(signal_variance, lengthscale, model.kernel.order)?;
    let q = VariationalParams::new(m, s_chol)?;
    let updated = SparseGPModel::new(kernel, model.mean, noise_var, model.inducing.clone(), q)?;
    let mut opt = opt.clone();
    opt.step_count += 1;
    Ok((updated, opt))
}

/// Exact-GP regression expressed in the sparse form: inducing inputs at
/// the data inputs and `q(u)` at its closed-form optimum
/// `m = f̄ + K (K + σ I)⁻¹ (y − f̄)`, `S = (K⁻¹ + σ⁻¹ I)⁻¹`, which makes
/// the bound on that data tight (equal to the log marginal likelihood up
/// to jitter).
pub fn exact_fit(
    kernel: KernelParams,
    mean: MeanFn,
    noise_var: f64,
    data: &crate::gp::Dataset,
) -> Result<SparseGPModel> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let x = data.inputs();
    let n = x.len();
    let k = kernel_matrix(&kernel, x, x)?;
    let mut k_sigma = k.clone();
    for i in 0..n {
        k_sigma[(i, i)] += noise_var;
    }
    let chol = chol_with_jitter(k_sigma, kernel.jitter(), "K + sigma I")?;
    let fbar = DVector::from_vec(mean.eval_vec(x));
    let y = DVector::from_column_slice(data.targets());
    let m = &fbar + &k * chol.solve(&(y - &fbar));
    let s = &k - &k * chol.solve(&k); // Woodbury form of (K⁻¹ + σ⁻¹I)⁻¹
    let s_chol = chol_with_jitter(s, kernel.jitter(), "optimal S")?;
    let inducing = InducingSet::explicit(x.to_vec())?;
    let q = VariationalParams::new(m, s_chol.l())?;
    SparseGPModel::new(kernel, mean, noise_var, inducing, q)
}

/// Worst relative disagreement between a gradient and its central
/// finite-difference estimate, per parameter block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub m: f64,
    pub s_factor: f64,
    pub noise: f64,
    pub kernel: f64,
}

impl GradCheckReport {
    pub fn max_err(&self) -> f64 {
        self.m.max(self.s_factor).max(self.noise).max(self.kernel)
    }
}

fn rel_err(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1.0)
}

/// Compare `grad` against central finite differences of the bound at
/// `model`, perturbing each coordinate by `eps` in the optimizer's
/// parameterization (log-space for positives).
pub fn fd_check_against(
    grad: &ElboGrad,
    model: &SparseGPModel,
    batch: &[(f64, f64)],
    scale: f64,
    eps: f64,
) -> Result<GradCheckReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidConfig("eps must be positive"));
    }
    let l = model.num_inducing();
    if grad.m.len() != l {
        return Err(Error::LengthMismatch {
            expected: l,
            got: grad.m.len(),
        });
    }
    let rebuild = |noise: f64, sv: f64, ls: f64, m: DVector<f64>, c: DMatrix<f64>| -> Result<f64> {
        let kernel = KernelParams::new(sv, ls, model.kernel.order)?;
        let q = VariationalParams::new(m, c)?;
        let m = SparseGPModel::new(kernel, model.mean, noise, model.inducing.clone(), q)?;
        elbo(&m, batch, scale)
    };
    let base = (
        model.noise_var,
        model.kernel.signal_variance,
        model.kernel.lengthscale,
    );
    let fd_log = |which: usize| -> Result<f64> {
        let eval = |sign: f64| -> Result<f64> {
            let mut p = base;
            let slot = match which {
                0 => &mut p.0,
                1 => &mut p.1,
                _ => &mut p.2,
            };
            *slot = (slot.ln() + sign * eps).exp();
            rebuild(p.0, p.1, p.2, model.q.mean().clone(), model.q.s_factor().clone())
        };
        Ok((eval(1.0)? - eval(-1.0)?) / (2.0 * eps))
    };
    let noise_err = rel_err(grad.log_noise_var, fd_log(0)?);
    let kernel_err = rel_err(grad.log_signal_variance, fd_log(1)?)
        .max(rel_err(grad.log_lengthscale, fd_log(2)?));

    let mut m_err: f64 = 0.0;
    for i in 0..l {
        let eval = |sign: f64| -> Result<f64> {
            let mut m = model.q.mean().clone();
            m[i] += sign * eps;
            rebuild(base.0, base.1, base.2, m, model.q.s_factor().clone())
        };
        let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * eps);
        m_err = m_err.max(rel_err(grad.m[i], fd));
    }

    let mut s_err: f64 = 0.0;
    for j in 0..l {
        for i in j..l {
            let eval = |sign: f64| -> Result<f64> {
                let mut c = model.q.s_factor().clone();
                if i == j {
                    c[(j, j)] = (c[(j, j)].ln() + sign * eps).exp();
                } else {
                    c[(i, j)] += sign * eps;
                }
                rebuild(base.0, base.1, base.2, model.q.mean().clone(), c)
            };
            let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * eps);
            s_err = s_err.max(rel_err(grad.s_factor[(i, j)], fd));
        }
    }

    Ok(GradCheckReport {
        m: m_err,
        s_factor: s_err,
        noise: noise_err,
        kernel: kernel_err,
    })
}

/// Finite-difference check of the analytic bound gradient itself.
pub fn fd_check(
    model: &SparseGPModel,
    batch: &[(f64, f64)],
    scale: f64,
    eps: f64,
) -> Result<GradCheckReport> {
    let grad = elbo_grad(model, batch, scale)?;
    fd_check_against(&grad, model, batch, scale, eps)
}

/// Predictive distribution of the next state at `xstar`: GP predictive
/// plus the dynamic-noise variance.
pub fn predict(model: &SparseGPModel, xstar: f64) -> Result<(f64, f64)> {
    if !xstar.is_finite() {
        return Err(Error::NonFinite("prediction input"));
    }
    let chol = model.kll_chol()?;
    let z = model.inducing.points();
    let ki = kernel_matrix(&model.kernel, z, &[xstar])?;
    let ki = DVector::from_column_slice(ki.as_slice());
    let alpha = chol.solve(&ki);
    let delta = model.mean_offset();
    let mean = model.mean.eval(xstar) + alpha.dot(&delta);
    let kss = model.kernel.eval_unchecked(xstar, xstar);
    let ktilde = (kss - ki.dot(&alpha)).max(0.0);
    let s_alpha = (model.q.s_factor().transpose() * &alpha).norm_squared();
    Ok((mean, ktilde + s_alpha + model.noise_var))
}
