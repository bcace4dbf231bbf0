//! The incremental identification recursion: one call per measurement
//! wires optional degeneracy resampling, propagation through the learned
//! dynamics, likelihood reweighting, KL-optimal resampling, and one (or a
//! few) SGD steps on the variational bound over the resampled pairs.

use alloc::vec::Vec;

// Needed for float math in no_std builds; unused when std is in the crate graph.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{KernelParams, MeanFn};
use crate::particle::{
    ess, estimate, propagate, resample_minkl, reweight, MeasurementModel, ParticlePair,
    ParticleSet, ResampleScheme,
};
use crate::svsgp::{
    elbo, elbo_grad, sgd_step, InducingSet, OptimizerState, SparseGPModel, VariationalParams,
};

/// Initial state distribution `p0(x_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitDist {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, var: f64 },
}

impl InitDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitDist::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidConfig("uniform init needs lo < hi"));
                }
            }
            InitDist::Gaussian { mean, var } => {
                if !(mean.is_finite() && var.is_finite() && var >= 0.0) {
                    return Err(Error::InvalidConfig("gaussian init needs var >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitDist::Uniform { lo, hi } => rng.gen_range(lo..hi),
            InitDist::Gaussian { mean, var } => {
                let std = var.max(1e-300).sqrt();
                let draw: f64 = rng.sample(rand_distr::StandardNormal);
                mean + std * draw
            }
        }
    }
}

/// Everything needed to build a fresh [`IdentState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentConfig {
    pub p0: InitDist,
    pub n_particles: usize,
    /// Inducing grid `[lo, hi]` with `count` points.
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_count: usize,
    pub kernel: KernelParams,
    pub mean: MeanFn,
    pub noise_var_init: f64,
    pub optimizer: OptimizerState,
    pub measurement: MeasurementModel,
    /// Step-1 resampling triggers when `ess < ess_threshold_frac * N`.
    pub ess_threshold_frac: f64,
    /// Inner SGD steps per measurement on the same particle batch.
    pub inner_sgd_steps: usize,
    /// Data-sum weight of the bound; 1 treats the resampled particle set
    /// as the realized data.
    pub scale: f64,
    pub resample: ResampleScheme,
    /// Polyak-style exponential averaging of the variational parameters
    /// for prediction read-out: 0 disables, otherwise the per-step decay
    /// in `(0, 1)`. The filter itself always runs on the live iterate;
    /// the averaged copy only smooths what `readout_model` reports.
    pub readout_ema: f64,
}

impl IdentConfig {
    pub fn validate(&self) -> Result<()> {
        self.p0.validate()?;
        if self.n_particles < 2 {
            return Err(Error::InvalidConfig("n_particles must be >= 2"));
        }
        self.kernel.validate()?;
        if !(self.noise_var_init.is_finite() && self.noise_var_init > 0.0) {
            return Err(Error::InvalidConfig("noise_var_init must be positive"));
        }
        if !(self.ess_threshold_frac >= 0.0 && self.ess_threshold_frac <= 1.0) {
            return Err(Error::InvalidConfig("ess_threshold_frac must be in [0, 1]"));
        }
        if self.inner_sgd_steps == 0 {
            return Err(Error::InvalidConfig("inner_sgd_steps must be >= 1"));
        }
        if !(self.readout_ema >= 0.0 && self.readout_ema < 1.0) {
            return Err(Error::InvalidConfig("readout_ema must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-measurement log record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Weighted-mean point estimate of `x_t` after reweighting.
    pub estimate: f64,
    /// Bound value on the step's training batch, before the update.
    pub elbo: f64,
    /// Every particle's likelihood underflowed and weights were reset.
    pub likelihood_underflow: bool,
}

/// Full recursion state: particle cloud, learned dynamics, optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentState {
    pub particles: ParticleSet,
    pub dyn_model: SparseGPModel,
    /// Exponentially averaged variational parameters (prediction read-out);
    /// present iff `cfg.readout_ema > 0`.
    pub readout_q: Option<VariationalParams>,
    pub opt: OptimizerState,
    pub cfg: IdentConfig,
    pub t: u64,
}

impl IdentState {
    /// Fresh state: particles i.i.d. from `p0` with `x_prev = x_curr`,
    /// dynamics at its prior, `t = 0`.
    pub fn init<R: Rng + ?Sized>(cfg: IdentConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let inducing = InducingSet::grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_count)?;
        let dyn_model =
            SparseGPModel::prior(cfg.kernel, cfg.mean, cfg.noise_var_init, inducing)?;
        let particles = Self::sample_cloud(&cfg, rng)?;
        let readout_q = (cfg.readout_ema > 0.0).then(|| dyn_model.q.clone());
        Ok(IdentState {
            particles,
            dyn_model,
            readout_q,
            opt: cfg.optimizer.clone(),
            cfg,
            t: 0,
        })
    }

    fn sample_cloud<R: Rng + ?Sized>(cfg: &IdentConfig, rng: &mut R) -> Result<ParticleSet> {
        let pairs: Vec<ParticlePair> = (0..cfg.n_particles)
            .map(|_| {
                let x = cfg.p0.sample(rng);
                ParticlePair {
                    x_curr: x,
                    x_prev: x,
                }
            })
            .collect();
        ParticleSet::uniform(pairs)
    }

    fn learning_enabled(&self) -> bool {
        self.opt.base_rate > 0.0
    }

    /// The model to score and predict with: the live dynamics with the
    /// averaged variational parameters substituted in when averaging is
    /// enabled, the live model otherwise.
    pub fn readout_model(&self) -> Result<SparseGPModel> {
        match &self.readout_q {
            Some(q) => SparseGPModel::new(
                self.dyn_model.kernel,
                self.dyn_model.mean,
                self.dyn_model.noise_var(),
                self.dyn_model.inducing.clone(),
                q.clone(),
            ),
            None => Ok(self.dyn_model.clone()),
        }
    }

    /// One iteration of the identification recursion. On error the input
    /// state is left untouched.
    pub fn step<R: Rng + ?Sized>(&self, z: f64, rng: &mut R) -> Result<(IdentState, StepRecord)> {
        if !z.is_finite() {
            return Err(Error::NonFinite("measurement"));
        }
        let n = self.particles.len();

        // 1. Optional degeneracy resampling of the carried-over cloud.
        let cloud = if ess(&self.particles) < self.cfg.ess_threshold_frac * n as f64 {
            resample_minkl(&self.particles, self.cfg.resample, rng)
        } else {
            self.particles.clone()
        };

        // 2. Sample x_t from the learned dynamics (model snapshot is
        //    constant for the whole step).
        let cloud = propagate(&cloud, &self.dyn_model, rng)?;

        // 3. Reweight by the measurement likelihood.
        let (cloud, likelihood_underflow) = reweight(&cloud, z, &self.cfg.measurement);
        let point_estimate = estimate(&cloud);

        // 4. Equally weighted pairs: surviving particles and GP batch.
        let cloud = resample_minkl(&cloud, self.cfg.resample, rng);
        let batch = cloud.training_pairs();

        // 5-7. Bound, gradient, gradient ascent.
        let mut dyn_model = self.dyn_model.clone();
        let mut opt = self.opt.clone();
        let elbo_value = elbo(&dyn_model, &batch, self.cfg.scale)?;
        if self.learning_enabled() {
            for _ in 0..self.cfg.inner_sgd_steps {
                let grad = elbo_grad(&dyn_model, &batch, self.cfg.scale)?;
                let (next_model, next_opt) = sgd_step(&dyn_model, &grad, &opt)?;
                dyn_model = next_model;
                opt = next_opt;
            }
        } else {
            opt.step_count += self.cfg.inner_sgd_steps as u64;
        }

        let readout_q = match &self.readout_q {
            Some(r) if self.learning_enabled() => {
                let d = self.cfg.readout_ema;
                Some(VariationalParams::new(
                    r.mean() * d + dyn_model.q.mean() * (1.0 - d),
                    r.s_factor() * d + dyn_model.q.s_factor() * (1.0 - d),
                )?)
            }
            r => r.clone(),
        };

        let next = IdentState {
            particles: cloud,
            dyn_model,
            readout_q,
            opt,
            cfg: self.cfg.clone(),
            t: self.t + 1,
        };
        let record = StepRecord {
            estimate: point_estimate,
            elbo: elbo_value,
            likelihood_underflow,
        };
        Ok((next, record))
    }

    /// Process one trajectory's measurements: the particle cloud restarts
    /// from `p0`, the learned model and optimizer carry over.
    pub fn run_trajectory<R: Rng + ?Sized>(
        &self,
        zs: &[f64],
        rng: &mut R,
    ) -> Result<(IdentState, Vec<StepRecord>)> {
        let mut state = self.clone();
        if zs.is_empty() {
            return Ok((state, Vec::new()));
        }
        state.particles = Self::sample_cloud(&state.cfg, rng)?;
        let mut records = Vec::with_capacity(zs.len());
        for &z in zs {
            let (next, record) = state.step(z, rng)?;
            state = next;
            records.push(record);
        }
        Ok((state, records))
    }
}
