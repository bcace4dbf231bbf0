//! Joint state estimation and online learning of unknown state-transition
//! dynamics in nonlinear Gaussian state-space models.
//!
//! The dynamics `x_t = f(x_{t-1}) + w_t` are modelled by a sparse variational
//! Gaussian process that is updated by stochastic gradient ascent on an
//! evidence lower bound, one step per measurement, inside a sequential
//! importance resampling particle filter. The filter tracks lag-1 joint
//! particles `(x_t, x_{t-1})` so that each resampled, equally weighted
//! particle set doubles as a GP training mini-batch.
//!
//! The crate is `no_std` (with `alloc`); all IO, configuration and file
//! formats live in the companion CLI crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod bench;
pub mod error;
pub mod gp;
pub mod ident;
pub mod kernel;
pub mod metrics;
pub mod particle;
pub mod svsgp;

pub use error::{Error, Result};
pub use gp::{gp_log_marginal, gp_posterior, Dataset};
pub use ident::{IdentConfig, IdentState, InitDist, StepRecord};
pub use kernel::{kernel_eval, kernel_grad, kernel_matrix, KernelParams, MaternOrder, MeanFn};
pub use particle::{
    ess, estimate, propagate, resample_minkl, reweight, MeasurementModel, ParticlePair,
    ParticleSet, ResampleScheme, TransitionModel,
};
pub use bench::{
    piecewise_eval, sample_random_model, simulate, testfunc_eval, DynamicsFn,
    PiecewiseLinearModel, SystemSpec, Trajectory,
};
pub use metrics::{
    groundtruth_loglik, knn_average, predictive_joint, test_mll, test_mse, tracking_mse_db,
    MSE_FLOOR_DB,
};
pub use svsgp::{
    elbo, elbo_grad, exact_fit, fd_check, fd_check_against, kl_q_p, predict, sgd_step, ElboGrad,
    GradCheckReport, InducingSet, OptimizerState, SparseGPModel, VariationalParams,
};
