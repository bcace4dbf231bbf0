//! Ground-truth simulators for the two benchmark families: the fixed
//! piecewise-linear test map and randomly sampled smooth piecewise-linear
//! perturbations of the identity.

use alloc::vec;
use alloc::vec::Vec;

// Needed for float math in no_std builds; unused when std is in the crate graph.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::InitDist;

/// The fixed nonlinear test map: `x + 1` below 4, `-4x + 21` from 4 up.
pub fn testfunc_eval(x: f64) -> f64 {
    if x < 4.0 {
        x + 1.0
    } else {
        -4.0 * x + 21.0
    }
}

/// Ground-truth dynamics of the form `f(x) = x + offset(x)` where the
/// offset linearly interpolates `(a_i, b_i)`. Outside `[a_0, a_n]` the
/// offset continues as the constant boundary value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearModel {
    breakpoints: Vec<f64>,
    offsets: Vec<f64>,
}

impl PiecewiseLinearModel {
    pub fn new(breakpoints: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != offsets.len() {
            return Err(Error::LengthMismatch {
                expected: breakpoints.len(),
                got: offsets.len(),
            });
        }
        if breakpoints.len() < 2 {
            return Err(Error::InvalidConfig("piecewise model needs >= 2 breakpoints"));
        }
        if breakpoints
            .iter()
            .chain(offsets.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("piecewise model"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("breakpoints must be strictly increasing"));
        }
        Ok(PiecewiseLinearModel {
            breakpoints,
            offsets,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn eval(&self, x: f64) -> f64 {
        x + self.offset_at(x)
    }

    fn offset_at(&self, x: f64) -> f64 {
        let a = &self.breakpoints;
        let b = &self.offsets;
        let n = a.len();
        if x <= a[0] {
            return b[0];
        }
        if x >= a[n - 1] {
            return b[n - 1];
        }
        // partition_point: first index with a[i] > x, so the segment is
        // [a[idx-1], a[idx]).
        let idx = a.partition_point(|&ai| ai <= x);
        let (a0, a1) = (a[idx - 1], a[idx]);
        let (b0, b1) = (b[idx - 1], b[idx]);
        b0 + (b1 - b0) / (a1 - a0) * (x - a0)
    }
}

/// Evaluate the piecewise dynamics at `x`.
pub fn piecewise_eval(model: &PiecewiseLinearModel, x: f64) -> f64 {
    model.eval(x)
}

/// Draw a random ground-truth model: 20 segments anchored at
/// `a_0 = b_0 = 0`, breakpoint increments `U(0.08, 0.15)`, offset
/// increments `N(0, 1e-3)`.
pub fn sample_random_model<R: Rng + ?Sized>(rng: &mut R) -> PiecewiseLinearModel {
    let n = 20usize;
    let mut a = vec![0.0];
    let mut b = vec![0.0];
    for _ in 0..n {
        a.push(a.last().unwrap() + rng.gen_range(0.08..0.15));
        let db: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 1e-3f64.sqrt();
        b.push(b.last().unwrap() + db);
    }
    PiecewiseLinearModel::new(a, b).expect("sampled increments are valid")
}

/// State-transition map of a simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DynamicsFn {
    TestFunc,
    Piecewise(PiecewiseLinearModel),
    Linear { coef: f64 },
}

impl DynamicsFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DynamicsFn::TestFunc => testfunc_eval(x),
            DynamicsFn::Piecewise(m) => m.eval(x),
            DynamicsFn::Linear { coef } => coef * x,
        }
    }
}

/// Generative model of a benchmark system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub dynamics: DynamicsFn,
    pub process_noise_var: f64,
    pub meas_noise_var: f64,
    pub init: InitDist,
    /// Trajectories leaving this interval are truncated.
    pub domain: Option<(f64, f64)>,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.process_noise_var.is_finite() && self.process_noise_var > 0.0) {
            return Err(Error::InvalidConfig("process_noise_var must be positive"));
        }
        if !(self.meas_noise_var.is_finite() && self.meas_noise_var > 0.0) {
            return Err(Error::InvalidConfig("meas_noise_var must be positive"));
        }
        self.init.validate()
    }
}

/// Simulated states `x_0..x_T` and measurements `z_1..z_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub measurements: Vec<f64>,
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// `(x_{t-1}, x_t)` transition pairs.
    pub fn transition_pairs(&self) -> Vec<(f64, f64)> {
        self.states.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Roll the generative model forward for up to `t_max` steps. The first
/// state that exits the domain is kept (with its measurement) and the
/// trajectory is flagged truncated; nothing is simulated past it.
pub fn simulate<R: Rng + ?Sized>(spec: &SystemSpec, t_max: usize, rng: &mut R) -> Result<Trajectory> {
    spec.validate()?;
    if t_max == 0 {
        return Err(Error::InvalidConfig("t_max must be >= 1"));
    }
    let pstd = spec.process_noise_var.sqrt();
    let mstd = spec.meas_noise_var.sqrt();
    let mut states = Vec::with_capacity(t_max + 1);
    let mut measurements = Vec::with_capacity(t_max);
    let mut truncated = false;
    states.push(spec.init.sample(rng));
    for _ in 0..t_max {
        let prev = *states.last().unwrap();
        let pn: f64 = rng.sample(rand_distr::StandardNormal);
        let x = spec.dynamics.eval(prev) + pstd * pn;
        let mn: f64 = rng.sample(rand_distr::StandardNormal);
        states.push(x);
        measurements.push(x + mstd * mn);
        if let Some((lo, hi)) = spec.domain {
            if x < lo || x > hi {
                truncated = true;
                break;
            }
        }
    }
    Ok(Trajectory {
        states,
        measurements,
        truncated,
    })
}
