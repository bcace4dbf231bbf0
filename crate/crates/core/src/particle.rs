//! SIR particle filter over lag-1 joint states `(x_t, x_{t-1})`.
//!
//! The filter keeps the previous state of every particle so the weighted
//! cloud covers both the domain and the codomain of the unknown transition
//! function. Converting the weighted cloud to equally weighted replicas by
//! systematic resampling minimizes the discrete KL divergence between the
//! weighted and the uniform particle representation, and the resulting
//! pairs double as a GP training mini-batch.

use alloc::vec;
use alloc::vec::Vec;

// Needed for float math in no_std builds; unused when std is in the crate graph.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::LN_2PI;

/// A dynamics model the filter can sample transitions from.
pub trait TransitionModel {
    /// Mean and variance of `p(x_t | x_{t-1} = x)`.
    fn predict_dist(&self, x: f64) -> Result<(f64, f64)>;
}

/// Filtered state particle paired with its one-step-lag smoothed state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticlePair {
    pub x_curr: f64,
    pub x_prev: f64,
}

/// Weighted particle cloud representing `p(x_t, x_{t-1} | z_{1:t})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pairs: Vec<ParticlePair>,
    weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(pairs: Vec<ParticlePair>, weights: Vec<f64>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidConfig("particle set needs N >= 2"));
        }
        if pairs.len() != weights.len() {
            return Err(Error::LengthMismatch {
                expected: pairs.len(),
                got: weights.len(),
            });
        }
        if pairs
            .iter()
            .any(|p| !(p.x_curr.is_finite() && p.x_prev.is_finite()))
        {
            return Err(Error::NonFinite("particle states"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) || total <= 0.0 {
            return Err(Error::NonFinite("particle weights"));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(ParticleSet { pairs, weights })
    }

    /// Equally weighted cloud from bare pairs.
    pub fn uniform(pairs: Vec<ParticlePair>) -> Result<Self> {
        let n = pairs.len();
        ParticleSet::new(pairs, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[ParticlePair] {
        &self.pairs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(x_prev, x_curr)` pairs in GP training order (input, target).
    pub fn training_pairs(&self) -> Vec<(f64, f64)> {
        self.pairs.iter().map(|p| (p.x_prev, p.x_curr)).collect()
    }
}

/// Known measurement process `z = g(x) + v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub g: MeasurementFn,
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementFn {
    Identity,
}

impl MeasurementFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MeasurementFn::Identity => x,
        }
    }
}

impl MeasurementModel {
    pub fn identity(noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::InvalidConfig("measurement noise_var must be positive"));
        }
        Ok(MeasurementModel {
            g: MeasurementFn::Identity,
            noise_var,
        })
    }

    pub fn log_likelihood(&self, z: f64, x: f64) -> f64 {
        let r = z - self.g.eval(x);
        -0.5 * (LN_2PI + self.noise_var.ln()) - r * r / (2.0 * self.noise_var)
    }
}

/// Draw every particle's next state from the dynamics model; the old
/// current state becomes the lag state. Weights are untouched (the
/// proposal is the prior dynamics).
pub fn propagate<M: TransitionModel, R: Rng + ?Sized>(
    ps: &ParticleSet,
    dynamics: &M,
    rng: &mut R,
) -> Result<ParticleSet> {
    let mut pairs = Vec::with_capacity(ps.len());
    for p in ps.pairs() {
        let (mean, var) = dynamics.predict_dist(p.x_curr)?;
        let std = var.max(0.0).sqrt();
        let draw: f64 = rng.sample(rand_distr::StandardNormal);
        pairs.push(ParticlePair {
            x_curr: mean + std * draw,
            x_prev: p.x_curr,
        });
    }
    ParticleSet::new(pairs, ps.weights().to_vec())
}

/// Multiply weights by the measurement likelihood and renormalize.
/// Likelihoods are handled in log-space with max-subtraction; if every
/// particle underflows the weights reset to uniform and the returned
/// flag is `true`.
pub fn reweight(ps: &ParticleSet, z: f64, mm: &MeasurementModel) -> (ParticleSet, bool) {
    let n = ps.len();
    let log_w: Vec<f64> = ps
        .pairs()
        .iter()
        .zip(ps.weights())
        .map(|(p, &w)| w.ln() + mm.log_likelihood(z, p.x_curr))
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let uniform = vec![1.0 / n as f64; n];
        return (
            ParticleSet {
                pairs: ps.pairs.clone(),
                weights: uniform,
            },
            true,
        );
    }
    let mut weights: Vec<f64> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        let uniform = vec![1.0 / n as f64; n];
        return (
            ParticleSet {
                pairs: ps.pairs.clone(),
                weights: uniform,
            },
            true,
        );
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    (
        ParticleSet {
            pairs: ps.pairs.clone(),
            weights,
        },
        false,
    )
}

/// Effective sample size `1 / Σ ω_i²`.
pub fn ess(ps: &ParticleSet) -> f64 {
    1.0 / ps.weights().iter().map(|w| w * w).sum::<f64>()
}

/// Weighted mean of the current states: the filter's point estimate.
pub fn estimate(ps: &ParticleSet) -> f64 {
    ps.pairs()
        .iter()
        .zip(ps.weights())
        .map(|(p, &w)| w * p.x_curr)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResampleScheme {
    /// Tightest integer replication counts: `⌊Nω_i⌋ ≤ η_i ≤ ⌈Nω_i⌉`.
    Systematic,
    /// Kept for comparison runs.
    Multinomial,
}

/// Convert the weighted cloud into `N` equally weighted joint pairs with
/// replication counts approximately proportional to the weights.
pub fn resample_minkl<R: Rng + ?Sized>(
    ps: &ParticleSet,
    scheme: ResampleScheme,
    rng: &mut R,
) -> ParticleSet {
    let counts = match scheme {
        ResampleScheme::Systematic => systematic_counts(ps.weights(), rng),
        ResampleScheme::Multinomial => multinomial_counts(ps.weights(), rng),
    };
    let n = ps.len();
    let mut pairs = Vec::with_capacity(n);
    for (i, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            pairs.push(ps.pairs[i]);
        }
    }
    ParticleSet {
        pairs,
        weights: vec![1.0 / n as f64; n],
    }
}

pub(crate) fn systematic_counts<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let u0: f64 = rng.gen_range(0.0..1.0) / n as f64;
    let mut counts = vec![0usize; n];
    let mut cum = 0.0;
    let mut j = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        cum += w;
        while j < n && u0 + (j as f64) / (n as f64) < cum {
            counts[i] += 1;
            j += 1;
        }
    }
    // Guard against cumulative rounding leaving positions unassigned.
    while j < n {
        counts[n - 1] += 1;
        j += 1;
    }
    counts
}

fn multinomial_counts<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let mut counts = vec![0usize; n];
    for _ in 0..n {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut cum = 0.0;
        let mut pick = n - 1;
        for (i, &w) in weights.iter().enumerate() {
            cum += w;
            if u < cum {
                pick = i;
                break;
            }
        }
        counts[pick] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    struct FixedDynamics {
        mean_shift: f64,
        var: f64,
    }

    impl TransitionModel for FixedDynamics {
        fn predict_dist(&self, x: f64) -> Result<(f64, f64)> {
            Ok((x + self.mean_shift, self.var))
        }
    }

    fn cloud(values: &[f64]) -> ParticleSet {
        ParticleSet::uniform(
            values
                .iter()
                .map(|&x| ParticlePair {
                    x_curr: x,
                    x_prev: x,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ess_examples() {
        let ps = ParticleSet::uniform(
            (0..100)
                .map(|i| ParticlePair {
                    x_curr: i as f64,
                    x_prev: 0.0,
                })
                .collect(),
        )
        .unwrap();
        assert_relative_eq!(ess(&ps), 100.0, max_relative = 1e-12);

        let ps = ParticleSet::new(
            vec![
                ParticlePair { x_curr: 0.0, x_prev: 0.0 },
                ParticlePair { x_curr: 1.0, x_prev: 0.0 },
            ],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert_relative_eq!(ess(&ps), 1.0);

        let ps = ParticleSet::new(
            (0..4)
                .map(|i| ParticlePair {
                    x_curr: i as f64,
                    x_prev: 0.0,
                })
                .collect(),
            vec![0.5, 0.5, 0.0, 0.0],
        )
        .unwrap();
        assert_relative_eq!(ess(&ps), 2.0);
    }

    #[test]
    fn estimate_examples() {
        let ps = cloud(&[0.0, 1.0]);
        assert_relative_eq!(estimate(&ps), 0.5);

        let ps = ParticleSet::new(
            vec![
                ParticlePair { x_curr: 3.0, x_prev: 0.0 },
                ParticlePair { x_curr: -1.0, x_prev: 0.0 },
            ],
            vec![1.0, 0.0],
        )
        .unwrap();
        assert_relative_eq!(estimate(&ps), 3.0);
    }

    #[test]
    fn propagate_preserves_pairing_and_weights() {
        let ps = cloud(&[0.0, 0.5, 1.0, 2.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let dynamics = FixedDynamics {
            mean_shift: 0.3,
            var: 0.01,
        };
        let next = propagate(&ps, &dynamics, &mut rng).unwrap();
        assert_eq!(next.len(), 4);
        assert_eq!(next.weights(), ps.weights());
        for (old, new) in ps.pairs().iter().zip(next.pairs()) {
            assert_eq!(new.x_prev, old.x_curr);
        }
    }

    #[test]
    fn propagate_degenerate_variance_returns_mean() {
        let ps = cloud(&[0.2, 0.8]);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let dynamics = FixedDynamics {
            mean_shift: 0.5,
            var: 1e-30,
        };
        let next = propagate(&ps, &dynamics, &mut rng).unwrap();
        for (old, new) in ps.pairs().iter().zip(next.pairs()) {
            assert_relative_eq!(new.x_curr, old.x_curr + 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn propagate_sample_mean_matches_predict() {
        let ps = cloud(&[0.7, 0.7]);
        let dynamics = FixedDynamics {
            mean_shift: -0.2,
            var: 0.25,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 100_000usize;
        let mut sum = 0.0;
        for _ in 0..n / 2 {
            let next = propagate(&ps, &dynamics, &mut rng).unwrap();
            sum += next.pairs()[0].x_curr + next.pairs()[1].x_curr;
        }
        let mean = sum / n as f64;
        let tol = 3.0 * 0.5 / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < tol, "mean {mean}");
    }

    #[test]
    fn reweight_identical_particles_stay_uniform() {
        let ps = cloud(&[0.4, 0.4, 0.4]);
        let mm = MeasurementModel::identity(0.1).unwrap();
        let (next, flag) = reweight(&ps, 0.9, &mm);
        assert!(!flag);
        for &w in next.weights() {
            assert_relative_eq!(w, 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn reweight_symmetric_particles_equal_weights() {
        let ps = cloud(&[0.0, 2.0]);
        let mm = MeasurementModel::identity(0.3).unwrap();
        let (next, flag) = reweight(&ps, 1.0, &mm);
        assert!(!flag);
        assert_relative_eq!(next.weights()[0], next.weights()[1], max_relative = 1e-12);
    }

    #[test]
    fn reweight_total_underflow_resets_uniform() {
        let ps = cloud(&[1e200, 2e200]);
        let mm = MeasurementModel::identity(1e-6).unwrap();
        let (next, flag) = reweight(&ps, 0.0, &mm);
        assert!(flag);
        assert_relative_eq!(next.weights()[0], 0.5);
        assert_relative_eq!(next.weights()[1], 0.5);
    }

    #[test]
    fn reweight_normalizes() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let values: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ps = cloud(&values);
        let mm = MeasurementModel::identity(0.05).unwrap();
        let (next, _) = reweight(&ps, 0.2, &mm);
        let total: f64 = next.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn systematic_uniform_weights_keep_every_particle() {
        let ps = cloud(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let out = resample_minkl(&ps, ResampleScheme::Systematic, &mut rng);
        let mut got: Vec<f64> = out.pairs().iter().map(|p| p.x_curr).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn systematic_exact_integer_proportions() {
        let pairs: Vec<ParticlePair> = (0..4)
            .map(|i| ParticlePair {
                x_curr: i as f64,
                x_prev: 0.0,
            })
            .collect();
        let ps = ParticleSet::new(pairs, vec![0.5, 0.25, 0.25, 0.0]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let out = resample_minkl(&ps, ResampleScheme::Systematic, &mut rng);
        let count = |v: f64| out.pairs().iter().filter(|p| p.x_curr == v).count();
        assert_eq!(count(0.0), 2);
        assert_eq!(count(1.0), 1);
        assert_eq!(count(2.0), 1);
        assert_eq!(count(3.0), 0);
    }

    #[test]
    fn systematic_counts_within_floor_ceil_bounds() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = 1000usize;
            let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64)).collect();
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
            let counts = systematic_counts(&weights, &mut rng);
            assert_eq!(counts.iter().sum::<usize>(), n);
            for (i, &c) in counts.iter().enumerate() {
                let nw = n as f64 * weights[i];
                assert!(c as f64 >= nw.floor() - 1e-9 && c as f64 <= nw.ceil() + 1e-9);
            }
        }
    }

    /// Empirical check that systematic resampling attains a KL no worse
    /// than multinomial, averaged over repeated draws on the same weights.
    #[test]
    fn systematic_kl_no_worse_than_multinomial() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let n = 50usize;
        let mut weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0f64)).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let kl = |counts: &[usize]| -> f64 {
            counts
                .iter()
                .zip(&weights)
                .map(|(&c, &w)| {
                    if w > 0.0 && c > 0 {
                        w * (n as f64 * w / c as f64).ln()
                    } else if w > 0.0 {
                        // Removed particle: bounded surrogate for the
                        // infinite penalty so averages stay comparable.
                        w * (n as f64 * w / 0.5).ln()
                    } else {
                        0.0
                    }
                })
                .sum()
        };
        let trials = 1000;
        let mut kl_sys = 0.0;
        let mut kl_mult = 0.0;
        for _ in 0..trials {
            kl_sys += kl(&systematic_counts(&weights, &mut rng));
            kl_mult += kl(&multinomial_counts(&weights, &mut rng));
        }
        assert!(
            kl_sys / trials as f64 <= kl_mult / trials as f64,
            "systematic {kl_sys} multinomial {kl_mult}"
        );
    }

    #[test]
    fn resample_output_uniform_weights() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let values: Vec<f64> = (0..20).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ps = cloud(&values);
        let mm = MeasurementModel::identity(0.01).unwrap();
        let (weighted, _) = reweight(&ps, 0.5, &mm);
        for scheme in [ResampleScheme::Systematic, ResampleScheme::Multinomial] {
            let out = resample_minkl(&weighted, scheme, &mut rng);
            assert_eq!(out.len(), 20);
            let total: f64 = out.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for &w in out.weights() {
                assert_relative_eq!(w, 1.0 / 20.0);
            }
        }
    }
}
