//! `incremental`: learning curves over sequentially fed trajectories of
//! random piecewise-linear systems. One continually learned model per
//! system; tracking error and ground-truth likelihood per trajectory.

use anyhow::Result;
use gpident_core::{
    groundtruth_loglik, knn_average, sample_random_model, simulate, tracking_mse_db, DynamicsFn,
    IdentState, SystemSpec, MSE_FLOOR_DB,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::output::{config_hash, fmt_f64, CsvFile};

pub fn cmd_incremental(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let start = Instant::now();
    let hash = config_hash(&cfg.canonical()?, seed);
    let ic = &cfg.incremental;

    let mut scatter = CsvFile::create(
        &out.join("incremental.csv"),
        &hash,
        &[
            "model_id",
            "traj_id",
            "cumulative_measurements",
            "tracking_mse_db",
            "groundtruth_loglik",
        ],
    )?;
    let mut curves = CsvFile::create(
        &out.join("knn_curves.csv"),
        &hash,
        &[
            "model_id",
            "cumulative_measurements",
            "tracking_mse_db_knn",
            "groundtruth_loglik_knn",
        ],
    )?;

    for model_id in 0..ic.models {
        // Independent stream per model: runs for different models can be
        // compared or parallelized without touching each other's draws.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(model_id as u64 + 1);

        let truth = sample_random_model(&mut rng);
        let spec = SystemSpec {
            dynamics: DynamicsFn::Piecewise(truth.clone()),
            process_noise_var: ic.process_noise_var,
            meas_noise_var: ic.meas_noise_var,
            init: ic.init.to_core(),
            domain: ic.domain,
        };
        spec.validate()?;

        let mut state = IdentState::init(ic.filter.to_ident_config()?, &mut rng)?;
        let mut cumulative = 0usize;
        let mut mse_points = Vec::with_capacity(ic.trajectories);
        let mut loglik_points = Vec::with_capacity(ic.trajectories);

        for traj_id in 0..ic.trajectories {
            let traj = simulate(&spec, ic.steps, &mut rng)?;
            let (next, records) = state.run_trajectory(&traj.measurements, &mut rng)?;
            state = next;
            cumulative += records.len();

            let estimates: Vec<f64> = records.iter().map(|r| r.estimate).collect();
            let mse_db = tracking_mse_db(&estimates, &traj.states[1..], MSE_FLOOR_DB)?;
            let loglik = groundtruth_loglik(
                &state.readout_model()?,
                |x| truth.eval(x),
                ic.loglik_points,
                ic.loglik_block,
            )?;

            scatter.row(&[
                model_id.to_string(),
                traj_id.to_string(),
                cumulative.to_string(),
                fmt_f64(mse_db),
                fmt_f64(loglik),
            ])?;
            mse_points.push((cumulative as f64, mse_db));
            loglik_points.push((cumulative as f64, loglik));
        }

        let k = ic.knn_k.min(mse_points.len()).max(1);
        let mse_knn = knn_average(&mse_points, k)?;
        let loglik_knn = knn_average(&loglik_points, k)?;
        for ((&(c, _), &m), &l) in mse_points.iter().zip(&mse_knn).zip(&loglik_knn) {
            curves.row(&[
                model_id.to_string(),
                fmt_f64(c),
                fmt_f64(m),
                fmt_f64(l),
            ])?;
        }

        if ic.checkpoint {
            Checkpoint { state, rng }
                .save(&out.join(format!("checkpoint_{model_id}.json")))?;
        }
    }

    println!(
        "incremental: {} models x {} trajectories, runtime = {:.2}s",
        ic.models,
        ic.trajectories,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
