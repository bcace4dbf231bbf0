//! `simulate`: generate benchmark trajectories as plot-ready CSV.

use anyhow::Result;
use gpident_core::{sample_random_model, simulate, DynamicsFn};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::path::Path;

use crate::config::RunConfig;
use crate::output::{config_hash, fmt_f64, CsvFile};

pub fn cmd_simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let hash = config_hash(&cfg.canonical()?, seed);
    let sc = &cfg.simulate;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let piecewise = if sc.system == "piecewise" {
        let model = sample_random_model(&mut rng);
        let mut file = CsvFile::create(
            &out.join("model.csv"),
            &hash,
            &["i", "breakpoint", "offset"],
        )?;
        for (i, (&a, &b)) in model
            .breakpoints()
            .iter()
            .zip(model.offsets())
            .enumerate()
        {
            file.row(&[i.to_string(), fmt_f64(a), fmt_f64(b)])?;
        }
        Some(DynamicsFn::Piecewise(model))
    } else {
        None
    };
    let spec = sc.to_system(piecewise)?;

    for k in 0..sc.trajectories {
        let traj = simulate(&spec, sc.steps, &mut rng)?;
        let mut file = CsvFile::create(
            &out.join(format!("traj_{k:03}.csv")),
            &hash,
            &["t", "x_true", "z"],
        )?;
        file.row(&["0".into(), fmt_f64(traj.states[0]), String::new()])?;
        for (t, (&x, &z)) in traj.states[1..].iter().zip(&traj.measurements).enumerate() {
            file.row(&[(t + 1).to_string(), fmt_f64(x), fmt_f64(z)])?;
        }
    }
    println!(
        "simulate: wrote {} trajectories to {}",
        sc.trajectories,
        out.display()
    );
    Ok(())
}
