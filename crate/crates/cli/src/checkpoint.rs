//! Resumable run state: the full identification state plus the random
//! stream. JSON keeps every f64 bit-exact (shortest round-trip encoding),
//! so resuming reproduces the uninterrupted run.

use anyhow::{Context, Result};
use gpident_core::IdentState;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state: IdentState,
    pub rng: ChaCha12Rng,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    #[cfg_attr(not(test), allow(dead_code))] // exercised by the resume tests
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
