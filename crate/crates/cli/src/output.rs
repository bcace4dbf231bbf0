//! CSV emission. Every file starts with a provenance comment carrying a
//! hash of the resolved configuration and seed, followed by a header row.
//! Floats are written with the shortest round-trip representation so
//! identical runs produce byte-identical files.

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Hex digest of the resolved config text and the effective seed.
pub fn config_hash(canonical_config: &str, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_config.as_bytes());
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(16);
    for b in &digest[..8] {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub struct CsvFile {
    out: fs::File,
    columns: usize,
}

impl CsvFile {
    pub fn create(path: &Path, hash: &str, header: &[&str]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut out =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(out, "# config-hash: {hash}")?;
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvFile {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }
}
