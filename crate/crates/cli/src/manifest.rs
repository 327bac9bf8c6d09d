//! Run manifests written next to every output file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use interfms::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, PLANCK};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct Constants {
    pub planck_j_s: f64,
    pub atomic_mass_unit_kg: f64,
    pub elementary_charge_c: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            planck_j_s: PLANCK,
            atomic_mass_unit_kg: ATOMIC_MASS_UNIT,
            elementary_charge_c: ELEMENTARY_CHARGE,
        }
    }
}

/// Everything needed to rerun a command and get the same bytes back.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub parameters: Value,
    /// Parsed contents of the input documents, keyed by role.
    pub inputs: Value,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub exit_code: i32,
    pub constants: Constants,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Value, inputs: Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            parameters,
            inputs,
            seed,
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            exit_code: 0,
            constants: Constants::default(),
        }
    }

    /// Manifest path for an output file: `<out>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn finish(mut self, output: &Path, elapsed: Duration, exit_code: i32) -> Result<()> {
        self.outputs.push(output.to_path_buf());
        self.wall_clock_seconds = elapsed.as_secs_f64();
        self.exit_code = exit_code;
        let path = Self::path_for(output);
        let text = serde_json::to_string_pretty(&self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
