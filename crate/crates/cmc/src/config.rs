//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use cmc_core::data::SyntheticConfig;
use cmc_core::solver::{BoundKind, BoundParams, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::bench::{ExperimentSpec, ObservationModel};
use crate::error::{Error, Result};

/// Synthetic data for `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub synthetic: SyntheticConfig,
    pub observation: ObservationModel,
    /// Uniform observation probability.
    pub p: f64,
}

impl GenerateSpec {
    /// Desk-scale experiment 1 (300 x 300, three sources of rank 5), observed exactly.
    pub fn desk(p: f64) -> Self {
        GenerateSpec {
            synthetic: SyntheticConfig::three_source(1, 10, 0).expect("valid preset"),
            observation: ObservationModel::Exact,
            p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub kind: BoundKind,
    pub params: BoundParams,
}

impl Default for BoundSpec {
    fn default() -> Self {
        BoundSpec {
            kind: BoundKind::Expfam,
            params: BoundParams::default(),
        }
    }
}

/// Everything a run needs. All randomness derives from `seed`.
/// Defaults match the desk experiment 1 data written by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Directory with `observations.csv` and `layout.json` (`fit`).
    pub input: Option<PathBuf>,
    /// Output directory.
    pub output: Option<PathBuf>,
    pub solver: SolverConfig,
    pub generate: Option<GenerateSpec>,
    pub experiment: Option<ExperimentSpec>,
    pub bound: BoundSpec,
    /// Worker threads of the experiment pool; 0 uses all cores.
    pub jobs: usize,
    /// Record wall-clock times. Off makes every output byte-reproducible.
    pub timing: bool,
    /// One JSON line per solver iteration on stderr.
    pub verbose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            input: None,
            output: None,
            solver: crate::bench::desk_solver(5),
            generate: None,
            experiment: None,
            bound: BoundSpec::default(),
            jobs: 0,
            timing: true,
            verbose: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config(format!("{command} needs a seed (--seed or \"seed\" in the config)")))
    }

    pub fn require_output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Config("an output directory is required (--out)".to_string()))
    }

    pub fn require_input(&self) -> Result<&Path> {
        let input = self
            .input
            .as_deref()
            .ok_or_else(|| Error::Config("an input directory is required (--input)".to_string()))?;
        if !input.is_dir() {
            return Err(Error::Config(format!("input directory {} does not exist", input.display())));
        }
        Ok(input)
    }
}
