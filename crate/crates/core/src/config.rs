//! Run configuration files (JSON).
//!
//! ```json
//! {
//!   "efforts": [0.5, 1.0, 2.0],
//!   "costs": [0.0, 0.05, 0.2],
//!   "switching_costs": [[0, 0.1, 0.15], [0.1, 0, 0.1], [0.15, 0.1, 0]],
//!   "reward": {"family": "power", "params": {"a": 1.0, "p": 2.0}},
//!   "grid": {"h": 0.001, "tail_tol": 1e-8},
//!   "eta": 0.2,
//!   "fp": {"max_iters": 500, "tol": 1e-6},
//!   "seed": 42
//! }
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fictitious::FpParams;
use crate::grid::TimeGrid;
use crate::model::{ModelSpec, RewardScheme};

fn default_h() -> f64 {
    1e-3
}

fn default_tail_tol() -> f64 {
    1e-8
}

fn default_eta() -> f64 {
    0.2
}

fn default_max_iters() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            h: default_h(),
            tail_tol: default_tail_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpConfig {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Exploitability tolerance; absent means `1e-6 (1 + |J|)`, `0` disables.
    #[serde(default)]
    pub tol: Option<f64>,
}

impl Default for FpConfig {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub efforts: Vec<f64>,
    pub costs: Vec<f64>,
    pub switching_costs: Vec<Vec<f64>>,
    pub reward: RewardScheme,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub fp: FpConfig,
    #[serde(default)]
    pub seed: u64,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Reads and parses a file; also returns the raw bytes for hashing.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
            line: 0,
            column: 0,
            message: format!("not UTF-8: {e}"),
        })?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn model(&self) -> Result<ModelSpec> {
        ModelSpec::new(
            self.efforts.clone(),
            self.costs.clone(),
            self.switching_costs.clone(),
            self.reward.clone(),
        )
    }

    /// Grid with horizon `ceil(ln(1/tail_tol) / u_min)` rounded to the step.
    pub fn time_grid(&self, spec: &ModelSpec) -> Result<TimeGrid> {
        TimeGrid::with_tail_tolerance(self.grid.h, self.grid.tail_tol, spec.u_min())
    }

    pub fn fp_params(&self) -> FpParams {
        FpParams {
            max_iters: self.fp.max_iters,
            tol_exploit: self.fp.tol,
            ..FpParams::default()
        }
    }
}
