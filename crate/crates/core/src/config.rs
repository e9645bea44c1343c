//! TOML configuration shared by all subcommands. Every key has a command-line
//! flag of the same name that takes precedence.
//!
//! ```toml
//! [lattice]
//! levels = 3
//! sentiments = 11
//!
//! [fit]
//! learning_rate = 0.2
//! iterations = 2000
//!
//! [simulate]
//! horizon = 100.0
//! topics = 20
//!
//! [gnn]
//! d = 16
//! lambda2 = 0.1
//!
//! [evaluate]
//! proportions = [0.15, 0.20, 0.25]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitConfig;
use crate::eval::EvalConfig;
use crate::gnn::{GnnConfig, TrainConfig};
use crate::hawkes::Lattice;
use crate::prediction::ForecastMode;
use crate::simulation::SimConfig;

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "OPINION_HAWKES_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub lattice: LatticeSection,
    pub fit: FitConfig,
    pub simulate: SimulateSection,
    pub predict: PredictSection,
    pub gnn: GnnSection,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeSection {
    pub levels: u32,
    pub sentiments: u32,
}

impl Default for LatticeSection {
    fn default() -> Self {
        let l = Lattice::default();
        LatticeSection {
            levels: l.levels,
            sentiments: l.sentiments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSection {
    #[serde(flatten)]
    pub sim: SimConfig,
    /// Number of independent topics to generate.
    pub topics: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            sim: SimConfig::default(),
            topics: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictSection {
    pub mode: ForecastMode,
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            mode: ForecastMode::Analytic,
            delta: 10.0,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnSection {
    #[serde(flatten)]
    pub net: GnnConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Fraction of each training topic's window treated as observed.
    pub train_cut: f64,
}

impl Default for GnnSection {
    fn default() -> Self {
        GnnSection {
            net: GnnConfig::default(),
            train: TrainConfig::default(),
            train_cut: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSection {
    pub proportions: Vec<f64>,
    pub split_seed: u64,
    #[serde(flatten)]
    pub eval: EvalConfig,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            proportions: vec![0.15, 0.20, 0.25],
            split_seed: 0,
            eval: EvalConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`, or the file named by [`CONFIG_ENV`], or falls back to
    /// defaults when neither is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let path: Option<PathBuf> = path
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.lattice.levels, self.lattice.sentiments)
    }
}
