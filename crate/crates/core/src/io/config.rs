//! Run configuration: a TOML file with one table per subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgp::DgpConfig;
use crate::error::{Error, Result};
use crate::estimator::RSquared;

/// The shipped default configuration, also printed by `--print-config`.
pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSettings {
    pub outcome: String,
    pub fixed_effects: bool,
    pub covariates: bool,
    pub cluster: String,
    pub grade2_only: bool,
    pub moderator: Option<String>,
    pub r_squared: RSquared,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        EstimateSettings {
            outcome: "score_math".into(),
            fixed_effects: false,
            covariates: false,
            cluster: "school_id".into(),
            grade2_only: false,
            moderator: None,
            r_squared: RSquared::Within,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub reps: usize,
    pub seed: u64,
    pub threads: usize,
    pub outcome: String,
    pub fixed_effects: bool,
    pub covariates: bool,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            reps: 500,
            seed: 2021,
            threads: 0,
            outcome: "score_math".into(),
            fixed_effects: true,
            covariates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocateSettings {
    pub per_school_budget: f64,
    pub cap: Option<f64>,
}

impl Default for AllocateSettings {
    fn default() -> Self {
        AllocateSettings {
            per_school_budget: 1.0,
            cap: None,
        }
    }
}

impl AllocateSettings {
    pub fn cap(&self) -> f64 {
        self.cap.unwrap_or(3.0 * self.per_school_budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSettings {
    pub distribution: String,
    pub n_schools: usize,
    pub budgets: Vec<f64>,
    pub cap_multiplier: f64,
    pub draws: usize,
    pub seed: u64,
}

impl Default for GainsSettings {
    fn default() -> Self {
        GainsSettings {
            distribution: "uniform(-1, 1)".into(),
            n_schools: 10,
            budgets: vec![1.0],
            cap_multiplier: 3.0,
            draws: 10_000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dgp: DgpConfig,
    pub estimate: EstimateSettings,
    pub mc: McSettings,
    pub allocate: AllocateSettings,
    pub gains: GainsSettings,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads `path`, or the built-in defaults when `path` is `default`.
    pub fn load(path: &str) -> Result<Self> {
        if path == "default" {
            return Self::from_toml_str(DEFAULT_CONFIG);
        }
        let text = std::fs::read_to_string(Path::new(path))
            .map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{path}: {msg}")),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
