//! Run configuration, read from a TOML file and overridden by flags.
//!
//! Precedence, highest first: command-line flags, the `--config` file,
//! built-in defaults. Every key is optional; unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [ingest]
//! tick_size = 0.01
//! depth = 5
//! regression_tolerance_ns = 0
//!
//! [calibrate]
//! variant = "SAQR"
//! levels = 5
//! session = "09:00-18:00"
//! n_max = 60
//! min_obs = 50
//!
//! [simulate]
//! horizon_s = 32400
//! runs = 1
//!
//! [report]
//! periods = ["09:00-18:00", "10:00-14:00"]
//! [report.thresholds]
//! ks_pass = 0.25
//! ```

use std::path::Path;

use qrlob::calibration::{EstimateOptions, SizeBucketing};
use qrlob::facts::ReportConfig;
use qrlob::hawkes::FitOptions;
use qrlob::model::{CalibrateOptions, ModelVariant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; replica r of a batch uses `seed + r`.
    pub seed: u64,
    pub ingest: IngestConfig,
    pub calibrate: CalibrateConfig,
    pub simulate: SimulateConfig,
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub tick_size: f64,
    pub depth: usize,
    pub regression_tolerance_ns: i64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            tick_size: 1.0,
            depth: 5,
            regression_tolerance_ns: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub variant: ModelVariant,
    pub levels: usize,
    pub session: String,
    pub n_max: u64,
    pub min_obs: u64,
    pub separate_sides: bool,
    pub size_bucketing: SizeBucketing,
    /// Fixed θ; calibrated from the mid-price path when absent.
    pub theta: Option<f64>,
    pub theta_max_iter: usize,
    pub hawkes_max_iter: usize,
    pub shared_beta: bool,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        let est = EstimateOptions::default();
        let base = CalibrateOptions::default();
        CalibrateConfig {
            variant: ModelVariant::Qr,
            levels: 5,
            session: "09:00-18:00".into(),
            n_max: est.n_max,
            min_obs: est.min_obs,
            separate_sides: est.separate_sides,
            size_bucketing: est.size_bucketing,
            theta: None,
            theta_max_iter: base.theta_max_iter,
            hawkes_max_iter: base.hawkes.max_iter,
            shared_beta: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Defaults to the variant stored in the model.
    pub variant: Option<ModelVariant>,
    pub horizon_s: f64,
    /// Overrides the model's θ.
    pub theta: Option<f64>,
    /// Independent replicas, seeds `seed..seed + runs`.
    pub runs: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            variant: None,
            horizon_s: 9.0 * 3600.0,
            theta: None,
            runs: 1,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Config, CliError> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                Config::from_toml(&text).map_err(|e| e.context(p.display()))
            }
        }
    }

    /// Compact JSON with keys sorted at every depth; the digest input. Anyone
    /// holding a manifest can recompute the digest from its `config` object.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn digest(&self) -> String {
        digest_str(&self.canonical_json())
    }

    pub fn calibrate_options(&self, tick_size: f64) -> CalibrateOptions {
        let c = &self.calibrate;
        CalibrateOptions {
            variant: c.variant,
            depth: c.levels,
            tick_size,
            estimate: EstimateOptions {
                n_max: c.n_max,
                min_obs: c.min_obs,
                separate_sides: c.separate_sides,
                size_bucketing: c.size_bucketing,
                aes_override: None,
            },
            theta: c.theta,
            theta_max_iter: c.theta_max_iter,
            hawkes: FitOptions {
                max_iter: c.hawkes_max_iter,
                shared_beta: c.shared_beta,
                ..FitOptions::default()
            },
            ..CalibrateOptions::default()
        }
    }
}

pub fn digest_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}
