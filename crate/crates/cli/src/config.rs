//! Flat JSON run configuration.
//!
//! Every key is optional; omitted keys take the operating-point defaults
//! (gain 4.4, 2 % efficiency, threshold 8× the mean arm signal). Unknown
//! keys are rejected. The resolved configuration written next to each run
//! can be passed back with `--config` to reproduce it.

use std::f64::consts::PI;
use std::path::Path;

use micromacro_core::detection::{DetectionParams, Threshold};
use micromacro_core::experiment::{AnalysisPlane, Discriminator, ExperimentConfig};
use micromacro_core::GainParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gain: f64,
    pub eta_b: f64,
    pub eta_a: f64,
    pub pm_noise: f64,
    /// Threshold as a multiple of the mean arm signal (default 8).
    pub threshold_multiple: Option<f64>,
    /// Threshold in detected-signal units; excludes `threshold_multiple`.
    pub threshold_absolute: Option<f64>,
    pub phi_b: f64,
    pub phi_a_list: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub discriminator: Discriminator,
    pub plane: AnalysisPlane,
    pub decorrelated: bool,
    pub calibration_trials: u64,
    pub tail_epsilon: f64,
    /// Thresholds for `sweep`, in the units of the threshold mode.
    pub thresholds: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gain: 4.4,
            eta_b: 0.02,
            eta_a: 1.0,
            pm_noise: 0.0,
            threshold_multiple: None,
            threshold_absolute: None,
            phi_b: 0.0,
            phi_a_list: (0..12).map(|k| k as f64 * PI / 6.0).collect(),
            trials: 1_000_000,
            seed: 2007,
            discriminator: Discriminator::OrthogonalityFilter,
            plane: AnalysisPlane::Equatorial,
            decorrelated: false,
            calibration_trials: 100_000,
            tail_epsilon: 1e-12,
            thresholds: vec![0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub threshold_multiple: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                Self::parse(&text, &p.display().to_string())?
            }
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(t) = overrides.trials {
            cfg.trials = t;
        }
        if let Some(m) = overrides.threshold_multiple {
            cfg.threshold_multiple = Some(m);
            cfg.threshold_absolute = None;
        }
        Ok(cfg)
    }

    /// Parses a configuration, reporting `path:line:column` on error.
    pub fn parse(text: &str, path: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config {
            path: format!("{path}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    fn field_error(&self, field: &str, message: impl std::fmt::Display) -> CliError {
        CliError::Config {
            path: format!("field `{field}`"),
            message: message.to_string(),
        }
    }

    pub fn threshold(&self) -> CliResult<Threshold> {
        match (self.threshold_multiple, self.threshold_absolute) {
            (Some(_), Some(_)) => Err(self.field_error(
                "threshold_absolute",
                "set either threshold_multiple or threshold_absolute, not both",
            )),
            (_, Some(t)) => Ok(Threshold::Absolute(t)),
            (m, None) => Ok(Threshold::MeanSignalMultiple(m.unwrap_or(8.0))),
        }
    }

    pub fn experiment(&self) -> CliResult<ExperimentConfig> {
        let gain = GainParams::new(self.gain).map_err(|e| self.field_error("gain", e))?;
        let detection =
            DetectionParams::new(self.eta_b, self.eta_a, self.pm_noise, self.threshold()?)
                .map_err(|e| self.field_error("detection", e))?;
        let cfg = ExperimentConfig {
            gain,
            detection,
            phi_b: self.phi_b,
            phi_a_list: self.phi_a_list.clone(),
            trials: self.trials,
            seed: self.seed,
            discriminator: self.discriminator,
            plane: self.plane,
            decorrelated: self.decorrelated,
            calibration_trials: self.calibration_trials,
            tail_epsilon: self.tail_epsilon,
        };
        cfg.validate().map_err(|e| self.field_error("config", e))?;
        Ok(cfg)
    }
}
