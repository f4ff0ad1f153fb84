//! Experiment configuration: JSON or TOML files with a law specification
//! (explicit weights or a calibration request), horizons, sample counts,
//! seeds, shard counts and soft-gate thresholds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{calibrate_a1, CalibrationReport, EnvironmentLaw};
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LawSpec {
    Calibrate {
        calibrate: CalibrateSpec,
    },
    Explicit {
        atoms: Vec<OffspringDistribution>,
        weights: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrateSpec {
    pub atoms: Vec<OffspringDistribution>,
    #[serde(default)]
    pub free: usize,
}

impl LawSpec {
    pub fn build(&self) -> Result<EnvironmentLaw> {
        Ok(self.build_with_report()?.0)
    }

    pub fn build_with_report(&self) -> Result<(EnvironmentLaw, Option<CalibrationReport>)> {
        match self {
            LawSpec::Explicit { atoms, weights } => {
                Ok((EnvironmentLaw::new(atoms.clone(), weights.clone())?, None))
            }
            LawSpec::Calibrate { calibrate } => {
                let report = calibrate_a1(calibrate.atoms.clone(), calibrate.free)?;
                Ok((report.law.clone(), Some(report)))
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Experiment name; the CLI subcommand fills this in when absent.
    pub experiment: Option<String>,
    pub law: Option<LawSpec>,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub t_list: Option<Vec<f64>>,
    pub samples: Option<u64>,
    pub ref_samples: Option<u64>,
    pub seed: Option<u64>,
    pub shards: Option<usize>,
    /// Estimator variant: survival methods or conditioning proposals.
    pub method: Option<String>,
    pub betas: Option<Vec<f64>>,
    pub grid: Option<Vec<f64>>,
    pub trunc_k: Option<usize>,
    pub format: Option<String>,
    /// Soft-gate thresholds; anything not set falls back to the documented
    /// defaults.
    pub thresholds: Option<BTreeMap<String, f64>>,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(toml::from_str(&text)?),
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))
            }
            _ => serde_json::from_str(&text)
                .or_else(|_| toml::from_str(&text).map_err(Error::from))
                .map_err(|e| Error::Config(format!("{path:?}: {e}"))),
        }
    }

    /// The law to run on; defaults to the calibrated Binary(0.25) /
    /// Geometric(1/3) mixture when no spec is given.
    pub fn law(&self) -> Result<EnvironmentLaw> {
        match &self.law {
            Some(spec) => spec.build(),
            None => Ok(default_law()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn shards(&self) -> usize {
        self.shards.unwrap_or(1).max(1)
    }

    pub fn samples(&self) -> u64 {
        self.samples.unwrap_or(100_000)
    }

    pub fn ref_samples(&self) -> u64 {
        self.ref_samples.unwrap_or(self.samples() / 2)
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(32)
    }

    pub fn n_list(&self, default: &[usize]) -> Vec<usize> {
        self.n_list.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn t_list(&self) -> Vec<f64> {
        self.t_list.clone().unwrap_or_else(|| vec![0.4, 0.7])
    }

    pub fn grid(&self) -> Vec<f64> {
        self.grid
            .clone()
            .unwrap_or_else(|| (1..=9).map(|i| i as f64 / 10.0).collect())
    }

    pub fn betas(&self) -> Vec<f64> {
        self.betas.clone().unwrap_or_else(|| vec![0.5])
    }

    pub fn trunc_k(&self) -> usize {
        self.trunc_k.unwrap_or(32)
    }

    pub fn threshold(&self, key: &str, default: f64) -> f64 {
        self.thresholds
            .as_ref()
            .and_then(|m| m.get(key).copied())
            .unwrap_or(default)
    }
}

/// The default calibrated environment: weight 0.8 on Binary(0.25), 0.2 on
/// Geometric(1/3); gamma = 0.8 and a mean-zero +/- log 2 tilted walk.
pub fn default_law() -> EnvironmentLaw {
    calibrate_a1(
        vec![
            OffspringDistribution::binary(0.25).expect("valid"),
            OffspringDistribution::geometric(1.0 / 3.0).expect("valid"),
        ],
        0,
    )
    .expect("canonical law calibrates")
    .law
}
