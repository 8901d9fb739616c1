//! Experiment configurations and their canonical hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::factor_bias::ConfounderNormalization;
use crate::market_data::DEFAULT_DATE_FORMAT;
use crate::signals::{BetaSource, NonlinearDgpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CancellationSettings {
    pub n: usize,
    pub alpha: f64,
    pub b_x: f64,
    pub b_z: f64,
    pub min_rate: f64,
    pub min_correlation: f64,
}

impl Default for CancellationSettings {
    fn default() -> Self {
        Self { n: 1000, alpha: 0.6, b_x: 1.0, b_z: 0.3, min_rate: 0.8, min_correlation: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttenuationSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_eps: f64,
    pub n: usize,
    pub sigma_zeta_max: f64,
    pub grid_points: usize,
    pub normalization: ConfounderNormalization,
    pub tolerance: f64,
}

impl Default for AttenuationSettings {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.2,
            gamma: 0.7,
            sigma_eps: 1.0,
            n: 200_000,
            sigma_zeta_max: 0.8,
            grid_points: 17,
            normalization: ConfounderNormalization::VarianceExact,
            tolerance: 5e-3,
        }
    }
}

impl AttenuationSettings {
    pub fn sigma_grid(&self) -> Vec<f64> {
        match self.grid_points {
            0 => Vec::new(),
            1 => vec![0.0],
            k => (0..k).map(|i| self.sigma_zeta_max * i as f64 / (k - 1) as f64).collect(),
        }
    }
}

/// Covariance and signal generator settings shared by the geometry runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseSettings {
    pub n_assets: usize,
    pub n_factors: usize,
    pub idio_scale: f64,
    pub mu_scale: f64,
}

impl Default for UniverseSettings {
    fn default() -> Self {
        Self { n_assets: 120, n_factors: 3, idio_scale: 0.2, mu_scale: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub universe: UniverseSettings,
    pub powers: Vec<f64>,
    pub scatter_powers: Vec<f64>,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            universe: UniverseSettings::default(),
            powers: vec![0.6, 0.8, 1.0, 1.2, 1.4],
            scatter_powers: vec![0.6, 1.0, 1.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearSettings {
    pub dgp: NonlinearDgpConfig,
    pub beta_source: BetaSource,
    pub n_points: usize,
    pub span: (f64, f64),
    /// Random feasible portfolios compared against each frontier solve.
    pub random_portfolios: usize,
}

impl Default for NonlinearSettings {
    fn default() -> Self {
        Self {
            dgp: NonlinearDgpConfig::default(),
            beta_source: BetaSource::Drawn,
            n_points: 50,
            span: (1.5, 1.5),
            random_portfolios: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSettings {
    pub universe: UniverseSettings,
    pub n_theta: usize,
    pub frontier_points: usize,
    pub random_surrogates: usize,
    pub tolerance: f64,
}

impl Default for AlignmentSettings {
    fn default() -> Self {
        Self {
            universe: UniverseSettings::default(),
            n_theta: 25,
            frontier_points: 50,
            random_surrogates: 100,
            tolerance: 1e-8,
        }
    }
}

/// Expected-return input of the real-data frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealDataSignal {
    /// Sample mean of each return column.
    #[default]
    EmpiricalMean,
    /// Extension: per-asset logistic fit of up-days on two lagged returns and
    /// trailing volatility, mapped to `mean(2p - 1) * mean|r|`.
    LaggedLogistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RealDataSettings {
    pub csv_path: Option<PathBuf>,
    pub signal: RealDataSignal,
    /// Trailing window of the volatility feature.
    pub volatility_window: usize,
    pub date_column: String,
    pub date_format: String,
    pub n_days: usize,
    pub n_assets: usize,
    pub n_points: usize,
    pub span: (f64, f64),
}

impl Default for RealDataSettings {
    fn default() -> Self {
        Self {
            csv_path: None,
            signal: RealDataSignal::EmpiricalMean,
            volatility_window: 20,
            date_column: "Date".into(),
            date_format: DEFAULT_DATE_FORMAT.into(),
            n_days: 1000,
            n_assets: 5,
            n_points: 50,
            span: (1.5, 1.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "params", rename_all = "kebab-case")]
pub enum ExperimentParams {
    Cancellation(CancellationSettings),
    Attenuation(AttenuationSettings),
    Calibration(CalibrationSettings),
    NonlinearFrontier(NonlinearSettings),
    Alignment(AlignmentSettings),
    RealDataFrontier(RealDataSettings),
}

impl ExperimentParams {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cancellation(_) => "cancellation",
            Self::Attenuation(_) => "attenuation",
            Self::Calibration(_) => "calibration",
            Self::NonlinearFrontier(_) => "nonlinear-frontier",
            Self::Alignment(_) => "alignment",
            Self::RealDataFrontier(_) => "real-data-frontier",
        }
    }

    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "cancellation" => Self::Cancellation(Default::default()),
            "attenuation" => Self::Attenuation(Default::default()),
            "calibration" => Self::Calibration(Default::default()),
            "nonlinear-frontier" => Self::NonlinearFrontier(Default::default()),
            "alignment" => Self::Alignment(Default::default()),
            "real-data-frontier" => Self::RealDataFrontier(Default::default()),
            other => return Err(LabError::Config(format!("unknown experiment {other:?}"))),
        })
    }

    fn default_repetitions(&self) -> usize {
        match self {
            Self::Cancellation(_) | Self::Attenuation(_) => 10,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub params: ExperimentParams,
    pub seed: u64,
    pub repetitions: usize,
    /// Where run directories are created; not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(params: ExperimentParams) -> Self {
        let repetitions = params.default_repetitions();
        Self { params, seed: 42, repetitions, output_dir: None }
    }

    pub fn default_for(name: &str) -> Result<Self> {
        ExperimentParams::default_for(name).map(Self::new)
    }

    pub fn experiment(&self) -> &'static str {
        self.params.name()
    }

    /// Parses a bare config or the stamped `config.json` written next to a
    /// run's outputs.
    pub fn from_json(text: &str) -> Result<Self> {
        let value = match serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))? {
            serde_json::Value::Object(mut m) if m.contains_key("config_hash") && !m.contains_key("experiment") => {
                m.remove("config").unwrap_or_default()
            }
            v => v,
        };
        serde_json::from_value(value).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    /// Compact JSON with sorted keys and without `output_dir`.
    pub fn canonical_json(&self) -> String {
        let mut hashed = self.clone();
        hashed.output_dir = None;
        // Value maps are ordered by key, which makes the text canonical.
        let value = serde_json::to_value(&hashed).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Directory name of this run under the output root.
    pub fn run_dir_name(&self) -> String {
        format!("{}-{}", self.experiment(), &self.hash()[..16])
    }
}
