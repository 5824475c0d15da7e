//! Experiment configuration: one TOML file drives every subcommand.
//!
//! All fields outside the required sections have defaults, configs
//! round-trip losslessly through serde, and a SHA-256 fingerprint of the
//! resolved configuration is embedded in every output artifact so
//! checkpoints and evaluations can refuse mismatched inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::borrower::ObservationConfig;
use crate::economy::ShockConfig;
use crate::eval::EvalConfig;
use crate::learner::{ProductSource, SimEnv, TrainConfig};
use crate::outer::{OuterOptConfig, OuterTheta};
use crate::population::{GammaMode, PopulationCalibration, PopulationError};
use crate::products::ScaledProductParams;
use crate::servicing::ReliefConfig;
use crate::sim::{ProductSpec, ScriptedScope, WorldConfig};
use crate::twolayer::{LossKind, OuterMode, TwoLayerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Population(#[from] PopulationError),
}

fn default_master_seed() -> u64 {
    42
}
fn default_population() -> usize {
    100
}
fn default_episode_months() -> u32 {
    120
}
fn default_foreclosure_impact() -> f64 {
    0.01
}
fn default_hpi_floor() -> f64 {
    1e-6
}
fn default_null_probability() -> f64 {
    0.1
}
fn default_kind() -> String {
    "box".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomySection {
    #[serde(default = "default_foreclosure_impact")]
    pub foreclosure_impact: f64,
    #[serde(default = "default_hpi_floor")]
    pub hpi_floor: f64,
}

impl Default for EconomySection {
    fn default() -> Self {
        EconomySection {
            foreclosure_impact: default_foreclosure_impact(),
            hpi_floor: default_hpi_floor(),
        }
    }
}

/// Training product source: `box` (uniform with a null mix-in), `null`, or
/// `fixed` with explicit scaled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSourceSection {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "default_null_probability")]
    pub null_probability: f64,
    #[serde(default)]
    pub p0: f64,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub forbearance_months: u32,
}

impl Default for ProductSourceSection {
    fn default() -> Self {
        ProductSourceSection {
            kind: default_kind(),
            null_probability: default_null_probability(),
            p0: 0.0,
            p: 0.0,
            v: 0.0,
            forbearance_months: 0,
        }
    }
}

impl ProductSourceSection {
    pub fn to_source(&self, episode_months: u32) -> Result<ProductSource, ConfigError> {
        match self.kind.as_str() {
            "box" => Ok(ProductSource::Box { null_probability: self.null_probability }),
            "null" => Ok(ProductSource::Fixed(ProductSpec::NULL)),
            "fixed" => {
                let params = ScaledProductParams::new(self.p0, self.p, self.v, episode_months)
                    .map_err(|e| ConfigError::Invalid(format!("product_source: {e}")))?;
                Ok(ProductSource::Fixed(ProductSpec::Scaled {
                    params,
                    forbearance_months: self.forbearance_months,
                }))
            }
            other => Err(ConfigError::Invalid(format!(
                "product_source.kind `{other}` is not one of box, null, fixed"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterSection {
    pub mode: OuterMode,
    pub loss: LossKind,
    pub iterations: u32,
    #[serde(default = "default_update_period")]
    pub update_period: u32,
    #[serde(default)]
    pub opt: OuterOptConfig,
}

fn default_update_period() -> u32 {
    1
}

impl Default for OuterSection {
    fn default() -> Self {
        OuterSection {
            mode: OuterMode::Adaptive,
            loss: LossKind::SocialIndex,
            iterations: 200,
            update_period: default_update_period(),
            opt: OuterOptConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    /// Calibration file path; the bundled synthetic default when omitted.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_episode_months")]
    pub episode_months: u32,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub relief: ReliefConfig,
    #[serde(default)]
    pub economy: EconomySection,
    #[serde(default)]
    pub shock: ShockConfig,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub product_source: ProductSourceSection,
    #[serde(default)]
    pub outer: OuterSection,
    #[serde(default)]
    pub evaluation: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: default_master_seed(),
            calibration: None,
            population: default_population(),
            episode_months: default_episode_months(),
            train: TrainConfig::default(),
            relief: ReliefConfig::default(),
            economy: EconomySection::default(),
            shock: ShockConfig::default(),
            observation: ObservationConfig::default(),
            product_source: ProductSourceSection::default(),
            outer: OuterSection::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population == 0 {
            return Err(ConfigError::Invalid("population must be at least 1".into()));
        }
        if self.episode_months == 0 {
            return Err(ConfigError::Invalid("episode_months must be at least 1".into()));
        }
        if let Some(path) = &self.calibration {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!(
                    "calibration file {} does not exist",
                    path.display()
                )));
            }
        }
        self.train.validate().map_err(ConfigError::Invalid)?;
        self.shock
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.product_source.to_source(self.episode_months)?;
        Ok(())
    }

    /// SHA-256 over the resolved configuration; the first 16 hex chars.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text)
            .map_err(|e| ConfigError::Invalid(format!("embedded config: {e}")))
    }

    pub fn load_calibration(&self) -> Result<PopulationCalibration, ConfigError> {
        match &self.calibration {
            Some(path) => Ok(PopulationCalibration::load(path)?),
            None => Ok(PopulationCalibration::bundled_default()),
        }
    }

    /// World configuration for training (stochastic shocks).
    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            episode_months: self.episode_months,
            relief: self.relief,
            shock: self.shock.clone(),
            foreclosure_impact: self.economy.foreclosure_impact,
            hpi_floor: self.economy.hpi_floor,
            observation: self.observation,
            products_enabled: true,
            scripted_scope: ScriptedScope::All,
        }
    }

    pub fn sim_env(&self) -> Result<SimEnv, ConfigError> {
        Ok(SimEnv {
            world_cfg: self.world_config(),
            calibration: self.load_calibration()?,
            n_borrowers: self.population,
            gamma: GammaMode::Uniform,
            product_source: self.product_source.to_source(self.episode_months)?,
            discount: self.train.discount,
        })
    }

    pub fn two_layer_config(&self) -> TwoLayerConfig {
        TwoLayerConfig {
            mode: self.outer.mode,
            loss: self.outer.loss,
            iterations: self.outer.iterations,
            outer_update_period: self.outer.update_period,
            outer_opt: self.outer.opt,
        }
    }

    pub fn initial_theta(&self) -> OuterTheta {
        OuterTheta::full_box(self.episode_months)
    }
}
