//! Policy checkpoints: parameters, optimiser state, and the configuration
//! fingerprint that produced them.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ppo::Adam;
use super::trainer::{TrainConfig, Trainer};
use super::PolicyBundle;
use crate::Real;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Fingerprint of the experiment configuration that trained this policy.
    pub config_fingerprint: String,
    /// The resolved configuration itself, as JSON, so evaluation can rebuild
    /// the world without a separate config file.
    pub config_json: String,
    pub master_seed: u64,
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_t: u64,
    pub iterations_done: u32,
}

impl Checkpoint {
    pub fn from_trainer(
        trainer: &Trainer,
        config_fingerprint: String,
        config_json: String,
        iterations_done: u32,
    ) -> Self {
        let (adam_m, adam_v, adam_t) = trainer.adam.state();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_fingerprint,
            config_json,
            master_seed: trainer.master_seed,
            obs_dim: trainer.policy.obs_dim(),
            hidden: trainer.policy.net.spec.hidden.clone(),
            params: trainer.policy.net.params.clone(),
            adam_m,
            adam_v,
            adam_t,
            iterations_done,
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        fs::write(path, json + "\n")
    }

    pub fn load(path: &Path) -> io::Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn policy(&self) -> PolicyBundle<Real> {
        let mut rng = crate::rng::stream(self.master_seed, "policy-init", 0);
        let mut policy = PolicyBundle::new(self.obs_dim, &self.hidden, &mut rng);
        policy.net.params = self.params.clone();
        policy
    }

    /// Rebuilds a trainer mid-schedule (used by resumable runs).
    pub fn trainer(&self, cfg: TrainConfig) -> Trainer {
        let mut trainer = Trainer::new(self.obs_dim, cfg, self.master_seed);
        trainer.policy.net.params = self.params.clone();
        trainer.adam = Adam::new(self.params.len(), trainer.cfg.learning_rate);
        trainer.adam.restore(&self.adam_m, &self.adam_v, self.adam_t);
        trainer
    }
}
