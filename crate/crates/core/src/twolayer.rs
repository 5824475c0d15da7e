//! The two-layer loop: inner policy learning, outer product-distribution
//! adaptation.
//!
//! Each iteration samples products from the current theta for every rollout,
//! updates the policy on the collected traces, scores theta by the chosen
//! loss over those same traces, and (in adaptive mode) applies one bounded
//! theta adjustment. Fixed mode keeps theta constant and the loop reduces to
//! plain product-conditioned training with logging.
//!
//! State checkpoints after every iteration; because all randomness is
//! derived statelessly from (master seed, stream, iteration), a resumed run
//! continues bit-identically.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{
    Checkpoint, IterationRow, ProductSource, SimEnv, TrainConfig, TrainError, Trainer,
};
use crate::outer::{outer_update, OuterOptConfig, OuterTheta};
use crate::rng;

#[derive(Debug, Error)]
pub enum TwoLayerError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint fingerprint {found} does not match configuration {expected}")]
    FingerprintMismatch { found: String, expected: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterMode {
    Fixed,
    Adaptive,
}

/// What the outer layer minimises, computed over each iteration's rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SocialIndex,
    DelinquencyRate,
    AggregateCostDollars,
}

impl LossKind {
    pub fn from_row(&self, row: &IterationRow) -> f64 {
        match self {
            LossKind::SocialIndex => row.social_index,
            LossKind::DelinquencyRate => row.delinquency_rate,
            LossKind::AggregateCostDollars => row.mean_cost_dollars,
        }
    }
}

fn default_update_period() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerConfig {
    pub mode: OuterMode,
    pub loss: LossKind,
    pub iterations: u32,
    /// Outer updates fire every this many iterations (the slower timescale).
    #[serde(default = "default_update_period")]
    pub outer_update_period: u32,
    #[serde(default)]
    pub outer_opt: OuterOptConfig,
}

impl Default for TwoLayerConfig {
    fn default() -> Self {
        TwoLayerConfig {
            mode: OuterMode::Adaptive,
            loss: LossKind::SocialIndex,
            iterations: 200,
            outer_update_period: 1,
            outer_opt: OuterOptConfig::default(),
        }
    }
}

/// One log row: the theta in force plus the iteration's metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerRow {
    pub iteration: u32,
    pub p0_center: f64,
    pub p0_half_width: f64,
    pub p_center: f64,
    pub p_half_width: f64,
    pub v_center: f64,
    pub v_half_width: f64,
    pub loss: f64,
    pub best_loss: f64,
    pub mean_reward: f64,
    pub delinquency_rate: f64,
    pub social_index: f64,
    pub mean_cost_dollars: f64,
    pub enrollment_rate: f64,
}

pub const TWO_LAYER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoLayerCheckpoint {
    pub format_version: u32,
    pub config_fingerprint: String,
    pub master_seed: u64,
    pub next_iteration: u32,
    pub policy: Checkpoint,
    pub theta: OuterTheta,
    pub history: Vec<(OuterTheta, f64)>,
    pub rows: Vec<TwoLayerRow>,
}

impl TwoLayerCheckpoint {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, json + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<TwoLayerCheckpoint> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub struct TwoLayerOutcome {
    pub trainer: Trainer,
    pub theta: OuterTheta,
    pub rows: Vec<TwoLayerRow>,
}

impl fmt::Debug for TwoLayerOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoLayerOutcome")
            .field("theta", &self.theta)
            .field("rows", &self.rows.len())
            .finish_non_exhaustive()
    }
}

fn theta_row(theta: &OuterTheta, row: &IterationRow, loss: f64, best: f64) -> TwoLayerRow {
    TwoLayerRow {
        iteration: row.iteration,
        p0_center: theta.p0.center,
        p0_half_width: theta.p0.half_width,
        p_center: theta.p.center,
        p_half_width: theta.p.half_width,
        v_center: theta.v.center,
        v_half_width: theta.v.half_width,
        loss,
        best_loss: best,
        mean_reward: row.mean_reward,
        delinquency_rate: row.delinquency_rate,
        social_index: row.social_index,
        mean_cost_dollars: row.mean_cost_dollars,
        enrollment_rate: row.enrollment_rate,
    }
}

/// Runs (or resumes) the two-layer schedule.
///
/// `iteration_budget` caps how many new iterations this invocation may run,
/// so long schedules can be executed in checkpointed chunks.
#[allow(clippy::too_many_arguments)]
pub fn run_two_layer(
    env_base: &SimEnv,
    train_cfg: &TrainConfig,
    cfg: &TwoLayerConfig,
    theta0: OuterTheta,
    master_seed: u64,
    config_fingerprint: &str,
    config_json: &str,
    checkpoint_path: Option<&Path>,
    resume: bool,
    iteration_budget: Option<u32>,
) -> Result<TwoLayerOutcome, TwoLayerError> {
    let mut trainer;
    let mut theta;
    let mut history: Vec<(OuterTheta, f64)>;
    let mut rows: Vec<TwoLayerRow>;
    let start: u32;

    let existing = checkpoint_path.filter(|p| resume && p.exists());
    if let Some(path) = existing {
        let ckpt = TwoLayerCheckpoint::load(path)?;
        if ckpt.config_fingerprint != config_fingerprint {
            return Err(TwoLayerError::FingerprintMismatch {
                found: ckpt.config_fingerprint,
                expected: config_fingerprint.to_string(),
            });
        }
        trainer = ckpt.policy.trainer(train_cfg.clone());
        theta = ckpt.theta;
        history = ckpt.history;
        rows = ckpt.rows;
        start = ckpt.next_iteration;
    } else {
        trainer = Trainer::new(crate::borrower::OBS_DIM, train_cfg.clone(), master_seed);
        theta = theta0;
        history = Vec::new();
        rows = Vec::new();
        start = 0;
    }

    let end = match iteration_budget {
        Some(budget) => cfg.iterations.min(start.saturating_add(budget)),
        None => cfg.iterations,
    };
    for iteration in start..end {
        let env = SimEnv { product_source: ProductSource::Theta(theta), ..env_base.clone() };
        let row = trainer.run_iteration(&env, iteration)?;
        let loss = cfg.loss.from_row(&row);
        history.push((theta, loss));
        let best = history.iter().map(|&(_, l)| l).fold(f64::INFINITY, f64::min);
        rows.push(theta_row(&theta, &row, loss, best));

        if cfg.mode == OuterMode::Adaptive && (iteration + 1) % cfg.outer_update_period.max(1) == 0
        {
            let mut outer_rng = rng::stream(master_seed, "outer", u64::from(iteration));
            let action = outer_update(&theta, &history, &cfg.outer_opt, &mut outer_rng);
            theta = theta.apply(&action, &cfg.outer_opt);
        }

        if let Some(path) = checkpoint_path {
            let ckpt = TwoLayerCheckpoint {
                format_version: TWO_LAYER_FORMAT_VERSION,
                config_fingerprint: config_fingerprint.to_string(),
                master_seed,
                next_iteration: iteration + 1,
                policy: Checkpoint::from_trainer(
                    &trainer,
                    config_fingerprint.to_string(),
                    config_json.to_string(),
                    iteration + 1,
                ),
                theta,
                history: history.clone(),
                rows: rows.clone(),
            };
            ckpt.save(path)?;
        }
    }

    Ok(TwoLayerOutcome { trainer, theta, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{GammaMode, PopulationCalibration};
    use crate::sim::WorldConfig;
    use tempfile::tempdir;

    fn tiny_env() -> SimEnv {
        SimEnv {
            world_cfg: WorldConfig { episode_months: 8, ..WorldConfig::default() },
            calibration: PopulationCalibration::bundled_default(),
            n_borrowers: 5,
            gamma: GammaMode::Uniform,
            product_source: ProductSource::Box { null_probability: 0.1 },
            discount: 0.99,
        }
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig {
            rollouts: 2,
            minibatch: 512,
            epochs: 1,
            hidden: vec![8],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn fixed_mode_keeps_theta_constant() {
        let cfg = TwoLayerConfig {
            mode: OuterMode::Fixed,
            iterations: 3,
            ..TwoLayerConfig::default()
        };
        let theta0 = OuterTheta::full_box(8);
        let out = run_two_layer(
            &tiny_env(),
            &tiny_train(),
            &cfg,
            theta0,
            17,
            "fp",
            "{}",
            None,
            false,
            None,
        )
        .unwrap();
        assert_eq!(out.rows.len(), 3);
        for row in &out.rows {
            assert_eq!(row.p0_center, theta0.p0.center);
            assert_eq!(row.v_half_width, theta0.v.half_width);
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("two_layer.json");
        let env = tiny_env();
        let train_cfg = tiny_train();
        let theta0 = OuterTheta::full_box(8);

        let full_cfg = TwoLayerConfig { iterations: 4, ..TwoLayerConfig::default() };
        let full = run_two_layer(
            &env, &train_cfg, &full_cfg, theta0, 23, "fp", "{}", None, false, None,
        )
        .unwrap();

        // interrupt after two iterations, then resume to completion
        run_two_layer(
            &env, &train_cfg, &full_cfg, theta0, 23, "fp", "{}", Some(&path), false, Some(2),
        )
        .unwrap();
        let resumed = run_two_layer(
            &env, &train_cfg, &full_cfg, theta0, 23, "fp", "{}", Some(&path), true, None,
        )
        .unwrap();

        assert_eq!(resumed.rows, full.rows);
        assert_eq!(resumed.trainer.policy.net.params, full.trainer.policy.net.params);

        // best-so-far loss never increases
        for pair in full.rows.windows(2) {
            assert!(pair[1].best_loss <= pair[0].best_loss);
        }
    }

    #[test]
    fn resume_rejects_other_configs() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("two_layer.json");
        let cfg = TwoLayerConfig { iterations: 1, ..TwoLayerConfig::default() };
        run_two_layer(
            &tiny_env(),
            &tiny_train(),
            &cfg,
            OuterTheta::full_box(8),
            23,
            "fp-a",
            "{}",
            Some(&path),
            false,
            None,
        )
        .unwrap();
        let err = run_two_layer(
            &tiny_env(),
            &tiny_train(),
            &cfg,
            OuterTheta::full_box(8),
            23,
            "fp-b",
            "{}",
            Some(&path),
            true,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, TwoLayerError::FingerprintMismatch { .. }));
    }
}
