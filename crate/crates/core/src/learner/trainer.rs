//! Rollout collection and the outer training loop.
//!
//! Each rollout is a fresh world: a newly sampled population and a product
//! drawn from the configured source, so the policy generalises across both
//! borrowers and products. Decision points (payment, and relief when
//! offered) form the trajectory; the monthly utility lands on the month's
//! last decision, and rewards accruing after an account goes terminal are
//! discounted into its final transition.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gae::gae;
use super::policy::{sample_index, ActionMask, PolicyBundle};
use super::ppo::{ppo_update, Adam, Sample};
use super::TrainError;
use crate::borrower::{Observation, PaymentAction, ReliefAction, OBS_DIM};
use crate::metrics;
use crate::outer::OuterTheta;
use crate::population::{GammaMode, PopulationCalibration};
use crate::products::ScaledProductParams;
use crate::rng;
use crate::servicing::ReliefOffer;
use crate::sim::{Decider, EpisodeTrace, ProductSpec, World, WorldConfig};
use crate::Real;

fn default_iterations() -> u32 {
    500
}
fn default_rollouts() -> u32 {
    10
}
fn default_discount() -> f64 {
    0.99
}
fn default_gae_lambda() -> f64 {
    0.95
}
fn default_clip_epsilon() -> f64 {
    0.2
}
fn default_learning_rate() -> f64 {
    3e-4
}
fn default_minibatch() -> usize {
    2048
}
fn default_epochs() -> u32 {
    4
}
fn default_entropy_coef() -> f64 {
    0.01
}
fn default_value_coef() -> f64 {
    0.5
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_advantage_epsilon() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default = "default_rollouts")]
    pub rollouts: u32,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_gae_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "default_clip_epsilon")]
    pub clip_epsilon: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_entropy_coef")]
    pub entropy_coef: f64,
    #[serde(default = "default_value_coef")]
    pub value_coef: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_advantage_epsilon")]
    pub advantage_epsilon: f64,
    /// Collect rollouts on the thread pool; results are merged in rollout
    /// order so this does not affect determinism.
    #[serde(default)]
    pub parallel_rollouts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: default_iterations(),
            rollouts: default_rollouts(),
            discount: default_discount(),
            gae_lambda: default_gae_lambda(),
            clip_epsilon: default_clip_epsilon(),
            learning_rate: default_learning_rate(),
            minibatch: default_minibatch(),
            epochs: default_epochs(),
            entropy_coef: default_entropy_coef(),
            value_coef: default_value_coef(),
            hidden: default_hidden(),
            advantage_epsilon: default_advantage_epsilon(),
            parallel_rollouts: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.discount) && self.discount != 1.0 {
            return Err(format!("discount {} outside (0, 1]", self.discount));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda {} outside [0, 1]", self.gae_lambda));
        }
        if self.clip_epsilon <= 0.0 || self.learning_rate <= 0.0 {
            return Err("clip_epsilon and learning_rate must be positive".into());
        }
        if self.minibatch == 0 || self.epochs == 0 || self.rollouts == 0 {
            return Err("minibatch, epochs, and rollouts must be positive".into());
        }
        Ok(())
    }
}

/// One decision point in a trajectory.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<Real>,
    pub mask: ActionMask,
    pub action: usize,
    pub logp: Real,
    pub value: Real,
    pub reward: Real,
    pub done: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    /// Value of the truncated final state; zero when the account ended.
    pub bootstrap_value: Real,
}

/// Scalar summary of one collected episode.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub mean_reward: f64,
    pub delinquency_rate: f64,
    pub social_index: f64,
    pub mean_cost_dollars: f64,
    pub enrollment_rate: f64,
}

#[derive(Debug, Default)]
pub struct RolloutBatch {
    pub trajectories: Vec<Trajectory>,
    pub stats: EpisodeStats,
}

/// An episode source the trainer can collect from.
pub trait RolloutEnv: Sync {
    fn obs_dim(&self) -> usize;

    fn collect(
        &self,
        policy: &PolicyBundle<Real>,
        rng: &mut ChaCha8Rng,
    ) -> Result<RolloutBatch, TrainError>;
}

/// Where episode products come from during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProductSource {
    /// The same product every rollout.
    Fixed(ProductSpec),
    /// Uniform over the scaled-parameter box, with an explicit null-product
    /// mix-in so the no-product baseline stays in distribution.
    Box { null_probability: f64 },
    /// Draws from an outer-layer distribution.
    Theta(OuterTheta),
}

impl ProductSource {
    pub fn sample(&self, episode_months: u32, rng: &mut ChaCha8Rng) -> ProductSpec {
        match self {
            ProductSource::Fixed(spec) => spec.clone(),
            ProductSource::Box { null_probability } => {
                if rng.gen::<f64>() < *null_probability {
                    ProductSpec::scaled(ScaledProductParams::NULL)
                } else {
                    ProductSpec::scaled(OuterTheta::full_box(episode_months).sample(rng))
                }
            }
            ProductSource::Theta(theta) => ProductSpec::scaled(theta.sample(rng)),
        }
    }
}

/// Samples actions from the policy and records every decision point.
pub struct PolicyDecider<'a> {
    pub policy: &'a PolicyBundle<Real>,
    pub rng: ChaCha8Rng,
    records: Vec<DecisionRecord>,
}

#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub borrower: usize,
    pub obs: Vec<Real>,
    pub mask: ActionMask,
    pub action: usize,
    pub logp: Real,
    pub value: Real,
}

impl<'a> PolicyDecider<'a> {
    pub fn new(policy: &'a PolicyBundle<Real>, rng: ChaCha8Rng) -> Self {
        PolicyDecider { policy, rng, records: Vec::new() }
    }

    pub fn drain_records(&mut self) -> Vec<DecisionRecord> {
        std::mem::take(&mut self.records)
    }

    fn decide(&mut self, borrower: usize, obs: &Observation, mask: ActionMask) -> usize {
        let out = self.policy.forward(obs.as_slice(), &mask).expect("mask has a legal action");
        let action = sample_index(&out.probs, &mut self.rng);
        self.records.push(DecisionRecord {
            borrower,
            obs: obs.0.clone(),
            mask,
            action,
            logp: out.probs[action].max(1e-300).ln(),
            value: out.value,
        });
        action
    }
}

impl Decider for PolicyDecider<'_> {
    fn decide_payment(&mut self, borrower: usize, obs: &Observation, mask: [bool; 3]) -> PaymentAction {
        let action = self.decide(borrower, obs, ActionMask::Payment(mask));
        PaymentAction::from_index(action).expect("payment index")
    }

    fn decide_relief(
        &mut self,
        borrower: usize,
        obs: &Observation,
        _offer: &ReliefOffer,
        mask: [bool; 2],
    ) -> ReliefAction {
        let action = self.decide(borrower, obs, ActionMask::Relief(mask));
        ReliefAction::from_index(action).expect("relief index")
    }
}

struct TrajectoryBuilder {
    steps: Vec<Transition>,
    month_decisions: usize,
    terminal: bool,
    months_since_terminal: i32,
    discount: f64,
    bootstrap_value: Real,
}

impl TrajectoryBuilder {
    fn new(discount: f64) -> Self {
        TrajectoryBuilder {
            steps: Vec::new(),
            month_decisions: 0,
            terminal: false,
            months_since_terminal: 0,
            discount,
            bootstrap_value: 0.0,
        }
    }

    fn push_decision(&mut self, rec: DecisionRecord) {
        self.steps.push(Transition {
            obs: rec.obs,
            mask: rec.mask,
            action: rec.action,
            logp: rec.logp,
            value: rec.value,
            reward: 0.0,
            done: false,
        });
        self.month_decisions += 1;
    }

    /// The monthly reward lands on the month's last decision; rewards after
    /// the account went terminal fold into the final transition discounted.
    fn end_month(&mut self, reward: f64, terminal_now: bool) {
        if self.month_decisions > 0 {
            let last = self.steps.last_mut().expect("decisions recorded");
            last.reward += reward;
            if terminal_now {
                last.done = true;
                self.terminal = true;
                self.months_since_terminal = 0;
            }
        } else if self.terminal {
            if let Some(last) = self.steps.last_mut() {
                self.months_since_terminal += 1;
                last.reward += self.discount.powi(self.months_since_terminal) * reward;
            }
        }
        self.month_decisions = 0;
    }

    fn finish(self) -> Trajectory {
        Trajectory { steps: self.steps, bootstrap_value: self.bootstrap_value }
    }
}

/// Simulation-backed rollout source: fresh population and product each
/// episode.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub world_cfg: WorldConfig,
    pub calibration: PopulationCalibration,
    pub n_borrowers: usize,
    pub gamma: GammaMode,
    pub product_source: ProductSource,
    pub discount: f64,
}

impl SimEnv {
    /// Runs one policy-driven episode and also returns its trace.
    pub fn run_episode(
        &self,
        policy: &PolicyBundle<Real>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<Trajectory>, EpisodeTrace), TrainError> {
        let product = self.product_source.sample(self.world_cfg.episode_months, rng);
        let mut world = World::from_calibration(
            self.world_cfg.clone(),
            &self.calibration,
            self.n_borrowers,
            self.gamma,
            product,
            rng,
        );
        let decider_rng = ChaCha8Rng::seed_from_u64(rng.gen::<u64>());
        let mut decider = PolicyDecider::new(policy, decider_rng);
        let n = world.borrowers.len();
        let mut builders: Vec<TrajectoryBuilder> =
            (0..n).map(|_| TrajectoryBuilder::new(self.discount)).collect();

        while !world.done() {
            let report = world.step(&mut decider, rng)?;
            for rec in decider.drain_records() {
                builders[rec.borrower].push_decision(rec);
            }
            for (i, builder) in builders.iter_mut().enumerate() {
                builder.end_month(report.rewards[i], report.flags[i].terminal);
            }
        }
        for (i, builder) in builders.iter_mut().enumerate() {
            if !world.borrowers[i].account.status.is_terminal() {
                builder.bootstrap_value = policy.value(world.observe_borrower(i).as_slice());
            }
        }
        let trace = world.into_trace();
        let trajectories: Vec<Trajectory> = builders
            .into_iter()
            .map(TrajectoryBuilder::finish)
            .filter(|t| !t.steps.is_empty())
            .collect();
        Ok((trajectories, trace))
    }
}

fn episode_stats(trace: &EpisodeTrace) -> EpisodeStats {
    let rates = metrics::delinquency_rate(trace);
    let social = metrics::social_index(&rates.by_group).unwrap_or(rates.overall);
    let cost = metrics::product_cost(trace)
        .map(|c| c.aggregate_dollars())
        .unwrap_or(f64::NAN);
    let n = trace.n_borrowers.max(1);
    let mut enrolled = std::collections::BTreeSet::new();
    let mut reward_sum = 0.0;
    for row in &trace.rows {
        if row.enrolled {
            enrolled.insert(row.borrower);
        }
        reward_sum += row.reward;
    }
    EpisodeStats {
        mean_reward: reward_sum / trace.rows.len().max(1) as f64,
        delinquency_rate: rates.overall,
        social_index: social,
        mean_cost_dollars: cost,
        enrollment_rate: enrolled.len() as f64 / n as f64,
    }
}

impl RolloutEnv for SimEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn collect(
        &self,
        policy: &PolicyBundle<Real>,
        rng: &mut ChaCha8Rng,
    ) -> Result<RolloutBatch, TrainError> {
        let (trajectories, trace) = self.run_episode(policy, rng)?;
        Ok(RolloutBatch { trajectories, stats: episode_stats(&trace) })
    }
}

/// Per-iteration scalars written to the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: u32,
    pub mean_reward: f64,
    pub delinquency_rate: f64,
    pub social_index: f64,
    pub mean_cost_dollars: f64,
    pub enrollment_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub transitions: usize,
}

/// Policy, optimiser, and the per-iteration schedule.
pub struct Trainer {
    pub policy: PolicyBundle<Real>,
    pub adam: Adam<Real>,
    pub cfg: TrainConfig,
    pub master_seed: u64,
}

impl Trainer {
    pub fn new(obs_dim: usize, cfg: TrainConfig, master_seed: u64) -> Self {
        let mut init_rng = rng::stream(master_seed, "policy-init", 0);
        let policy = PolicyBundle::new(obs_dim, &cfg.hidden, &mut init_rng);
        let adam = Adam::new(policy.net.n_params(), cfg.learning_rate);
        Trainer { policy, adam, cfg, master_seed }
    }

    /// Collects rollouts, runs one PPO update, and reports iteration stats.
    pub fn run_iteration<E: RolloutEnv>(
        &mut self,
        env: &E,
        iteration: u32,
    ) -> Result<IterationRow, TrainError> {
        let rollout_index = |r: u32| -> u64 {
            u64::from(iteration) * u64::from(self.cfg.rollouts) + u64::from(r)
        };
        let batches: Result<Vec<RolloutBatch>, TrainError> = if self.cfg.parallel_rollouts {
            (0..self.cfg.rollouts)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng::stream(self.master_seed, "rollout", rollout_index(r));
                    env.collect(&self.policy, &mut rng)
                })
                .collect()
        } else {
            (0..self.cfg.rollouts)
                .map(|r| {
                    let mut rng = rng::stream(self.master_seed, "rollout", rollout_index(r));
                    env.collect(&self.policy, &mut rng)
                })
                .collect()
        };
        let batches = batches?;

        let discount = self.cfg.discount;
        let lambda = self.cfg.gae_lambda;
        let mut samples = Vec::new();
        for batch in &batches {
            for traj in &batch.trajectories {
                let rewards: Vec<Real> = traj.steps.iter().map(|s| s.reward).collect();
                let mut values: Vec<Real> = traj.steps.iter().map(|s| s.value).collect();
                values.push(traj.bootstrap_value);
                let dones: Vec<bool> = traj.steps.iter().map(|s| s.done).collect();
                let advantages = gae(&rewards, &values, &dones, discount, lambda)?;
                for (t, step) in traj.steps.iter().enumerate() {
                    samples.push(Sample {
                        obs: step.obs.clone(),
                        mask: step.mask,
                        action: step.action,
                        logp_old: step.logp,
                        advantage: advantages[t],
                        ret: advantages[t] + step.value,
                    });
                }
            }
        }
        let transitions = samples.len();

        let mut shuffle_rng = rng::stream(self.master_seed, "ppo-shuffle", u64::from(iteration));
        let stats =
            ppo_update(&mut self.policy, &mut self.adam, samples, &self.cfg, &mut shuffle_rng)?;

        let k = batches.len().max(1) as f64;
        let mean = |f: fn(&EpisodeStats) -> f64| batches.iter().map(|b| f(&b.stats)).sum::<f64>() / k;
        Ok(IterationRow {
            iteration,
            mean_reward: mean(|s| s.mean_reward),
            delinquency_rate: mean(|s| s.delinquency_rate),
            social_index: mean(|s| s.social_index),
            mean_cost_dollars: mean(|s| s.mean_cost_dollars),
            enrollment_rate: mean(|s| s.enrollment_rate),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            transitions,
        })
    }
}

/// Runs the full training schedule, invoking `on_iteration` after each
/// update (for logging and checkpointing).
pub fn train<E: RolloutEnv>(
    env: &E,
    cfg: TrainConfig,
    master_seed: u64,
    mut on_iteration: impl FnMut(&IterationRow, &PolicyBundle<Real>),
) -> Result<(Trainer, Vec<IterationRow>), TrainError> {
    let mut trainer = Trainer::new(env.obs_dim(), cfg, master_seed);
    let mut rows = Vec::with_capacity(trainer.cfg.iterations as usize);
    for iteration in 0..trainer.cfg.iterations {
        let row = trainer.run_iteration(env, iteration)?;
        on_iteration(&row, &trainer.policy);
        rows.push(row);
    }
    Ok((trainer, rows))
}
