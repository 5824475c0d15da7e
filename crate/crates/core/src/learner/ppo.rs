//! Clipped-surrogate policy optimisation with Adam.
//!
//! The loss per sample is
//! `-min(r*A, clip(r, 1-e, 1+e)*A) + c_v*(V - R)^2 - c_e*H`
//! where `r` is the new/old probability ratio of the taken action, `A` the
//! (batch-normalised) advantage, `R` the return target, and `H` the entropy
//! of the masked action distribution. Gradients are analytic; the
//! finite-difference tests pin them down.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::policy::{masked_softmax, ActionMask, PolicyBundle};
use super::trainer::TrainConfig;
use super::TrainError;
use crate::num::Scalar;

/// One decision point ready for an update.
#[derive(Debug, Clone)]
pub struct Sample<S> {
    pub obs: Vec<S>,
    pub mask: ActionMask,
    pub action: usize,
    pub logp_old: S,
    pub advantage: S,
    pub ret: S,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub n_samples: usize,
}

pub struct Adam<S> {
    m: Vec<S>,
    v: Vec<S>,
    t: u64,
    pub learning_rate: S,
    beta1: S,
    beta2: S,
    epsilon: S,
}

impl<S: Scalar> Adam<S> {
    pub fn new(n_params: usize, learning_rate: S) -> Self {
        Adam {
            m: vec![S::zero(); n_params],
            v: vec![S::zero(); n_params],
            t: 0,
            learning_rate,
            beta1: S::from_f(0.9),
            beta2: S::from_f(0.999),
            epsilon: S::from_f(1e-8),
        }
    }

    pub fn step(&mut self, params: &mut [S], grad: &[S]) {
        self.t += 1;
        let b1t = self.beta1.powi(self.t as i32);
        let b2t = self.beta2.powi(self.t as i32);
        let one = S::one();
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / (one - b1t);
            let v_hat = self.v[i] / (one - b2t);
            params[i] = params[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    pub fn state(&self) -> (Vec<f64>, Vec<f64>, u64) {
        (
            self.m.iter().map(|x| x.to_f()).collect(),
            self.v.iter().map(|x| x.to_f()).collect(),
            self.t,
        )
    }

    pub fn restore(&mut self, m: &[f64], v: &[f64], t: u64) {
        self.m = m.iter().map(|&x| S::from_f(x)).collect();
        self.v = v.iter().map(|&x| S::from_f(x)).collect();
        self.t = t;
    }
}

/// Mean loss over `samples` exactly as optimised by [`ppo_update`] (without
/// advantage normalisation, which happens before batching).
pub fn ppo_loss<S: Scalar>(
    policy: &PolicyBundle<S>,
    samples: &[Sample<S>],
    cfg: &TrainConfig,
) -> Result<S, TrainError> {
    let (loss, _, _) = loss_and_grad(policy, samples, cfg, false)?;
    Ok(loss)
}

/// Mean loss plus its analytic parameter gradient; the second route for
/// finite-difference verification.
pub fn ppo_loss_and_grad<S: Scalar>(
    policy: &PolicyBundle<S>,
    samples: &[Sample<S>],
    cfg: &TrainConfig,
) -> Result<(S, Vec<S>, PpoStats), TrainError> {
    loss_and_grad(policy, samples, cfg, true)
}

fn loss_and_grad<S: Scalar>(
    policy: &PolicyBundle<S>,
    samples: &[Sample<S>],
    cfg: &TrainConfig,
    want_grad: bool,
) -> Result<(S, Vec<S>, PpoStats), TrainError> {
    let n = samples.len().max(1);
    let scale = S::from_f(1.0 / n as f64);
    let clip = S::from_f(cfg.clip_epsilon);
    let c_v = S::from_f(cfg.value_coef);
    let c_e = S::from_f(cfg.entropy_coef);
    let one = S::one();

    let mut grad = vec![S::zero(); if want_grad { policy.net.n_params() } else { 0 }];
    let mut total = S::zero();
    let mut stats = PpoStats { n_samples: samples.len(), ..PpoStats::default() };

    for sample in samples {
        let cache = policy.forward_cached(&sample.obs);
        let head = sample.mask.head();
        let legal = sample.mask.legal();
        let logits = &cache.head_outputs[head];
        let probs =
            masked_softmax(logits, legal).map_err(|_| TrainError::AllActionsMasked { head })?;
        let p_a = probs[sample.action];
        let logp_new = p_a.max(S::from_f(1e-300)).ln();
        let ratio = (logp_new - sample.logp_old).exp();
        let advantage = sample.advantage;

        let unclipped = ratio * advantage;
        let clipped = ratio.max(one - clip).min(one + clip) * advantage;
        let use_unclipped = unclipped <= clipped;
        let surrogate = if use_unclipped { unclipped } else { clipped };
        if !use_unclipped {
            stats.clip_fraction += 1.0;
        }

        let value = cache.head_outputs[2][0];
        let v_err = value - sample.ret;
        let value_loss = c_v * v_err * v_err;

        let mut entropy = S::zero();
        for (i, &p) in probs.iter().enumerate() {
            if legal[i] && p > S::zero() {
                entropy -= p * p.ln();
            }
        }

        let sample_loss = -surrogate + value_loss - c_e * entropy;
        total += sample_loss * scale;
        stats.policy_loss += (-surrogate).to_f();
        stats.value_loss += value_loss.to_f();
        stats.entropy += entropy.to_f();

        if want_grad {
            // d loss / d logits of the selected head
            let mut d_logits = vec![S::zero(); logits.len()];
            for (k, &p_k) in probs.iter().enumerate() {
                if !legal[k] {
                    continue;
                }
                let indicator = if k == sample.action { one } else { S::zero() };
                let mut g = S::zero();
                if use_unclipped {
                    g -= advantage * ratio * (indicator - p_k);
                }
                if p_k > S::zero() {
                    g += c_e * p_k * (p_k.ln() + entropy);
                }
                d_logits[k] = g * scale;
            }
            let d_value = S::from_f(2.0) * c_v * v_err * scale;

            let mut head_grads = vec![
                vec![S::zero(); cache.head_outputs[0].len()],
                vec![S::zero(); cache.head_outputs[1].len()],
                vec![S::zero(); 1],
            ];
            head_grads[head] = d_logits;
            head_grads[2][0] = d_value;
            policy.net.backward(&cache, &head_grads, &mut grad);
        }
    }

    let n_f = n as f64;
    stats.policy_loss /= n_f;
    stats.value_loss /= n_f;
    stats.entropy /= n_f;
    stats.clip_fraction /= n_f;
    Ok((total, grad, stats))
}

/// Normalises advantages, then runs minibatch Adam epochs over the samples.
pub fn ppo_update<S: Scalar>(
    policy: &mut PolicyBundle<S>,
    adam: &mut Adam<S>,
    mut samples: Vec<Sample<S>>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats, TrainError> {
    if samples.is_empty() {
        return Ok(PpoStats::default());
    }
    let n = samples.len();
    let mean = samples.iter().map(|s| s.advantage).sum::<S>() / S::from_f(n as f64);
    let var = samples.iter().map(|s| (s.advantage - mean) * (s.advantage - mean)).sum::<S>()
        / S::from_f(n as f64);
    let std = var.sqrt() + S::from_f(cfg.advantage_epsilon);
    for s in &mut samples {
        s.advantage = (s.advantage - mean) / std;
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut accumulated = PpoStats { n_samples: n, ..PpoStats::default() };
    let mut batches = 0usize;
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch.max(1)) {
            let batch: Vec<Sample<S>> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (loss, grad, stats) = loss_and_grad(policy, &batch, cfg, true)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite {
                    what: "gradient",
                    context: format!("batch of {} samples", batch.len()),
                });
            }
            adam.step(&mut policy.net.params, &grad);
            accumulated.policy_loss += stats.policy_loss;
            accumulated.value_loss += stats.value_loss;
            accumulated.entropy += stats.entropy;
            accumulated.clip_fraction += stats.clip_fraction;
            batches += 1;
        }
    }
    if batches > 0 {
        let b = batches as f64;
        accumulated.policy_loss /= b;
        accumulated.value_loss /= b;
        accumulated.entropy /= b;
        accumulated.clip_fraction /= b;
    }
    Ok(accumulated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn toy_policy(seed: u64) -> PolicyBundle<f64> {
        PolicyBundle::new(5, &[6], &mut rng::stream(seed, "ppo-test", 0))
    }

    fn cfg(entropy: f64, value: f64) -> TrainConfig {
        TrainConfig {
            entropy_coef: entropy,
            value_coef: value,
            clip_epsilon: 0.2,
            ..TrainConfig::default()
        }
    }

    fn random_samples(policy: &PolicyBundle<f64>, n: usize, seed: u64) -> Vec<Sample<f64>> {
        let mut rng = rng::stream(seed, "ppo-samples", 0);
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mask = if rng.gen_bool(0.5) {
                    ActionMask::Payment([true, true, rng.gen_bool(0.5)])
                } else {
                    ActionMask::Relief([true, true])
                };
                let out = policy.forward(&obs, &mask).unwrap();
                let action = super::super::policy::sample_index(&out.probs, &mut rng);
                Sample {
                    obs,
                    mask,
                    action,
                    logp_old: out.probs[action].ln() + rng.gen_range(-0.1..0.1),
                    advantage: rng.gen_range(-2.0..2.0),
                    ret: rng.gen_range(-1.0..1.0),
                }
            })
            .collect()
    }

    #[test]
    fn zero_advantage_zero_coefs_means_zero_gradient() {
        let policy = toy_policy(1);
        let mut samples = random_samples(&policy, 12, 2);
        for s in &mut samples {
            s.advantage = 0.0;
        }
        let (_, grad, _) = loss_and_grad(&policy, &samples, &cfg(0.0, 0.0), true).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0), "surrogate gradient must vanish");
    }

    #[test]
    fn clipped_samples_contribute_no_policy_gradient() {
        let policy = toy_policy(3);
        let obs = vec![0.1, -0.4, 0.9, 0.0, 0.3];
        let mask = ActionMask::Payment([true, true, true]);
        let out = policy.forward(&obs, &mask).unwrap();
        // logp_old far below the current logp puts the ratio above 1+eps
        let sample = Sample {
            obs,
            mask,
            action: 0,
            logp_old: out.probs[0].ln() - 1.0,
            advantage: 1.5,
            ret: 0.0,
        };
        let (_, grad, stats) =
            loss_and_grad(&policy, &[sample], &cfg(0.0, 0.0), true).unwrap();
        assert_eq!(stats.clip_fraction, 1.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut policy = toy_policy(5);
        let samples = random_samples(&policy, 16, 6);
        let cfg = cfg(0.01, 0.5);
        let (_, grad, _) = loss_and_grad(&policy, &samples, &cfg, true).unwrap();

        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..policy.net.n_params() {
            let orig = policy.net.params[i];
            policy.net.params[i] = orig + h;
            let up = ppo_loss(&policy, &samples, &cfg).unwrap();
            policy.net.params[i] = orig - h;
            let down = ppo_loss(&policy, &samples, &cfg).unwrap();
            policy.net.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(((fd - grad[i]) / denom).abs());
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn illegal_actions_stay_at_zero_probability_after_updates() {
        let mut policy = toy_policy(21);
        let samples = random_samples(&policy, 48, 22);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 3,
            minibatch: 16,
            ..TrainConfig::default()
        };
        let mut adam = Adam::new(policy.net.n_params(), cfg.learning_rate);
        let mut rng = rng::stream(23, "ppo-mask-inv", 0);
        for _ in 0..5 {
            let batch = samples.clone();
            ppo_update(&mut policy, &mut adam, batch, &cfg, &mut rng).unwrap();
            let obs = vec![0.3, -0.2, 0.8, 0.1, -0.5];
            let out = policy.forward(&obs, &ActionMask::Payment([true, true, false])).unwrap();
            assert_eq!(out.probs[2], 0.0);
            let out = policy.forward(&obs, &ActionMask::Relief([true, false])).unwrap();
            assert_eq!(out.probs[1], 0.0);
            assert_eq!(out.probs[0], 1.0);
        }
    }

    #[test]
    fn update_improves_the_surrogate_on_a_fixed_batch() {
        let mut policy = toy_policy(9);
        let samples = random_samples(&policy, 64, 10);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 1,
            minibatch: 64,
            entropy_coef: 0.0,
            value_coef: 0.5,
            ..TrainConfig::default()
        };
        // normalized copy for a fair before/after comparison
        let mut normalized = samples.clone();
        let mean = normalized.iter().map(|s| s.advantage).sum::<f64>() / normalized.len() as f64;
        let var = normalized.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>()
            / normalized.len() as f64;
        for s in &mut normalized {
            s.advantage = (s.advantage - mean) / (var.sqrt() + 1e-8);
        }
        let before = ppo_loss(&policy, &normalized, &cfg).unwrap();
        let mut adam = Adam::new(policy.net.n_params(), cfg.learning_rate);
        let mut rng = rng::stream(11, "ppo-update", 0);
        ppo_update(&mut policy, &mut adam, samples, &cfg, &mut rng).unwrap();
        let after = ppo_loss(&policy, &normalized, &cfg).unwrap();
        assert!(after < before, "loss {before} -> {after}");
    }
}
