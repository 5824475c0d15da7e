//! The product-design layer: parameter-interval distributions and the
//! bounded-step optimiser that adapts them.
//!
//! A distribution over scaled product parameters is three independent
//! uniform intervals, each described by a centre and half-width and clamped
//! into the legal box ([0,1] for the premium and fee multipliers, [0,T] for
//! the cover months). The adaptive layer nudges those intervals with bounded
//! increments, scored by an externally evaluated loss; the default optimiser
//! is a stochastic local search around the best theta seen so far, with a
//! perturbation scale that decays while no improvement arrives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::products::ScaledProductParams;

/// A uniform interval given by centre and half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn new(center: f64, half_width: f64) -> Self {
        Interval { center, half_width }
    }

    /// The interval clamped into `[lo, hi]`; never empty while the centre
    /// is inside the box.
    pub fn clamped(&self, lo: f64, hi: f64) -> (f64, f64) {
        let c = self.center.clamp(lo, hi);
        ((c - self.half_width).max(lo), (c + self.half_width).min(hi))
    }
}

/// The trivariate product-parameter distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterTheta {
    pub p0: Interval,
    pub p: Interval,
    pub v: Interval,
    /// Episode length bounding the cover interval.
    pub horizon: f64,
}

impl OuterTheta {
    /// The whole legal box, matching the fixed layer's uniform distribution.
    pub fn full_box(episode_months: u32) -> Self {
        let horizon = f64::from(episode_months);
        OuterTheta {
            p0: Interval::new(0.5, 0.5),
            p: Interval::new(0.5, 0.5),
            v: Interval::new(horizon / 2.0, horizon / 2.0),
            horizon,
        }
    }

    /// A point mass reproducing one product exactly.
    pub fn dirac(params: ScaledProductParams, episode_months: u32) -> Self {
        OuterTheta {
            p0: Interval::new(params.p0, 0.0),
            p: Interval::new(params.p, 0.0),
            v: Interval::new(params.v, 0.0),
            horizon: f64::from(episode_months),
        }
    }

    pub fn intervals(&self) -> [Interval; 3] {
        [self.p0, self.p, self.v]
    }

    /// (lo, hi) of the legal box for parameter `k`.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        match k {
            0 | 1 => (0.0, 1.0),
            _ => (0.0, self.horizon),
        }
    }

    fn set(&mut self, k: usize, interval: Interval) {
        match k {
            0 => self.p0 = interval,
            1 => self.p = interval,
            _ => self.v = interval,
        }
    }

    /// Independent uniform draws inside the clamped intervals; a zero
    /// half-width reproduces the centre exactly.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ScaledProductParams {
        let mut out = [0.0; 3];
        for (k, interval) in self.intervals().iter().enumerate() {
            let (lo, hi) = self.bounds(k);
            if interval.half_width == 0.0 {
                out[k] = interval.center.clamp(lo, hi);
            } else {
                let (a, b) = interval.clamped(lo, hi);
                let u: f64 = rng.gen();
                out[k] = a + u * (b - a);
            }
        }
        ScaledProductParams { p0: out[0], p: out[1], v: out[2] }
    }

    /// Applies a bounded action, clamping centres into the box and flooring
    /// half-widths.
    pub fn apply(&self, action: &OuterAction, cfg: &OuterOptConfig) -> OuterTheta {
        let mut next = *self;
        for (k, interval) in self.intervals().iter().enumerate() {
            let (lo, hi) = self.bounds(k);
            let range = hi - lo;
            let max_step = cfg.max_step * range;
            let dc = action.d_center[k].clamp(-max_step, max_step);
            let dw = action.d_half_width[k].clamp(-max_step, max_step);
            let center = (interval.center + dc).clamp(lo, hi);
            let floor = cfg.half_width_floor_frac * range;
            let half_width = (interval.half_width + dw).clamp(floor, range);
            next.set(k, Interval::new(center, half_width));
        }
        next
    }
}

/// Bounded increments to every centre and half-width.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OuterAction {
    pub d_center: [f64; 3],
    pub d_half_width: [f64; 3],
}

impl OuterAction {
    /// Largest component in range-normalised units.
    pub fn magnitude(&self, theta: &OuterTheta) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..3 {
            let (lo, hi) = theta.bounds(k);
            let range = hi - lo;
            worst = worst.max(self.d_center[k].abs() / range);
            worst = worst.max(self.d_half_width[k].abs() / range);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterOptConfig {
    /// Maximum per-step change, as a fraction of each parameter's range.
    pub max_step: f64,
    /// Half-width floor as a fraction of the range.
    pub half_width_floor_frac: f64,
    /// Initial perturbation scale (range-normalised).
    pub sigma0: f64,
    /// Multiplicative shrink applied when an evaluation fails to improve
    /// the best loss.
    pub sigma_decay: f64,
    /// Multiplicative growth applied on an improvement (capped at sigma0).
    pub sigma_grow: f64,
    pub sigma_floor: f64,
}

impl Default for OuterOptConfig {
    fn default() -> Self {
        OuterOptConfig {
            max_step: 0.05,
            half_width_floor_frac: 0.01,
            sigma0: 0.5,
            sigma_decay: 0.88,
            sigma_grow: 1.35,
            sigma_floor: 0.02,
        }
    }
}

/// Anything that can propose the next bounded adjustment.
pub trait OuterOptimizer {
    fn propose(
        &mut self,
        theta: &OuterTheta,
        history: &[(OuterTheta, f64)],
        cfg: &OuterOptConfig,
        rng: &mut ChaCha8Rng,
    ) -> OuterAction;
}

/// The default optimiser: move toward a perturbation of the best theta seen
/// so far, with the perturbation scale decaying while the best stays
/// unbeaten.
pub struct LocalSearchOptimizer;

impl OuterOptimizer for LocalSearchOptimizer {
    fn propose(
        &mut self,
        theta: &OuterTheta,
        history: &[(OuterTheta, f64)],
        cfg: &OuterOptConfig,
        rng: &mut ChaCha8Rng,
    ) -> OuterAction {
        outer_update(theta, history, cfg, rng)
    }
}

/// One bounded step of the default stochastic local search.
///
/// The next proposal is a perturbation of the best theta evaluated so far;
/// the perturbation scale shrinks on every non-improving evaluation and
/// grows (capped) on improvements, so the search widens while progress is
/// easy and anneals once the best stops moving.
pub fn outer_update(
    theta: &OuterTheta,
    history: &[(OuterTheta, f64)],
    cfg: &OuterOptConfig,
    rng: &mut ChaCha8Rng,
) -> OuterAction {
    let (best, sigma_center, sigma_width) = replay_search_state(theta, history, cfg);

    let mut action = OuterAction::default();
    let current = theta.intervals();
    let target = best.intervals();
    for k in 0..3 {
        let (lo, hi) = theta.bounds(k);
        let range = hi - lo;
        let max_step = cfg.max_step * range;
        let noise_c: f64 = rng.gen_range(-1.0..1.0);
        let noise_w: f64 = rng.gen_range(-1.0..1.0);
        let target_center = target[k].center + sigma_center * range * noise_c;
        // widths move multiplicatively so any scale stays reachable
        let factor = (std::f64::consts::LN_2 * sigma_width * noise_w).exp();
        let target_width = (target[k].half_width * factor)
            .max(cfg.half_width_floor_frac * range);
        action.d_center[k] = (target_center - current[k].center).clamp(-max_step, max_step);
        action.d_half_width[k] = (target_width - current[k].half_width).clamp(-max_step, max_step);
    }
    action
}

/// Reconstructs (best theta, centre scale, width scale) from the evaluation
/// history, so the optimiser needs no state of its own. Both scales shrink
/// on non-improving evaluations and recover on improvements.
fn replay_search_state(
    theta: &OuterTheta,
    history: &[(OuterTheta, f64)],
    cfg: &OuterOptConfig,
) -> (OuterTheta, f64, f64) {
    let mut best_theta = *theta;
    let mut best_loss = f64::INFINITY;
    let mut sigma_center = cfg.sigma0;
    let mut sigma_width = 1.0;
    for &(entry, loss) in history {
        if loss < best_loss {
            best_loss = loss;
            best_theta = entry;
            sigma_center = (sigma_center * cfg.sigma_grow).min(cfg.sigma0);
            sigma_width = (sigma_width * cfg.sigma_grow).min(1.0);
        } else {
            sigma_center *= cfg.sigma_decay;
            sigma_width *= 0.93;
        }
    }
    (best_theta, sigma_center.max(cfg.sigma_floor), sigma_width.max(0.05))
}
