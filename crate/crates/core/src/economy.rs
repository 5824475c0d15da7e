//! The economy agent: income shocks and the house price index.
//!
//! Income follows a random walk hit by multiplicative shocks of size
//! `s ∈ [-1, 1]`. During training a shock arrives with a fixed per-month
//! probability and a uniformly drawn size from the 21-point grid. During
//! evaluation, shocks of a fixed size fire at scripted months and the
//! generator is left untouched. Foreclosures feed back into the house price
//! index multiplicatively.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

#[derive(Debug, Error)]
pub enum EconomyError {
    #[error("shock config: {0}")]
    InvalidConfig(String),
}

/// A point on the canonical shock grid, stored in exact tenths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShockStep(i8);

impl ShockStep {
    pub fn new(tenths: i8) -> Result<Self, EconomyError> {
        if !(-10..=10).contains(&tenths) {
            return Err(EconomyError::InvalidConfig(format!(
                "shock step {tenths} outside [-10, 10] tenths"
            )));
        }
        Ok(ShockStep(tenths))
    }

    pub fn tenths(self) -> i8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 10.0
    }

    /// The full grid S: -1.0, -0.9, ..., +1.0 (21 points).
    pub fn shock_set() -> Vec<ShockStep> {
        (-10..=10).map(ShockStep).collect()
    }

    /// The non-positive grid S⁻: -1.0, ..., 0.0 ascending (11 points).
    pub fn negative_set() -> Vec<ShockStep> {
        (-10..=0).map(ShockStep).collect()
    }
}

impl std::fmt::Display for ShockStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedShock {
    pub month: u32,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShockMode {
    /// Independent per-borrower shocks with the configured probability.
    Training,
    /// Fixed-size shocks at scripted months; no randomness consumed.
    Scripted(Vec<ScriptedShock>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockConfig {
    /// Per-month probability that a shock occurs in training mode.
    pub per_step_probability: f64,
    pub mode: ShockMode,
}

impl Default for ShockConfig {
    fn default() -> Self {
        ShockConfig {
            per_step_probability: 1.0 / 12.0,
            mode: ShockMode::Training,
        }
    }
}

impl ShockConfig {
    pub fn scripted(shocks: Vec<ScriptedShock>) -> Self {
        ShockConfig {
            per_step_probability: 0.0,
            mode: ShockMode::Scripted(shocks),
        }
    }

    pub fn validate(&self) -> Result<(), EconomyError> {
        if !(0.0..=1.0).contains(&self.per_step_probability) {
            return Err(EconomyError::InvalidConfig(format!(
                "per_step_probability {} outside [0, 1]",
                self.per_step_probability
            )));
        }
        if let ShockMode::Scripted(shocks) = &self.mode {
            let mut months: Vec<u32> = shocks.iter().map(|s| s.month).collect();
            months.sort_unstable();
            months.dedup();
            if months.len() != shocks.len() {
                return Err(EconomyError::InvalidConfig(
                    "scripted shock months must be unique".into(),
                ));
            }
            for s in shocks {
                if !(-1.0..=1.0).contains(&s.size) {
                    return Err(EconomyError::InvalidConfig(format!(
                        "scripted shock size {} outside [-1, 1]",
                        s.size
                    )));
                }
            }
        }
        Ok(())
    }

    /// Samples the shock (if any) for month `t`.
    ///
    /// Scripted mode never touches the generator, so scripted runs are
    /// identical regardless of RNG state.
    pub fn sample_shock(&self, t: u32, rng: &mut ChaCha8Rng) -> Option<f64> {
        match &self.mode {
            ShockMode::Training => {
                if rng.gen::<f64>() < self.per_step_probability {
                    let set = ShockStep::shock_set();
                    Some(set[rng.gen_range(0..set.len())].value())
                } else {
                    None
                }
            }
            ShockMode::Scripted(shocks) => {
                shocks.iter().find(|s| s.month == t).map(|s| s.size)
            }
        }
    }
}

/// Applies a multiplicative shock to monthly income, never below zero.
pub fn apply_shock(income: Money, s: f64) -> Money {
    income.scale(1.0 + s).clamp_min_zero()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomyState {
    /// House price index, starts at 1.0 and only moves via foreclosures.
    pub hpi: f64,
    /// Per-foreclosure impact on the index.
    pub foreclosure_impact: f64,
    /// Lower bound keeping the index strictly positive.
    pub hpi_floor: f64,
    pub foreclosures_last_step: u32,
}

impl EconomyState {
    pub fn new(foreclosure_impact: f64, hpi_floor: f64) -> Self {
        EconomyState {
            hpi: 1.0,
            foreclosure_impact,
            hpi_floor,
            foreclosures_last_step: 0,
        }
    }

    /// `h' = h * (1 - foreclosures * impact)`, floored to stay positive.
    pub fn update_hpi(&mut self, foreclosures: u32) {
        let factor = 1.0 - f64::from(foreclosures) * self.foreclosure_impact;
        self.hpi = (self.hpi * factor).max(self.hpi_floor);
        self.foreclosures_last_step = foreclosures;
    }
}

impl Default for EconomyState {
    fn default() -> Self {
        EconomyState::new(0.01, 1e-6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn grid_has_21_points_at_tenth_spacing() {
        let set = ShockStep::shock_set();
        assert_eq!(set.len(), 21);
        for w in set.windows(2) {
            assert!((w[1].value() - w[0].value() - 0.1).abs() < 1e-12);
        }
        assert_eq!(ShockStep::negative_set().len(), 11);
        assert!(ShockStep::negative_set().iter().all(|s| s.value() <= 0.0));
    }

    #[test]
    fn scripted_fires_only_on_schedule() {
        let cfg = ShockConfig::scripted(vec![ScriptedShock { month: 24, size: -0.5 }]);
        let mut rng = rng::stream(1, "t", 0);
        assert_eq!(cfg.sample_shock(24, &mut rng), Some(-0.5));
        assert_eq!(cfg.sample_shock(23, &mut rng), None);
    }

    #[test]
    fn scripted_is_rng_independent() {
        let cfg = ShockConfig::scripted(vec![ScriptedShock { month: 3, size: -0.2 }]);
        let mut a = rng::stream(1, "a", 0);
        let mut b = rng::stream(99, "b", 7);
        for t in 0..10 {
            assert_eq!(cfg.sample_shock(t, &mut a), cfg.sample_shock(t, &mut b));
        }
    }

    #[test]
    fn training_frequency_is_near_one_twelfth() {
        let cfg = ShockConfig::default();
        let mut rng = rng::stream(42, "shock-freq", 0);
        let steps = 120_000;
        let mut hits = 0u32;
        for t in 0..steps {
            if cfg.sample_shock(t, &mut rng).is_some() {
                hits += 1;
            }
        }
        let freq = f64::from(hits) / f64::from(steps);
        assert!((freq - 1.0 / 12.0).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn shock_endpoints() {
        let income = Money::from_dollars(5000.0);
        assert_eq!(apply_shock(income, -1.0), Money::ZERO);
        assert_eq!(apply_shock(income, 0.0), income);
        assert_eq!(apply_shock(income, 1.0), Money::from_dollars(10000.0));
    }

    #[test]
    fn hpi_update_and_floor() {
        let mut state = EconomyState::default();
        state.update_hpi(5);
        assert!((state.hpi - 0.95).abs() < 1e-12);
        assert_eq!(state.foreclosures_last_step, 5);

        let mut idle = EconomyState::default();
        idle.hpi = 0.8;
        idle.update_hpi(0);
        assert!((idle.hpi - 0.8).abs() < 1e-12);

        let mut crash = EconomyState::default();
        crash.update_hpi(200);
        assert_eq!(crash.hpi, 1e-6);
    }

    #[test]
    fn hpi_stays_positive_under_random_sequences() {
        let mut rng = rng::stream(3, "hpi", 0);
        let mut state = EconomyState::default();
        for _ in 0..10_000 {
            state.update_hpi(rng.gen_range(0..300));
            assert!(state.hpi > 0.0);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = ShockConfig {
            per_step_probability: 1.5,
            mode: ShockMode::Training,
        };
        assert!(bad.validate().is_err());
        let dup = ShockConfig::scripted(vec![
            ScriptedShock { month: 1, size: 0.0 },
            ScriptedShock { month: 1, size: 0.5 },
        ]);
        assert!(dup.validate().is_err());
    }
}
