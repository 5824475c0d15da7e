//! Scripted-shock evaluation of a trained policy.
//!
//! Each grid point runs the same seeded populations through an episode where
//! a single systemic income shock of that size hits at a fixed month.
//! Population, decider, and environment streams are keyed by (seed, episode)
//! only, so different shock sizes and different products see identical
//! borrowers — curves and product comparisons are paired.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economy::{ScriptedShock, ShockConfig, ShockStep};
use crate::learner::{PolicyBundle, ProductSource, SimEnv, TrainError};
use crate::metrics::{self, MetricsError};
use crate::population::{GammaMode, IncomeGroup, PopulationCalibration};
use crate::rng;
use crate::sim::{EpisodeTrace, ProductSpec, ScriptedScope, WorldConfig};
use crate::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn default_eval_gamma() -> f64 {
    0.5
}
fn default_shock_month() -> u32 {
    12
}
fn default_episodes() -> u32 {
    2
}
fn default_seeds() -> u32 {
    3
}
fn default_systemic() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Liquidity preference used for evaluation populations.
    #[serde(default = "default_eval_gamma")]
    pub gamma: f64,
    /// Month at which the scripted shock hits.
    #[serde(default = "default_shock_month")]
    pub shock_month: u32,
    #[serde(default = "default_episodes")]
    pub episodes_per_shock: u32,
    #[serde(default = "default_seeds")]
    pub seeds: u32,
    /// Scripted shocks hit every borrower; otherwise a sampled subset.
    #[serde(default = "default_systemic")]
    pub systemic: bool,
    #[serde(default)]
    pub subset_fraction: Option<f64>,
    #[serde(default)]
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            gamma: default_eval_gamma(),
            shock_month: default_shock_month(),
            episodes_per_shock: default_episodes(),
            seeds: default_seeds(),
            systemic: default_systemic(),
            subset_fraction: None,
            parallel: false,
        }
    }
}

/// Metrics at one shock size, averaged over seeds and episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockPointMetrics {
    pub shock: f64,
    pub shock_tenths: i8,
    pub delinquency: f64,
    pub rate_low_income: Option<f64>,
    pub rate_other: Option<f64>,
    pub social_index: f64,
    pub cost_dollars: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub product: ProductSpec,
    pub n_borrowers: usize,
    pub episodes_per_point: u32,
    pub per_shock: Vec<ShockPointMetrics>,
    pub integrated_delinquency: Option<f64>,
    pub integrated_social_index: Option<f64>,
    pub integrated_cost_dollars: Option<f64>,
}

/// Observer invoked with every evaluation episode's trace.
pub type TraceSink<'a> = &'a mut dyn FnMut(ShockStep, u64, &EpisodeTrace);

/// Runs the scripted-shock grid for one product.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_product(
    policy: &PolicyBundle<Real>,
    calibration: &PopulationCalibration,
    world_template: &WorldConfig,
    n_borrowers: usize,
    product: &ProductSpec,
    grid: &[ShockStep],
    cfg: &EvalConfig,
    master_seed: u64,
) -> Result<EvaluationSummary, EvalError> {
    evaluate_product_observed(
        policy,
        calibration,
        world_template,
        n_borrowers,
        product,
        grid,
        cfg,
        master_seed,
        None,
    )
}

/// Like [`evaluate_product`], optionally streaming every episode trace to a
/// sink (forces serial execution over the grid).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_product_observed(
    policy: &PolicyBundle<Real>,
    calibration: &PopulationCalibration,
    world_template: &WorldConfig,
    n_borrowers: usize,
    product: &ProductSpec,
    grid: &[ShockStep],
    cfg: &EvalConfig,
    master_seed: u64,
    mut sink: Option<TraceSink<'_>>,
) -> Result<EvaluationSummary, EvalError> {
    let per_shock: Vec<ShockPointMetrics> = if cfg.parallel && sink.is_none() {
        grid.par_iter()
            .map(|&s| {
                evaluate_point(
                    policy, calibration, world_template, n_borrowers, product, s, cfg,
                    master_seed, None,
                )
            })
            .collect::<Result<_, _>>()?
    } else {
        let mut points = Vec::with_capacity(grid.len());
        for &s in grid {
            let reborrowed: Option<TraceSink<'_>> = sink.as_mut().map(|f| &mut **f as TraceSink);
            points.push(evaluate_point(
                policy,
                calibration,
                world_template,
                n_borrowers,
                product,
                s,
                cfg,
                master_seed,
                reborrowed,
            )?);
        }
        points
    };

    let full_grid = ShockStep::negative_set();
    let on_full_grid = grid.len() == full_grid.len()
        && grid.iter().zip(&full_grid).all(|(a, b)| a == b);
    let (integrated_delinquency, integrated_social_index, integrated_cost_dollars) = if on_full_grid
    {
        let to_map = |f: fn(&ShockPointMetrics) -> f64| -> BTreeMap<ShockStep, f64> {
            per_shock
                .iter()
                .map(|p| (ShockStep::new(p.shock_tenths).expect("grid step"), f(p)))
                .collect()
        };
        (
            Some(metrics::integrate_over_shocks(&to_map(|p| p.delinquency))?),
            Some(metrics::integrate_over_shocks(&to_map(|p| p.social_index))?),
            Some(metrics::integrate_over_shocks(&to_map(|p| p.cost_dollars))?),
        )
    } else {
        (None, None, None)
    };

    Ok(EvaluationSummary {
        product: product.clone(),
        n_borrowers,
        episodes_per_point: cfg.seeds * cfg.episodes_per_shock,
        per_shock,
        integrated_delinquency,
        integrated_social_index,
        integrated_cost_dollars,
    })
}

/// Runs the seeded episodes at a single shock size and averages the metrics.
#[allow(clippy::too_many_arguments)]
fn evaluate_point(
    policy: &PolicyBundle<Real>,
    calibration: &PopulationCalibration,
    world_template: &WorldConfig,
    n_borrowers: usize,
    product: &ProductSpec,
    shock: ShockStep,
    cfg: &EvalConfig,
    master_seed: u64,
    mut sink: Option<TraceSink<'_>>,
) -> Result<ShockPointMetrics, EvalError> {
    let mut world_cfg = world_template.clone();
    world_cfg.shock =
        ShockConfig::scripted(vec![ScriptedShock { month: cfg.shock_month, size: shock.value() }]);
    world_cfg.scripted_scope = if cfg.systemic {
        ScriptedScope::All
    } else {
        ScriptedScope::Fraction(cfg.subset_fraction.unwrap_or(1.0))
    };
    let env = SimEnv {
        world_cfg,
        calibration: calibration.clone(),
        n_borrowers,
        gamma: GammaMode::Fixed(cfg.gamma),
        product_source: ProductSource::Fixed(product.clone()),
        discount: 0.99,
    };

    let mut traces: Vec<EpisodeTrace> = Vec::new();
    for seed in 0..cfg.seeds {
        for episode in 0..cfg.episodes_per_shock {
            // keyed by (seed, episode) only: identical populations across
            // shock sizes and products
            let key = u64::from(seed) * 100_000 + u64::from(episode);
            let mut rng = rng::stream(master_seed, "evaluation", key);
            let (_, trace) = env.run_episode(policy, &mut rng)?;
            if let Some(sink) = sink.as_mut() {
                sink(shock, key, &trace);
            }
            traces.push(trace);
        }
    }

    let mut overall = 0.0;
    let mut low: (f64, u32) = (0.0, 0);
    let mut other: (f64, u32) = (0.0, 0);
    let mut cost = 0.0;
    for trace in &traces {
        let rates = metrics::delinquency_rate(trace);
        overall += rates.overall;
        for (group, rate) in rates.by_group {
            match group {
                IncomeGroup::LowIncome => {
                    low.0 += rate;
                    low.1 += 1;
                }
                IncomeGroup::Other => {
                    other.0 += rate;
                    other.1 += 1;
                }
            }
        }
        cost += metrics::product_cost(trace)?.aggregate_dollars();
    }
    let n = traces.len().max(1) as f64;
    let rate_low = (low.1 > 0).then(|| low.0 / f64::from(low.1));
    let rate_other = (other.1 > 0).then(|| other.0 / f64::from(other.1));
    let mut group_rates = Vec::new();
    if let Some(r) = rate_low {
        group_rates.push((IncomeGroup::LowIncome, r));
    }
    if let Some(r) = rate_other {
        group_rates.push((IncomeGroup::Other, r));
    }
    let social = metrics::social_index(&group_rates).unwrap_or(overall / n);

    Ok(ShockPointMetrics {
        shock: shock.value(),
        shock_tenths: shock.tenths(),
        delinquency: overall / n,
        rate_low_income: rate_low,
        rate_other,
        social_index: social,
        cost_dollars: cost / n,
    })
}
