//! Desk-scale probe: trains one seed and prints the baseline and
//! full-cover-product evaluation numbers the acceptance thresholds rest on.

use std::time::Instant;

use mortsim_core::economy::ShockStep;
use mortsim_core::eval::{evaluate_product, EvalConfig};
use mortsim_core::learner::*;
use mortsim_core::population::*;
use mortsim_core::products::ScaledProductParams;
use mortsim_core::sim::*;

fn main() {
    let months = 60u32;
    let iterations: u32 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let calib = PopulationCalibration::bundled_default();
    let env = SimEnv {
        world_cfg: WorldConfig { episode_months: months, ..WorldConfig::default() },
        calibration: calib.clone(),
        n_borrowers: 100,
        gamma: GammaMode::Uniform,
        product_source: ProductSource::Box { null_probability: 0.1 },
        discount: 0.99,
    };
    let cfg = TrainConfig {
        iterations,
        rollouts: 5,
        minibatch: 2048,
        epochs: 3,
        parallel_rollouts: true,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (trainer, _) = train(&env, cfg, 1, |r, _| {
        if (r.iteration + 1) % 20 == 0 {
            eprintln!(
                "iter {:3} reward {:.4} delinq {:.3} enroll {:.3} entropy {:.3} transitions {}",
                r.iteration,
                r.mean_reward,
                r.delinquency_rate,
                r.enrollment_rate,
                r.entropy,
                r.transitions
            );
        }
    })
    .unwrap();
    eprintln!("trained {iterations} iterations in {:?}", start.elapsed());

    let eval_cfg = EvalConfig { seeds: 2, episodes_per_shock: 1, parallel: true, ..EvalConfig::default() };
    let world = WorldConfig { episode_months: months, ..WorldConfig::default() };
    let grid = ShockStep::negative_set();

    let t0 = Instant::now();
    let baseline = evaluate_product(
        &trainer.policy, &calib, &world, 100, &ProductSpec::NULL, &grid, &eval_cfg, 1,
    )
    .unwrap();
    let full_cover = ProductSpec::scaled(ScaledProductParams { p0: 0.0, p: 0.0, v: months as f64 });
    let product = evaluate_product(
        &trainer.policy, &calib, &world, 100, &full_cover, &grid, &eval_cfg, 1,
    )
    .unwrap();
    eprintln!("evaluations in {:?}", t0.elapsed());

    eprintln!("\n s    base_r  base_low base_oth base_w | prod_r prod_w  prod_C");
    for (b, p) in baseline.per_shock.iter().zip(&product.per_shock) {
        eprintln!(
            "{:+.1}  {:.3}   {:.3}    {:.3}    {:.3} | {:.3}  {:.3}  {:9.0}",
            b.shock,
            b.delinquency,
            b.rate_low_income.unwrap_or(f64::NAN),
            b.rate_other.unwrap_or(f64::NAN),
            b.social_index,
            p.delinquency,
            p.social_index,
            p.cost_dollars,
        );
    }
    eprintln!(
        "\nintegrated: baseline omega {:.4}, product omega {:.4} (ratio {:.3}), product C {:.0}",
        baseline.integrated_social_index.unwrap(),
        product.integrated_social_index.unwrap(),
        product.integrated_social_index.unwrap() / baseline.integrated_social_index.unwrap(),
        product.integrated_cost_dollars.unwrap(),
    );
}
