//! Trains one desk-scale seed and inspects how the enrolment probability
//! responds to the product parameters in the observation.

use std::time::Instant;

use mortsim_core::borrower::{obs_index, PaymentAction};
use mortsim_core::economy::ShockStep;
use mortsim_core::eval::{evaluate_product, EvalConfig};
use mortsim_core::learner::*;
use mortsim_core::population::*;
use mortsim_core::products::ScaledProductParams;
use mortsim_core::rng;
use mortsim_core::sim::*;

fn main() {
    let months = 60u32;
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let iterations: u32 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let entropy: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.01);

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
        entropy_coef: entropy,
        parallel_rollouts: true,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (trainer, _) = train(&env, cfg, seed, |r, _| {
        if (r.iteration + 1) % 50 == 0 {
            eprintln!(
                "iter {:3} reward {:.4} delinq {:.3} enroll {:.3} entropy {:.3}",
                r.iteration, r.mean_reward, r.delinquency_rate, r.enrollment_rate, r.entropy
            );
        }
    })
    .unwrap();
    eprintln!("seed {seed}: trained {iterations} iterations in {:?}", start.elapsed());

    // conditioning check on states from a null-product episode
    let probe_env = SimEnv {
        gamma: GammaMode::Fixed(0.5),
        product_source: ProductSource::Fixed(ProductSpec::NULL),
        ..env.clone()
    };
    let mut rng = rng::stream(seed, "acc-conditioning", 0);
    let (trajectories, _) = probe_env.run_episode(&trainer.policy, &mut rng).unwrap();
    let mut higher = 0u32;
    let mut total = 0u32;
    let mut sum_harmful = 0.0;
    let mut sum_generous = 0.0;
    for traj in &trajectories {
        for step in traj.steps.iter().step_by(7) {
            if !matches!(step.mask, ActionMask::Payment(_)) || step.obs[obs_index::ENROLLED] != 0.0
            {
                continue;
            }
            let mut harmful = step.obs.clone();
            harmful[obs_index::PRODUCT_P0] = 1.0;
            harmful[obs_index::PRODUCT_P] = 1.0;
            harmful[obs_index::PRODUCT_V] = 0.0;
            let mut generous = step.obs.clone();
            generous[obs_index::PRODUCT_P0] = 0.0;
            generous[obs_index::PRODUCT_P] = 0.0;
            generous[obs_index::PRODUCT_V] = 1.0;
            let mask = ActionMask::Payment([true, true, true]);
            let enroll = PaymentAction::PayAndEnroll.index();
            let ph = trainer.policy.forward(&harmful, &mask).unwrap().probs[enroll];
            let pg = trainer.policy.forward(&generous, &mask).unwrap().probs[enroll];
            sum_harmful += ph;
            sum_generous += pg;
            total += 1;
            if pg > ph {
                higher += 1;
            }
        }
    }
    eprintln!(
        "conditioning: generous preferred on {:.1}% of {total} states; mean p_enroll generous {:.3} vs harmful {:.3}",
        100.0 * f64::from(higher) / f64::from(total),
        sum_generous / f64::from(total),
        sum_harmful / f64::from(total),
    );

    // single-feature response on the same sampled states
    let feature_mean = |p0: f64, p: f64, v: f64| -> f64 {
        let mask = ActionMask::Payment([true, true, true]);
        let enroll = PaymentAction::PayAndEnroll.index();
        let mut sum = 0.0;
        let mut count = 0u32;
        for traj in &trajectories {
            for step in traj.steps.iter().step_by(7) {
                if !matches!(step.mask, ActionMask::Payment(_))
                    || step.obs[obs_index::ENROLLED] != 0.0
                {
                    continue;
                }
                let mut obs = step.obs.clone();
                obs[obs_index::PRODUCT_P0] = p0;
                obs[obs_index::PRODUCT_P] = p;
                obs[obs_index::PRODUCT_V] = v;
                sum += trainer.policy.forward(&obs, &mask).unwrap().probs[enroll];
                count += 1;
            }
        }
        sum / f64::from(count)
    };
    eprintln!(
        "p_enroll surface: null {:.3} | v=1 {:.3} | p0=1 {:.3} | p=1 {:.3} | v=.5 {:.3}",
        feature_mean(0.0, 0.0, 0.0),
        feature_mean(0.0, 0.0, 1.0),
        feature_mean(1.0, 0.0, 0.0),
        feature_mean(0.0, 1.0, 0.0),
        feature_mean(0.0, 0.0, 0.5),
    );

    let eval_cfg =
        EvalConfig { seeds: 2, episodes_per_shock: 1, parallel: true, ..EvalConfig::default() };
    let world = WorldConfig { episode_months: months, ..WorldConfig::default() };
    let grid = ShockStep::negative_set();
    let baseline =
        evaluate_product(&trainer.policy, &calib, &world, 100, &ProductSpec::NULL, &grid, &eval_cfg, seed)
            .unwrap();
    let product = ProductSpec::scaled(ScaledProductParams { p0: 0.0, p: 0.0, v: f64::from(months) });
    let full =
        evaluate_product(&trainer.policy, &calib, &world, 100, &product, &grid, &eval_cfg, seed)
            .unwrap();
    eprintln!(
        "omega: baseline {:.4} product {:.4} ratio {:.3}; product C {:.0}",
        baseline.integrated_social_index.unwrap(),
        full.integrated_social_index.unwrap(),
        full.integrated_social_index.unwrap() / baseline.integrated_social_index.unwrap(),
        full.integrated_cost_dollars.unwrap(),
    );
}
