//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::Path;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use mortsim_core::config::{ConfigError, ExperimentConfig};
use mortsim_core::economy::ShockStep;
use mortsim_core::eval::{evaluate_product, evaluate_product_observed, EvaluationSummary};
use mortsim_core::learner::{train, Checkpoint};
use mortsim_core::metrics;
use mortsim_core::money::Money;
use mortsim_core::outer::OuterTheta;
use mortsim_core::products::{make_special, ScaledProductParams, SpecialProduct};
use mortsim_core::rng;
use mortsim_core::sim::ProductSpec;
use mortsim_core::twolayer::{run_two_layer, OuterMode, TwoLayerCheckpoint};

use crate::output;
use crate::ProductArgs;

/// Exit code 2 for configuration problems, 1 for runtime failures.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e:#}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(anyhow!(e))
    }
}

type CliResult = Result<(), CliError>;

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn config_err<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Config(e.into())
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
        .map_err(runtime)
}

pub fn cmd_train(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    iterations: Option<u32>,
    parallel: bool,
) -> CliResult {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(iterations) = iterations {
        cfg.train.iterations = iterations;
    }
    cfg.train.parallel_rollouts = parallel;
    let fingerprint = cfg.fingerprint();
    let config_json = cfg.to_json();
    ensure_dir(out)?;

    let env = cfg.sim_env()?;
    let ckpt_path = out.join("checkpoint.json");
    let (trainer, rows) = train(&env, cfg.train.clone(), cfg.master_seed, |row, _| {
        if (row.iteration + 1) % 25 == 0 {
            eprintln!(
                "iteration {}: reward {:.4} delinquency {:.3} entropy {:.3}",
                row.iteration, row.mean_reward, row.delinquency_rate, row.entropy
            );
        }
    })
    .map_err(runtime)?;

    output::write_csv(&out.join("training_log.csv"), &fingerprint, cfg.master_seed, &rows)
        .map_err(CliError::Runtime)?;
    Checkpoint::from_trainer(&trainer, fingerprint.clone(), config_json, cfg.train.iterations)
        .save(&ckpt_path)
        .map_err(runtime)?;
    println!(
        "trained {} iterations; checkpoint {} log {}",
        rows.len(),
        ckpt_path.display(),
        out.join("training_log.csv").display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, ExperimentConfig), CliError> {
    let ckpt = Checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(config_err)?;
    let cfg = ExperimentConfig::from_json(&ckpt.config_json)?;
    Ok((ckpt, cfg))
}

fn product_from_args(args: &ProductArgs, episode_months: u32) -> Result<ProductSpec, CliError> {
    if let Some(kind) = &args.special {
        let amount = Money::from_dollars(args.amount.unwrap_or(0.0));
        let special = match kind.as_str() {
            "mra" => SpecialProduct::Mra { reserve: amount },
            "matched-mra" => SpecialProduct::MatchedMra { contribution: amount },
            "covid" => SpecialProduct::CovidForbearance { months: args.months.unwrap_or(3) },
            "null" => SpecialProduct::Null,
            other => {
                return Err(CliError::Config(anyhow!(
                    "--special `{other}` is not one of mra, matched-mra, covid, null"
                )))
            }
        };
        let product = make_special(special).map_err(config_err)?;
        return Ok(ProductSpec::Absolute(product));
    }
    let params =
        ScaledProductParams::new(args.p0, args.pt, args.v, episode_months).map_err(config_err)?;
    Ok(ProductSpec::Scaled { params, forbearance_months: args.forbearance })
}

fn parse_shock_grid(spec: Option<&str>) -> Result<Vec<ShockStep>, CliError> {
    match spec {
        None => Ok(ShockStep::negative_set()),
        Some(text) => {
            let mut grid = Vec::new();
            for token in text.split(',') {
                let value: f64 = token
                    .trim()
                    .parse()
                    .map_err(|e| CliError::Config(anyhow!("shock `{token}`: {e}")))?;
                let tenths = (value * 10.0).round();
                if (value * 10.0 - tenths).abs() > 1e-9 {
                    return Err(CliError::Config(anyhow!(
                        "shock `{token}` is not on the 0.1 grid"
                    )));
                }
                grid.push(ShockStep::new(tenths as i8).map_err(config_err)?);
            }
            Ok(grid)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate(
    checkpoint_path: &Path,
    out: &Path,
    config_path: Option<&Path>,
    product_args: &ProductArgs,
    shocks: Option<&str>,
    no_integrate: bool,
    tag: &str,
    dump_traces: bool,
    parallel: bool,
) -> CliResult {
    let (ckpt, cfg) = load_checkpoint(checkpoint_path)?;
    if let Some(path) = config_path {
        let given = ExperimentConfig::load(path)?;
        if given.fingerprint() != ckpt.config_fingerprint {
            return Err(CliError::Config(anyhow!(
                "config {} has fingerprint {} but the checkpoint was trained with {}; \
                 refusing to evaluate under a different configuration",
                path.display(),
                given.fingerprint(),
                ckpt.config_fingerprint
            )));
        }
    }

    let grid = parse_shock_grid(shocks)?;
    if !no_integrate {
        let full = ShockStep::negative_set();
        let missing: Vec<String> = full
            .iter()
            .filter(|s| !grid.contains(s))
            .map(|s| s.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Config(anyhow!(
                "integrated metrics need the full shock grid; missing: {} \
                 (pass --no-integrate for a partial grid)",
                missing.join(", ")
            )));
        }
    }

    let product = product_from_args(product_args, cfg.episode_months)?;
    ensure_dir(out)?;
    let policy = ckpt.policy();
    let calibration = cfg.load_calibration()?;
    let mut eval_cfg = cfg.evaluation.clone();
    eval_cfg.parallel = parallel;

    let trace_dir = out.join("traces");
    if dump_traces {
        ensure_dir(&trace_dir)?;
    }
    let mut trace_error: Option<anyhow::Error> = None;
    let mut sink = |shock: ShockStep, key: u64, trace: &mortsim_core::sim::EpisodeTrace| {
        let name = format!("trace_{tag}_s{}_k{key}.jsonl", shock.tenths());
        let path = trace_dir.join(name);
        let result = fs::File::create(&path)
            .map_err(anyhow::Error::from)
            .and_then(|f| trace.write_jsonl(std::io::BufWriter::new(f)).map_err(Into::into));
        if let Err(e) = result {
            trace_error.get_or_insert(e.context(format!("writing {}", path.display())));
        }
    };
    let summary = evaluate_product_observed(
        &policy,
        &calibration,
        &cfg.world_config(),
        cfg.population,
        &product,
        &grid,
        &eval_cfg,
        cfg.master_seed,
        dump_traces.then_some(&mut sink as mortsim_core::eval::TraceSink<'_>),
    )
    .map_err(runtime)?;
    if let Some(e) = trace_error {
        return Err(CliError::Runtime(e));
    }

    let per_shock_path = out.join(format!("eval_{tag}_per_shock.csv"));
    output::write_csv(&per_shock_path, &ckpt.config_fingerprint, cfg.master_seed, &summary.per_shock)
        .map_err(CliError::Runtime)?;
    let summary_path = out.join(format!("eval_{tag}_summary.json"));
    output::write_json(&summary_path, &ckpt.config_fingerprint, cfg.master_seed, &summary)
        .map_err(CliError::Runtime)?;
    println!(
        "evaluated {} shocks; {} and {}",
        summary.per_shock.len(),
        per_shock_path.display(),
        summary_path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub product_id: u32,
    pub p0: f64,
    pub p: f64,
    pub v: f64,
    pub forbearance_months: u32,
    pub delinquency_int: f64,
    pub social_index_int: f64,
    pub cost_int_dollars: f64,
    pub on_frontier: bool,
}

fn summary_to_row(id: u32, params: &ScaledProductParams, summary: &EvaluationSummary) -> SweepRow {
    SweepRow {
        product_id: id,
        p0: params.p0,
        p: params.p,
        v: params.v,
        forbearance_months: 0,
        delinquency_int: summary.integrated_delinquency.unwrap_or(f64::NAN),
        social_index_int: summary.integrated_social_index.unwrap_or(f64::NAN),
        cost_int_dollars: summary.integrated_cost_dollars.unwrap_or(f64::NAN),
        on_frontier: false,
    }
}

pub fn cmd_sweep(
    checkpoint_path: &Path,
    out: &Path,
    products: u32,
    theta_from: Option<&Path>,
    parallel: bool,
) -> CliResult {
    let (ckpt, cfg) = load_checkpoint(checkpoint_path)?;
    let theta = match theta_from {
        Some(path) => {
            let two = TwoLayerCheckpoint::load(path)
                .with_context(|| format!("loading two-layer checkpoint {}", path.display()))
                .map_err(config_err)?;
            if two.config_fingerprint != ckpt.config_fingerprint {
                return Err(CliError::Config(anyhow!(
                    "two-layer checkpoint fingerprint {} does not match policy checkpoint {}",
                    two.config_fingerprint,
                    ckpt.config_fingerprint
                )));
            }
            two.theta
        }
        None => OuterTheta::full_box(cfg.episode_months),
    };

    ensure_dir(out)?;
    let policy = ckpt.policy();
    let calibration = cfg.load_calibration()?;
    let mut eval_cfg = cfg.evaluation.clone();
    eval_cfg.parallel = parallel;
    let grid = ShockStep::negative_set();

    let mut sample_rng = rng::stream(cfg.master_seed, "sweep", 0);
    let sampled: Vec<ScaledProductParams> =
        (0..products).map(|_| theta.sample(&mut sample_rng)).collect();

    let mut rows = Vec::with_capacity(sampled.len());
    for (i, params) in sampled.iter().enumerate() {
        let spec = ProductSpec::scaled(*params);
        let summary = evaluate_product(
            &policy,
            &calibration,
            &cfg.world_config(),
            cfg.population,
            &spec,
            &grid,
            &eval_cfg,
            cfg.master_seed,
        )
        .map_err(runtime)?;
        rows.push(summary_to_row(i as u32, params, &summary));
        if (i + 1) % 10 == 0 {
            eprintln!("evaluated {}/{} products", i + 1, sampled.len());
        }
    }

    mark_frontier(&mut rows).map_err(runtime)?;
    output::write_csv(&out.join("sweep_results.csv"), &ckpt.config_fingerprint, cfg.master_seed, &rows)
        .map_err(CliError::Runtime)?;
    let frontier_rows: Vec<SweepRow> =
        rows.iter().filter(|r| r.on_frontier).cloned().collect();
    output::write_csv(
        &out.join("sweep_frontier.csv"),
        &ckpt.config_fingerprint,
        cfg.master_seed,
        &frontier_rows,
    )
    .map_err(CliError::Runtime)?;
    println!(
        "swept {} products, {} on the frontier; results in {}",
        rows.len(),
        frontier_rows.len(),
        out.display()
    );
    Ok(())
}

fn mark_frontier(rows: &mut [SweepRow]) -> anyhow::Result<()> {
    let points: Vec<Vec<f64>> =
        rows.iter().map(|r| vec![r.social_index_int, r.cost_int_dollars]).collect();
    let frontier = metrics::pareto_frontier_indices(&points)?;
    for row in rows.iter_mut() {
        row.on_frontier = false;
    }
    for idx in frontier {
        rows[idx].on_frontier = true;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_two_layer(
    config_path: &Path,
    out: &Path,
    mode: Option<&str>,
    resume: bool,
    max_iterations: Option<u32>,
    seed: Option<u64>,
    parallel: bool,
) -> CliResult {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(mode) = mode {
        cfg.outer.mode = match mode {
            "fixed" => OuterMode::Fixed,
            "adaptive" => OuterMode::Adaptive,
            other => {
                return Err(CliError::Config(anyhow!(
                    "--mode `{other}` is not one of fixed, adaptive"
                )))
            }
        };
    }
    cfg.train.parallel_rollouts = parallel;
    let fingerprint = cfg.fingerprint();
    let config_json = cfg.to_json();
    ensure_dir(out)?;

    let env = cfg.sim_env()?;
    let two_cfg = cfg.two_layer_config();
    let ckpt_path = out.join("two_layer_checkpoint.json");
    let outcome = run_two_layer(
        &env,
        &cfg.train,
        &two_cfg,
        cfg.initial_theta(),
        cfg.master_seed,
        &fingerprint,
        &config_json,
        Some(&ckpt_path),
        resume,
        max_iterations,
    )
    .map_err(|e| match e {
        mortsim_core::twolayer::TwoLayerError::FingerprintMismatch { .. } => config_err(e),
        other => runtime(other),
    })?;

    output::write_csv(&out.join("two_layer_log.csv"), &fingerprint, cfg.master_seed, &outcome.rows)
        .map_err(CliError::Runtime)?;
    Checkpoint::from_trainer(&outcome.trainer, fingerprint.clone(), config_json, two_cfg.iterations)
        .save(&out.join("checkpoint.json"))
        .map_err(runtime)?;
    println!(
        "two-layer run of {} iterations complete; final theta p0 [{:.3}±{:.3}] p [{:.3}±{:.3}] v [{:.1}±{:.1}]",
        outcome.rows.len(),
        outcome.theta.p0.center,
        outcome.theta.p0.half_width,
        outcome.theta.p.center,
        outcome.theta.p.half_width,
        outcome.theta.v.center,
        outcome.theta.v.half_width,
    );
    Ok(())
}

pub fn cmd_frontier(input: &Path, out: Option<&Path>) -> CliResult {
    let mut rows: Vec<SweepRow> = output::read_csv(input).map_err(config_err)?;
    if rows.is_empty() {
        return Err(CliError::Config(anyhow!("{} has no rows", input.display())));
    }
    mark_frontier(&mut rows).map_err(runtime)?;
    let frontier_rows: Vec<SweepRow> = rows.iter().filter(|r| r.on_frontier).cloned().collect();
    let default_out: PathBuf = input.with_file_name("frontier_recomputed.csv");
    let out_path: &Path = out.unwrap_or(&default_out);
    output::write_csv(out_path, "recomputed", 0, &frontier_rows).map_err(CliError::Runtime)?;
    println!("{} of {} rows on the frontier; written to {}", frontier_rows.len(), rows.len(), out_path.display());
    Ok(())
}
