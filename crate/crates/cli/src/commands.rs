//! The six pipeline subcommands. Each validates its inputs up front, computes,
//! writes every output atomically, and finishes with a manifest.

use crate::config::RunConfig;
use crate::manifest::{write_atomic, Manifest};
use crate::AppError;
use pricelab_core::agents::{
    ActorCriticPolicy, BiasScenario, ModelBasedPolicy, PerfectInfoPolicy, PricingPolicy, QuoteMode,
    RandomPolicy,
};
use pricelab_core::approx::{FeatureNormalizer, PolicyParameters};
use pricelab_core::conversion::FittedConversionModel;
use pricelab_core::datagen;
use pricelab_core::domain::{ActionGrid, Dataset, SplitTag};
use pricelab_core::evaluator::{
    self, cumulative_curves, evaluate, render_ranking_text, summarize, EvalConfig,
};
use pricelab_core::report::render_report_svg;
use pricelab_core::simenv::{RewardMode, SimEnv};
use pricelab_core::trainer::{train, TrainHooks, TrainLogRow};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const POOL_JSONL: &str = "pool.jsonl";
pub const MODEL_JSON: &str = "conversion_model.json";

fn read_file(path: &Path, what: &str) -> Result<String, AppError> {
    fs::read_to_string(path)
        .map_err(|e| AppError::Artifact(format!("cannot read {what} {}: {e}", path.display())))
}

fn open_reader(path: &Path, what: &str) -> Result<BufReader<fs::File>, AppError> {
    Ok(BufReader::new(fs::File::open(path).map_err(|e| {
        AppError::Artifact(format!("cannot open {what} {}: {e}", path.display()))
    })?))
}

fn load_dataset(path: &Path, tag: SplitTag) -> Result<Dataset, AppError> {
    Dataset::read_csv(open_reader(path, "dataset")?, tag)
        .map_err(|e| AppError::Artifact(format!("invalid dataset {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<FittedConversionModel, AppError> {
    FittedConversionModel::from_json_str(&read_file(path, "conversion model")?).map_err(|e| {
        AppError::Artifact(format!("invalid conversion model {}: {e}", path.display()))
    })
}

fn load_policy(path: &Path) -> Result<PolicyParameters, AppError> {
    PolicyParameters::from_json_str(&read_file(path, "policy")?)
        .map_err(|e| AppError::Artifact(format!("invalid policy {}: {e}", path.display())))
}

fn write_output(manifest: &mut Manifest, path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    write_atomic(path, bytes)
        .map_err(|e| AppError::Other(format!("cannot write {}: {e}", path.display())))?;
    manifest.record_output(path, bytes);
    Ok(())
}

pub fn gen_data(
    config: &RunConfig,
    config_text: &str,
    seed: u64,
    out: &Path,
) -> Result<(), AppError> {
    let gen_config = config
        .datagen
        .to_gen_config(seed)
        .map_err(AppError::Config)?;
    let mut manifest = Manifest::new("gen-data", seed, config_text);

    let (train_set, test_set) = datagen::generate(&gen_config)
        .map_err(|e| AppError::Config(format!("generation failed: {e}")))?;
    let pool = datagen::build_training_pool(
        &train_set,
        &pricelab_core::conversion::TrueConversionModel,
        &gen_config,
    )
    .map_err(|e| AppError::Config(format!("pool generation failed: {e}")))?;

    let mut train_csv = Vec::new();
    train_set
        .write_csv(&mut train_csv)
        .map_err(|e| AppError::Other(e.to_string()))?;
    write_output(&mut manifest, &out.join(TRAIN_CSV), &train_csv)?;

    let mut test_csv = Vec::new();
    test_set
        .write_csv(&mut test_csv)
        .map_err(|e| AppError::Other(e.to_string()))?;
    write_output(&mut manifest, &out.join(TEST_CSV), &test_csv)?;

    let mut pool_jsonl = Vec::new();
    datagen::write_pool_jsonl(&pool, &train_set, &mut pool_jsonl)
        .map_err(|e| AppError::Other(e.to_string()))?;
    write_output(&mut manifest, &out.join(POOL_JSONL), &pool_jsonl)?;

    manifest
        .finish(out)
        .map_err(|e| AppError::Other(e.to_string()))
}

pub fn fit_conversion(
    config_text: &str,
    seed: u64,
    data_path: &Path,
    pool_path: &Path,
    out: &Path,
) -> Result<(), AppError> {
    let mut manifest = Manifest::new("fit-conversion", seed, config_text);
    let train_set = load_dataset(data_path, SplitTag::Train)?;
    manifest
        .record_input(data_path)
        .map_err(|e| AppError::Other(e.to_string()))?;
    let pool = datagen::read_pool_jsonl(open_reader(pool_path, "pool")?, &train_set)
        .map_err(|e| AppError::Artifact(format!("invalid pool {}: {e}", pool_path.display())))?;
    manifest
        .record_input(pool_path)
        .map_err(|e| AppError::Other(e.to_string()))?;

    let model = pricelab_core::conversion::fit_conversion(&pool, &train_set)
        .map_err(|e| AppError::Artifact(format!("fit failed: {e}")))?;
    let json = model
        .to_json_string()
        .map_err(|e| AppError::Other(e.to_string()))?;
    write_output(&mut manifest, &out.join(MODEL_JSON), json.as_bytes())?;

    manifest
        .finish(out)
        .map_err(|e| AppError::Other(e.to_string()))
}

fn render_train_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::from("iteration,mode,avg_reward_window,accept_rate_window\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.iteration,
            row.mode,
            pricelab_core::domain::fmt_f64(row.avg_reward_window),
            pricelab_core::domain::fmt_f64(row.accept_rate_window),
        ));
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn train_policy(
    config: &RunConfig,
    config_text: &str,
    mode: RewardMode,
    seed: u64,
    data_path: &Path,
    model_path: &Path,
    step_log: Option<&Path>,
    out: &Path,
) -> Result<(), AppError> {
    let mut manifest = Manifest::new(&format!("train-{mode}"), seed, config_text);
    let train_set = load_dataset(data_path, SplitTag::Train)?;
    manifest
        .record_input(data_path)
        .map_err(|e| AppError::Other(e.to_string()))?;
    let model = load_model(model_path)?;
    manifest
        .record_input(model_path)
        .map_err(|e| AppError::Other(e.to_string()))?;

    let grid = ActionGrid::standard();
    let env = SimEnv::new(&train_set, &model, grid, seed)
        .map_err(|e| AppError::Artifact(format!("cannot build simulator: {e}")))?;
    let train_config = config.train.to_train_config(mode, seed);
    let normalizer = FeatureNormalizer::fit(&train_set);
    let init = PolicyParameters::standard(normalizer, grid.count(), seed)
        .map_err(|e| AppError::Other(e.to_string()))?;

    fs::create_dir_all(out).map_err(|e| AppError::Other(e.to_string()))?;
    let mut checkpoint_paths: Vec<(PathBuf, String)> = Vec::new();
    let mut on_checkpoint = |iteration: u64, params: &PolicyParameters| -> Result<(), String> {
        let json = params.to_json_string().map_err(|e| e.to_string())?;
        let path = out.join(format!("policy_{mode}_ckpt_{iteration:08}.json"));
        write_atomic(&path, json.as_bytes()).map_err(|e| e.to_string())?;
        checkpoint_paths.push((path, json));
        Ok(())
    };
    let mut step_writer = match step_log {
        Some(path) => Some(std::io::BufWriter::new(
            fs::File::create(path)
                .map_err(|e| AppError::Other(format!("cannot create step log: {e}")))?,
        )),
        None => None,
    };
    let mut on_step = |_m: u64, step: &pricelab_core::simenv::EnvStep, _reward: f64| {
        if let Some(w) = step_writer.as_mut() {
            let _ = serde_json::to_writer(&mut *w, step);
            use std::io::Write;
            let _ = w.write_all(b"\n");
        }
    };
    let mut hooks = TrainHooks {
        on_checkpoint: Some(&mut on_checkpoint),
        on_step: if step_log.is_some() {
            Some(&mut on_step)
        } else {
            None
        },
        ..TrainHooks::default()
    };

    let outcome = train(&train_config, &env, init, &mut hooks)
        .map_err(|e| AppError::Artifact(format!("training failed: {e}")))?;

    for (path, json) in &checkpoint_paths {
        manifest.record_output(path, json.as_bytes());
    }
    let policy_json = outcome
        .params
        .to_json_string()
        .map_err(|e| AppError::Other(e.to_string()))?;
    write_output(
        &mut manifest,
        &out.join(format!("policy_{mode}.json")),
        policy_json.as_bytes(),
    )?;
    let log_csv = render_train_log_csv(&outcome.log);
    write_output(
        &mut manifest,
        &out.join(format!("train_{mode}.csv")),
        log_csv.as_bytes(),
    )?;

    manifest
        .finish(out)
        .map_err(|e| AppError::Other(e.to_string()))
}

/// The full seven-agent roster in presentation order.
pub fn build_roster(
    config: &RunConfig,
    standard: PolicyParameters,
    hybrid: PolicyParameters,
    model: &FittedConversionModel,
    grid: ActionGrid,
) -> Vec<Box<dyn PricingPolicy>> {
    let mode = if config.evaluate.stochastic_actor {
        QuoteMode::Stochastic
    } else {
        QuoteMode::Greedy
    };
    let scenario = |s: crate::config::ScenarioSection| BiasScenario {
        mean_scale: s.mean_scale,
        noise_sd: s.noise_sd,
    };
    vec![
        Box::new(ActorCriticPolicy::new("standard_ac", standard, mode)),
        Box::new(ActorCriticPolicy::new("hybrid_ac", hybrid, mode)),
        Box::new(ModelBasedPolicy::new(
            "model_based_unbiased",
            scenario(config.agents.unbiased),
            model.clone(),
            grid,
        )),
        Box::new(ModelBasedPolicy::new(
            "model_based_over",
            scenario(config.agents.over),
            model.clone(),
            grid,
        )),
        Box::new(ModelBasedPolicy::new(
            "model_based_under",
            scenario(config.agents.under),
            model.clone(),
            grid,
        )),
        Box::new(RandomPolicy::new(grid)),
        Box::new(PerfectInfoPolicy::new(grid)),
    ]
}

pub fn evaluate_policies(
    config: &RunConfig,
    config_text: &str,
    seed: u64,
    policies_dir: &Path,
    data_path: &Path,
    out: &Path,
) -> Result<(), AppError> {
    let mut manifest = Manifest::new("evaluate", seed, config_text);

    // Load and validate everything before writing anything.
    let test_set = load_dataset(data_path, SplitTag::Test)?;
    manifest
        .record_input(data_path)
        .map_err(|e| AppError::Other(e.to_string()))?;
    let standard_path = policies_dir.join("policy_sparse.json");
    let hybrid_path = policies_dir.join("policy_dense.json");
    let model_path = policies_dir.join(MODEL_JSON);
    let standard = load_policy(&standard_path)?;
    let hybrid = load_policy(&hybrid_path)?;
    let model = load_model(&model_path)?;
    for path in [&standard_path, &hybrid_path, &model_path] {
        manifest
            .record_input(path)
            .map_err(|e| AppError::Other(e.to_string()))?;
    }

    let grid = ActionGrid::standard();
    let roster = build_roster(config, standard, hybrid, &model, grid);
    let roster_refs: Vec<&dyn PricingPolicy> = roster.iter().map(|b| b.as_ref()).collect();
    let eval_config = EvalConfig {
        seed,
        shuffle: config.evaluate.shuffle,
    };
    let trace = evaluate(&roster_refs, &test_set, grid, eval_config)
        .map_err(|e| AppError::Artifact(format!("evaluation failed: {e}")))?;

    let mut trace_csv = Vec::new();
    evaluator::write_trace_csv(&trace, &mut trace_csv)
        .map_err(|e| AppError::Other(e.to_string()))?;
    write_output(&mut manifest, &out.join("trace.csv"), &trace_csv)?;

    let curves = cumulative_curves(&trace);
    let mut curves_csv = Vec::new();
    evaluator::write_curves_csv(&curves, &mut curves_csv)
        .map_err(|e| AppError::Other(e.to_string()))?;
    write_output(&mut manifest, &out.join("curves.csv"), &curves_csv)?;

    let table = summarize(&trace);
    let ranking = render_ranking_text(&table);
    write_output(&mut manifest, &out.join("ranking.txt"), ranking.as_bytes())?;

    let svg = render_report_svg(&curves);
    write_output(&mut manifest, &out.join("report.svg"), svg.as_bytes())?;

    manifest
        .finish(out)
        .map_err(|e| AppError::Other(e.to_string()))
}

pub fn report_from_curves(
    config_text: &str,
    seed: u64,
    curves_path: &Path,
    out: &Path,
) -> Result<(), AppError> {
    let mut manifest = Manifest::new("report", seed, config_text);
    let curves = evaluator::read_curves_csv(open_reader(curves_path, "curves")?).map_err(|e| {
        AppError::Artifact(format!("invalid curves {}: {e}", curves_path.display()))
    })?;
    manifest
        .record_input(curves_path)
        .map_err(|e| AppError::Other(e.to_string()))?;

    let svg = render_report_svg(&curves);
    write_output(&mut manifest, &out.join("report.svg"), svg.as_bytes())?;

    // Final standings from the curve endpoints.
    let mut rows: Vec<(String, f64, f64)> = curves
        .agent_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            (
                name.clone(),
                curves.expected[i].last().copied().unwrap_or(0.0),
                curves.realised[i].last().copied().unwrap_or(0.0),
            )
        })
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut text = format!(
        "{:<4} {:<22} {:>16} {:>16}\n",
        "rank", "agent", "cum_expected", "cum_realised"
    );
    for (rank, (name, expected, realised)) in rows.iter().enumerate() {
        text.push_str(&format!(
            "{:<4} {:<22} {:>16.2} {:>16.2}\n",
            rank + 1,
            name,
            expected,
            realised
        ));
    }
    write_output(&mut manifest, &out.join("ranking.txt"), text.as_bytes())?;

    manifest
        .finish(out)
        .map_err(|e| AppError::Other(e.to_string()))
}

pub fn run_all(
    config: &RunConfig,
    config_text: &str,
    seed: u64,
    out: &Path,
) -> Result<(), AppError> {
    gen_data(config, config_text, seed, out)?;
    fit_conversion(
        config_text,
        seed,
        &out.join(TRAIN_CSV),
        &out.join(POOL_JSONL),
        out,
    )?;
    for mode in [RewardMode::Dense, RewardMode::Sparse] {
        train_policy(
            config,
            config_text,
            mode,
            seed,
            &out.join(TRAIN_CSV),
            &out.join(MODEL_JSON),
            None,
            out,
        )?;
    }
    evaluate_policies(config, config_text, seed, out, &out.join(TEST_CSV), out)
}
