//! Python bindings for the pricing laboratory.
//!
//! The module mirrors the pipeline: `generate_market` makes the synthetic
//! train/test datasets, `build_pool` resamples quotes, `fit_conversion`
//! estimates the demand curve, `train_policy` runs the actor-critic, and
//! `evaluate_roster` compares the seven agents under shared random numbers.

use pricelab_core::agents::{
    ActorCriticPolicy, BiasScenario, ModelBasedPolicy, PerfectInfoPolicy, PricingPolicy, QuoteMode,
    RandomPolicy,
};
use pricelab_core::approx::{FeatureNormalizer, PolicyParameters};
use pricelab_core::conversion::FittedConversionModel;
use pricelab_core::datagen::{self, GenConfig, ResampledQuote};
use pricelab_core::domain::{ActionGrid as CoreGrid, Dataset as CoreDataset, SplitTag};
use pricelab_core::evaluator::{self, EvalConfig};
use pricelab_core::simenv::{RewardMode, SimEnv};
use pricelab_core::trainer::{self, LrSchedule, TrainConfig, TrainHooks};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// The discrete grid of premium multipliers.
#[pyclass(name = "ActionGrid")]
struct PyActionGrid {
    inner: CoreGrid,
}

#[pymethods]
impl PyActionGrid {
    #[new]
    fn new() -> Self {
        PyActionGrid {
            inner: CoreGrid::standard(),
        }
    }

    /// Multiplier at a grid index.
    fn value(&self, index: usize) -> PyResult<f64> {
        self.inner.value(index).map_err(value_err)
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count()
    }

    fn __len__(&self) -> usize {
        self.inner.count()
    }

    fn __repr__(&self) -> String {
        format!(
            "ActionGrid(lo={}, hi={}, step={}, count={})",
            self.inner.lo(),
            self.inner.hi(),
            self.inner.step(),
            self.inner.count()
        )
    }
}

/// A train or test dataset of customer records.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: CoreDataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a dataset CSV; `tag` is "train" or "test".
    #[staticmethod]
    fn from_csv(path: PathBuf, tag: &str) -> PyResult<Self> {
        let tag = parse_tag(tag)?;
        let file = fs::File::open(&path).map_err(io_err)?;
        let inner = CoreDataset::read_csv(BufReader::new(file), tag).map_err(value_err)?;
        Ok(PyDataset { inner })
    }

    fn to_csv(&self, path: PathBuf) -> PyResult<()> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(value_err)?;
        fs::write(&path, buf).map_err(io_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<u64> {
        self.inner.ids().collect()
    }

    /// One record as a dict of named fields.
    fn record(&self, py: Python<'_>, index: usize) -> PyResult<Py<pyo3::types::PyDict>> {
        let record = self
            .inner
            .records
            .get(index)
            .ok_or_else(|| value_err(format!("index {index} out of range")))?;
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("id", record.id)?;
        dict.set_item("features", record.features.to_vec())?;
        dict.set_item("avg_top5", record.avg_top5)?;
        dict.set_item("avg_top6_10", record.avg_top6_10)?;
        dict.set_item("benchmark_premium", record.benchmark_premium)?;
        dict.set_item("burn_cost", record.burn_cost)?;
        Ok(dict.unbind())
    }
}

fn parse_tag(tag: &str) -> PyResult<SplitTag> {
    match tag {
        "train" => Ok(SplitTag::Train),
        "test" => Ok(SplitTag::Test),
        other => Err(value_err(format!("tag must be train or test, got {other}"))),
    }
}

/// The resampled historical-quote pool.
#[pyclass(name = "Pool")]
struct PyPool {
    rows: Vec<ResampledQuote>,
}

#[pymethods]
impl PyPool {
    fn __len__(&self) -> usize {
        self.rows.len()
    }

    #[getter]
    fn acceptance_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|q| q.accepted).count() as f64 / self.rows.len() as f64
    }
}

/// The fitted binned monotone conversion model.
#[pyclass(name = "ConversionModel")]
struct PyConversionModel {
    inner: FittedConversionModel,
}

#[pymethods]
impl PyConversionModel {
    /// Acceptance probability at a normalized price.
    fn probability(&self, z: f64) -> f64 {
        self.inner.probability(z)
    }

    /// All bin values from -6.00 to 6.00.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let json = self.inner.to_json_string().map_err(value_err)?;
        fs::write(&path, json).map_err(io_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = fs::read_to_string(&path).map_err(io_err)?;
        let inner = FittedConversionModel::from_json_str(&text).map_err(value_err)?;
        Ok(PyConversionModel { inner })
    }
}

/// A trained actor-critic policy.
#[pyclass(name = "Policy")]
struct PyPolicy {
    params: PolicyParameters,
}

#[pymethods]
impl PyPolicy {
    fn save(&self, path: PathBuf) -> PyResult<()> {
        let json = self.params.to_json_string().map_err(value_err)?;
        fs::write(&path, json).map_err(io_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = fs::read_to_string(&path).map_err(io_err)?;
        let params = PolicyParameters::from_json_str(&text).map_err(value_err)?;
        Ok(PyPolicy { params })
    }

    /// Greedy action index for one customer of a dataset.
    fn quote_greedy(&self, data: &PyDataset, index: usize) -> PyResult<usize> {
        let record = data
            .inner
            .records
            .get(index)
            .ok_or_else(|| value_err(format!("index {index} out of range")))?;
        let input = self.params.normalizer.normalize(record);
        let probs =
            pricelab_core::approx::policy_probabilities(&self.params, &input).map_err(value_err)?;
        Ok(pricelab_core::approx::argmax_lowest_tie(&probs))
    }
}

/// Evaluation results: ranking plus per-agent cumulative curves.
#[pyclass(name = "Evaluation")]
struct PyEvaluation {
    curves: evaluator::CumulativeCurves,
    ranking: evaluator::RankingTable,
}

#[pymethods]
impl PyEvaluation {
    #[getter]
    fn agent_names(&self) -> Vec<String> {
        self.curves.agent_names.clone()
    }

    fn final_expected(&self, agent: &str) -> PyResult<f64> {
        let i = self.agent_index(agent)?;
        Ok(self.curves.expected[i].last().copied().unwrap_or(0.0))
    }

    fn final_realised(&self, agent: &str) -> PyResult<f64> {
        let i = self.agent_index(agent)?;
        Ok(self.curves.realised[i].last().copied().unwrap_or(0.0))
    }

    fn expected_curve(&self, agent: &str) -> PyResult<Vec<f64>> {
        let i = self.agent_index(agent)?;
        Ok(self.curves.expected[i].clone())
    }

    fn realised_curve(&self, agent: &str) -> PyResult<Vec<f64>> {
        let i = self.agent_index(agent)?;
        Ok(self.curves.realised[i].clone())
    }

    fn ranking_text(&self) -> String {
        evaluator::render_ranking_text(&self.ranking)
    }

    /// Agent names ordered by final cumulative expected reward, best first.
    fn ranking(&self) -> Vec<String> {
        self.ranking.rows.iter().map(|r| r.name.clone()).collect()
    }
}

impl PyEvaluation {
    fn agent_index(&self, agent: &str) -> PyResult<usize> {
        self.curves
            .agent_names
            .iter()
            .position(|n| n == agent)
            .ok_or_else(|| value_err(format!("unknown agent {agent}")))
    }
}

/// Generates the synthetic market and splits it into train and test datasets.
#[pyfunction]
#[pyo3(signature = (seed, n_customers=35_000, n_train=28_000, n_test=7_000, n_resamples=5_000_000, base_premium=400.0))]
fn generate_market(
    seed: u64,
    n_customers: usize,
    n_train: usize,
    n_test: usize,
    n_resamples: usize,
    base_premium: f64,
) -> PyResult<(PyDataset, PyDataset)> {
    let config = GenConfig {
        n_customers,
        n_train,
        n_test,
        n_resamples,
        seed,
        base_premium,
        ..GenConfig::default()
    };
    let (train, test) = datagen::generate(&config).map_err(value_err)?;
    Ok((PyDataset { inner: train }, PyDataset { inner: test }))
}

/// Resamples the training data into the historical-quote pool, with decisions
/// drawn from the exact demand curve.
#[pyfunction]
#[pyo3(signature = (train, seed, n_resamples))]
fn build_pool(train: &PyDataset, seed: u64, n_resamples: usize) -> PyResult<PyPool> {
    let config = GenConfig {
        n_customers: train.inner.len() + 1,
        n_train: train.inner.len(),
        n_test: 1,
        n_resamples,
        seed,
        ..GenConfig::default()
    };
    let rows = datagen::build_training_pool(
        &train.inner,
        &pricelab_core::conversion::TrueConversionModel,
        &config,
    )
    .map_err(value_err)?;
    Ok(PyPool { rows })
}

/// Fits the binned monotone conversion model from a pool.
#[pyfunction]
fn fit_conversion(pool: &PyPool, train: &PyDataset) -> PyResult<PyConversionModel> {
    let inner =
        pricelab_core::conversion::fit_conversion(&pool.rows, &train.inner).map_err(value_err)?;
    Ok(PyConversionModel { inner })
}

/// The exact demand curve at a normalized price.
#[pyfunction]
fn true_conversion(z: f64) -> f64 {
    pricelab_core::conversion::true_conversion(z)
}

/// Normalized price of a premium against the market quantiles.
#[pyfunction]
fn normalized_price(premium: f64, avg_top5: f64, avg_top6_10: f64) -> PyResult<f64> {
    pricelab_core::conversion::normalized_price(premium, avg_top5, avg_top6_10).map_err(value_err)
}

/// Trains an actor-critic policy against the fitted simulator.
/// `mode` is "dense" (expected-margin reward) or "sparse" (realized margin).
/// Learning rates default to the tuned two-timescale recipe; passing explicit
/// values switches that rate to a constant schedule.
#[pyfunction]
#[pyo3(signature = (train, model, mode, seed, iterations=2_000_000, actor_lr=None, critic_lr=None))]
fn train_policy(
    train: &PyDataset,
    model: &PyConversionModel,
    mode: &str,
    seed: u64,
    iterations: u64,
    actor_lr: Option<f64>,
    critic_lr: Option<f64>,
) -> PyResult<PyPolicy> {
    let mode = match mode {
        "dense" => RewardMode::Dense,
        "sparse" => RewardMode::Sparse,
        other => {
            return Err(value_err(format!(
                "mode must be dense or sparse, got {other}"
            )))
        }
    };
    let grid = CoreGrid::standard();
    let env = SimEnv::new(&train.inner, &model.inner, grid, seed).map_err(value_err)?;
    let defaults = TrainConfig::new(mode, seed);
    let config = TrainConfig {
        iterations,
        actor_lr: actor_lr.map_or(defaults.actor_lr, |rate| LrSchedule::Constant { rate }),
        critic_lr: critic_lr.map_or(defaults.critic_lr, |rate| LrSchedule::Constant { rate }),
        checkpoint_every: 0,
        log_every: 0,
        ..defaults
    };
    let normalizer = FeatureNormalizer::fit(&train.inner);
    let init = PolicyParameters::standard(normalizer, grid.count(), seed).map_err(value_err)?;
    let outcome =
        trainer::train(&config, &env, init, &mut TrainHooks::default()).map_err(value_err)?;
    Ok(PyPolicy {
        params: outcome.params,
    })
}

/// Evaluates the seven-agent roster on the test set under shared random
/// numbers and the exact demand curve.
#[pyfunction]
#[pyo3(signature = (standard, hybrid, model, test, seed))]
fn evaluate_roster(
    standard: &PyPolicy,
    hybrid: &PyPolicy,
    model: &PyConversionModel,
    test: &PyDataset,
    seed: u64,
) -> PyResult<PyEvaluation> {
    let grid = CoreGrid::standard();
    let standard_policy =
        ActorCriticPolicy::new("standard_ac", standard.params.clone(), QuoteMode::Greedy);
    let hybrid_policy =
        ActorCriticPolicy::new("hybrid_ac", hybrid.params.clone(), QuoteMode::Greedy);
    let mb_unbiased = ModelBasedPolicy::new(
        "model_based_unbiased",
        BiasScenario::unbiased(),
        model.inner.clone(),
        grid,
    );
    let mb_over = ModelBasedPolicy::new(
        "model_based_over",
        BiasScenario::over_estimated(),
        model.inner.clone(),
        grid,
    );
    let mb_under = ModelBasedPolicy::new(
        "model_based_under",
        BiasScenario::under_estimated(),
        model.inner.clone(),
        grid,
    );
    let random = RandomPolicy::new(grid);
    let perfect = PerfectInfoPolicy::new(grid);
    let roster: Vec<&dyn PricingPolicy> = vec![
        &standard_policy,
        &hybrid_policy,
        &mb_unbiased,
        &mb_over,
        &mb_under,
        &random,
        &perfect,
    ];
    let trace = evaluator::evaluate(&roster, &test.inner, grid, EvalConfig::new(seed))
        .map_err(value_err)?;
    Ok(PyEvaluation {
        curves: evaluator::cumulative_curves(&trace),
        ranking: evaluator::summarize(&trace),
    })
}

#[pymodule]
fn pricelab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyActionGrid>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPool>()?;
    m.add_class::<PyConversionModel>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyEvaluation>()?;
    m.add_function(wrap_pyfunction!(generate_market, m)?)?;
    m.add_function(wrap_pyfunction!(build_pool, m)?)?;
    m.add_function(wrap_pyfunction!(fit_conversion, m)?)?;
    m.add_function(wrap_pyfunction!(true_conversion, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_price, m)?)?;
    m.add_function(wrap_pyfunction!(train_policy, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_roster, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
