//! The training environment: samples customers from the training data,
//! simulates their decision for a quoted price through the fitted conversion
//! model, and reports both reward flavors — the sparse realized margin and the
//! dense expected margin.

use crate::conversion::{normalized_price, ConversionError, FittedConversionModel};
use crate::domain::{ActionGrid, CustomerRecord, Dataset, DomainError};
use crate::rng::DrawStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimEnvError {
    #[error("training dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error(transparent)]
    Conversion(#[from] ConversionError),
}

/// Which reward the agent trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Realized margin, nonzero only when the simulated customer accepts.
    Sparse,
    /// Expected margin under the fitted conversion model.
    Dense,
}

impl std::fmt::Display for RewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewardMode::Sparse => write!(f, "sparse"),
            RewardMode::Dense => write!(f, "dense"),
        }
    }
}

/// Everything produced by one simulator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvStep {
    pub customer_id: u64,
    pub action_index: usize,
    pub premium: f64,
    pub z: f64,
    pub p_hat: f64,
    pub u: f64,
    pub accepted: bool,
    pub sparse_reward: f64,
    pub dense_reward: f64,
}

impl EnvStep {
    pub fn reward(&self, mode: RewardMode) -> f64 {
        match mode {
            RewardMode::Sparse => self.sparse_reward,
            RewardMode::Dense => self.dense_reward,
        }
    }
}

/// One simulator over a dataset and a fitted conversion model. Draws are keyed
/// by iteration, so a run's trajectory is a pure function of the seed.
pub struct SimEnv<'a> {
    data: &'a Dataset,
    model: &'a FittedConversionModel,
    grid: ActionGrid,
    seed: u64,
}

impl<'a> SimEnv<'a> {
    pub fn new(
        data: &'a Dataset,
        model: &'a FittedConversionModel,
        grid: ActionGrid,
        seed: u64,
    ) -> Result<Self, SimEnvError> {
        if data.is_empty() {
            return Err(SimEnvError::EmptyDataset);
        }
        Ok(SimEnv {
            data,
            model,
            grid,
            seed,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn model(&self) -> &FittedConversionModel {
        self.model
    }

    pub fn grid(&self) -> ActionGrid {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw (with replacement) of a training customer for an iteration.
    pub fn sample_customer_index(&self, iteration: u64) -> usize {
        DrawStream::new(self.seed, "train-pick", iteration).index(self.data.len())
    }

    pub fn sample_customer(&self, iteration: u64) -> &CustomerRecord {
        &self.data.records[self.sample_customer_index(iteration)]
    }

    /// Quotes `record` at a grid action and simulates the customer decision:
    /// premium from the grid multiplier, normalized price from the record's own
    /// market quantiles (observable offline), acceptance from the fitted model
    /// against the iteration-keyed uniform.
    pub fn step(
        &self,
        record: &CustomerRecord,
        action_index: usize,
        iteration: u64,
    ) -> Result<EnvStep, SimEnvError> {
        let multiplier = self.grid.value(action_index)?;
        let premium = multiplier * record.benchmark_premium;
        let z = normalized_price(premium, record.avg_top5, record.avg_top6_10)?;
        let p_hat = self.model.probability(z);
        let u = DrawStream::new(self.seed, "train", iteration).uniform();
        let accepted = u <= p_hat;
        let margin = premium - record.burn_cost;
        Ok(EnvStep {
            customer_id: record.id,
            action_index,
            premium,
            z,
            p_hat,
            u,
            accepted,
            sparse_reward: if accepted { margin } else { 0.0 },
            dense_reward: p_hat * margin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversion::fit_from_observations;
    use crate::datagen::{generate, GenConfig};
    use crate::domain::SplitTag;

    fn tiny_gen_config() -> GenConfig {
        GenConfig {
            n_customers: 1_250,
            n_train: 1_000,
            n_test: 250,
            n_resamples: 10_000,
            ..GenConfig::default()
        }
    }

    fn linear_model() -> FittedConversionModel {
        // Roughly mirrors the true curve: high acceptance far below market,
        // zero above.
        let obs: Vec<(f64, bool)> = (-700..700)
            .flat_map(|c| {
                let z = c as f64 / 100.0;
                let p = crate::conversion::true_conversion(z);
                let n = 50usize;
                let k = (p * n as f64).round() as usize;
                (0..n).map(move |i| (z, i < k))
            })
            .collect();
        fit_from_observations(obs).unwrap()
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let data = Dataset {
            records: Vec::new(),
            split_tag: SplitTag::Train,
        };
        let model = FittedConversionModel::constant(0.1);
        assert!(matches!(
            SimEnv::new(&data, &model, ActionGrid::standard(), 1),
            Err(SimEnvError::EmptyDataset)
        ));
    }

    #[test]
    fn single_record_dataset_always_samples_it() {
        let (train, _) = generate(&tiny_gen_config()).unwrap();
        let data = Dataset::new(vec![train.records[0].clone()], SplitTag::Train).unwrap();
        let model = FittedConversionModel::constant(0.1);
        let env = SimEnv::new(&data, &model, ActionGrid::standard(), 5).unwrap();
        for m in 0..100 {
            assert_eq!(env.sample_customer(m).id, data.records[0].id);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_iteration() {
        let (train, _) = generate(&tiny_gen_config()).unwrap();
        let model = FittedConversionModel::constant(0.1);
        let env_a = SimEnv::new(&train, &model, ActionGrid::standard(), 5).unwrap();
        let env_b = SimEnv::new(&train, &model, ActionGrid::standard(), 5).unwrap();
        for m in 0..500 {
            assert_eq!(
                env_a.sample_customer_index(m),
                env_b.sample_customer_index(m)
            );
        }
    }

    #[test]
    fn sampling_is_uniform_chi_square() {
        let (train, _) = generate(&tiny_gen_config()).unwrap();
        let model = FittedConversionModel::constant(0.1);
        let env = SimEnv::new(&train, &model, ActionGrid::standard(), 11).unwrap();
        let n_draws = 1_000_000u64;
        let k = train.len();
        let mut counts = vec![0u64; k];
        for m in 0..n_draws {
            counts[env.sample_customer_index(m)] += 1;
        }
        let expected = n_draws as f64 / k as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // Wilson-Hilferty critical value for k-1 dof at the 0.999 quantile.
        let dof = (k - 1) as f64;
        let z = 3.090_232_306_167_813_f64;
        let crit = dof * (1.0 - 2.0 / (9.0 * dof) + z * (2.0 / (9.0 * dof)).sqrt()).powi(3);
        assert!(
            stat < crit,
            "chi-square stat {stat} exceeds 0.999 critical value {crit}"
        );
    }

    #[test]
    fn zero_probability_never_accepts() {
        let (train, _) = generate(&tiny_gen_config()).unwrap();
        let model = FittedConversionModel::constant(0.0);
        let env = SimEnv::new(&train, &model, ActionGrid::standard(), 3).unwrap();
        for m in 0..2_000 {
            let record = env.sample_customer(m);
            let step = env.step(record, 300, m).unwrap();
            assert_eq!(step.p_hat, 0.0);
            assert!(!step.accepted);
            assert_eq!(step.sparse_reward, 0.0);
            assert_eq!(step.dense_reward, 0.0);
        }
    }

    #[test]
    fn dense_reward_worked_example() {
        // p_hat 0.1, premium 500, burn 400 -> dense reward 10.
        let record = CustomerRecord {
            id: 7,
            features: [0.0; 16],
            avg_top5: 520.0,
            avg_top6_10: 600.0,
            benchmark_premium: 500.0,
            burn_cost: 400.0,
        };
        let data = Dataset::new(vec![record.clone()], SplitTag::Train).unwrap();
        let model = FittedConversionModel::constant(0.1);
        let env = SimEnv::new(&data, &model, ActionGrid::standard(), 1).unwrap();
        let step = env.step(&record, 300, 0).unwrap();
        assert_eq!(step.premium, 500.0);
        assert!((step.dense_reward - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mean_sparse_reward_matches_dense_within_four_standard_errors() {
        let (train, _) = generate(&tiny_gen_config()).unwrap();
        let model = linear_model();
        let env = SimEnv::new(&train, &model, ActionGrid::standard(), 17).unwrap();
        let record = &train.records[42];
        let action = 250;
        let n = 100_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut dense = 0.0;
        for m in 0..n {
            let step = env.step(record, action, m).unwrap();
            sum += step.sparse_reward;
            sumsq += step.sparse_reward * step.sparse_reward;
            dense = step.dense_reward;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - dense).abs() <= 4.0 * se,
            "mean sparse {mean} vs dense {dense}, se {se}"
        );
    }

    #[test]
    fn acceptance_is_monotone_coupled_in_premium() {
        // For a fixed customer and uniform, accepting at a higher premium
        // implies accepting at any lower premium.
        let (train, _) = generate(&tiny_gen_config()).unwrap();
        let model = linear_model();
        let env = SimEnv::new(&train, &model, ActionGrid::standard(), 23).unwrap();
        for m in 0..200 {
            let record = env.sample_customer(m);
            let mut prev_accepted_low = true;
            for action in [0usize, 150, 300, 450, 600] {
                let step = env.step(record, action, m).unwrap();
                if step.accepted {
                    assert!(
                        prev_accepted_low,
                        "accepted at a higher premium but not at a lower one"
                    );
                }
                prev_accepted_low = step.accepted;
            }
        }
    }

    #[test]
    fn dense_reward_is_deterministic_per_record_action() {
        let (train, _) = generate(&tiny_gen_config()).unwrap();
        let model = linear_model();
        let env = SimEnv::new(&train, &model, ActionGrid::standard(), 29).unwrap();
        let record = &train.records[7];
        let a = env.step(record, 123, 0).unwrap();
        let b = env.step(record, 123, 999).unwrap();
        assert_eq!(a.dense_reward, b.dense_reward);
        assert_eq!(a.z, b.z);
        assert_eq!(a.p_hat, b.p_hat);
    }
}
