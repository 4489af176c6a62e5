//! The run configuration file: one TOML document with a section per pipeline
//! stage. Every field has a default, so a missing section means "use the
//! defaults"; unknown keys are rejected so typos fail loudly.

use pricelab_core::datagen::GenConfig;
use pricelab_core::domain::FEATURE_COUNT;
use pricelab_core::simenv::RewardMode;
use pricelab_core::trainer::{LrSchedule, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; subcommand `--seed` overrides it.
    pub seed: u64,
    pub datagen: DatagenSection,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
    pub agents: AgentsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: GenConfig::default().seed,
            datagen: DatagenSection::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
            agents: AgentsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenSection {
    pub n_customers: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_resamples: usize,
    pub base_premium: f64,
    pub feature_weights: Vec<f64>,
}

impl Default for DatagenSection {
    fn default() -> Self {
        let g = GenConfig::default();
        DatagenSection {
            n_customers: g.n_customers,
            n_train: g.n_train,
            n_test: g.n_test,
            n_resamples: g.n_resamples,
            base_premium: g.base_premium,
            feature_weights: g.feature_weights.to_vec(),
        }
    }
}

impl DatagenSection {
    pub fn to_gen_config(&self, seed: u64) -> Result<GenConfig, String> {
        if self.feature_weights.len() != FEATURE_COUNT {
            return Err(format!(
                "datagen.feature_weights must have {FEATURE_COUNT} entries, found {}",
                self.feature_weights.len()
            ));
        }
        let mut weights = [0.0; FEATURE_COUNT];
        weights.copy_from_slice(&self.feature_weights);
        Ok(GenConfig {
            n_customers: self.n_customers,
            n_train: self.n_train,
            n_test: self.n_test,
            n_resamples: self.n_resamples,
            seed,
            feature_weights: weights,
            base_premium: self.base_premium,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrKind {
    Constant,
    InvSqrt,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub iterations: u64,
    pub actor_lr: f64,
    pub actor_lr_schedule: LrKind,
    pub critic_lr: f64,
    pub critic_lr_schedule: LrKind,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub use_baseline: bool,
    pub max_weight: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            iterations: 2_000_000,
            actor_lr: 2e-2,
            actor_lr_schedule: LrKind::InvSqrt,
            critic_lr: 3e-4,
            critic_lr_schedule: LrKind::Constant,
            checkpoint_every: 500_000,
            log_every: 10_000,
            use_baseline: true,
            max_weight: 1e6,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, mode: RewardMode, seed: u64) -> TrainConfig {
        let schedule = |kind: LrKind, rate: f64| match kind {
            LrKind::Constant => LrSchedule::Constant { rate },
            LrKind::InvSqrt => LrSchedule::InvSqrt { rate },
        };
        TrainConfig {
            iterations: self.iterations,
            actor_lr: schedule(self.actor_lr_schedule, self.actor_lr),
            critic_lr: schedule(self.critic_lr_schedule, self.critic_lr),
            reward_mode: mode,
            seed,
            checkpoint_every: self.checkpoint_every,
            log_every: self.log_every,
            use_baseline: self.use_baseline,
            max_weight: self.max_weight,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Visit test customers in a seeded shuffled order.
    pub shuffle: bool,
    /// Quote with the actor's sampled action instead of the argmax.
    pub stochastic_actor: bool,
}

#[allow(clippy::derivable_impls)]
impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            shuffle: false,
            stochastic_actor: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub mean_scale: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentsSection {
    pub unbiased: ScenarioSection,
    pub over: ScenarioSection,
    pub under: ScenarioSection,
}

impl Default for AgentsSection {
    fn default() -> Self {
        AgentsSection {
            unbiased: ScenarioSection {
                mean_scale: 1.0,
                noise_sd: 0.3,
            },
            over: ScenarioSection {
                mean_scale: 1.2,
                noise_sd: 0.3,
            },
            under: ScenarioSection {
                mean_scale: 0.8,
                noise_sd: 0.3,
            },
        }
    }
}

/// Parses the config file, or yields the defaults when no path is given.
pub fn load_config(path: Option<&std::path::Path>) -> Result<(RunConfig, String), String> {
    match path {
        None => {
            let config = RunConfig::default();
            let text = toml::to_string_pretty(&config).expect("default config serializes");
            Ok((config, text))
        }
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            let config: RunConfig = toml::from_str(&text)
                .map_err(|e| format!("invalid config {}: {e}", p.display()))?;
            Ok((config, text))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let config: RunConfig = toml::from_str("").unwrap();
        assert_eq!(config.datagen.n_customers, 35_000);
        assert_eq!(config.train.iterations, 2_000_000);
        assert!(!config.evaluate.shuffle);
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_key_name() {
        let err = toml::from_str::<RunConfig>("[train]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn partial_sections_override_defaults() {
        let config: RunConfig =
            toml::from_str("seed = 9\n[datagen]\nn_customers = 100\nn_train = 80\nn_test = 20\n")
                .unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.datagen.n_customers, 100);
        assert_eq!(config.datagen.n_resamples, 5_000_000);
    }

    #[test]
    fn weights_length_is_validated() {
        let section = DatagenSection {
            feature_weights: vec![0.1; 3],
            ..DatagenSection::default()
        };
        assert!(section.to_gen_config(1).is_err());
    }
}
