//! The seven pricing policies compared in the benchmark: actor-critic agents
//! (sparse- and dense-reward trained), three model-based optimizers with biased
//! market estimates, a random agent, and the perfect-information upper bound.
//!
//! Ties in every argmax are broken toward the lowest index, i.e. the cheapest
//! price.

use crate::approx::{
    argmax_lowest_tie, policy_probabilities, sample_categorical, ApproxError, PolicyParameters,
};
use crate::conversion::{true_conversion, FittedConversionModel};
use crate::domain::{ActionGrid, CustomerRecord, DomainError};
use crate::rng::DrawStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Approx(#[from] ApproxError),

    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error("market estimate redraw limit reached for scenario (mean_scale {0})")]
    EstimateRedrawLimit(f64),
}

/// How a trained actor turns its distribution into a quote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteMode {
    /// Sample from the softmax distribution.
    Stochastic,
    /// Argmax over the logits.
    Greedy,
}

/// A pricing policy: maps a customer to a grid action. The stream passed in is
/// keyed per (agent, customer) by the caller, so quoting is pure and
/// parallelizable.
pub trait PricingPolicy {
    fn name(&self) -> &str;
    fn quote(&self, record: &CustomerRecord, stream: &mut DrawStream) -> Result<usize, AgentError>;
}

/// A trained (or freshly initialized) actor-critic policy.
pub struct ActorCriticPolicy {
    name: String,
    params: PolicyParameters,
    mode: QuoteMode,
}

impl ActorCriticPolicy {
    pub fn new(name: impl Into<String>, params: PolicyParameters, mode: QuoteMode) -> Self {
        ActorCriticPolicy {
            name: name.into(),
            params,
            mode,
        }
    }

    pub fn params(&self) -> &PolicyParameters {
        &self.params
    }
}

impl PricingPolicy for ActorCriticPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn quote(&self, record: &CustomerRecord, stream: &mut DrawStream) -> Result<usize, AgentError> {
        let input = self.params.normalizer.normalize(record);
        let probs = policy_probabilities(&self.params, &input)?;
        Ok(match self.mode {
            QuoteMode::Greedy => argmax_lowest_tie(&probs),
            QuoteMode::Stochastic => sample_categorical(&probs, stream.uniform()),
        })
    }
}

/// Systematic error applied to a model-based agent's market view: estimated
/// quantiles are the true ones scaled by `N(mean_scale, noise_sd)` per quote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasScenario {
    pub mean_scale: f64,
    pub noise_sd: f64,
}

impl BiasScenario {
    pub fn unbiased() -> Self {
        BiasScenario {
            mean_scale: 1.0,
            noise_sd: 0.3,
        }
    }

    pub fn over_estimated() -> Self {
        BiasScenario {
            mean_scale: 1.2,
            noise_sd: 0.3,
        }
    }

    pub fn under_estimated() -> Self {
        BiasScenario {
            mean_scale: 0.8,
            noise_sd: 0.3,
        }
    }
}

const ESTIMATE_GAP_MIN: f64 = 1e-6;
const ESTIMATE_REDRAW_LIMIT: usize = 10_000;

/// Model-based optimizer: estimates the market quantiles with scenario noise,
/// then maximizes estimated conversion times margin over the grid.
pub struct ModelBasedPolicy {
    name: String,
    scenario: BiasScenario,
    model: FittedConversionModel,
    grid: ActionGrid,
}

impl ModelBasedPolicy {
    pub fn new(
        name: impl Into<String>,
        scenario: BiasScenario,
        model: FittedConversionModel,
        grid: ActionGrid,
    ) -> Self {
        ModelBasedPolicy {
            name: name.into(),
            scenario,
            model,
            grid,
        }
    }

    /// The argmax over the grid for fixed market estimates; exposed so the grid
    /// search can be validated against an exhaustive oracle.
    pub fn action_for_estimates(
        &self,
        record: &CustomerRecord,
        est_top5: f64,
        est_top6_10: f64,
    ) -> usize {
        let gap = est_top6_10 - est_top5;
        let mut best = 0;
        let mut best_obj = f64::NEG_INFINITY;
        for (k, multiplier) in self.grid.values().enumerate() {
            let premium = multiplier * record.benchmark_premium;
            let z_est = (premium - est_top5) / gap;
            let objective = self.model.probability(z_est) * (premium - record.burn_cost);
            if objective > best_obj {
                best = k;
                best_obj = objective;
            }
        }
        best
    }
}

impl PricingPolicy for ModelBasedPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn quote(&self, record: &CustomerRecord, stream: &mut DrawStream) -> Result<usize, AgentError> {
        // Redraw degenerate estimates: the noise can invert the quantile order,
        // which would flip the sign of the normalized price.
        let mut est_top5;
        let mut est_top6_10;
        let mut attempts = 0;
        loop {
            est_top5 =
                record.avg_top5 * stream.normal(self.scenario.mean_scale, self.scenario.noise_sd);
            est_top6_10 = record.avg_top6_10
                * stream.normal(self.scenario.mean_scale, self.scenario.noise_sd);
            if est_top6_10 > est_top5 + ESTIMATE_GAP_MIN {
                break;
            }
            attempts += 1;
            if attempts >= ESTIMATE_REDRAW_LIMIT {
                return Err(AgentError::EstimateRedrawLimit(self.scenario.mean_scale));
            }
        }
        Ok(self.action_for_estimates(record, est_top5, est_top6_10))
    }
}

/// Best-case benchmark: optimizes the true expected reward with the exact
/// conversion model and the actual market quantiles.
pub struct PerfectInfoPolicy {
    name: String,
    grid: ActionGrid,
}

impl PerfectInfoPolicy {
    pub fn new(grid: ActionGrid) -> Self {
        PerfectInfoPolicy {
            name: "perfect_info".to_string(),
            grid,
        }
    }

    /// The true expected reward of a grid action for this record.
    pub fn objective(
        &self,
        record: &CustomerRecord,
        action_index: usize,
    ) -> Result<f64, AgentError> {
        let multiplier = self.grid.value(action_index)?;
        let premium = multiplier * record.benchmark_premium;
        let gap = record.avg_top6_10 - record.avg_top5;
        let z = (premium - record.avg_top5) / gap;
        Ok(true_conversion(z) * (premium - record.burn_cost))
    }
}

impl PricingPolicy for PerfectInfoPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn quote(
        &self,
        record: &CustomerRecord,
        _stream: &mut DrawStream,
    ) -> Result<usize, AgentError> {
        let gap = record.avg_top6_10 - record.avg_top5;
        let mut best = 0;
        let mut best_obj = f64::NEG_INFINITY;
        for (k, multiplier) in self.grid.values().enumerate() {
            let premium = multiplier * record.benchmark_premium;
            let z = (premium - record.avg_top5) / gap;
            let objective = true_conversion(z) * (premium - record.burn_cost);
            if objective > best_obj {
                best = k;
                best_obj = objective;
            }
        }
        Ok(best)
    }
}

/// Worst-case benchmark: a uniformly random grid action.
pub struct RandomPolicy {
    name: String,
    grid: ActionGrid,
}

impl RandomPolicy {
    pub fn new(grid: ActionGrid) -> Self {
        RandomPolicy {
            name: "random".to_string(),
            grid,
        }
    }
}

impl PricingPolicy for RandomPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn quote(
        &self,
        _record: &CustomerRecord,
        stream: &mut DrawStream,
    ) -> Result<usize, AgentError> {
        Ok(stream.index(self.grid.count()))
    }
}
