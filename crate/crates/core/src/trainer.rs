//! The actor-critic training loop over the simulator, single-sample updates:
//!
//! - critic: `w_q += (-2 * lr_q * (Q(x, A) - R)) * grad Q(x, A)`
//! - actor:  `w_a += (lr_a * Q(x, A)) * grad log pi(A | x)`
//!
//! `Q(x, A)` is read from the critic before its update and reused for the actor
//! step. Both updates go through `MlpScratch::apply_update`, whose fixed
//! evaluation order makes a run a bitwise-reproducible function of the config.

use crate::approx::{
    sample_categorical, softmax_in_place, ApproxError, MlpScratch, PolicyParameters,
};
use crate::rng::DrawStream;
use crate::simenv::{EnvStep, RewardMode, SimEnv, SimEnvError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: u64, reason: String },

    #[error("checkpoint sink failed: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Approx(#[from] ApproxError),

    #[error(transparent)]
    Env(#[from] SimEnvError),
}

/// Learning-rate schedule, evaluated at 1-based iteration `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant {
        rate: f64,
    },
    /// `rate / sqrt(m)`.
    InvSqrt {
        rate: f64,
    },
}

impl LrSchedule {
    pub fn at(&self, m: u64) -> f64 {
        match self {
            LrSchedule::Constant { rate } => *rate,
            LrSchedule::InvSqrt { rate } => rate / (m as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub actor_lr: LrSchedule,
    pub critic_lr: LrSchedule,
    pub reward_mode: RewardMode,
    pub seed: u64,
    /// Emit a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: u64,
    /// Emit a log row every this many iterations (0 disables).
    pub log_every: u64,
    /// Subtract a critic estimate of the state value from the actor's scale,
    /// turning it into an advantage: the policy-weighted mean value for
    /// finite-head critics, or the value at an independently re-sampled action
    /// for the action-input critic. On by default; turning it off gives the
    /// plain update rule, with Q at the sampled action alone.
    pub use_baseline: bool,
    /// Abort when any weight magnitude passes this bound.
    pub max_weight: f64,
}

impl TrainConfig {
    /// Defaults carry the tuned two-timescale recipe: a decaying actor rate
    /// over a small constant critic rate, with the advantage baseline on.
    pub fn new(reward_mode: RewardMode, seed: u64) -> Self {
        TrainConfig {
            iterations: 2_000_000,
            actor_lr: LrSchedule::InvSqrt { rate: 2e-2 },
            critic_lr: LrSchedule::Constant { rate: 3e-4 },
            reward_mode,
            seed,
            checkpoint_every: 500_000,
            log_every: 10_000,
            use_baseline: true,
            max_weight: 1e6,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |reason: &str| TrainError::Diverged {
            iteration: 0,
            reason: reason.to_string(),
        };
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            let rate = lr.at(1);
            if !(rate.is_finite() && rate > 0.0) {
                return Err(bad(&format!("{name} must be finite and positive")));
            }
        }
        if !(self.max_weight.is_finite() && self.max_weight > 0.0) {
            return Err(bad("max_weight must be finite and positive"));
        }
        Ok(())
    }
}

/// One row of the periodic training log: windowed averages since the last row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: u64,
    pub mode: RewardMode,
    pub avg_reward_window: f64,
    pub accept_rate_window: f64,
}

/// Called with the iteration and the parameters at checkpoint time; an error
/// string aborts the run.
pub type CheckpointHook<'a> = &'a mut dyn FnMut(u64, &PolicyParameters) -> Result<(), String>;
/// Called after every iteration with `(iteration, env step, reward used)`.
pub type StepHook<'a> = &'a mut dyn FnMut(u64, &EnvStep, f64);

/// Optional observers for the loop. All are borrowed so the caller keeps
/// ownership of files or buffers they write to.
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub on_log: Option<&'a mut dyn FnMut(&TrainLogRow)>,
    pub on_checkpoint: Option<CheckpointHook<'a>>,
    pub on_step: Option<StepHook<'a>>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: PolicyParameters,
    pub log: Vec<TrainLogRow>,
}

/// Runs the loop for `config.iterations` steps starting from `init`.
///
/// Per iteration `m` (1-based): sample a customer, sample an action from the
/// actor, step the simulator, read `q = Q(x, A)` from the pre-update critic,
/// then apply the critic update with scale `-2 * lr_q(m) * (q - r)` and the
/// actor update with scale `lr_a(m) * q` (or `lr_a(m) * (q - v)` with the
/// baseline on, `v` being the critic's state-value estimate).
pub fn train(
    config: &TrainConfig,
    env: &SimEnv<'_>,
    init: PolicyParameters,
    hooks: &mut TrainHooks<'_>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    init.check_finite()?;
    let mut params = init;
    let action_count = params.action_count();
    if params
        .critic_head
        .action_count(params.critic_spec.output_dim)
        != action_count
    {
        return Err(ApproxError::DimensionMismatch {
            what: "critic actions vs actor actions",
            expected: action_count,
            found: params
                .critic_head
                .action_count(params.critic_spec.output_dim),
        }
        .into());
    }
    if env.grid().count() != action_count {
        return Err(ApproxError::DimensionMismatch {
            what: "grid actions vs policy actions",
            expected: action_count,
            found: env.grid().count(),
        }
        .into());
    }

    let mut actor_scratch = MlpScratch::new(&params.actor_spec);
    let mut critic_scratch = MlpScratch::new(&params.critic_spec);
    let mut baseline_scratch = MlpScratch::new(&params.critic_spec);
    let mut input = vec![0.0; params.normalizer.dim()];
    let mut critic_input = vec![0.0; params.critic_spec.input_dim];
    let mut probs = vec![0.0; action_count];
    let mut logit_grad = vec![0.0; action_count];
    let mut actor_out_grad = vec![0.0; params.actor_spec.output_dim];
    let mut critic_out_grad = vec![0.0; params.critic_spec.output_dim];
    let critic_takes_action = params.critic_head.extra_inputs() == 1;
    let feature_dim = params.normalizer.dim();
    let mut log = Vec::new();

    let mut window_reward = 0.0;
    let mut window_accepts = 0u64;
    let mut window_n = 0u64;

    for m in 1..=config.iterations {
        let record = env.sample_customer(m);
        params.normalizer.normalize_into(record, &mut input);

        // Actor forward and action sampling.
        actor_scratch.forward(&params.actor_weights, &input);
        params
            .actor_head
            .logits_into(actor_scratch.output(), &mut probs);
        softmax_in_place(&mut probs);
        let action_u = DrawStream::new(config.seed, "train-action", m).uniform();
        let action = sample_categorical(&probs, action_u);

        let step = env.step(record, action, m)?;
        let reward = step.reward(config.reward_mode);

        // Critic value at the sampled action (and, when the baseline is on,
        // a state-value estimate), read before any update.
        critic_input[..feature_dim].copy_from_slice(&input);
        if critic_takes_action {
            critic_input[feature_dim] = crate::approx::CriticHead::grid_coord(action_count, action);
        }
        critic_scratch.forward(&params.critic_weights, &critic_input);
        let q = params.critic_head.value_at(critic_scratch.output(), action);
        if !q.is_finite() {
            return diverged(m, "critic value is non-finite", &params, hooks);
        }
        let state_value = if !config.use_baseline {
            0.0
        } else if critic_takes_action {
            // One-sample estimate of the state value: the critic at an action
            // drawn independently from the same policy.
            let baseline_u = DrawStream::new(config.seed, "train-baseline", m).uniform();
            let baseline_action = sample_categorical(&probs, baseline_u);
            critic_input[feature_dim] =
                crate::approx::CriticHead::grid_coord(action_count, baseline_action);
            baseline_scratch.forward(&params.critic_weights, &critic_input);
            params
                .critic_head
                .value_at(baseline_scratch.output(), baseline_action)
        } else {
            let mut v = 0.0;
            for (k, p) in probs.iter().enumerate() {
                v += p * params.critic_head.value_at(critic_scratch.output(), k);
            }
            v
        };

        // Critic update.
        let critic_scale = -2.0 * config.critic_lr.at(m) * (q - reward);
        params
            .critic_head
            .value_grad_into(action, &mut critic_out_grad);
        critic_scratch.backward_deltas(&params.critic_weights, &critic_out_grad);
        critic_scratch.apply_update(&mut params.critic_weights, critic_scale);

        // Actor update, driven by the pre-update critic value.
        let q_for_actor = if config.use_baseline {
            q - state_value
        } else {
            q
        };
        let actor_scale = config.actor_lr.at(m) * q_for_actor;
        for (g, p) in logit_grad.iter_mut().zip(&probs) {
            *g = -p;
        }
        logit_grad[action] += 1.0;
        params.actor_head.output_grad_from_logit_grad(
            actor_scratch.output(),
            &logit_grad,
            &mut actor_out_grad,
        );
        actor_scratch.backward_deltas(&params.actor_weights, &actor_out_grad);
        actor_scratch.apply_update(&mut params.actor_weights, actor_scale);

        if let Some(on_step) = hooks.on_step.as_mut() {
            on_step(m, &step, reward);
        }

        window_reward += reward;
        window_accepts += u64::from(step.accepted);
        window_n += 1;
        if config.log_every > 0 && m % config.log_every == 0 {
            let row = TrainLogRow {
                iteration: m,
                mode: config.reward_mode,
                avg_reward_window: window_reward / window_n as f64,
                accept_rate_window: window_accepts as f64 / window_n as f64,
            };
            if let Some(on_log) = hooks.on_log.as_mut() {
                on_log(&row);
            }
            log.push(row);
            window_reward = 0.0;
            window_accepts = 0;
            window_n = 0;

            if params.max_abs_weight() > config.max_weight {
                return diverged(m, "weight magnitude above bound", &params, hooks);
            }
        }

        if config.checkpoint_every > 0 && m % config.checkpoint_every == 0 {
            if let Some(on_checkpoint) = hooks.on_checkpoint.as_mut() {
                on_checkpoint(m, &params).map_err(TrainError::Checkpoint)?;
            }
        }
    }

    params.check_finite()?;
    Ok(TrainOutcome { params, log })
}

/// Emits a diagnostic checkpoint (best effort) and returns the divergence error.
fn diverged(
    iteration: u64,
    reason: &str,
    params: &PolicyParameters,
    hooks: &mut TrainHooks<'_>,
) -> Result<TrainOutcome, TrainError> {
    if let Some(on_checkpoint) = hooks.on_checkpoint.as_mut() {
        let _ = on_checkpoint(iteration, params);
    }
    Err(TrainError::Diverged {
        iteration,
        reason: reason.to_string(),
    })
}
