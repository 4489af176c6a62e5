//! Function approximators for the actor and the critic: small feed-forward
//! networks over a flat weight vector, with hand-written forward and backward
//! passes and a feature normalizer fitted on training data.
//!
//! Weight layout per layer, first layer to last: the weight matrix row-major
//! (`out_dim` rows of `in_dim`), then the bias vector. Hidden layers apply
//! tanh; the output layer is linear. Updates are applied as
//! `w += (scale * delta) * activation`, evaluated in that order, layer by
//! layer from first to last — fixing the expression tree keeps repeated runs
//! bitwise identical.

use crate::domain::{CustomerRecord, Dataset, FEATURE_COUNT};
use crate::rng::DrawStream;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Agent input: the 16 customer features plus the insurer's own pricing
/// quantities, the benchmark premium and the burn cost (both in log space).
/// Market quantile prices are deliberately absent — agents cannot see them
/// when quoting and must infer market position through the reward.
pub const AGENT_INPUT_DIM: usize = FEATURE_COUNT + 2;

const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("non-finite {0} encountered")]
    NonFinite(&'static str),

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unsupported policy parameters version {found} (expected {PARAMS_VERSION})")]
    VersionMismatch { found: u32 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Location-scale head scaling, all in grid-index units. The first network
/// output moves the bump center by `LOCATION_GAIN` actions per unit (saturating
/// smoothly at `LOCATION_REACH` actions either side of the grid center, so the
/// bump cannot run off the grid); distances are measured in
/// `BUMP_WIDTH`-action units; the curvature is the magnitude of the second
/// output, saturating at `MAX_SHARPNESS`. With these scales both head Jacobian
/// entries stay O(1..30) in the regimes the policy actually visits.
pub const LOCATION_GAIN: f64 = 60.0;
pub const LOCATION_REACH: f64 = 360.0;
pub const BUMP_WIDTH: f64 = 25.0;
pub const MAX_SHARPNESS: f64 = 10.0;

/// Number of Chebyshev coefficients of the basis critic head.
pub const CHEBYSHEV_ORDER: usize = 8;

/// How the actor network's outputs become one logit per grid action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActorHead {
    /// One network output per action, used directly as the logit.
    PerAction,
    /// Two network outputs, location and sharpness, shaped into a quadratic
    /// bump over the grid:
    ///
    /// `logit_k = -beta * ((k - mu) / BUMP_WIDTH)^2`, with the bump center
    /// `mu = (count - 1)/2 + LOCATION_REACH * tanh(LOCATION_GAIN * out0 /
    /// LOCATION_REACH)` and curvature `beta = MAX_SHARPNESS * tanh(|out1| /
    /// MAX_SHARPNESS)`.
    ///
    /// The bump slides smoothly with the input, so the policy personalizes
    /// prices instead of having to relearn each action column independently.
    /// Curvature is non-negative (mass never piles onto the grid edges), both
    /// quantities saturate so one noisy update cannot fling the bump around,
    /// and at zero outputs every logit is zero: the uniform policy.
    LocationScale { action_count: usize },
}

impl ActorHead {
    /// Network output width this head requires.
    pub fn required_network_outputs(&self) -> Option<usize> {
        match self {
            ActorHead::PerAction => None,
            ActorHead::LocationScale { .. } => Some(2),
        }
    }

    /// Number of actions the head produces logits for.
    pub fn action_count(&self, network_output_dim: usize) -> usize {
        match self {
            ActorHead::PerAction => network_output_dim,
            ActorHead::LocationScale { action_count } => *action_count,
        }
    }

    fn bump(outputs: &[f64], action_count: usize) -> (f64, f64) {
        let center = (action_count - 1) as f64 / 2.0
            + LOCATION_REACH * (LOCATION_GAIN * outputs[0] / LOCATION_REACH).tanh();
        let sharpness = MAX_SHARPNESS * (outputs[1].abs() / MAX_SHARPNESS).tanh();
        (center, sharpness)
    }

    /// Maps network outputs to per-action logits.
    pub fn logits_into(&self, outputs: &[f64], logits: &mut [f64]) {
        match self {
            ActorHead::PerAction => logits.copy_from_slice(outputs),
            ActorHead::LocationScale { action_count } => {
                let (center, sharpness) = Self::bump(outputs, *action_count);
                for (k, logit) in logits.iter_mut().enumerate() {
                    let d = (k as f64 - center) / BUMP_WIDTH;
                    *logit = -sharpness * d * d;
                }
            }
        }
    }

    /// Pulls a gradient on the logits back to a gradient on the network
    /// outputs (the transpose-Jacobian product of `logits_into`).
    pub fn output_grad_from_logit_grad(
        &self,
        outputs: &[f64],
        logit_grad: &[f64],
        out_grad: &mut [f64],
    ) {
        match self {
            ActorHead::PerAction => out_grad.copy_from_slice(logit_grad),
            ActorHead::LocationScale { action_count } => {
                let (center, sharpness) = Self::bump(outputs, *action_count);
                // chain factors of the two tanh saturations
                let t_loc = (LOCATION_GAIN * outputs[0] / LOCATION_REACH).tanh();
                let dcenter_dout0 = LOCATION_GAIN * (1.0 - t_loc * t_loc);
                let t_sharp = (outputs[1].abs() / MAX_SHARPNESS).tanh();
                let sharp_sign = if outputs[1] < 0.0 { -1.0 } else { 1.0 };
                let dsharp_dout1 = sharp_sign * (1.0 - t_sharp * t_sharp);

                let mut g_center = 0.0;
                let mut g_sharpness = 0.0;
                for (k, lg) in logit_grad.iter().enumerate() {
                    let d = (k as f64 - center) / BUMP_WIDTH;
                    // d(logit)/d(center) = 2 * sharpness * d / BUMP_WIDTH
                    g_center += lg * 2.0 * sharpness * d / BUMP_WIDTH;
                    g_sharpness += lg * -(d * d);
                }
                out_grad[0] = g_center * dcenter_dout0;
                out_grad[1] = g_sharpness * dsharp_dout1;
            }
        }
    }
}

/// How the critic network's outputs become per-action values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CriticHead {
    /// One network output per action, used directly as the value.
    PerAction,
    /// Network outputs are coefficients of Chebyshev polynomials in the
    /// normalized action coordinate `g_k = 2k/(count-1) - 1`; the value of
    /// action `k` is `sum_j out_j * T_j(g_k) / sqrt(order)`. The `sqrt(order)`
    /// normalization keeps the per-sample gradient norm comparable to a single
    /// per-action head, so stable critic learning rates carry over.
    ///
    /// Every update moves the whole value profile coherently, so actions the
    /// policy is not currently visiting keep sane interpolated values instead
    /// of drifting freely.
    Chebyshev { action_count: usize },
    /// The action joins the feature vector as one extra input (its grid
    /// coordinate in `[-1, 1]`) and the network has a single value output.
    /// The net can then mix price and features in its early layers, which is
    /// what a value surface made of feature-shifted copies of one profile
    /// needs.
    ActionInput { action_count: usize },
}

impl CriticHead {
    pub fn required_network_outputs(&self) -> Option<usize> {
        match self {
            CriticHead::PerAction => None,
            CriticHead::Chebyshev { .. } => Some(CHEBYSHEV_ORDER),
            CriticHead::ActionInput { .. } => Some(1),
        }
    }

    pub fn action_count(&self, network_output_dim: usize) -> usize {
        match self {
            CriticHead::PerAction => network_output_dim,
            CriticHead::Chebyshev { action_count } => *action_count,
            CriticHead::ActionInput { action_count } => *action_count,
        }
    }

    /// Extra inputs the critic network needs beyond the feature vector.
    pub fn extra_inputs(&self) -> usize {
        match self {
            CriticHead::ActionInput { .. } => 1,
            _ => 0,
        }
    }

    pub fn grid_coord(action_count: usize, action: usize) -> f64 {
        2.0 * action as f64 / (action_count - 1).max(1) as f64 - 1.0
    }

    /// Value of one action from the network outputs. For the action-input
    /// critic the action is part of the network input, so the single output is
    /// already the value.
    pub fn value_at(&self, outputs: &[f64], action: usize) -> f64 {
        match self {
            CriticHead::PerAction => outputs[action],
            CriticHead::ActionInput { .. } => outputs[0],
            CriticHead::Chebyshev { action_count } => {
                let g = Self::grid_coord(*action_count, action);
                let norm = 1.0 / (CHEBYSHEV_ORDER as f64).sqrt();
                let mut value = 0.0;
                let mut t_prev = 1.0;
                let mut t_cur = g;
                value += outputs[0] * t_prev;
                if outputs.len() > 1 {
                    value += outputs[1] * t_cur;
                }
                for coeff in outputs.iter().skip(2) {
                    let t_next = 2.0 * g * t_cur - t_prev;
                    value += coeff * t_next;
                    t_prev = t_cur;
                    t_cur = t_next;
                }
                value * norm
            }
        }
    }

    /// Gradient of `value_at(action)` with respect to the network outputs.
    pub fn value_grad_into(&self, action: usize, out_grad: &mut [f64]) {
        match self {
            CriticHead::PerAction => {
                out_grad.fill(0.0);
                out_grad[action] = 1.0;
            }
            CriticHead::ActionInput { .. } => {
                out_grad[0] = 1.0;
            }
            CriticHead::Chebyshev { action_count } => {
                let g = Self::grid_coord(*action_count, action);
                let norm = 1.0 / (CHEBYSHEV_ORDER as f64).sqrt();
                let mut t_prev = 1.0;
                let mut t_cur = g;
                out_grad[0] = t_prev * norm;
                if out_grad.len() > 1 {
                    out_grad[1] = t_cur * norm;
                }
                for slot in out_grad.iter_mut().skip(2) {
                    let t_next = 2.0 * g * t_cur - t_prev;
                    *slot = t_next * norm;
                    t_prev = t_cur;
                    t_cur = t_next;
                }
            }
        }
    }
}

/// Architecture of one network: dense layers, tanh hidden activations,
/// linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            output_dim,
            activation: Activation::Tanh,
        }
    }

    /// `(in_dim, out_dim)` for each layer, first to last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        let ok = self.input_dim > 0 && self.output_dim > 0 && self.hidden.iter().all(|&h| h > 0);
        if ok {
            Ok(())
        } else {
            Err(ApproxError::DimensionMismatch {
                what: "all layer widths must be positive",
                expected: 1,
                found: 0,
            })
        }
    }
}

/// Per-feature shift and scale fitted on training data; applied to the
/// 17-entry agent input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureNormalizer {
    /// Fits mean and standard deviation of each agent input over a dataset.
    /// Near-constant inputs get unit scale so normalization stays a no-op there.
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len().max(1) as f64;
        let mut mean = vec![0.0; AGENT_INPUT_DIM];
        let mut sumsq = [0.0; AGENT_INPUT_DIM];
        let mut input = [0.0; AGENT_INPUT_DIM];
        for record in &data.records {
            raw_agent_input(record, &mut input);
            for (i, v) in input.iter().enumerate() {
                mean[i] += v;
                sumsq[i] += v * v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let scale = sumsq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                let sd = var.sqrt();
                if sd < 1e-9 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        FeatureNormalizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_into(&self, record: &CustomerRecord, out: &mut [f64]) {
        raw_agent_input(record, out);
        for (i, v) in out.iter_mut().enumerate() {
            *v = (*v - self.mean[i]) / self.scale[i];
        }
    }

    pub fn normalize(&self, record: &CustomerRecord) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.normalize_into(record, &mut out);
        out
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        if self.mean.len() != AGENT_INPUT_DIM || self.scale.len() != AGENT_INPUT_DIM {
            return Err(ApproxError::DimensionMismatch {
                what: "normalizer dimension",
                expected: AGENT_INPUT_DIM,
                found: self.mean.len(),
            });
        }
        if self.mean.iter().chain(&self.scale).any(|v| !v.is_finite())
            || self.scale.iter().any(|&s| s <= 0.0)
        {
            return Err(ApproxError::NonFinite("normalizer"));
        }
        Ok(())
    }
}

// The price-like inputs enter in log space: prices act multiplicatively, so
// the log makes price-ratio structure linearly accessible to the networks.
fn raw_agent_input(record: &CustomerRecord, out: &mut [f64]) {
    out[..FEATURE_COUNT].copy_from_slice(&record.features);
    out[FEATURE_COUNT] = record.benchmark_premium.ln();
    out[FEATURE_COUNT + 1] = record.burn_cost.ln();
}

/// Actor and critic weights plus the shared input normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub actor_spec: MlpSpec,
    pub actor_head: ActorHead,
    pub actor_weights: Vec<f64>,
    pub critic_spec: MlpSpec,
    pub critic_head: CriticHead,
    pub critic_weights: Vec<f64>,
    pub normalizer: FeatureNormalizer,
}

/// The default architecture: two hidden layers of 64 for both networks; the
/// actor drives a location-scale head over the grid, the critic takes the
/// action as an extra input and produces a single value.
pub fn standard_specs(action_count: usize) -> (MlpSpec, ActorHead, MlpSpec, CriticHead) {
    let actor = MlpSpec::new(AGENT_INPUT_DIM, vec![64, 64], 2);
    let actor_head = ActorHead::LocationScale { action_count };
    let critic = MlpSpec::new(AGENT_INPUT_DIM + 1, vec![64, 64], 1);
    let critic_head = CriticHead::ActionInput { action_count };
    (actor, actor_head, critic, critic_head)
}

impl PolicyParameters {
    fn validate_heads(
        actor_spec: &MlpSpec,
        actor_head: &ActorHead,
        critic_spec: &MlpSpec,
        critic_head: &CriticHead,
    ) -> Result<(), ApproxError> {
        if let Some(required) = actor_head.required_network_outputs() {
            if actor_spec.output_dim != required {
                return Err(ApproxError::DimensionMismatch {
                    what: "actor outputs for head",
                    expected: required,
                    found: actor_spec.output_dim,
                });
            }
        }
        if let Some(required) = critic_head.required_network_outputs() {
            if critic_spec.output_dim != required {
                return Err(ApproxError::DimensionMismatch {
                    what: "critic outputs for head",
                    expected: required,
                    found: critic_spec.output_dim,
                });
            }
        }
        let actor_actions = actor_head.action_count(actor_spec.output_dim);
        let critic_actions = critic_head.action_count(critic_spec.output_dim);
        if actor_actions != critic_actions {
            return Err(ApproxError::DimensionMismatch {
                what: "actor vs critic action count",
                expected: actor_actions,
                found: critic_actions,
            });
        }
        Ok(())
    }

    /// Glorot-uniform weights with a zeroed final layer (uniform initial
    /// policy, zero initial values), drawn from per-layer keyed streams.
    pub fn init(
        actor_spec: MlpSpec,
        actor_head: ActorHead,
        critic_spec: MlpSpec,
        critic_head: CriticHead,
        normalizer: FeatureNormalizer,
        seed: u64,
    ) -> Result<Self, ApproxError> {
        actor_spec.validate()?;
        critic_spec.validate()?;
        normalizer.validate()?;
        Self::validate_heads(&actor_spec, &actor_head, &critic_spec, &critic_head)?;
        let actor_weights = glorot_init(&actor_spec, seed, "init-actor");
        let critic_weights = glorot_init(&critic_spec, seed, "init-critic");
        Ok(PolicyParameters {
            actor_spec,
            actor_head,
            actor_weights,
            critic_spec,
            critic_head,
            critic_weights,
            normalizer,
        })
    }

    /// Zero-initialized variant: uniform policy, zero critic.
    pub fn zeros(
        actor_spec: MlpSpec,
        actor_head: ActorHead,
        critic_spec: MlpSpec,
        critic_head: CriticHead,
        normalizer: FeatureNormalizer,
    ) -> Result<Self, ApproxError> {
        actor_spec.validate()?;
        critic_spec.validate()?;
        normalizer.validate()?;
        Self::validate_heads(&actor_spec, &actor_head, &critic_spec, &critic_head)?;
        let actor_weights = vec![0.0; actor_spec.param_count()];
        let critic_weights = vec![0.0; critic_spec.param_count()];
        Ok(PolicyParameters {
            actor_spec,
            actor_head,
            actor_weights,
            critic_spec,
            critic_head,
            critic_weights,
            normalizer,
        })
    }

    pub fn standard(
        normalizer: FeatureNormalizer,
        action_count: usize,
        seed: u64,
    ) -> Result<Self, ApproxError> {
        let (actor_spec, actor_head, critic_spec, critic_head) = standard_specs(action_count);
        Self::init(
            actor_spec,
            actor_head,
            critic_spec,
            critic_head,
            normalizer,
            seed,
        )
    }

    /// Actions the policy can quote.
    pub fn action_count(&self) -> usize {
        self.actor_head.action_count(self.actor_spec.output_dim)
    }

    pub fn check_finite(&self) -> Result<(), ApproxError> {
        if self.actor_weights.iter().any(|w| !w.is_finite()) {
            return Err(ApproxError::NonFinite("actor weights"));
        }
        if self.critic_weights.iter().any(|w| !w.is_finite()) {
            return Err(ApproxError::NonFinite("critic weights"));
        }
        self.normalizer.validate()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.actor_weights
            .iter()
            .chain(&self.critic_weights)
            .fold(0.0f64, |m, w| m.max(w.abs()))
    }

    pub fn to_json_string(&self) -> Result<String, ApproxError> {
        let file = ParamsFile {
            version: PARAMS_VERSION,
            actor: NetworkFile {
                spec: self.actor_spec.clone(),
                weights: self.actor_weights.clone(),
            },
            actor_head: self.actor_head,
            critic: NetworkFile {
                spec: self.critic_spec.clone(),
                weights: self.critic_weights.clone(),
            },
            critic_head: self.critic_head,
            normalizer: self.normalizer.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ApproxError> {
        let file: ParamsFile = serde_json::from_str(s)?;
        if file.version != PARAMS_VERSION {
            return Err(ApproxError::VersionMismatch {
                found: file.version,
            });
        }
        let params = PolicyParameters {
            actor_spec: file.actor.spec,
            actor_head: file.actor_head,
            actor_weights: file.actor.weights,
            critic_spec: file.critic.spec,
            critic_head: file.critic_head,
            critic_weights: file.critic.weights,
            normalizer: file.normalizer,
        };
        params.actor_spec.validate()?;
        params.critic_spec.validate()?;
        params.normalizer.validate()?;
        Self::validate_heads(
            &params.actor_spec,
            &params.actor_head,
            &params.critic_spec,
            &params.critic_head,
        )?;
        for (what, spec, weights) in [
            ("actor weights", &params.actor_spec, &params.actor_weights),
            (
                "critic weights",
                &params.critic_spec,
                &params.critic_weights,
            ),
        ] {
            if weights.len() != spec.param_count() {
                return Err(ApproxError::DimensionMismatch {
                    what,
                    expected: spec.param_count(),
                    found: weights.len(),
                });
            }
        }
        params.check_finite()?;
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    spec: MlpSpec,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    version: u32,
    actor: NetworkFile,
    actor_head: ActorHead,
    critic: NetworkFile,
    critic_head: CriticHead,
    normalizer: FeatureNormalizer,
}

/// Glorot-uniform hidden layers, zero biases, and a fully zeroed final layer
/// so the initial policy is uniform and the initial values are zero.
fn glorot_init(spec: &MlpSpec, seed: u64, tag: &str) -> Vec<f64> {
    let mut weights = vec![0.0; spec.param_count()];
    let mut offset = 0;
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    for (layer, (in_dim, out_dim)) in dims.into_iter().enumerate() {
        if layer < last {
            let mut stream = DrawStream::new(seed, tag, layer as u64);
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            for w in &mut weights[offset..offset + in_dim * out_dim] {
                *w = stream.uniform_in(-limit, limit);
            }
        }
        // biases (and the whole final layer) stay zero
        offset += in_dim * out_dim + out_dim;
    }
    weights
}

/// Dot product with four accumulators; fixed summation order.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n4 = a.len() / 4 * 4;
    let mut acc = [0.0f64; 4];
    for (ca, cb) in a[..n4].chunks_exact(4).zip(b[..n4].chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a[n4..].iter().zip(&b[n4..]) {
        s += x * y;
    }
    s
}

struct LayerView {
    w: usize,
    b: usize,
    in_dim: usize,
    out_dim: usize,
}

/// Reusable forward/backward buffers (and layer offsets) for one network.
pub struct MlpScratch {
    layers: Vec<LayerView>,
    /// `acts[0]` is the input; `acts[l]` the post-activation of layer `l`;
    /// the last entry is the linear output.
    acts: Vec<Vec<f64>>,
    /// `deltas[l]` is dL/d(pre-activation) of layer `l + 1`.
    deltas: Vec<Vec<f64>>,
}

impl MlpScratch {
    pub fn new(spec: &MlpSpec) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for (in_dim, out_dim) in spec.layer_dims() {
            layers.push(LayerView {
                w: offset,
                b: offset + in_dim * out_dim,
                in_dim,
                out_dim,
            });
            offset += in_dim * out_dim + out_dim;
        }
        let mut acts = vec![vec![0.0; spec.input_dim]];
        let mut deltas = Vec::new();
        for layer in &layers {
            acts.push(vec![0.0; layer.out_dim]);
            deltas.push(vec![0.0; layer.out_dim]);
        }
        MlpScratch {
            layers,
            acts,
            deltas,
        }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn last_hidden(&self) -> &[f64] {
        &self.acts[self.layers.len() - 1]
    }

    fn forward_layer(&mut self, w: &[f64], layer_idx: usize, tanh_output: bool) {
        let layer = &self.layers[layer_idx];
        let (input_acts, output_acts) = self.acts.split_at_mut(layer_idx + 1);
        let input = &input_acts[layer_idx];
        let out = &mut output_acts[0];
        for j in 0..layer.out_dim {
            let row = &w[layer.w + j * layer.in_dim..layer.w + (j + 1) * layer.in_dim];
            let pre = w[layer.b + j] + dot(row, input);
            out[j] = if tanh_output { pre.tanh() } else { pre };
        }
    }

    /// Full forward pass; activations and output readable afterwards.
    pub fn forward(&mut self, w: &[f64], input: &[f64]) {
        self.forward_hidden(w, input);
        self.forward_layer(w, self.layers.len() - 1, false);
    }

    /// Forward through the hidden layers only (the output layer is untouched).
    pub fn forward_hidden(&mut self, w: &[f64], input: &[f64]) {
        self.acts[0].copy_from_slice(input);
        for l in 0..self.layers.len() - 1 {
            self.forward_layer(w, l, true);
        }
    }

    /// One output head from the already-computed last hidden layer.
    pub fn head_value(&self, w: &[f64], head: usize) -> f64 {
        let layer = self.layers.last().unwrap();
        debug_assert!(head < layer.out_dim);
        let row = &w[layer.w + head * layer.in_dim..layer.w + (head + 1) * layer.in_dim];
        w[layer.b + head] + dot(row, self.last_hidden())
    }

    /// Backpropagates an output-side gradient into per-layer deltas.
    /// Requires a prior `forward` with the same weights and input.
    pub fn backward_deltas(&mut self, w: &[f64], out_grad: &[f64]) {
        let last = self.layers.len() - 1;
        self.deltas[last].copy_from_slice(out_grad);
        self.propagate_deltas(w);
    }

    /// Deltas for the gradient of a single output head (out_grad = e_head).
    /// Only needs the hidden forward pass.
    pub fn backward_deltas_single_head(&mut self, w: &[f64], head: usize) {
        let last = self.layers.len() - 1;
        self.deltas[last].fill(0.0);
        self.deltas[last][head] = 1.0;
        self.propagate_deltas(w);
    }

    fn propagate_deltas(&mut self, w: &[f64]) {
        for l in (1..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (lower, upper) = self.deltas.split_at_mut(l);
            let delta_out = &upper[0];
            let delta_in = &mut lower[l - 1];
            delta_in.fill(0.0);
            for j in 0..layer.out_dim {
                let dj = delta_out[j];
                if dj == 0.0 {
                    continue;
                }
                let row = &w[layer.w + j * layer.in_dim..layer.w + (j + 1) * layer.in_dim];
                for (acc, wv) in delta_in.iter_mut().zip(row) {
                    *acc += dj * wv;
                }
            }
            // tanh' through the post-activation of layer l - 1
            let act = &self.acts[l];
            for (d, a) in delta_in.iter_mut().zip(act) {
                *d *= 1.0 - a * a;
            }
        }
    }

    /// Applies `w += (scale * delta) * activation` for every parameter, layer
    /// by layer. Zero deltas are skipped.
    pub fn apply_update(&self, w: &mut [f64], scale: f64) {
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &self.acts[l];
            for j in 0..layer.out_dim {
                let c = scale * self.deltas[l][j];
                if c == 0.0 {
                    continue;
                }
                let row = &mut w[layer.w + j * layer.in_dim..layer.w + (j + 1) * layer.in_dim];
                for (wv, a) in row.iter_mut().zip(input) {
                    *wv += c * a;
                }
                w[layer.b + j] += c;
            }
        }
    }

    /// Materializes the flat gradient implied by the current deltas.
    pub fn gradient_into(&self, grad: &mut [f64]) {
        grad.fill(0.0);
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &self.acts[l];
            for j in 0..layer.out_dim {
                let dj = self.deltas[l][j];
                let row = &mut grad[layer.w + j * layer.in_dim..layer.w + (j + 1) * layer.in_dim];
                for (g, a) in row.iter_mut().zip(input) {
                    *g = dj * a;
                }
                grad[layer.b + j] = dj;
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Samples an index from a probability vector with a single uniform variate.
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_lowest_tie(v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = v[0];
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > best_val {
            best = k;
            best_val = x;
        }
    }
    best
}

fn check_input(params_dim: usize, input: &[f64]) -> Result<(), ApproxError> {
    if input.len() != params_dim {
        return Err(ApproxError::DimensionMismatch {
            what: "input vector",
            expected: params_dim,
            found: input.len(),
        });
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(ApproxError::NonFinite("input vector"));
    }
    Ok(())
}

/// Actor logits for a normalized input, one per grid action.
pub fn actor_logits(params: &PolicyParameters, input: &[f64]) -> Result<Vec<f64>, ApproxError> {
    check_input(params.actor_spec.input_dim, input)?;
    let mut scratch = MlpScratch::new(&params.actor_spec);
    scratch.forward(&params.actor_weights, input);
    let mut logits = vec![0.0; params.action_count()];
    params.actor_head.logits_into(scratch.output(), &mut logits);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(ApproxError::NonFinite("actor logits"));
    }
    Ok(logits)
}

/// The actor's action distribution (softmax over its logits).
pub fn policy_probabilities(
    params: &PolicyParameters,
    input: &[f64],
) -> Result<Vec<f64>, ApproxError> {
    let mut logits = actor_logits(params, input)?;
    softmax_in_place(&mut logits);
    Ok(logits)
}

/// Assembles the critic network input for one action: the normalized feature
/// vector, plus the action's grid coordinate when the critic takes the action
/// as an input.
pub fn critic_network_input(
    params: &PolicyParameters,
    input: &[f64],
    action_index: usize,
) -> Vec<f64> {
    let mut full = Vec::with_capacity(params.critic_spec.input_dim);
    full.extend_from_slice(input);
    if params.critic_head.extra_inputs() == 1 {
        full.push(CriticHead::grid_coord(params.action_count(), action_index));
    }
    full
}

/// Critic value of one action.
pub fn critic_value(
    params: &PolicyParameters,
    input: &[f64],
    action_index: usize,
) -> Result<f64, ApproxError> {
    if action_index >= params.action_count() {
        return Err(ApproxError::DimensionMismatch {
            what: "action index",
            expected: params.action_count(),
            found: action_index,
        });
    }
    check_input(
        params.critic_spec.input_dim - params.critic_head.extra_inputs(),
        input,
    )?;
    let full = critic_network_input(params, input, action_index);
    let mut scratch = MlpScratch::new(&params.critic_spec);
    scratch.forward(&params.critic_weights, &full);
    let q = params.critic_head.value_at(scratch.output(), action_index);
    if !q.is_finite() {
        return Err(ApproxError::NonFinite("critic value"));
    }
    Ok(q)
}

/// All action values at once.
pub fn critic_values(params: &PolicyParameters, input: &[f64]) -> Result<Vec<f64>, ApproxError> {
    check_input(
        params.critic_spec.input_dim - params.critic_head.extra_inputs(),
        input,
    )?;
    let mut scratch = MlpScratch::new(&params.critic_spec);
    if params.critic_head.extra_inputs() == 0 {
        scratch.forward(&params.critic_weights, input);
        return Ok((0..params.action_count())
            .map(|k| params.critic_head.value_at(scratch.output(), k))
            .collect());
    }
    let mut values = Vec::with_capacity(params.action_count());
    for k in 0..params.action_count() {
        let full = critic_network_input(params, input, k);
        scratch.forward(&params.critic_weights, &full);
        values.push(params.critic_head.value_at(scratch.output(), k));
    }
    Ok(values)
}

/// Gradient of `log pi(action | input)` with respect to the actor weights.
pub fn grad_log_policy(
    params: &PolicyParameters,
    input: &[f64],
    action_index: usize,
) -> Result<Vec<f64>, ApproxError> {
    if action_index >= params.action_count() {
        return Err(ApproxError::DimensionMismatch {
            what: "action index",
            expected: params.action_count(),
            found: action_index,
        });
    }
    check_input(params.actor_spec.input_dim, input)?;
    let mut scratch = MlpScratch::new(&params.actor_spec);
    scratch.forward(&params.actor_weights, input);
    let mut logit_grad = vec![0.0; params.action_count()];
    params
        .actor_head
        .logits_into(scratch.output(), &mut logit_grad);
    softmax_in_place(&mut logit_grad);
    for g in logit_grad.iter_mut() {
        *g = -*g;
    }
    logit_grad[action_index] += 1.0;
    let mut out_grad = vec![0.0; params.actor_spec.output_dim];
    params
        .actor_head
        .output_grad_from_logit_grad(scratch.output(), &logit_grad, &mut out_grad);
    scratch.backward_deltas(&params.actor_weights, &out_grad);
    let mut grad = vec![0.0; params.actor_spec.param_count()];
    scratch.gradient_into(&mut grad);
    Ok(grad)
}

/// Gradient of the indexed action's critic value with respect to the critic
/// weights.
pub fn grad_critic(
    params: &PolicyParameters,
    input: &[f64],
    action_index: usize,
) -> Result<Vec<f64>, ApproxError> {
    if action_index >= params.action_count() {
        return Err(ApproxError::DimensionMismatch {
            what: "action index",
            expected: params.action_count(),
            found: action_index,
        });
    }
    check_input(
        params.critic_spec.input_dim - params.critic_head.extra_inputs(),
        input,
    )?;
    let full = critic_network_input(params, input, action_index);
    let mut scratch = MlpScratch::new(&params.critic_spec);
    scratch.forward_hidden(&params.critic_weights, &full);
    let mut out_grad = vec![0.0; params.critic_spec.output_dim];
    params
        .critic_head
        .value_grad_into(action_index, &mut out_grad);
    scratch.backward_deltas(&params.critic_weights, &out_grad);
    let mut grad = vec![0.0; params.critic_spec.param_count()];
    scratch.gradient_into(&mut grad);
    Ok(grad)
}
