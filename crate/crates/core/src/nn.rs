//! Minimal differentiable function approximators: a Gaussian-policy actor and
//! a scalar critic as small feedforward networks with hand-derived gradients.
//!
//! Everything operates on one flat `f64` parameter vector laid out as
//! `[actor layers | log-std | critic layers]`, which keeps optimizer state and
//! checkpointing trivial and makes finite-difference checking direct.

use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{self, Read, Write};
use thiserror::Error;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const LN_2PI: f64 = 1.837877066409345483560659472811235279722794947275566825634;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("expected input of length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("checkpoint is corrupt: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Feedforward net shape: tanh hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        assert!(input_dim >= 1 && output_dim >= 1);
        assert!(hidden.iter().all(|&w| w >= 1));
        Self { input_dim, hidden, output_dim }
    }

    /// Layer widths including input and output.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }

    /// Closed form: sum over layers of in*out + out.
    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Actor and critic networks plus the Gaussian head's log-std, all stored in
/// one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: MlpSpec,
    pub critic: MlpSpec,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    /// Initializes weights with scaled uniform noise and log-stds at
    /// `init_log_std`. The final actor layer starts at zero so the initial
    /// policy mean is the output bias.
    pub fn init<R: Rng>(actor: MlpSpec, critic: MlpSpec, init_log_std: f64, rng: &mut R) -> Self {
        let total = actor.param_count() + actor.output_dim + critic.param_count();
        let mut theta = vec![0.0; total];
        init_mlp(&actor, &mut theta[..actor.param_count()], rng, true);
        let log_std_at = actor.param_count();
        for slot in &mut theta[log_std_at..log_std_at + actor.output_dim] {
            *slot = init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
        let critic_at = log_std_at + actor.output_dim;
        init_mlp(&critic, &mut theta[critic_at..], rng, false);
        let params = Self { actor, critic, theta };
        assert_eq!(params.theta.len(), params.param_count());
        params
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.actor.output_dim + self.critic.param_count()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim
    }

    fn actor_slice(&self) -> &[f64] {
        &self.theta[..self.actor.param_count()]
    }

    pub fn log_std(&self) -> &[f64] {
        let at = self.actor.param_count();
        &self.theta[at..at + self.actor.output_dim]
    }

    fn critic_slice(&self) -> &[f64] {
        &self.theta[self.actor.param_count() + self.actor.output_dim..]
    }

    pub fn clamp_log_std(&mut self) {
        let at = self.actor.param_count();
        let dim = self.actor.output_dim;
        for slot in &mut self.theta[at..at + dim] {
            *slot = slot.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.theta.iter().all(|p| p.is_finite())
    }
}

fn init_mlp<R: Rng>(spec: &MlpSpec, params: &mut [f64], rng: &mut R, zero_last: bool) {
    let widths = spec.widths();
    let layers = widths.len() - 1;
    let mut offset = 0;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let scale = if zero_last && l == layers - 1 {
            0.0
        } else {
            (1.0 / fan_in as f64).sqrt()
        };
        for slot in &mut params[offset..offset + fan_in * fan_out] {
            *slot = rng.gen_range(-scale..=scale);
        }
        offset += fan_in * fan_out;
        // Biases start at zero.
        offset += fan_out;
    }
}

/// Post-activation values per layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    activations: Vec<Vec<f64>>,
}

/// Forward pass; returns the output and the cache needed by `mlp_backward`.
fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
    if input.len() != spec.input_dim {
        return Err(NnError::DimensionMismatch { expected: spec.input_dim, actual: input.len() });
    }
    let widths = spec.widths();
    let layers = widths.len() - 1;
    let mut activations = Vec::with_capacity(layers + 1);
    activations.push(input.to_vec());
    let mut offset = 0;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let prev = activations.last().unwrap();
        let mut out = vec![0.0; fan_out];
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut acc = biases[o];
            for (w, x) in row.iter().zip(prev) {
                acc += w * x;
            }
            *slot = if l == layers - 1 { acc } else { acc.tanh() };
        }
        activations.push(out);
    }
    let output = activations.last().unwrap().clone();
    Ok((output, MlpCache { activations }))
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
fn mlp_backward(
    spec: &MlpSpec,
    params: &[f64],
    cache: &MlpCache,
    grad_output: &[f64],
    grad: &mut [f64],
) {
    let widths = spec.widths();
    let layers = widths.len() - 1;
    // Offsets of each layer's parameter block.
    let mut offsets = Vec::with_capacity(layers);
    let mut offset = 0;
    for l in 0..layers {
        offsets.push(offset);
        offset += widths[l] * widths[l + 1] + widths[l + 1];
    }
    let mut delta = grad_output.to_vec();
    for l in (0..layers).rev() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let base = offsets[l];
        let weights = &params[base..base + fan_in * fan_out];
        let prev = &cache.activations[l];
        // Hidden layers carry tanh; fold its derivative into delta first.
        if l != layers - 1 {
            for (d, a) in delta.iter_mut().zip(&cache.activations[l + 1]) {
                *d *= 1.0 - a * a;
            }
        }
        for (o, &d) in delta.iter().enumerate() {
            let row = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
            for (g, x) in row.iter_mut().zip(prev) {
                *g += d * x;
            }
            grad[base + fan_in * fan_out + o] += d;
        }
        if l > 0 {
            let mut next = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            delta = next;
        }
    }
}

/// A sampled squashed-Gaussian action with everything needed to recompute and
/// differentiate its log-probability.
#[derive(Debug, Clone)]
pub struct GaussianAction {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    /// Pre-squash Gaussian sample.
    pub pre_squash: Vec<f64>,
    /// tanh of the pre-squash sample; what the environment decodes.
    pub raw: Vec<f64>,
    pub log_probability: f64,
}

/// Numerically stable `ln(1 - tanh(u)^2)`.
fn ln_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * ((2.0f64).ln() - u.abs() - (-2.0 * u.abs()).exp().ln_1p())
}

/// Diagonal-Gaussian log-density of the pre-squash sample plus the tanh
/// change-of-variables correction.
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], pre_squash: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((&m, &ls), &u) in mean.iter().zip(log_std).zip(pre_squash) {
        let z = (u - m) / ls.exp();
        lp += -0.5 * z * z - ls - 0.5 * LN_2PI;
        lp -= ln_one_minus_tanh_sq(u);
    }
    lp
}

pub struct ActorForward {
    pub action: GaussianAction,
    cache: MlpCache,
}

/// Runs the actor net and samples a squashed action. Deterministic given the
/// parameters, features, and rng position.
pub fn forward_actor<R: Rng>(
    params: &PolicyParams,
    features: &[f64],
    rng: &mut R,
) -> Result<ActorForward, NnError> {
    let (mean, cache) = mlp_forward(&params.actor, params.actor_slice(), features)?;
    let log_std = params.log_std().to_vec();
    let pre_squash: Vec<f64> = mean
        .iter()
        .zip(&log_std)
        .map(|(&m, &ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let raw: Vec<f64> = pre_squash.iter().map(|u| u.tanh()).collect();
    let log_probability = squashed_log_prob(&mean, &log_std, &pre_squash);
    Ok(ActorForward {
        action: GaussianAction { mean, log_std, pre_squash, raw, log_probability },
        cache,
    })
}

/// Deterministic greedy action: the squashed policy mean.
pub fn actor_mean(params: &PolicyParams, features: &[f64]) -> Result<Vec<f64>, NnError> {
    let (mean, _) = mlp_forward(&params.actor, params.actor_slice(), features)?;
    Ok(mean.iter().map(|m| m.tanh()).collect())
}

/// Actor forward pass without sampling, for re-evaluating stored actions
/// under the current parameters during updates.
pub fn actor_distribution(
    params: &PolicyParams,
    features: &[f64],
) -> Result<(Vec<f64>, MlpCache), NnError> {
    mlp_forward(&params.actor, params.actor_slice(), features)
}

pub struct CriticForward {
    pub value: f64,
    cache: MlpCache,
}

/// Scalar state value.
pub fn forward_critic(params: &PolicyParams, features: &[f64]) -> Result<CriticForward, NnError> {
    let (out, cache) = mlp_forward(&params.critic, params.critic_slice(), features)?;
    Ok(CriticForward { value: out[0], cache })
}

/// Backpropagates loss gradients from the network heads into the flat
/// parameter gradient: `d_mean`/`d_log_std` for the actor head and `d_value`
/// for the critic head. Gradients accumulate into `grad`.
pub fn backward(
    params: &PolicyParams,
    actor_cache: Option<(&MlpCache, &[f64], &[f64])>,
    critic_cache: Option<(&CriticForward, f64)>,
    grad: &mut [f64],
) {
    assert_eq!(grad.len(), params.param_count());
    if let Some((cache, d_mean, d_log_std)) = actor_cache {
        let actor_len = params.actor.param_count();
        mlp_backward(&params.actor, params.actor_slice(), cache, d_mean, &mut grad[..actor_len]);
        for (slot, d) in grad[actor_len..actor_len + params.actor.output_dim]
            .iter_mut()
            .zip(d_log_std)
        {
            *slot += d;
        }
    }
    if let Some((forward, d_value)) = critic_cache {
        let critic_at = params.actor.param_count() + params.actor.output_dim;
        mlp_backward(
            &params.critic,
            params.critic_slice(),
            &forward.cache,
            &[d_value],
            &mut grad[critic_at..],
        );
    }
}

impl ActorForward {
    pub fn cache(&self) -> &MlpCache {
        &self.cache
    }
}

/// First and second moment accumulators for the adaptive-moment update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected adaptive-moment descent step along `gradient`. Callers
/// ascending an objective pass the negated gradient.
pub fn adam_step(params: &mut PolicyParams, gradient: &[f64], state: &mut AdamState, learning_rate: f64) {
    assert_eq!(gradient.len(), params.theta.len());
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - ADAM_BETA1.powf(t);
    let bc2 = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..gradient.len() {
        let g = gradient[i];
        let m = &mut state.first_moment[i];
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        let v = &mut state.second_moment[i];
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        params.theta[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"CNTR";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a versioned checkpoint: header, network dims, flat parameters, and
/// optimizer moments, all little-endian. Round-trips bit-exactly.
pub fn write_checkpoint<W: Write>(
    writer: &mut W,
    params: &PolicyParams,
    adam: &AdamState,
) -> Result<(), NnError> {
    writer.write_all(CHECKPOINT_MAGIC)?;
    writer.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let write_spec = |writer: &mut W, spec: &MlpSpec| -> Result<(), NnError> {
        writer.write_all(&(spec.input_dim as u32).to_le_bytes())?;
        writer.write_all(&(spec.hidden.len() as u32).to_le_bytes())?;
        for &h in &spec.hidden {
            writer.write_all(&(h as u32).to_le_bytes())?;
        }
        writer.write_all(&(spec.output_dim as u32).to_le_bytes())?;
        Ok(())
    };
    write_spec(writer, &params.actor)?;
    write_spec(writer, &params.critic)?;
    writer.write_all(&(params.theta.len() as u64).to_le_bytes())?;
    for vector in [&params.theta, &adam.first_moment, &adam.second_moment] {
        for &x in vector {
            writer.write_all(&x.to_le_bytes())?;
        }
    }
    writer.write_all(&adam.step.to_le_bytes())?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(reader: &mut R) -> Result<(PolicyParams, AdamState), NnError> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::BadCheckpoint("bad magic".into()));
    }
    fn read_u32<R: Read>(reader: &mut R) -> Result<u32, NnError> {
        let mut buf = [0u8; 4];
        reader.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }
    fn read_spec<R: Read>(reader: &mut R) -> Result<MlpSpec, NnError> {
        let input_dim = read_u32(reader)? as usize;
        let depth = read_u32(reader)? as usize;
        if depth > 64 {
            return Err(NnError::BadCheckpoint("implausible hidden depth".into()));
        }
        let mut hidden = Vec::with_capacity(depth);
        for _ in 0..depth {
            hidden.push(read_u32(reader)? as usize);
        }
        let output_dim = read_u32(reader)? as usize;
        Ok(MlpSpec::new(input_dim, hidden, output_dim))
    }
    fn read_vec<R: Read>(reader: &mut R, len: usize) -> Result<Vec<f64>, NnError> {
        let mut out = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            reader.read_exact(&mut buf)?;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    }
    let version = read_u32(reader)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let actor = read_spec(reader)?;
    let critic = read_spec(reader)?;
    let mut u64_buf = [0u8; 8];
    reader.read_exact(&mut u64_buf)?;
    let total = u64::from_le_bytes(u64_buf) as usize;
    let expected = actor.param_count() + actor.output_dim + critic.param_count();
    if total != expected {
        return Err(NnError::BadCheckpoint(format!(
            "parameter count {total} does not match dims ({expected})"
        )));
    }
    let theta = read_vec(reader, total)?;
    let first_moment = read_vec(reader, total)?;
    let second_moment = read_vec(reader, total)?;
    reader.read_exact(&mut u64_buf)?;
    let step = u64::from_le_bytes(u64_buf);
    Ok((
        PolicyParams { actor, critic, theta },
        AdamState { first_moment, second_moment, step },
    ))
}
