//! The PPO learner: rollout collection, advantage estimation, clipped
//! surrogate and value losses, and minibatch adaptive-moment updates.

use crate::env::{self, ActionVector, EnvConfig};
use crate::nn::{
    self, AdamState, MlpSpec, PolicyParams,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("parameters became non-finite at episode {episode}; training diverged")]
    Diverged { episode: usize },
}

/// One stored rollout step.
#[derive(Debug, Clone)]
pub struct Transition {
    pub features: Vec<f64>,
    /// Pre-squash Gaussian sample; the environment saw tanh of this.
    pub pre_squash: Vec<f64>,
    pub log_prob_old: f64,
    pub reward: f64,
    pub value_estimate: f64,
    pub feasible: bool,
    /// Round index within the episode, 1-based.
    pub round_index: usize,
}

/// Stored transitions plus the advantages and value targets computed from
/// them at update time.
#[derive(Debug, Clone, Default)]
pub struct EpisodeBuffer {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl EpisodeBuffer {
    pub fn clear(&mut self) {
        self.transitions.clear();
        self.advantages.clear();
        self.value_targets.clear();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip_epsilon: f64,
    /// Weight of the value loss in the combined objective.
    pub value_coef: f64,
    pub minibatch_size: usize,
    pub update_epochs: usize,
    pub episodes: usize,
    pub learning_rate: f64,
    pub advantage_normalization: bool,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            clip_epsilon: 0.2,
            value_coef: 0.5,
            minibatch_size: 512,
            update_epochs: 10,
            episodes: 500,
            learning_rate: 1e-4,
            advantage_normalization: true,
            init_log_std: -0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(PpoError::BadConfig("gamma must lie in [0, 1]".into()));
        }
        if self.clip_epsilon <= 0.0 {
            return Err(PpoError::BadConfig("clip_epsilon must be positive".into()));
        }
        if self.minibatch_size < 1 {
            return Err(PpoError::BadConfig("minibatch_size must be at least 1".into()));
        }
        if self.episodes < 1 {
            return Err(PpoError::BadConfig("episodes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Advantage of each stored transition, computed verbatim as the discounted
/// reward sum to the penultimate round plus a discounted terminal value,
/// minus the stored value estimate:
/// `A_z = gamma^(Z-z) V(s_Z) - V(s_z) + sum_{y=z}^{Z-1} gamma^(y-z) R_y`.
///
/// This is the episodic, lambda-free form; the advantage of the final round
/// is identically zero.
pub fn compute_gae(buffer: &EpisodeBuffer, gamma: f64) -> Result<Vec<f64>, PpoError> {
    let n = buffer.transitions.len();
    if n == 0 {
        return Err(PpoError::BadConfig("cannot compute advantages of an empty buffer".into()));
    }
    let mut advantages = vec![0.0; n];
    let terminal_value = buffer.transitions[n - 1].value_estimate;
    let mut reward_tail = 0.0; // sum_{y=z}^{Z-1} gamma^{y-z} R_y
    let mut discounted_terminal = terminal_value; // gamma^{Z-z} V(s_Z)
    advantages[n - 1] = 0.0;
    for z in (0..n - 1).rev() {
        reward_tail = buffer.transitions[z].reward + gamma * reward_tail;
        discounted_terminal *= gamma;
        advantages[z] = discounted_terminal - buffer.transitions[z].value_estimate + reward_tail;
    }
    // The z = Z case: empty sum, value terms cancel exactly.
    Ok(advantages)
}

/// Discounted reward-to-go: `V_targ(z) = sum_{y=z}^{Z} gamma^(y-z) R_y`.
pub fn value_targets(buffer: &EpisodeBuffer, gamma: f64) -> Result<Vec<f64>, PpoError> {
    let n = buffer.transitions.len();
    if n == 0 {
        return Err(PpoError::BadConfig("cannot compute targets of an empty buffer".into()));
    }
    let mut targets = vec![0.0; n];
    let mut run = 0.0;
    for z in (0..n).rev() {
        run = buffer.transitions[z].reward + gamma * run;
        targets[z] = run;
    }
    Ok(targets)
}

/// The three-branch clipping function: the ratio clamped to
/// `[1 - epsilon, 1 + epsilon]`.
pub fn clip_function(ratio: f64, epsilon: f64) -> f64 {
    ratio.clamp(1.0 - epsilon, 1.0 + epsilon)
}

/// Mean clipped-surrogate objective over the buffer under the current
/// parameters. Positive is good; the optimizer ascends this.
pub fn surrogate_loss(buffer: &EpisodeBuffer, params: &PolicyParams, epsilon: f64) -> f64 {
    let mut total = 0.0;
    for (transition, &advantage) in buffer.transitions.iter().zip(&buffer.advantages) {
        let (mean, _) = nn::actor_distribution(params, &transition.features)
            .expect("stored features match the actor input");
        let log_prob_new = nn::squashed_log_prob(&mean, params.log_std(), &transition.pre_squash);
        let ratio = (log_prob_new - transition.log_prob_old).exp();
        total += (ratio * advantage).min(clip_function(ratio, epsilon) * advantage);
    }
    total / buffer.transitions.len() as f64
}

/// Mean squared error of the critic against the stored value targets.
pub fn value_loss(buffer: &EpisodeBuffer, params: &PolicyParams) -> f64 {
    let mut total = 0.0;
    for (transition, &target) in buffer.transitions.iter().zip(&buffer.value_targets) {
        let value = nn::forward_critic(params, &transition.features)
            .expect("stored features match the critic input")
            .value;
        total += (value - target) * (value - target);
    }
    total / buffer.transitions.len() as f64
}

/// Per-episode training statistics, one CSV row each.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    pub feasibility_rate: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub policy_std_mean: f64,
}

pub struct TrainOutput {
    pub params: PolicyParams,
    pub adam: AdamState,
    pub log: Vec<EpisodeLog>,
}

/// Normalizes advantages in place to zero mean and unit standard deviation.
/// A near-constant batch is only centered.
fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a -= mean;
        if std > 1e-8 {
            *a /= std;
        }
    }
}

/// Gradient of the negated objective `-(L_C - c L_V)` over a minibatch,
/// accumulated into `grad` (so descending it ascends the objective).
/// Returns the minibatch surrogate and value losses.
pub fn minibatch_gradient(
    buffer: &EpisodeBuffer,
    indices: &[usize],
    params: &PolicyParams,
    config: &PpoConfig,
    grad: &mut [f64],
) -> (f64, f64) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let batch = indices.len() as f64;
    let action_dim = params.action_dim();
    let mut surrogate_total = 0.0;
    let mut value_total = 0.0;
    let mut d_mean = vec![0.0; action_dim];
    let mut d_log_std = vec![0.0; action_dim];
    for &i in indices {
        let transition = &buffer.transitions[i];
        let advantage = buffer.advantages[i];
        let target = buffer.value_targets[i];

        let (mean, actor_cache) = nn::actor_distribution(params, &transition.features)
            .expect("stored features match the actor input");
        let log_prob_new =
            nn::squashed_log_prob(&mean, params.log_std(), &transition.pre_squash);
        let ratio = (log_prob_new - transition.log_prob_old).exp();
        let clipped = clip_function(ratio, config.clip_epsilon);
        let unclipped_term = ratio * advantage;
        let clipped_term = clipped * advantage;
        surrogate_total += unclipped_term.min(clipped_term);

        // d(surrogate)/d(log_prob_new): zero when the clipped branch is both
        // active and saturated, A * ratio otherwise.
        let saturated = ratio < 1.0 - config.clip_epsilon || ratio > 1.0 + config.clip_epsilon;
        let d_lp = if unclipped_term <= clipped_term || !saturated {
            advantage * ratio
        } else {
            0.0
        };
        // Ascend L_C: the negated-objective gradient gets -d_lp / batch.
        let scale = -d_lp / batch;
        for d in 0..action_dim {
            let sigma = params.log_std()[d].exp();
            let z = (transition.pre_squash[d] - mean[d]) / sigma;
            d_mean[d] = scale * (z / sigma);
            d_log_std[d] = scale * (z * z - 1.0);
        }

        let critic = nn::forward_critic(params, &transition.features)
            .expect("stored features match the critic input");
        let residual = critic.value - target;
        value_total += residual * residual;
        // Descend c * L_V.
        let d_value = config.value_coef * 2.0 * residual / batch;

        nn::backward(
            params,
            Some((&actor_cache, &d_mean, &d_log_std)),
            Some((&critic, d_value)),
            grad,
        );
    }
    (surrogate_total / batch, value_total / batch)
}

/// Runs the full training loop: E episodes of Z rounds, updating every N
/// stored transitions with X epochs of minibatch gradient ascent. Fully
/// deterministic given the seed.
pub fn train(
    env_config: &EnvConfig,
    ppo_config: &PpoConfig,
    hidden: &[usize],
    seed: u64,
) -> Result<TrainOutput, PpoError> {
    ppo_config.validate()?;
    env_config.validate().map_err(PpoError::BadConfig)?;

    let feature_dim = env_config.feature_dim();
    let action_dim = env_config.action_dim();
    let actor = MlpSpec::new(feature_dim, hidden.to_vec(), action_dim);
    let critic = MlpSpec::new(feature_dim, hidden.to_vec(), 1);

    let mut init_rng = ChaCha12Rng::seed_from_u64(seed);
    let mut params = PolicyParams::init(actor, critic, ppo_config.init_log_std, &mut init_rng);
    let mut adam = AdamState::new(params.param_count());
    let mut env_rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut policy_rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(0x6a09_e667_f3bc_c908));
    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(0xbb67_ae85_84ca_a73b));

    let mut buffer = EpisodeBuffer::default();
    let mut grad = vec![0.0; params.param_count()];
    let mut log = Vec::with_capacity(ppo_config.episodes);

    for episode in 1..=ppo_config.episodes {
        let mut state = env::sample_state(env_config, &mut env_rng);
        buffer.clear();
        let mut reward_sum = 0.0;
        let mut feasible_count = 0usize;
        let mut surrogate_sum = 0.0;
        let mut value_loss_sum = 0.0;
        let mut update_cycles = 0usize;

        for round in 1..=env_config.horizon {
            let features = env::state_features(&state, env_config);
            let fwd = nn::forward_actor(&params, &features, &mut policy_rng)
                .expect("feature dim matches the actor spec");
            let value_estimate = nn::forward_critic(&params, &features)
                .expect("feature dim matches the critic spec")
                .value;
            let outcome = env::step(
                &state,
                &ActionVector { raw: fwd.action.raw.clone() },
                env_config,
                &mut env_rng,
            );
            reward_sum += outcome.reward;
            feasible_count += outcome.feasible as usize;
            buffer.transitions.push(Transition {
                features,
                pre_squash: fwd.action.pre_squash,
                log_prob_old: fwd.action.log_probability,
                reward: outcome.reward,
                value_estimate,
                feasible: outcome.feasible,
                round_index: round,
            });
            state = outcome.next_state;

            if buffer.transitions.len() == ppo_config.minibatch_size {
                let (surrogate, value) = update(&mut params, &mut adam, &mut buffer, ppo_config, &mut grad, &mut shuffle_rng);
                surrogate_sum += surrogate;
                value_loss_sum += value;
                update_cycles += 1;
                buffer.clear();
                if !params.all_finite() {
                    return Err(PpoError::Diverged { episode });
                }
            }
        }

        let cycles = update_cycles.max(1) as f64;
        let std_mean = params.log_std().iter().map(|ls| ls.exp()).sum::<f64>()
            / params.action_dim() as f64;
        log.push(EpisodeLog {
            episode,
            mean_reward: reward_sum / env_config.horizon as f64,
            feasibility_rate: feasible_count as f64 / env_config.horizon as f64,
            surrogate_loss: surrogate_sum / cycles,
            value_loss: value_loss_sum / cycles,
            policy_std_mean: std_mean,
        });
    }

    Ok(TrainOutput { params, adam, log })
}

/// One update cycle: advantages and targets over the full buffer, then X
/// epochs of shuffled minibatch steps. Returns the pre-update losses.
fn update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    buffer: &mut EpisodeBuffer,
    config: &PpoConfig,
    grad: &mut [f64],
    shuffle_rng: &mut ChaCha12Rng,
) -> (f64, f64) {
    buffer.advantages = compute_gae(buffer, config.gamma).expect("buffer is non-empty");
    buffer.value_targets = value_targets(buffer, config.gamma).expect("buffer is non-empty");
    if config.advantage_normalization {
        normalize_advantages(&mut buffer.advantages);
    }
    let mut indices: Vec<usize> = (0..buffer.transitions.len()).collect();
    let mut first_losses = None;
    for _ in 0..config.update_epochs {
        indices.shuffle(shuffle_rng);
        for minibatch in indices.chunks(config.minibatch_size) {
            let losses = minibatch_gradient(buffer, minibatch, params, config, grad);
            first_losses.get_or_insert(losses);
            nn::adam_step(params, grad, adam, config.learning_rate);
            params.clamp_log_std();
        }
    }
    first_losses.unwrap_or((0.0, 0.0))
}

/// Evaluation of a policy acting with its mean on freshly sampled states.
#[derive(Debug, Clone)]
pub struct StateEval {
    pub state: env::NetworkState,
    pub reward: f64,
    pub feasible: bool,
    pub contract: crate::contract::Contract,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub per_state: Vec<StateEval>,
}

impl EvalReport {
    pub fn mean_reward(&self) -> f64 {
        if self.per_state.is_empty() {
            return 0.0;
        }
        self.per_state.iter().map(|s| s.reward).sum::<f64>() / self.per_state.len() as f64
    }

    pub fn feasibility_rate(&self) -> f64 {
        if self.per_state.is_empty() {
            return 0.0;
        }
        self.per_state.iter().filter(|s| s.feasible).count() as f64 / self.per_state.len() as f64
    }
}

/// Evaluates the deterministic policy mean on `n_states` fresh states.
pub fn evaluate(
    params: &PolicyParams,
    env_config: &EnvConfig,
    n_states: usize,
    seed: u64,
) -> EvalReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let states: Vec<_> = (0..n_states)
        .map(|_| env::sample_state(env_config, &mut rng))
        .collect();
    evaluate_on(params, env_config, &states)
}

/// Evaluates the deterministic policy mean on a fixed state set.
pub fn evaluate_on(
    params: &PolicyParams,
    env_config: &EnvConfig,
    states: &[env::NetworkState],
) -> EvalReport {
    let mut per_state = Vec::with_capacity(states.len());
    // The throwaway rng only feeds next-state sampling inside step.
    let mut scratch_rng = ChaCha12Rng::seed_from_u64(0);
    for state in states {
        let features = env::state_features(state, env_config);
        let raw = nn::actor_mean(params, &features).expect("feature dim matches the actor");
        let outcome = env::step(state, &ActionVector { raw }, env_config, &mut scratch_rng);
        per_state.push(StateEval {
            state: state.clone(),
            reward: outcome.reward,
            feasible: outcome.feasible,
            contract: outcome.contract,
        });
    }
    EvalReport { per_state }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn buffer_from(rewards: &[f64], values: &[f64]) -> EpisodeBuffer {
        let transitions = rewards
            .iter()
            .zip(values)
            .enumerate()
            .map(|(i, (&reward, &value_estimate))| Transition {
                features: vec![0.0],
                pre_squash: vec![0.0],
                log_prob_old: 0.0,
                reward,
                value_estimate,
                feasible: true,
                round_index: i + 1,
            })
            .collect();
        EpisodeBuffer { transitions, advantages: vec![], value_targets: vec![] }
    }

    /// Literal double-loop evaluation of the advantage formula; the
    /// independent oracle for `compute_gae`.
    fn naive_gae(rewards: &[f64], values: &[f64], gamma: f64) -> Vec<f64> {
        let z_max = rewards.len();
        (1..=z_max)
            .map(|z| {
                let mut acc = gamma.powi((z_max - z) as i32) * values[z_max - 1] - values[z - 1];
                for y in z..z_max {
                    acc += gamma.powi((y - z) as i32) * rewards[y - 1];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn gae_hand_value() {
        let buffer = buffer_from(&[3.0, 7.0], &[1.0, 2.0]);
        let adv = compute_gae(&buffer, 0.95).unwrap();
        assert_eq!(adv[0], 0.95 * 2.0 - 1.0 + 3.0);
        assert_eq!(adv[1], 0.0);
    }

    #[test]
    fn gae_terminal_and_degenerate_cases() {
        let buffer = buffer_from(&[5.0], &[3.0]);
        assert_eq!(compute_gae(&buffer, 0.9).unwrap(), vec![0.0]);
        let zeros = buffer_from(&[0.0; 6], &[0.0; 6]);
        assert!(compute_gae(&zeros, 0.95).unwrap().iter().all(|&a| a == 0.0));
        assert!(compute_gae(&EpisodeBuffer::default(), 0.95).is_err());
    }

    #[test]
    fn gae_matches_naive_double_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.gen_range(1..=64);
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-500.0..2000.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let buffer = buffer_from(&rewards, &values);
            let fast = compute_gae(&buffer, 0.95).unwrap();
            let slow = naive_gae(&rewards, &values, 0.95);
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).abs() <= 1e-12 * s.abs().max(1.0));
            }
        }
    }

    #[test]
    fn value_targets_cases() {
        let single = buffer_from(&[4.2], &[0.0]);
        assert_eq!(value_targets(&single, 0.95).unwrap(), vec![4.2]);

        let buffer = buffer_from(&[1.0, 2.0, 3.0], &[0.0; 3]);
        assert_eq!(value_targets(&buffer, 1.0).unwrap(), vec![6.0, 5.0, 3.0]);
        assert_eq!(value_targets(&buffer, 0.0).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn value_targets_satisfy_recursion() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let rewards: Vec<f64> = (0..40).map(|_| rng.gen_range(-500.0..2000.0)).collect();
        let values = vec![0.0; 40];
        let buffer = buffer_from(&rewards, &values);
        let gamma = 0.95;
        let targets = value_targets(&buffer, gamma).unwrap();
        assert_eq!(targets[39], rewards[39]);
        for z in 0..39 {
            assert!((targets[z] - (rewards[z] + gamma * targets[z + 1])).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_function_table() {
        assert_eq!(clip_function(0.5, 0.2), 0.8);
        assert_eq!(clip_function(1.0, 0.2), 1.0);
        assert_eq!(clip_function(1.5, 0.2), 1.2);
    }

    #[test]
    fn clip_function_shape() {
        let eps = 0.2;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..100 {
            let ratio = i as f64 * 0.03;
            let clipped = clip_function(ratio, eps);
            assert!(clipped >= prev);
            if (1.0 - eps..=1.0 + eps).contains(&ratio) {
                assert_eq!(clipped, ratio);
            }
            prev = clipped;
        }
    }

    fn tiny_env() -> EnvConfig {
        EnvConfig { horizon: 16, ..EnvConfig::default() }
    }

    fn rollout_buffer(params: &PolicyParams, env_config: &EnvConfig, n: usize) -> EpisodeBuffer {
        let mut env_rng = ChaCha12Rng::seed_from_u64(100);
        let mut policy_rng = ChaCha12Rng::seed_from_u64(200);
        let mut state = env::sample_state(env_config, &mut env_rng);
        let mut buffer = EpisodeBuffer::default();
        for round in 1..=n {
            let features = env::state_features(&state, env_config);
            let fwd = nn::forward_actor(params, &features, &mut policy_rng).unwrap();
            let value = nn::forward_critic(params, &features).unwrap().value;
            let outcome = env::step(
                &state,
                &ActionVector { raw: fwd.action.raw.clone() },
                env_config,
                &mut env_rng,
            );
            buffer.transitions.push(Transition {
                features,
                pre_squash: fwd.action.pre_squash,
                log_prob_old: fwd.action.log_probability,
                reward: outcome.reward,
                value_estimate: value,
                feasible: outcome.feasible,
                round_index: round,
            });
            state = outcome.next_state;
        }
        buffer.advantages = compute_gae(&buffer, 0.95).unwrap();
        buffer.value_targets = value_targets(&buffer, 0.95).unwrap();
        buffer
    }

    fn test_params(env_config: &EnvConfig, seed: u64) -> PolicyParams {
        let actor = MlpSpec::new(env_config.feature_dim(), vec![8, 8], env_config.action_dim());
        let critic = MlpSpec::new(env_config.feature_dim(), vec![8, 8], 1);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = PolicyParams::init(actor, critic, -0.5, &mut rng);
        for slot in &mut params.theta {
            *slot += rng.gen_range(-0.05..0.05);
        }
        params.clamp_log_std();
        params
    }

    #[test]
    fn ratio_is_one_at_rollout_params() {
        let env_config = tiny_env();
        let params = test_params(&env_config, 1);
        let buffer = rollout_buffer(&params, &env_config, 32);
        for transition in &buffer.transitions {
            let (mean, _) = nn::actor_distribution(&params, &transition.features).unwrap();
            let lp = nn::squashed_log_prob(&mean, params.log_std(), &transition.pre_squash);
            let ratio = (lp - transition.log_prob_old).exp();
            assert!((ratio - 1.0).abs() <= 1e-12);
        }
        // Hence the surrogate equals the mean advantage.
        let loss = surrogate_loss(&buffer, &params, 0.2);
        let mean_adv = buffer.advantages.iter().sum::<f64>() / buffer.advantages.len() as f64;
        assert!((loss - mean_adv).abs() < 1e-9);
    }

    #[test]
    fn surrogate_single_sample_branches() {
        // With A > 0 and ratio 2 the clipped term wins: min(2A, 1.2A) = 1.2A.
        // With A < 0 and ratio 0.5 the clipped term is the more negative:
        // min(0.5A, 0.8A) = 0.8A.
        let a_pos = 3.0f64;
        let eps = 0.2;
        let r = 2.0f64;
        assert_eq!((r * a_pos).min(clip_function(r, eps) * a_pos), 1.2 * a_pos);
        let a_neg = -3.0f64;
        let r = 0.5f64;
        assert_eq!((r * a_neg).min(clip_function(r, eps) * a_neg), 0.8 * a_neg);
    }

    #[test]
    fn value_loss_cases() {
        let env_config = tiny_env();
        let params = test_params(&env_config, 2);
        let mut buffer = rollout_buffer(&params, &env_config, 8);
        // Targets equal to the critic's own outputs give zero loss.
        buffer.value_targets = buffer
            .transitions
            .iter()
            .map(|t| nn::forward_critic(&params, &t.features).unwrap().value)
            .collect();
        assert!(value_loss(&buffer, &params).abs() < 1e-15);
        // Shifting every target by 2 gives loss 4; doubling residuals quadruples.
        for target in &mut buffer.value_targets {
            *target += 2.0;
        }
        assert!((value_loss(&buffer, &params) - 4.0).abs() < 1e-12);
        for (target, t) in buffer.value_targets.iter_mut().zip(&buffer.transitions) {
            let v = nn::forward_critic(&params, &t.features).unwrap().value;
            *target = v + 2.0 * (*target - v);
        }
        assert!((value_loss(&buffer, &params) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn advantage_normalization_statistics() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut advantages: Vec<f64> = (0..512).map(|_| rng.gen_range(-500.0..2000.0)).collect();
        normalize_advantages(&mut advantages);
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let std = (advantages.iter().map(|a| a * a).sum::<f64>() / n - mean * mean).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-6);

        let mut constant = vec![7.0; 32];
        normalize_advantages(&mut constant);
        assert!(constant.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let env_config = tiny_env();
        let params = test_params(&env_config, 4);
        let mut buffer = rollout_buffer(&params, &env_config, 16);
        normalize_advantages(&mut buffer.advantages);
        // Rescale targets toward the critic's range so residual gradients are
        // comparable in magnitude to the surrogate's.
        for target in &mut buffer.value_targets {
            *target *= 1e-3;
        }
        let config = PpoConfig { minibatch_size: 16, ..PpoConfig::default() };
        // Move away from the rollout point so ratios are not all exactly 1.
        let mut params2 = params.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for slot in &mut params2.theta {
            *slot += rng.gen_range(-0.01..0.01);
        }
        params2.clamp_log_std();

        let indices: Vec<usize> = (0..16).collect();
        let mut grad = vec![0.0; params2.param_count()];
        minibatch_gradient(&buffer, &indices, &params2, &config, &mut grad);

        let objective = |p: &PolicyParams| {
            -(surrogate_loss(&buffer, p, config.clip_epsilon) - config.value_coef * value_loss(&buffer, p))
        };
        let h = 1e-5;
        let mut work = params2.clone();
        let mut checked = 0;
        // Spot-check a deterministic spread of parameters.
        for i in (0..params2.param_count()).step_by(7) {
            work.theta[i] = params2.theta[i] + h;
            let up = objective(&work);
            work.theta[i] = params2.theta[i] - h;
            let down = objective(&work);
            work.theta[i] = params2.theta[i];
            let numeric = (up - down) / (2.0 * h);
            let tol = 1e-4 * numeric.abs().max(grad[i].abs()) + 1e-7;
            assert!(
                (grad[i] - numeric).abs() <= tol,
                "param {i}: analytic {} vs numeric {numeric}",
                grad[i]
            );
            checked += 1;
        }
        assert!(checked > 40);
    }

    #[test]
    fn no_update_when_horizon_below_batch() {
        let env_config = EnvConfig { horizon: 8, ..EnvConfig::default() };
        let ppo_config = PpoConfig { episodes: 1, minibatch_size: 512, ..PpoConfig::default() };
        let out = train(&env_config, &ppo_config, &[8, 8], 77).unwrap();
        // Params must equal a fresh initialization: no update ever ran.
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let fresh = PolicyParams::init(
            MlpSpec::new(env_config.feature_dim(), vec![8, 8], env_config.action_dim()),
            MlpSpec::new(env_config.feature_dim(), vec![8, 8], 1),
            ppo_config.init_log_std,
            &mut rng,
        );
        assert_eq!(out.params.theta, fresh.theta);
        assert_eq!(out.adam.step, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let env_config = EnvConfig { horizon: 64, ..EnvConfig::default() };
        let ppo_config = PpoConfig {
            episodes: 3,
            minibatch_size: 32,
            update_epochs: 2,
            ..PpoConfig::default()
        };
        let a = train(&env_config, &ppo_config, &[8, 8], 5).unwrap();
        let b = train(&env_config, &ppo_config, &[8, 8], 5).unwrap();
        assert_eq!(a.params.theta, b.params.theta);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn evaluation_is_deterministic_and_empty_safe() {
        let env_config = tiny_env();
        let params = test_params(&env_config, 6);
        let a = evaluate(&params, &env_config, 10, 9);
        let b = evaluate(&params, &env_config, 10, 9);
        assert_eq!(a.per_state.len(), 10);
        for (x, y) in a.per_state.iter().zip(&b.per_state) {
            assert_eq!(x.reward, y.reward);
        }
        let empty = evaluate(&params, &env_config, 0, 9);
        assert!(empty.per_state.is_empty());
        assert_eq!(empty.mean_reward(), 0.0);
    }
}
