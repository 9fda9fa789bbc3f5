//! Reference policies the learner is compared against: uniform random
//! actions and replayed per-state grid-search solutions.

use crate::contract::Contract;
use crate::env::{self, ActionVector, EnvConfig, NetworkState};
use crate::oracle::{self, GridSpec, OracleError};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    Oracle,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::Oracle => "oracle",
        }
    }
}

/// A state-independent random policy: each raw action coordinate is drawn
/// uniformly from the pre-squash box, so the decoded frequencies and rewards
/// are uniform over their feasible ranges.
pub fn random_action(env_config: &EnvConfig, rng: &mut ChaCha12Rng) -> ActionVector {
    let raw = (0..env_config.action_dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    ActionVector { raw }
}

/// Reward and feasibility of one random action in the given state.
pub fn random_step(
    state: &NetworkState,
    env_config: &EnvConfig,
    rng: &mut ChaCha12Rng,
) -> (f64, bool, Contract) {
    let action = random_action(env_config, rng);
    let outcome = env::step(state, &action, env_config, rng);
    (outcome.reward, outcome.feasible, outcome.contract)
}

/// Grid-search solution for one state, replayed as a baseline: returns the
/// best utility found and the contract that achieves it.
pub fn oracle_step(
    state: &NetworkState,
    env_config: &EnvConfig,
    grid: &GridSpec,
) -> Result<(f64, Contract), OracleError> {
    let market = state.to_market(env_config);
    let result = oracle::solve_grid(&market, grid)?;
    Ok((result.best_utility, result.best_contract))
}
