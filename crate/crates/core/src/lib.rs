//! Contract design for data-freshness markets: a closed-form quality-of-data
//! model, contract feasibility checks, an exhaustive grid-search solver, a
//! contextual market environment, and a from-scratch policy-gradient learner.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod contract;
pub mod env;
pub mod nn;
pub mod oracle;
pub mod ppo;
pub mod qod;

pub use contract::{Contract, ContractItem, DeviceType, MarketConfig};
pub use env::{EnvConfig, NetworkState};
pub use oracle::{GridSpec, OracleResult};
pub use ppo::PpoConfig;
pub use qod::{FreshnessCaps, SlotConfig, UpdateCycle};
