//! Contract data model, device/base-station utilities, and IR/IC feasibility.
//!
//! A contract is one (update frequency, reward) item per device type. A
//! feasible contract gives every type non-negative utility from its own item
//! (individual rationality) and no incentive to pick another type's item
//! (incentive compatibility).

use crate::qod::{self, FreshnessCaps, QodError, SlotConfig, UpdateCycle};
use thiserror::Error;

/// Comparisons against IR/IC boundaries absorb this much roundoff; grid
/// oracles and learned actions sit exactly on the boundaries.
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ContractError {
    #[error("contract has {items} items but there are {types} device types")]
    LengthMismatch { items: usize, types: usize },
}

/// A device type: inverse update cost `phi` with its population probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceType {
    pub phi: f64,
    pub probability: f64,
}

impl DeviceType {
    pub fn new(phi: f64, probability: f64) -> Self {
        assert!(phi > 0.0, "phi must be positive");
        assert!((0.0..=1.0).contains(&probability), "probability must lie in [0, 1]");
        Self { phi, probability }
    }
}

/// Sorts types ascending by phi and checks the probabilities sum to one.
/// Index k of a contract always refers to index k of the sorted set.
pub fn sorted_types(mut types: Vec<DeviceType>) -> Vec<DeviceType> {
    let total: f64 = types.iter().map(|t| t.probability).sum();
    assert!(
        (total - 1.0).abs() <= 1e-9,
        "type probabilities sum to {total}, expected 1"
    );
    types.sort_by(|a, b| a.phi.partial_cmp(&b.phi).expect("phi must not be NaN"));
    types
}

/// One contract item: an update frequency in (0, 1] paired with a reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractItem {
    pub update_frequency: f64,
    pub reward: f64,
}

impl ContractItem {
    pub fn new(update_frequency: f64, reward: f64) -> Self {
        assert!(
            update_frequency > 0.0 && update_frequency <= 1.0,
            "update frequency must lie in (0, 1]"
        );
        assert!(reward >= 0.0, "reward must be non-negative");
        Self { update_frequency, reward }
    }
}

/// An ordered list of items, index k matched to type k.
#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub items: Vec<ContractItem>,
}

impl Contract {
    pub fn new(items: Vec<ContractItem>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Everything the base station needs to value a contract.
#[derive(Debug, Clone)]
pub struct MarketConfig {
    pub device_count: u32,
    pub unit_profit: f64,
    pub preference: f64,
    pub slot: SlotConfig,
    pub caps: FreshnessCaps,
    pub types: Vec<DeviceType>,
}

impl MarketConfig {
    pub fn new(
        device_count: u32,
        unit_profit: f64,
        preference: f64,
        slot: SlotConfig,
        caps: FreshnessCaps,
        types: Vec<DeviceType>,
    ) -> Self {
        assert!(device_count >= 1, "need at least one device");
        assert!(unit_profit > 0.0, "unit profit must be positive");
        Self {
            device_count,
            unit_profit,
            preference,
            slot,
            caps,
            types: sorted_types(types),
        }
    }
}

/// Utility of a device of type `dtype` accepting `item`: reward minus the
/// update cost `f / phi`.
pub fn device_utility(item: ContractItem, dtype: DeviceType) -> f64 {
    item.reward - item.update_frequency / dtype.phi
}

fn check_len(contract: &Contract, types: &[DeviceType]) -> Result<(), ContractError> {
    if contract.len() != types.len() {
        return Err(ContractError::LengthMismatch {
            items: contract.len(),
            types: types.len(),
        });
    }
    Ok(())
}

/// Individual rationality per type: own-item utility is non-negative.
pub fn check_ir(contract: &Contract, types: &[DeviceType]) -> Result<Vec<bool>, ContractError> {
    check_len(contract, types)?;
    Ok(contract
        .items
        .iter()
        .zip(types)
        .map(|(item, dtype)| device_utility(*item, *dtype) >= -CONSTRAINT_TOL)
        .collect())
}

/// Incentive compatibility matrix: entry (k, j) says whether type k weakly
/// prefers its own item over item j. Diagonal entries are true by convention.
pub fn check_ic(contract: &Contract, types: &[DeviceType]) -> Result<Vec<Vec<bool>>, ContractError> {
    check_len(contract, types)?;
    let k = types.len();
    let mut matrix = vec![vec![true; k]; k];
    for (row, dtype) in types.iter().enumerate() {
        let own = device_utility(contract.items[row], *dtype);
        for (col, item) in contract.items.iter().enumerate() {
            if row != col {
                matrix[row][col] = own >= device_utility(*item, *dtype) - CONSTRAINT_TOL;
            }
        }
    }
    Ok(matrix)
}

/// Overall base-station utility: `M * sum_k Q_k * (beta * QoD_k - r_k)` where
/// each item's QoD is evaluated at `theta = 1 / f_k`.
pub fn bs_utility(contract: &Contract, market: &MarketConfig) -> Result<f64, QodError> {
    let mut total = 0.0;
    for (item, dtype) in contract.items.iter().zip(&market.types) {
        let cycle = UpdateCycle::from_frequency(item.update_frequency)?;
        let quality = qod::qod_score(cycle, market.slot, market.caps, market.preference)?;
        total += dtype.probability * (market.unit_profit * quality - item.reward);
    }
    Ok(market.device_count as f64 * total)
}

/// A contract is feasible when IR and IC hold everywhere and frequencies,
/// rewards, and types are in their admissible ranges.
pub fn is_feasible(contract: &Contract, types: &[DeviceType]) -> bool {
    if contract.len() != types.len() {
        return false;
    }
    let bounds_ok = contract
        .items
        .iter()
        .all(|i| i.update_frequency >= 0.0 && i.reward >= 0.0)
        && types.iter().all(|t| t.phi > 0.0);
    if !bounds_ok {
        return false;
    }
    let ir = check_ir(contract, types).expect("lengths already checked");
    if !ir.iter().all(|&ok| ok) {
        return false;
    }
    let ic = check_ic(contract, types).expect("lengths already checked");
    ic.iter().all(|row| row.iter().all(|&ok| ok))
}
