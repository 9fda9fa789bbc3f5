//! Brute-force grid solver for the constrained contract optimization.
//!
//! Enumerates every contract on a per-type Cartesian grid of (frequency,
//! reward) pairs, keeps the feasible ones, and returns the utility argmax.
//! Serves as ground truth for the learned policy.

use crate::contract::{
    device_utility, Contract, ContractItem, DeviceType, MarketConfig, CONSTRAINT_TOL,
};
use crate::qod::{self, UpdateCycle};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("no feasible contract on the grid")]
    NoFeasiblePoint,
    #[error("grid has {candidates} candidate contracts, above the {limit} guard")]
    GridTooLarge { candidates: u128, limit: u128 },
    #[error("grid must be strictly increasing with at least 2 points")]
    BadGrid,
}

const CANDIDATE_GUARD: u128 = 100_000_000;

/// Per-type search grids. The same grids are used for every type.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub f_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
}

impl GridSpec {
    pub fn new(f_grid: Vec<f64>, r_grid: Vec<f64>) -> Result<Self, OracleError> {
        for grid in [&f_grid, &r_grid] {
            if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(OracleError::BadGrid);
            }
        }
        Ok(Self { f_grid, r_grid })
    }

    /// Evenly spaced grids: frequencies over (f_min, 1], rewards over [0, r_max].
    pub fn uniform(points: usize, f_min: f64, r_max: f64) -> Self {
        Self::new(linspace(f_min, 1.0, points), linspace(0.0, r_max, points))
            .expect("uniform grids are valid")
    }

    fn candidates(&self, k: usize) -> u128 {
        let per_type = (self.f_grid.len() * self.r_grid.len()) as u128;
        per_type.pow(k as u32)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best_contract: Contract,
    pub best_utility: f64,
    pub feasible_count: u64,
    pub evaluated_count: u128,
}

/// Per-type grids used internally; `solve_grid` uses the same grids for every
/// type, `refine` re-centers them per type around the incumbent item.
struct TypeGrids {
    f_grid: Vec<f64>,
    r_grid: Vec<f64>,
    /// beta * QoD at each f-grid point; QoD depends on f alone.
    quality: Vec<f64>,
}

struct Search<'a> {
    market: &'a MarketConfig,
    grids: &'a [TypeGrids],
    items: Vec<ContractItem>,
    /// Own-item utility per already-placed type.
    own_utility: Vec<f64>,
    partial_value: Vec<f64>,
    best_utility: f64,
    best: Option<Vec<ContractItem>>,
    feasible_count: u64,
}

impl Search<'_> {
    /// Places an item for type `k` and recurses. Enumeration is in
    /// lexicographic grid order and only strict improvements replace the
    /// incumbent, so ties resolve to the first candidate in that order.
    fn place(&mut self, k: usize) {
        let types = &self.market.types;
        if k == types.len() {
            self.feasible_count += 1;
            let total = self.market.device_count as f64 * self.partial_value[k];
            if self.best.is_none() || total > self.best_utility {
                self.best_utility = total;
                self.best = Some(self.items.clone());
            }
            return;
        }
        let phi = types[k].phi;
        let grids = &self.grids[k];
        for (fi, &f) in grids.f_grid.iter().enumerate() {
            let cost = f / phi;
            for &r in &grids.r_grid {
                let own = r - cost;
                // IR for type k.
                if own < -CONSTRAINT_TOL {
                    continue;
                }
                // IC against every previously placed type, both directions.
                // Pairs involving later types are checked at deeper levels.
                let item = ContractItem { update_frequency: f, reward: r };
                let mut ok = true;
                for j in 0..k {
                    let other = self.items[j];
                    let t_k = DeviceType { phi, probability: 0.0 };
                    let t_j = DeviceType { phi: types[j].phi, probability: 0.0 };
                    if own < device_utility(other, t_k) - CONSTRAINT_TOL
                        || self.own_utility[j] < device_utility(item, t_j) - CONSTRAINT_TOL
                    {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                self.items[k] = item;
                self.own_utility[k] = own;
                self.partial_value[k + 1] =
                    self.partial_value[k] + types[k].probability * (grids.quality[fi] - r);
                self.place(k + 1);
            }
        }
    }
}

fn type_grids(market: &MarketConfig, f_grid: Vec<f64>, r_grid: Vec<f64>) -> TypeGrids {
    let quality = f_grid
        .iter()
        .map(|&f| {
            let cycle = UpdateCycle::from_frequency(f).expect("grid frequency in (0, 1]");
            qod::qod_score(cycle, market.slot, market.caps, market.preference)
                .map(|q| market.unit_profit * q)
                // A frequency whose QoD argument is non-positive can never be
                // part of a best contract; poison it instead of erroring.
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    TypeGrids { f_grid, r_grid, quality }
}

fn solve_on(market: &MarketConfig, grids: &[TypeGrids]) -> Result<OracleResult, OracleError> {
    let k = market.types.len();
    assert_eq!(grids.len(), k);
    let candidates: u128 = grids
        .iter()
        .map(|g| (g.f_grid.len() * g.r_grid.len()) as u128)
        .product();
    if candidates > CANDIDATE_GUARD {
        return Err(OracleError::GridTooLarge { candidates, limit: CANDIDATE_GUARD });
    }
    let mut search = Search {
        market,
        grids,
        items: vec![ContractItem { update_frequency: 1.0, reward: 0.0 }; k],
        own_utility: vec![0.0; k],
        partial_value: vec![0.0; k + 1],
        best_utility: f64::NEG_INFINITY,
        best: None,
        feasible_count: 0,
    };
    search.place(0);
    let best_items = search.best.ok_or(OracleError::NoFeasiblePoint)?;
    let best_contract = Contract::new(best_items);
    debug_assert!(crate::contract::is_feasible(&best_contract, &market.types));
    // Contracts whose frequency hit a poisoned QoD point have -inf utility and
    // can only win if everything is poisoned, which NoFeasiblePoint covers.
    if !search.best_utility.is_finite() {
        return Err(OracleError::NoFeasiblePoint);
    }
    Ok(OracleResult {
        best_contract,
        best_utility: search.best_utility,
        feasible_count: search.feasible_count,
        evaluated_count: candidates,
    })
}

/// Exhaustive search over the grid, the same grids for every type. Returns the
/// feasible utility argmax with deterministic lexicographic tie-breaking.
pub fn solve_grid(market: &MarketConfig, grid: &GridSpec) -> Result<OracleResult, OracleError> {
    let k = market.types.len();
    let candidates = grid.candidates(k);
    if candidates > CANDIDATE_GUARD {
        return Err(OracleError::GridTooLarge { candidates, limit: CANDIDATE_GUARD });
    }
    let grids: Vec<TypeGrids> = (0..k)
        .map(|_| type_grids(market, grid.f_grid.clone(), grid.r_grid.clone()))
        .collect();
    solve_on(market, &grids)
}

/// Re-solves on per-type grids shrunk around the incumbent contract. Each
/// round keeps the grid point counts, narrows each dimension's span by
/// `shrink`, and pins the incumbent coordinate onto the new grid so utility
/// never decreases.
pub fn refine(
    market: &MarketConfig,
    seed_result: &OracleResult,
    grid: &GridSpec,
    shrink: f64,
    rounds: u32,
) -> Result<OracleResult, OracleError> {
    assert!(shrink > 0.0 && shrink <= 1.0, "shrink must lie in (0, 1]");
    assert!(rounds >= 1, "need at least one round");
    let (f_lo, f_hi) = (grid.f_grid[0], *grid.f_grid.last().unwrap());
    let (r_lo, r_hi) = (grid.r_grid[0], *grid.r_grid.last().unwrap());
    let mut incumbent = seed_result.clone();
    let mut evaluated = seed_result.evaluated_count;
    let mut feasible = seed_result.feasible_count;
    let mut width = 1.0;
    for _ in 0..rounds {
        width *= shrink;
        let grids: Vec<TypeGrids> = incumbent
            .best_contract
            .items
            .iter()
            .map(|item| {
                type_grids(
                    market,
                    windowed_grid(f_lo, f_hi, item.update_frequency, width, grid.f_grid.len()),
                    windowed_grid(r_lo, r_hi, item.reward, width, grid.r_grid.len()),
                )
            })
            .collect();
        let refined = solve_on(market, &grids)?;
        evaluated += refined.evaluated_count;
        feasible += refined.feasible_count;
        if refined.best_utility > incumbent.best_utility {
            incumbent.best_contract = refined.best_contract;
            incumbent.best_utility = refined.best_utility;
        }
    }
    incumbent.evaluated_count = evaluated;
    incumbent.feasible_count = feasible;
    Ok(incumbent)
}

/// A grid of `n` points covering a window of the original span, shifted to
/// stay inside [lo, hi], with the point nearest `center` snapped onto it.
fn windowed_grid(lo: f64, hi: f64, center: f64, width_fraction: f64, n: usize) -> Vec<f64> {
    let span = (hi - lo) * width_fraction;
    let start = (center - span / 2.0).clamp(lo, hi - span);
    let mut grid = linspace(start, start + span, n);
    let nearest = grid
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - center).abs().partial_cmp(&(b.1 - center).abs()).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    grid[nearest] = center;
    grid
}
