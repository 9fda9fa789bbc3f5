//! Browser bindings: a few engine operations exposed to a static page.
//! Results are returned as JSON strings and plotted client-side.

use freshcontract::cli::parse_state_row;
use freshcontract::config::ExperimentConfig;
use freshcontract::contract::device_utility;
use freshcontract::oracle::{self, GridSpec};
use freshcontract::qod::{self, FreshnessCaps, SlotConfig, UpdateCycle};
use wasm_bindgen::prelude::*;

fn json_error(message: &str) -> String {
    format!("{{\"error\":{:?}}}", message)
}

/// Quality-of-data versus update frequency for one set of freshness caps.
/// Returns `{"f":[...],"qod":[...]}`; frequencies with an undefined score
/// are skipped.
#[wasm_bindgen]
pub fn qod_curve(max_aoi: f64, max_latency: f64, alpha: f64, points: usize) -> String {
    if !(0.0..=1.0).contains(&alpha) {
        return json_error("alpha must lie in [0, 1]");
    }
    if !(max_aoi > 0.0 && max_latency > 0.0) {
        return json_error("both caps must be positive");
    }
    let points = points.clamp(2, 2000);
    let slot = SlotConfig::default_experiment();
    let caps = FreshnessCaps::new(max_aoi, max_latency);
    let mut fs = Vec::new();
    let mut qs = Vec::new();
    for i in 0..points {
        let f = 0.01 + (1.0 - 0.01) * i as f64 / (points - 1) as f64;
        let Ok(cycle) = UpdateCycle::from_frequency(f) else { continue };
        if let Ok(q) = qod::qod_score(cycle, slot, caps, alpha) {
            fs.push(format!("{f}"));
            qs.push(format!("{q}"));
        }
    }
    format!("{{\"f\":[{}],\"qod\":[{}]}}", fs.join(","), qs.join(","))
}

fn solve(
    row: &str,
    alpha: f64,
    grid_points: usize,
) -> Result<(freshcontract::NetworkState, oracle::OracleResult), String> {
    let state = parse_state_row(row)?;
    let mut config = ExperimentConfig::default();
    config.env.type_count = state.type_count;
    config.env.preference = alpha;
    let market = state.to_market(&config.env);
    let grid = GridSpec::uniform(grid_points, config.env.min_frequency, config.env.max_reward);
    let coarse = oracle::solve_grid(&market, &grid).map_err(|e| e.to_string())?;
    let refined = oracle::refine(&market, &coarse, &grid, 0.25, 2).map_err(|e| e.to_string())?;
    Ok((state, refined))
}

/// Best contract for one state row "M, K, A_max, D_max, Q_1..Q_K,
/// phi_1..phi_K", solved on a refined grid. Returns
/// `{"f":[...],"r":[...],"utility":...,"feasible_count":...}`.
#[wasm_bindgen]
pub fn solve_contract(row: &str, alpha: f64, grid_points: usize) -> String {
    if !(0.0..=1.0).contains(&alpha) {
        return json_error("alpha must lie in [0, 1]");
    }
    let grid_points = grid_points.clamp(3, 65);
    match solve(row, alpha, grid_points) {
        Ok((_, result)) => {
            let fs: Vec<String> =
                result.best_contract.items.iter().map(|i| format!("{}", i.update_frequency)).collect();
            let rs: Vec<String> =
                result.best_contract.items.iter().map(|i| format!("{}", i.reward)).collect();
            format!(
                "{{\"f\":[{}],\"r\":[{}],\"utility\":{},\"feasible_count\":{}}}",
                fs.join(","),
                rs.join(","),
                result.best_utility,
                result.feasible_count
            )
        }
        Err(e) => json_error(&e),
    }
}

/// Oracle-solved utilities of both sides versus the preference weight, for
/// one state row. Returns `{"alpha":[...],"bs":[...],"device":[...]}`.
#[wasm_bindgen]
pub fn alpha_curve(row: &str, steps: usize) -> String {
    let steps = steps.clamp(2, 41);
    let mut alphas = Vec::new();
    let mut bs = Vec::new();
    let mut device = Vec::new();
    for i in 0..steps {
        let alpha = i as f64 / (steps - 1) as f64;
        match solve(row, alpha, 21) {
            Ok((state, result)) => {
                let config = {
                    let mut c = ExperimentConfig::default();
                    c.env.type_count = state.type_count;
                    c.env.preference = alpha;
                    c
                };
                let market = state.to_market(&config.env);
                let dev: f64 = market
                    .types
                    .iter()
                    .zip(&result.best_contract.items)
                    .map(|(t, item)| t.probability * device_utility(*item, *t))
                    .sum();
                alphas.push(format!("{alpha}"));
                bs.push(format!("{}", result.best_utility));
                device.push(format!("{dev}"));
            }
            Err(e) => return json_error(&e),
        }
    }
    format!(
        "{{\"alpha\":[{}],\"bs\":[{}],\"device\":[{}]}}",
        alphas.join(","),
        bs.join(","),
        device.join(",")
    )
}
