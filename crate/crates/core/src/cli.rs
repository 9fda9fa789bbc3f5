//! Experiment driver: the five subcommands, CSV artifact emission, and
//! checkpoint handling.

use crate::config::{ConfigError, ExperimentConfig};
use crate::contract::device_utility;
use crate::env::{self, EnvConfig, NetworkState};
use crate::nn::{self, AdamState, PolicyParams};
use crate::oracle::{self, GridSpec, OracleResult};
use crate::{baselines, ppo};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Overrides the default output directory when set.
pub const OUT_DIR_ENV: &str = "FRESHCONTRACT_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BAD_CONFIG: i32 = 2;

/// Offset mixed into the configured seed for evaluation-state sampling, so
/// evaluation states differ from training states at the same seed.
const EVAL_SEED_SALT: u64 = 0x00e7_a15e;

fn load_config(path: &Path) -> Result<ExperimentConfig, i32> {
    ExperimentConfig::load(path).map_err(|err| {
        eprintln!("error: {err}");
        match err {
            ConfigError::Io { .. } => EXIT_BAD_CONFIG,
            _ => EXIT_BAD_CONFIG,
        }
    })
}

fn resolve_out_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(config.output_dir.as_deref().unwrap_or("out"))
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    file.flush()
}

fn save_checkpoint(path: &Path, params: &PolicyParams, adam: &AdamState) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = BufWriter::new(File::create(path)?);
    nn::write_checkpoint(&mut file, params, adam)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    file.flush()
}

fn load_checkpoint(path: &Path) -> Result<(PolicyParams, AdamState), String> {
    let file = File::open(path).map_err(|e| format!("cannot open checkpoint {}: {e}", path.display()))?;
    let mut reader = BufReader::new(file);
    nn::read_checkpoint(&mut reader).map_err(|e| format!("bad checkpoint {}: {e}", path.display()))
}

/// Training-log file name for one seed.
pub fn training_log_name(seed: u64) -> String {
    format!("training_log_seed{seed}.csv")
}

/// Checkpoint file name for one seed.
pub fn checkpoint_name(seed: u64) -> String {
    format!("checkpoint_seed{seed}.bin")
}

pub const TRAINING_LOG_HEADER: &str =
    "episode,mean_reward,feasibility_rate,surrogate_loss,value_loss,policy_std_mean";

/// Runs training for every configured seed, writing one training-log CSV and
/// one checkpoint per seed.
pub fn cmd_train(config_path: &Path, seed_override: Option<u64>, out_flag: Option<&Path>) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out_dir = resolve_out_dir(out_flag, &config);
    for seed in config.effective_seeds(seed_override) {
        let output = match ppo::train(&config.env, &config.ppo, &config.nn.hidden, seed) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: training failed for seed {seed}: {e}");
                return EXIT_ERROR;
            }
        };
        let rows: Vec<String> = output
            .log
            .iter()
            .map(|l| {
                format!(
                    "{},{},{},{},{},{}",
                    l.episode,
                    l.mean_reward,
                    l.feasibility_rate,
                    l.surrogate_loss,
                    l.value_loss,
                    l.policy_std_mean
                )
            })
            .collect();
        let log_path = out_dir.join(training_log_name(seed));
        let ckpt_path = out_dir.join(checkpoint_name(seed));
        if let Err(e) = write_csv(&log_path, TRAINING_LOG_HEADER, &rows) {
            eprintln!("error: cannot write {}: {e}", log_path.display());
            return EXIT_ERROR;
        }
        if let Err(e) = save_checkpoint(&ckpt_path, &output.params, &output.adam) {
            eprintln!("error: cannot write {}: {e}", ckpt_path.display());
            return EXIT_ERROR;
        }
        let last = output.log.last().expect("at least one episode");
        println!(
            "seed {seed}: {} episodes, final mean reward {:.2}, feasibility {:.3} -> {}, {}",
            last.episode,
            last.mean_reward,
            last.feasibility_rate,
            log_path.display(),
            ckpt_path.display()
        );
    }
    EXIT_OK
}

fn eval_states(config: &ExperimentConfig, count: usize) -> Vec<NetworkState> {
    let mut rng = ChaCha12Rng::seed_from_u64(config.env.seed.wrapping_add(EVAL_SEED_SALT));
    (0..count).map(|_| env::sample_state(&config.env, &mut rng)).collect()
}

/// Refined grid-search solution for one state under the configured grids.
fn oracle_solve(
    state: &NetworkState,
    config: &ExperimentConfig,
) -> Result<OracleResult, oracle::OracleError> {
    let market = state.to_market(&config.env);
    let grid = GridSpec::uniform(
        config.oracle.grid_points,
        config.env.min_frequency,
        config.env.max_reward,
    );
    let coarse = oracle::solve_grid(&market, &grid)?;
    if config.oracle.refine_rounds == 0 {
        return Ok(coarse);
    }
    oracle::refine(
        &market,
        &coarse,
        &grid,
        config.oracle.refine_shrink,
        config.oracle.refine_rounds as u32,
    )
}

pub const COMPARE_HEADER: &str = "state_id,ppo_reward,random_reward,oracle_reward,ppo_feasible";

/// Evaluates the trained policy, the random baseline, and the grid oracle on
/// a shared evaluation state set.
pub fn cmd_compare(
    config_path: &Path,
    checkpoint: &Path,
    n_states: usize,
    out_flag: Option<&Path>,
) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let (params, _) = match load_checkpoint(checkpoint) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    if params.action_dim() != config.env.action_dim() {
        eprintln!(
            "error: checkpoint action dimension {} does not match the configured {} types",
            params.action_dim(),
            config.env.type_count
        );
        return EXIT_ERROR;
    }
    let states = eval_states(&config, n_states);
    let ppo_report = ppo::evaluate_on(&params, &config.env, &states);
    let mut random_rng =
        ChaCha12Rng::seed_from_u64(config.env.seed.wrapping_add(EVAL_SEED_SALT).wrapping_add(1));

    let mut rows = Vec::with_capacity(states.len());
    let mut random_sum = 0.0;
    let mut oracle_sum = 0.0;
    for (id, (state, ppo_eval)) in states.iter().zip(&ppo_report.per_state).enumerate() {
        let (random_reward, _, _) = baselines::random_step(state, &config.env, &mut random_rng);
        let oracle_reward = match oracle_solve(state, &config) {
            Ok(result) => result.best_utility,
            Err(e) => {
                eprintln!("error: oracle failed on state {id}: {e}");
                return EXIT_ERROR;
            }
        };
        random_sum += random_reward;
        oracle_sum += oracle_reward;
        rows.push(format!(
            "{id},{},{random_reward},{oracle_reward},{}",
            ppo_eval.reward, ppo_eval.feasible
        ));
    }
    let out_dir = resolve_out_dir(out_flag, &config);
    let path = out_dir.join("compare.csv");
    if let Err(e) = write_csv(&path, COMPARE_HEADER, &rows) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return EXIT_ERROR;
    }
    let n = states.len().max(1) as f64;
    println!(
        "means over {} states: policy {:.2}, random {:.2}, oracle {:.2}; policy feasibility {:.3} -> {}",
        states.len(),
        ppo_report.mean_reward(),
        random_sum / n,
        oracle_sum / n,
        ppo_report.feasibility_rate(),
        path.display()
    );
    EXIT_OK
}

/// Parses one state row in the layout `M, K, A_max, D_max, Q_1..Q_K,
/// phi_1..phi_K`.
pub fn parse_state_row(row: &str) -> Result<NetworkState, String> {
    let fields: Vec<f64> = row
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad field {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if fields.len() < 4 {
        return Err(format!("need at least 4 fields, got {}", fields.len()));
    }
    let type_count = fields[1] as usize;
    if fields[1] <= 0.0 || fields[1].fract() != 0.0 {
        return Err(format!("K must be a positive integer, got {}", fields[1]));
    }
    let expected = 4 + 2 * type_count;
    if fields.len() != expected {
        return Err(format!(
            "K={type_count} needs {expected} fields (M, K, A_max, D_max, Q_1..Q_K, phi_1..phi_K), got {}",
            fields.len()
        ));
    }
    let state = NetworkState {
        device_count: fields[0] as u32,
        type_count,
        max_aoi: fields[2],
        max_latency: fields[3],
        type_probs: fields[4..4 + type_count].to_vec(),
        type_phis: fields[4 + type_count..].to_vec(),
    };
    state.validate()?;
    Ok(state)
}

/// Prints the policy's decoded contract for each state row in the file.
/// Malformed or mismatched rows produce per-row errors; the rest proceed.
pub fn cmd_states(config_path: &Path, checkpoint: &Path, states_file: &Path) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let (params, _) = match load_checkpoint(checkpoint) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let text = match std::fs::read_to_string(states_file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", states_file.display());
            return EXIT_ERROR;
        }
    };
    let mut had_row_errors = false;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let state = match parse_state_row(line) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("line {}: {e}", line_no + 1);
                had_row_errors = true;
                continue;
            }
        };
        if 2 * state.type_count != params.action_dim() {
            eprintln!(
                "line {}: state has K={} but the checkpoint expects K={}",
                line_no + 1,
                state.type_count,
                params.action_dim() / 2
            );
            had_row_errors = true;
            continue;
        }
        let report = ppo::evaluate_on(&params, &config.env, std::slice::from_ref(&state));
        let eval = &report.per_state[0];
        let fs: Vec<String> =
            eval.contract.items.iter().map(|i| format!("{:.4}", i.update_frequency)).collect();
        let rs: Vec<String> =
            eval.contract.items.iter().map(|i| format!("{:.4}", i.reward)).collect();
        println!(
            "line {}: f=[{}] r=[{}] feasible={} utility={:.4}",
            line_no + 1,
            fs.join(", "),
            rs.join(", "),
            eval.feasible,
            eval.reward
        );
    }
    if had_row_errors {
        EXIT_ERROR
    } else {
        EXIT_OK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Solve each state with the grid oracle at every preference weight.
    Oracle,
    /// Train a fresh policy at every preference weight and evaluate it.
    Train,
}

pub const ALPHA_SWEEP_HEADER: &str = "alpha,bs_utility_mean,device_utility_mean";

/// Evaluation states for the sweep: half freshly sampled, half their
/// cap-swapped mirrors, so neither freshness cap dominates by sampling luck.
pub fn sweep_states(config: &ExperimentConfig, base_count: usize) -> Vec<NetworkState> {
    let base = eval_states(config, base_count);
    let mut states = Vec::with_capacity(2 * base.len());
    for state in base {
        let mut mirror = state.clone();
        std::mem::swap(&mut mirror.max_aoi, &mut mirror.max_latency);
        states.push(state);
        states.push(mirror);
    }
    states
}

/// Mean device utility for one state/contract pair: per-type utilities
/// weighted by the type distribution.
fn mean_device_utility(state: &NetworkState, env_config: &EnvConfig, contract: &crate::contract::Contract) -> f64 {
    let market = state.to_market(env_config);
    market
        .types
        .iter()
        .zip(&contract.items)
        .map(|(t, item)| t.probability * device_utility(*item, *t))
        .sum()
}

/// Sweeps the preference weight alpha, reporting mean utilities of both
/// sides over a fixed evaluation set.
pub fn cmd_alpha_sweep(
    config_path: &Path,
    alphas: &[f64],
    mode: SweepMode,
    out_flag: Option<&Path>,
) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if alphas.is_empty() {
        eprintln!("error: alpha list is empty");
        return EXIT_ERROR;
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        eprintln!("error: every alpha must lie in [0, 1]");
        return EXIT_ERROR;
    }
    let states = sweep_states(&config, 12);
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut sweep_config = config.clone();
        sweep_config.env.preference = alpha;
        let mut bs_sum = 0.0;
        let mut device_sum = 0.0;
        match mode {
            SweepMode::Oracle => {
                for state in &states {
                    match oracle_solve(state, &sweep_config) {
                        Ok(result) => {
                            bs_sum += result.best_utility;
                            device_sum += mean_device_utility(
                                state,
                                &sweep_config.env,
                                &result.best_contract,
                            );
                        }
                        Err(e) => {
                            eprintln!("error: oracle failed at alpha {alpha}: {e}");
                            return EXIT_ERROR;
                        }
                    }
                }
            }
            SweepMode::Train => {
                let output = match ppo::train(
                    &sweep_config.env,
                    &sweep_config.ppo,
                    &sweep_config.nn.hidden,
                    sweep_config.effective_seeds(None)[0],
                ) {
                    Ok(o) => o,
                    Err(e) => {
                        eprintln!("error: training failed at alpha {alpha}: {e}");
                        return EXIT_ERROR;
                    }
                };
                let report = ppo::evaluate_on(&output.params, &sweep_config.env, &states);
                for eval in &report.per_state {
                    bs_sum += eval.reward;
                    device_sum +=
                        mean_device_utility(&eval.state, &sweep_config.env, &eval.contract);
                }
            }
        }
        let n = states.len() as f64;
        rows.push(format!("{alpha},{},{}", bs_sum / n, device_sum / n));
        println!(
            "alpha {alpha}: BS utility {:.2}, device utility {:.4}",
            bs_sum / n,
            device_sum / n
        );
    }
    let out_dir = resolve_out_dir(out_flag, &config);
    let path = out_dir.join("alpha_sweep.csv");
    if let Err(e) = write_csv(&path, ALPHA_SWEEP_HEADER, &rows) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return EXIT_ERROR;
    }
    println!("wrote {}", path.display());
    EXIT_OK
}

/// Solves the grid oracle for a supplied or freshly sampled state and prints
/// the result.
pub fn cmd_oracle(config_path: &Path, state_row: Option<&str>) -> i32 {
    let config = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let state = match state_row {
        Some(row) => match parse_state_row(row) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: bad state row: {e}");
                return EXIT_ERROR;
            }
        },
        None => eval_states(&config, 1).remove(0),
    };
    let result = match oracle_solve(&state, &config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    println!(
        "state: M={} K={} A_max={:.4} D_max={:.4} Q=[{}] phi=[{}]",
        state.device_count,
        state.type_count,
        state.max_aoi,
        state.max_latency,
        state.type_probs.iter().map(|q| format!("{q:.4}")).collect::<Vec<_>>().join(", "),
        state.type_phis.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>().join(", ")
    );
    for (k, item) in result.best_contract.items.iter().enumerate() {
        println!("type {}: f={:.6} r={:.6}", k + 1, item.update_frequency, item.reward);
    }
    println!(
        "best utility {:.6}; {} feasible of {} evaluated candidates",
        result.best_utility, result.feasible_count, result.evaluated_count
    );
    EXIT_OK
}

/// Uniform alpha grid with the given step, always including both endpoints.
pub fn alpha_grid(step: f64) -> Vec<f64> {
    assert!(step > 0.0 && step <= 1.0, "step must lie in (0, 1]");
    let n = (1.0 / step).round() as usize;
    // Divide instead of accumulating the step so grid points print cleanly.
    (0..=n).map(|i| i as f64 / n as f64).collect()
}
