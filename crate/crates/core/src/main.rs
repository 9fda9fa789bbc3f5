use clap::{Parser, Subcommand};
use freshcontract::cli::{self, SweepMode};
use std::path::PathBuf;
use std::process::ExitCode;

/// Contract-design experiments: train the policy, compare against
/// baselines, inspect per-state contracts, sweep the preference weight, or
/// query the grid oracle directly.
#[derive(Parser)]
#[command(name = "freshcontract", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the policy for each configured seed.
    Train {
        #[arg(long, default_value = "experiment.toml")]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for CSVs and checkpoints.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against the random baseline and the oracle.
    Compare {
        #[arg(long, default_value = "experiment.toml")]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of evaluation states.
        #[arg(long, default_value_t = 20)]
        states: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the policy's contract for each state row in a file.
    States {
        #[arg(long, default_value = "experiment.toml")]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// File of rows "M, K, A_max, D_max, Q_1..Q_K, phi_1..phi_K".
        #[arg(long)]
        file: PathBuf,
    },
    /// Sweep the preference weight alpha and record both sides' utilities.
    AlphaSweep {
        #[arg(long, default_value = "experiment.toml")]
        config: PathBuf,
        /// Explicit comma-separated alphas; defaults to a uniform grid.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        /// Grid step when no explicit alphas are given.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Train a fresh policy per alpha instead of solving via the oracle.
        #[arg(long)]
        train: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the grid oracle for a supplied or sampled state.
    Oracle {
        #[arg(long, default_value = "experiment.toml")]
        config: PathBuf,
        /// State row "M, K, A_max, D_max, Q_1..Q_K, phi_1..phi_K".
        #[arg(long)]
        state: Option<String>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match args.command {
        Command::Train { config, seed, out } => cli::cmd_train(&config, seed, out.as_deref()),
        Command::Compare { config, checkpoint, states, out } => {
            cli::cmd_compare(&config, &checkpoint, states, out.as_deref())
        }
        Command::States { config, checkpoint, file } => {
            cli::cmd_states(&config, &checkpoint, &file)
        }
        Command::AlphaSweep { config, alphas, step, train, out } => {
            let alphas = alphas.unwrap_or_else(|| cli::alpha_grid(step));
            let mode = if train { SweepMode::Train } else { SweepMode::Oracle };
            cli::cmd_alpha_sweep(&config, &alphas, mode, out.as_deref())
        }
        Command::Oracle { config, state } => cli::cmd_oracle(&config, state.as_deref()),
    };
    ExitCode::from(code as u8)
}
