//! `dmap` — train, evaluate and dissect morphology-robust locomotion
//! policies.
//!
//! Subcommands: `testset`, `train`, `distill`, `eval`, `matrix`, `analyze`.
//! Every command writes a `manifest.json` capturing the resolved
//! configuration, the source revision and hashes of its inputs, and never
//! mutates its inputs. Exit codes: 2 usage, 3 configuration, 4 missing
//! file / io, 5 simulation divergence, 6 malformed artifact.

mod commands;
mod exit;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dmap", version, about = "Morphology-robust locomotion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a fixed test set of body configurations.
    Testset {
        /// Environment name (hopper2d | walker2d).
        #[arg(long)]
        env: String,
        /// Perturbation bound of the test cube.
        #[arg(long)]
        sigma: f64,
        /// Test-set seed (its own seeding domain, disjoint from training).
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of morphologies.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one agent per configured seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override config entries: `--set train.total_steps=1000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory (overrides `out_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; per-run seeds derive from it and the seed list.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Distill a trained Oracle's morphology encoder into a history encoder
    /// and assemble the resulting two-step policy.
    Distill {
        #[arg(long)]
        config: PathBuf,
        /// Trained oracle checkpoint (overrides `distill.oracle`).
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Zero-shot evaluation of a checkpoint on a test set.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        /// Training sigma of the checkpoint (labels the report iid/ood).
        #[arg(long)]
        train_sigma: Option<f64>,
        /// Also sweep each limb's length from intact to amputated.
        #[arg(long, default_value_t = false)]
        sweep_limbs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the IID/OOD table from per-seed checkpoints.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint tree: `<dir>/sigma_<s>/seed_<k>/final.bin`.
        #[arg(long)]
        ckpt_dir: PathBuf,
        /// Parallel evaluation processes for independent cells.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attention heatmaps, attention-dynamics embeddings and tangling
    /// comparisons for a dmap checkpoint.
    Analyze {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        testset: PathBuf,
        /// Episodes to log (taken from the start of the test set).
        #[arg(long, default_value_t = 3)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Testset { env, sigma, seed, n, out } => commands::testset(&env, sigma, seed, n, &out),
        Command::Train { config, overrides, out, seed } => commands::train(&config, &overrides, out.as_deref(), seed),
        Command::Distill { config, oracle, overrides, out, seed } => {
            commands::distill(&config, oracle.as_deref(), &overrides, out.as_deref(), seed)
        }
        Command::Eval { ckpt, testset, train_sigma, sweep_limbs, out } => {
            commands::eval(&ckpt, &testset, train_sigma, sweep_limbs, &out)
        }
        Command::Matrix { config, ckpt_dir, jobs, overrides, out } => {
            commands::matrix(&config, &ckpt_dir, jobs, &overrides, &out)
        }
        Command::Analyze { ckpt, testset, episodes, out } => commands::analyze(&ckpt, &testset, episodes, &out),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit::code_for(&e));
    }
}
