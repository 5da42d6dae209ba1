//! Command-line pipeline: synthetic data, retargeting, synergy training,
//! target extraction, policy training and evaluation.

mod commands;
mod config;

pub use commands::run;
pub use config::{EvalConfig, Paths, PipelineConfig, SynergyConfig};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use synergrasp::env::ActionMode;
use synergrasp::synergy::SynergyKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] synergrasp::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
        }
    }
}

/// Machine-readable error printed on stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub command: &'a str,
    pub kind: &'a str,
    pub message: String,
}

#[derive(Debug, Parser)]
#[command(name = "synergrasp", version, about = "Intent-aware grasping with hand synergies: data to trained policy")]
pub struct Cli {
    /// Pipeline config [TOML path]; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every stage [u64]; overrides the per-stage seeds.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic grasp dataset (JSONL keypoints, metres).
    GenerateSynthetic(GenerateArgs),
    /// Retarget human keypoints to robot joint angles.
    Retarget(RetargetArgs),
    /// Fit a PCA or VAE synergy model to retargeted postures.
    TrainSynergy(SynergyArgs),
    /// Cluster grasp points into use and handoff targets per object.
    ExtractTargets(TargetArgs),
    /// Train a grasping policy with PPO.
    TrainPolicy(TrainArgs),
    /// Evaluate a checkpoint or a reference controller.
    Evaluate(EvalArgs),
    /// Run every stage in order.
    Pipeline(PipelineArgs),
    /// Print the resolved config as TOML.
    ShowConfig,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenerateSynthetic(_) => "generate-synthetic",
            Command::Retarget(_) => "retarget",
            Command::TrainSynergy(_) => "train-synergy",
            Command::ExtractTargets(_) => "extract-targets",
            Command::TrainPolicy(_) => "train-policy",
            Command::Evaluate(_) => "evaluate",
            Command::Pipeline(_) => "pipeline",
            Command::ShowConfig => "show-config",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Grasps per object and intent [count].
    #[arg(long, value_name = "COUNT")]
    pub n: Option<usize>,
    /// Grasp point jitter std [m].
    #[arg(long, value_name = "METRES")]
    pub sigma: Option<f64>,
    /// Closure and joint noise std [rad].
    #[arg(long, value_name = "RAD")]
    pub posture_noise: Option<f64>,
    /// Probability of a wrong intent label [0-1].
    #[arg(long, value_name = "PROB")]
    pub label_flip: Option<f64>,
    /// Output JSONL [path].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetargetArgs {
    /// Input JSONL keypoints [path].
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Hand description JSON [path]; built-in hand if absent.
    #[arg(long, value_name = "FILE")]
    pub hand: Option<PathBuf>,
    /// Output posture file [path].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Worker threads [count].
    #[arg(long, value_name = "COUNT", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct SynergyArgs {
    /// Posture file [path].
    #[arg(long, value_name = "FILE")]
    pub postures: Option<PathBuf>,
    /// Model family [pca|vae].
    #[arg(long, value_name = "KIND")]
    pub kind: Option<SynergyKind>,
    /// Latent dimension [count, 1-19].
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// VAE training epochs [count].
    #[arg(long, value_name = "COUNT")]
    pub epochs: Option<usize>,
    /// VAE KL weight [unitless].
    #[arg(long, value_name = "BETA")]
    pub beta: Option<f64>,
    /// Output model [path].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Input JSONL keypoints [path].
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Output target table [path].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Output cluster assignments CSV [path].
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Action space of the hand [joint|pca|vae].
    #[arg(long, value_name = "MODE")]
    pub mode: Option<ActionMode>,
    /// Latent dimension for synergy modes [count].
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// PPO updates [count].
    #[arg(long, value_name = "COUNT")]
    pub updates: Option<usize>,
    /// Parallel environments [count].
    #[arg(long, value_name = "COUNT")]
    pub num_envs: Option<usize>,
    /// Rollout steps per env and update [steps].
    #[arg(long, value_name = "STEPS")]
    pub horizon: Option<usize>,
    /// Samples per gradient step [count]; must divide envs x horizon.
    #[arg(long, value_name = "COUNT")]
    pub minibatch: Option<usize>,
    /// Adam step size [unitless].
    #[arg(long, value_name = "LR")]
    pub learning_rate: Option<f64>,
    /// Drop the object one-hot from observations [switch].
    #[arg(long)]
    pub no_category: bool,
    /// Zero the palm and lift reward terms [switch].
    #[arg(long)]
    pub reach_only: bool,
    /// Synergy model [path].
    #[arg(long, value_name = "FILE")]
    pub synergy: Option<PathBuf>,
    /// Target table [path].
    #[arg(long, value_name = "FILE")]
    pub targets: Option<PathBuf>,
    /// Run directory for checkpoint.json and curve.csv [path].
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Threads stepping envs [count]; results do not depend on it.
    #[arg(long, value_name = "COUNT")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Checkpoint policy: random trials plus per-target trials.
    Policy,
    /// Scripted waypoint grasp of the requested target.
    Oracle,
    /// Zero action; the wrist never moves.
    Zero,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Policy checkpoint [path]; defaults to the run directory's.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Controller to evaluate [policy|oracle|zero].
    #[arg(long, value_enum, default_value_t = Suite::Policy)]
    pub suite: Suite,
    /// Env action space [joint|pca|vae]; the checkpoint's when absent.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<ActionMode>,
    /// Episodes with random object and intent [count].
    #[arg(long, value_name = "COUNT")]
    pub trials: Option<usize>,
    /// Episodes per object and intent [count].
    #[arg(long, value_name = "COUNT")]
    pub per_target: Option<usize>,
    /// Synergy model [path].
    #[arg(long, value_name = "FILE")]
    pub synergy: Option<PathBuf>,
    /// Target table [path].
    #[arg(long, value_name = "FILE")]
    pub targets: Option<PathBuf>,
    /// Report directory [path].
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Threads running episodes [count]; results do not depend on it.
    #[arg(long, value_name = "COUNT")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Root for every artifact [path]; relative config paths resolve under it.
    #[arg(long, value_name = "DIR")]
    pub workdir: Option<PathBuf>,
    /// PPO updates [count].
    #[arg(long, value_name = "COUNT")]
    pub updates: Option<usize>,
}
