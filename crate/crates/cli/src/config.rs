use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synergrasp::env::EnvConfig;
use synergrasp::rl::PpoConfig;
use synergrasp::synergy::{SynergyKind, VaeHyperparams};
use synergrasp::synthetic::SyntheticConfig;

use crate::CliError;

/// Where every stage reads and writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Grasp keypoints, one JSON record per line.
    pub dataset: PathBuf,
    pub postures: PathBuf,
    pub synergy: PathBuf,
    pub targets: PathBuf,
    /// Per-grasp cluster assignments written next to the target table.
    pub clusters: PathBuf,
    /// Directory for `checkpoint.json` and `curve.csv`.
    pub run: PathBuf,
    pub reports: PathBuf,
    /// Hand description JSON; the built-in hand when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hand: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: "data/grasps.jsonl".into(),
            postures: "data/postures.json".into(),
            synergy: "models/synergy.json".into(),
            targets: "data/targets.json".into(),
            clusters: "data/clusters.csv".into(),
            run: "runs/policy".into(),
            reports: "reports".into(),
            hand: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynergyConfig {
    pub kind: SynergyKind,
    pub k: usize,
    pub vae: VaeHyperparams,
}

impl Default for SynergyConfig {
    fn default() -> Self {
        SynergyConfig {
            kind: SynergyKind::Vae,
            k: 2,
            vae: VaeHyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes with random object and intent.
    pub n_trials: usize,
    /// Episodes per object and intent for the distance report.
    pub n_per_target: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_trials: 500,
            n_per_target: 200,
            seed: 0,
            workers: 1,
        }
    }
}

/// Settings of every pipeline stage; every section may be omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub synthetic: SyntheticConfig,
    pub synergy: SynergyConfig,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Sets the seed of every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.synthetic.seed = seed;
        self.synergy.vae.seed = seed;
        self.ppo.seed = seed;
        self.eval.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.env.validate()?;
        self.ppo.validate()?;
        if self.synthetic.n_per_intent == 0 {
            return Err(CliError::Config("synthetic.n_per_intent must be at least 1".into()));
        }
        if self.synergy.k == 0 || self.synergy.k > synergrasp::kinematics::NUM_JOINTS {
            return Err(synergrasp::Error::InvalidRank {
                k: self.synergy.k,
                max: synergrasp::kinematics::NUM_JOINTS,
            }
            .into());
        }
        Ok(())
    }
}
