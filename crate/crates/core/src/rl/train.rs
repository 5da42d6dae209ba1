use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{ActionMode, EnvConfig, HandDecoder, Scene};
use crate::error::{Error, Result};
use crate::nn::{Adam, Params};
use crate::synergy::{SynergyKind, SynergyModel};

use super::policy::PolicyNet;
use super::ppo::ppo_update;
use super::rollout::{collect_rollouts, VecEnv};
use super::PpoConfig;

pub const CHECKPOINT_SCHEMA: u32 = 1;
/// Episodes in the success window of the curve.
const SUCCESS_WINDOW: usize = 256;
const NET_STREAM: u64 = 1 << 40;
const SHUFFLE_STREAM: u64 = (1 << 40) + 1;

/// Everything besides the PPO settings that training needs.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub scene: Arc<Scene>,
    /// `include_category` is taken from the PPO config.
    pub env: EnvConfig,
    pub synergy: Option<Arc<SynergyModel>>,
}

/// Hand decoder for `mode`, checking the synergy model kind and size.
pub fn decoder_for(mode: ActionMode, k: usize, synergy: Option<&Arc<SynergyModel>>) -> Result<HandDecoder> {
    let kind = match mode {
        ActionMode::Joint => return Ok(HandDecoder::Joint),
        ActionMode::Pca => SynergyKind::Pca,
        ActionMode::Vae => SynergyKind::Vae,
    };
    let model = synergy.ok_or(Error::MissingModel(k))?;
    if model.kind() != kind {
        return Err(Error::ModeMismatch {
            expected: mode.to_string(),
            got: model.kind().as_str().to_string(),
        });
    }
    if model.k() != k {
        return Err(Error::MissingModel(k));
    }
    Ok(HandDecoder::Synergy(model.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    /// Mean return of the episodes that ended during the update.
    pub mean_reward: f64,
    /// Success share of the most recent finished episodes.
    pub success_window: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Seconds since training started; not written to the CSV.
    #[serde(skip)]
    pub wall_clock: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(["update", "mean_reward", "success_window", "policy_loss", "value_loss", "entropy"])
                .map_err(|e| Error::Csv {
                    path: "<curve>".into(),
                    source: e,
                })?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Csv {
                path: "<curve>".into(),
                source: e,
            })?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("curve csv: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

/// Policy weights with the settings and random state they were trained
/// under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: u32,
    /// Updates completed.
    pub update: usize,
    pub config: PpoConfig,
    pub env: EnvConfig,
    pub net: PolicyNet,
    pub optimizer: Adam,
    pub shuffle_rng: ChaCha8Rng,
    pub sampling_rngs: Vec<ChaCha8Rng>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if c.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Config(format!("unsupported checkpoint schema {}", c.schema)));
        }
        if c.net.act_dim != c.config.action_dim() || c.net.obs_dim != c.env.observation_dim() {
            return Err(Error::ContractViolation("checkpoint network does not match its config".into()));
        }
        Ok(c)
    }

    /// SHA-256 of the serialized policy weights.
    pub fn weights_hash(&self) -> String {
        let text = serde_json::to_string(&self.net).expect("network serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Train without progress reporting.
pub fn train(cfg: &PpoConfig, setup: &TrainSetup, out_dir: Option<&Path>) -> Result<(PolicyNet, TrainingCurve)> {
    train_with(cfg, setup, out_dir, &mut |_| {})
}

/// Alternate rollouts and PPO updates for `total_updates`. With `out_dir`,
/// `checkpoint.json` is rewritten every `checkpoint_every` updates and at
/// the end, and `curve.csv` at the end. On divergence the last checkpoint
/// stays on disk.
pub fn train_with(
    cfg: &PpoConfig,
    setup: &TrainSetup,
    out_dir: Option<&Path>,
    on_update: &mut dyn FnMut(&CurveRow),
) -> Result<(PolicyNet, TrainingCurve)> {
    cfg.validate()?;
    let decoder = decoder_for(cfg.mode, cfg.k, setup.synergy.as_ref())?;
    let mut env_cfg = setup.env.clone();
    env_cfg.include_category = cfg.include_category;
    env_cfg.validate()?;
    let env_cfg = Arc::new(env_cfg);

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(NET_STREAM);
    let mut net = PolicyNet::new(env_cfg.observation_dim(), cfg.action_dim(), &cfg.arch, &mut init_rng);
    let mut opt = Adam::new(net.num_params(), cfg.learning_rate);
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle.set_stream(SHUFFLE_STREAM);
    let mut venv = VecEnv::new(
        setup.scene.clone(),
        env_cfg.clone(),
        decoder,
        cfg.num_envs,
        cfg.seed,
        net.recurrent_size(),
        cfg.workers,
    )?;

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let save = |update: usize, net: &PolicyNet, opt: &Adam, shuffle: &ChaCha8Rng, venv: &VecEnv| -> Result<()> {
        if let Some(dir) = out_dir {
            Checkpoint {
                schema: CHECKPOINT_SCHEMA,
                update,
                config: cfg.clone(),
                env: (*env_cfg).clone(),
                net: net.clone(),
                optimizer: opt.clone(),
                shuffle_rng: shuffle.clone(),
                sampling_rngs: venv.sampling_rngs().to_vec(),
            }
            .save(&dir.join("checkpoint.json"))?;
        }
        Ok(())
    };

    let start = Instant::now();
    let mut curve = TrainingCurve::default();
    let mut window: VecDeque<bool> = VecDeque::with_capacity(SUCCESS_WINDOW);
    let mut last_reward = 0.0;
    for update in 0..cfg.total_updates {
        let mut buf = collect_rollouts(&net, &mut venv, cfg.horizon)?;
        buf.compute_advantages(cfg.gamma, cfg.lambda, cfg.reward_scale);
        let stats = ppo_update(&mut net, &mut opt, &buf, cfg, &mut shuffle, update)?;
        net.obs_norm.update(&buf.obs);

        if !buf.episodes.is_empty() {
            last_reward = buf.episodes.iter().map(|e| e.ret).sum::<f64>() / buf.episodes.len() as f64;
        }
        for e in &buf.episodes {
            if window.len() == SUCCESS_WINDOW {
                window.pop_front();
            }
            window.push_back(e.success);
        }
        let success = if window.is_empty() {
            0.0
        } else {
            window.iter().filter(|s| **s).count() as f64 / window.len() as f64
        };
        let row = CurveRow {
            update,
            mean_reward: last_reward,
            success_window: success,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            wall_clock: start.elapsed().as_secs_f64(),
        };
        on_update(&row);
        curve.rows.push(row);
        if cfg.checkpoint_every > 0 && (update + 1) % cfg.checkpoint_every == 0 {
            save(update + 1, &net, &opt, &shuffle, &venv)?;
        }
    }
    save(cfg.total_updates, &net, &opt, &shuffle, &venv)?;
    if let Some(dir) = out_dir {
        curve.save(&dir.join("curve.csv"))?;
    }
    Ok((net, curve))
}
