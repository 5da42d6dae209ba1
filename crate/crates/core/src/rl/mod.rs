//! PPO trainer: actor-critic network, vectorized rollouts, GAE and
//! clipped-surrogate updates.

mod gae;
mod policy;
mod ppo;
mod rollout;
mod train;

pub use gae::{gae, gae_brute_force, normalize_advantages};
pub use policy::{entropy, log_prob, sample_action, ObsNorm, PolicyArch, PolicyNet, PolicyOutput, SeqLayout, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{minibatches, ppo_loss, ppo_update, surrogate_unclipped, LossStats, Minibatch};
pub use rollout::{collect_rollouts, EpisodeStat, RolloutBuffer, VecEnv};
pub use train::{decoder_for, train, train_with, Checkpoint, CurveRow, TrainSetup, TrainingCurve, CHECKPOINT_SCHEMA};

use serde::{Deserialize, Serialize};

use crate::env::ActionMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub num_envs: usize,
    /// Steps per env per update.
    pub horizon: usize,
    pub total_updates: usize,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Multiplies env rewards before advantage estimation.
    pub reward_scale: f64,
    pub seed: u64,
    pub mode: ActionMode,
    /// Latent dimension for synergy modes.
    pub k: usize,
    pub include_category: bool,
    pub arch: PolicyArch,
    /// Updates between checkpoints.
    pub checkpoint_every: usize,
    /// Threads stepping envs; results do not depend on it.
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            num_envs: 64,
            horizon: 150,
            total_updates: 2000,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch_size: 2400,
            entropy_coef: 0.003,
            value_coef: 0.5,
            max_grad_norm: 1.0,
            reward_scale: 0.02,
            seed: 0,
            mode: ActionMode::Vae,
            k: 2,
            include_category: true,
            arch: PolicyArch::default(),
            checkpoint_every: 100,
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.num_envs == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("num_envs, horizon, epochs and minibatch_size must be positive");
        }
        if (self.num_envs * self.horizon) % self.minibatch_size != 0 {
            return bad("minibatch_size must divide num_envs * horizon");
        }
        if self.arch.recurrent.is_some() && self.minibatch_size % self.horizon != 0 {
            return bad("recurrent minibatches must hold whole trajectories");
        }
        let positive = [self.learning_rate, self.max_grad_norm, self.reward_scale];
        let non_negative = [self.entropy_coef, self.value_coef];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("learning rate, grad norm, reward scale and loss coefficients must be finite and non-negative");
        }
        if self.arch.hidden.is_empty() || self.arch.hidden.contains(&0) || self.arch.recurrent == Some(0) {
            return bad("network widths must be positive");
        }
        if self.mode != ActionMode::Joint && self.k == 0 {
            return Err(Error::InvalidRank { k: 0, max: 19 });
        }
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        crate::env::WRIST_DIM + self.mode.hand_dim(self.k)
    }
}
