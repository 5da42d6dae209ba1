use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{Action, Env, EnvConfig, HandDecoder, Scene, StepResult};
use crate::error::{Error, Result};
use crate::intent::Intent;
use crate::nn::Mat;

use super::gae::{gae, normalize_advantages};
use super::policy::{sample_action, PolicyNet};

/// Summary of one finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStat {
    pub env: usize,
    pub ret: f64,
    pub len: usize,
    pub success: bool,
    pub object: usize,
    pub intent: Intent,
}

/// A batch of parallel environments with their running episode state.
///
/// Env `i` draws resets from stream `2i` and exploration noise from stream
/// `2i + 1` of the same seed, so results do not depend on `workers`.
pub struct VecEnv {
    envs: Vec<Env>,
    obs: Vec<Vec<f64>>,
    hidden: Mat,
    starts: Vec<bool>,
    rngs: Vec<ChaCha8Rng>,
    ep_return: Vec<f64>,
    ep_len: Vec<usize>,
    pool: Option<rayon::ThreadPool>,
}

impl VecEnv {
    pub fn new(
        scene: Arc<Scene>,
        config: Arc<EnvConfig>,
        decoder: HandDecoder,
        num_envs: usize,
        seed: u64,
        recurrent_size: usize,
        workers: usize,
    ) -> Result<Self> {
        if num_envs == 0 {
            return Err(Error::Config("num_envs must be at least 1".into()));
        }
        let mut envs = Vec::with_capacity(num_envs);
        let mut obs = Vec::with_capacity(num_envs);
        let mut rngs = Vec::with_capacity(num_envs);
        for i in 0..num_envs as u64 {
            let mut env = Env::new(scene.clone(), config.clone(), decoder.clone(), seed, 2 * i)?;
            obs.push(env.reset(None, None)?);
            envs.push(env);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 * i + 1);
            rngs.push(rng);
        }
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(VecEnv {
            envs,
            obs,
            hidden: Mat::zeros(num_envs, recurrent_size),
            starts: vec![true; num_envs],
            rngs,
            ep_return: vec![0.0; num_envs],
            ep_len: vec![0; num_envs],
            pool,
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn sampling_rngs(&self) -> &[ChaCha8Rng] {
        &self.rngs
    }

    fn step_all(&mut self, actions: &[Action]) -> Vec<Result<StepResult>> {
        let run = |envs: &mut [Env]| -> Vec<Result<StepResult>> {
            envs.par_iter_mut()
                .zip(actions.par_iter())
                .map(|(e, a)| e.step(a))
                .collect()
        };
        match &self.pool {
            Some(pool) => pool.install(|| run(&mut self.envs)),
            None => self.envs.iter_mut().zip(actions).map(|(e, a)| e.step(a)).collect(),
        }
    }
}

/// Experience from `horizon` steps of every env, env-major
/// (`row = env * horizon + t`).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs: Mat,
    /// Raw policy samples before squashing.
    pub actions: Mat,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the final observation where an episode hit the horizon.
    pub truncation_values: Vec<f64>,
    /// Steps that ended an episode with a success.
    pub successes: Vec<bool>,
    /// Recurrent state fed into each step.
    pub hidden: Mat,
    /// Steps whose recurrent state was reset first.
    pub starts: Vec<bool>,
    /// Value of each env's observation after the last step.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episodes: Vec<EpisodeStat>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, env: usize, t: usize) -> usize {
        env * self.horizon + t
    }

    /// GAE per env on `reward_scale · r`; advantages are normalized over the
    /// whole buffer.
    ///
    /// Episodes cut off by the horizon are bootstrapped from the value of
    /// their final observation. A success ends the episode with the object
    /// held, and is bootstrapped as if its last reward continued forever.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64, reward_scale: f64) {
        let h = self.horizon;
        let mut adv = vec![0.0; self.len()];
        let mut ret = vec![0.0; self.len()];
        for e in 0..self.num_envs {
            let r0 = e * h;
            let rewards: Vec<f64> = (r0..r0 + h)
                .map(|i| {
                    let r = reward_scale * self.rewards[i];
                    let tail = if self.successes[i] && gamma < 1.0 {
                        r / (1.0 - gamma)
                    } else {
                        self.truncation_values[i]
                    };
                    r + gamma * tail
                })
                .collect();
            let (a, r) = gae(
                &rewards,
                &self.values[r0..r0 + h],
                &self.dones[r0..r0 + h],
                self.bootstrap[e],
                gamma,
                lambda,
            );
            adv[r0..r0 + h].copy_from_slice(&a);
            ret[r0..r0 + h].copy_from_slice(&r);
        }
        normalize_advantages(&mut adv);
        self.advantages = adv;
        self.returns = ret;
    }

    pub fn mean_step_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.len() as f64
    }
}

/// Run every env for `horizon` steps under the current policy, resetting
/// finished episodes in place.
pub fn collect_rollouts(net: &PolicyNet, venv: &mut VecEnv, horizon: usize) -> Result<RolloutBuffer> {
    let n = venv.len();
    let hs = net.recurrent_size();
    let obs_dim = net.obs_dim;
    let act_dim = net.act_dim;
    let total = n * horizon;
    let mut buf = RolloutBuffer {
        num_envs: n,
        horizon,
        obs: Mat::zeros(total, obs_dim),
        actions: Mat::zeros(total, act_dim),
        log_probs: vec![0.0; total],
        values: vec![0.0; total],
        rewards: vec![0.0; total],
        dones: vec![false; total],
        truncation_values: vec![0.0; total],
        successes: vec![false; total],
        hidden: Mat::zeros(total, hs),
        starts: vec![false; total],
        bootstrap: vec![0.0; n],
        advantages: Vec::new(),
        returns: Vec::new(),
        episodes: Vec::new(),
    };
    let log_std = net.clamped_log_std();
    let mode = venv.envs[0].decoder().mode();
    for t in 0..horizon {
        let obs = Mat::from_rows(&venv.obs);
        let (mean, values, h_next) = net.forward_batch(&obs, &venv.hidden)?;
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let row = buf.row(i, t);
            let (raw, lp) = sample_action(mean.row(i), &log_std, &mut venv.rngs[i]);
            buf.obs.row_mut(row).copy_from_slice(obs.row(i));
            buf.actions.row_mut(row).copy_from_slice(&raw);
            buf.log_probs[row] = lp;
            buf.values[row] = values[i];
            buf.hidden.row_mut(row).copy_from_slice(venv.hidden.row(i));
            buf.starts[row] = venv.starts[i];
            let env = &venv.envs[i];
            let a = Action::from_policy_output(&raw, mode, &env.config().caps, &env.scene().hand)
                .map_err(|e| Error::EnvFault {
                    env: i,
                    source: Box::new(e),
                })?;
            actions.push(a);
        }
        let results = venv.step_all(&actions);
        for (i, res) in results.into_iter().enumerate() {
            let res = res.map_err(|e| Error::EnvFault {
                env: i,
                source: Box::new(e),
            })?;
            let row = buf.row(i, t);
            buf.rewards[row] = res.reward;
            buf.dones[row] = res.done;
            venv.ep_return[i] += res.reward;
            venv.ep_len[i] += 1;
            if res.done {
                buf.successes[row] = res.success;
                if !res.failed && !res.success {
                    let h = if hs > 0 { h_next.row(i).to_vec() } else { Vec::new() };
                    buf.truncation_values[row] = net.forward(&res.observation, &h)?.value;
                }
                let st = venv.envs[i].state();
                buf.episodes.push(EpisodeStat {
                    env: i,
                    ret: venv.ep_return[i],
                    len: venv.ep_len[i],
                    success: res.success,
                    object: st.active,
                    intent: st.intent,
                });
                venv.ep_return[i] = 0.0;
                venv.ep_len[i] = 0;
                venv.obs[i] = venv.envs[i].reset(None, None).map_err(|e| Error::EnvFault {
                    env: i,
                    source: Box::new(e),
                })?;
                venv.hidden.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                venv.starts[i] = true;
            } else {
                venv.obs[i] = res.observation;
                if hs > 0 {
                    venv.hidden.row_mut(i).copy_from_slice(h_next.row(i));
                }
                venv.starts[i] = false;
            }
        }
    }
    let obs = Mat::from_rows(&venv.obs);
    let (_, values, _) = net.forward_batch(&obs, &venv.hidden)?;
    buf.bootstrap = values;
    Ok(buf)
}
