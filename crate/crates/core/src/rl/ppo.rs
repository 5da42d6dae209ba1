use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, Mat, Params};

use super::policy::{entropy, log_prob, PolicyNet, SeqLayout, LOG_STD_MAX, LOG_STD_MIN};
use super::rollout::RolloutBuffer;
use super::PpoConfig;

/// Samples for one gradient step.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub obs: Mat,
    pub actions: Mat,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Required for recurrent policies.
    pub seq: Option<SeqLayout>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.obs.rows
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate loss with value and entropy terms, and its gradient.
///
/// `total = policy − entropy_coef · entropy + value_coef · value`, where
/// `policy = −mean(min(ρA, clip(ρ, 1±ε)A))` and `value = mean((V − R)²)`.
pub fn ppo_loss(net: &PolicyNet, mb: &Minibatch, cfg: &PpoConfig) -> Result<(LossStats, PolicyNet)> {
    let b = mb.len();
    if b == 0 {
        return Err(Error::EmptyDataset);
    }
    let (mean, values, cache) = net.forward_train(&mb.obs, mb.seq.as_ref())?;
    let log_std = net.clamped_log_std();
    let bf = b as f64;
    let eps = cfg.clip;
    let mut policy = 0.0;
    let mut value = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut dmean = Mat::zeros(b, net.act_dim);
    let mut dvalue = vec![0.0; b];
    let mut dlog_std = vec![0.0; net.act_dim];
    for i in 0..b {
        let a = mb.actions.row(i);
        let m = mean.row(i);
        let lp = log_prob(m, &log_std, a);
        let diff = lp - mb.old_log_probs[i];
        let ratio = diff.exp();
        let adv = mb.advantages[i];
        let s1 = ratio * adv;
        let s2 = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        policy -= s1.min(s2) / bf;
        kl += (ratio - 1.0 - diff) / bf;
        let dlp = if s1 <= s2 {
            -adv * ratio / bf
        } else {
            clipped += 1;
            0.0
        };
        if dlp != 0.0 {
            let row = dmean.row_mut(i);
            for j in 0..net.act_dim {
                let inv_var = (-2.0 * log_std[j]).exp();
                let d = a[j] - m[j];
                row[j] = dlp * d * inv_var;
                dlog_std[j] += dlp * (d * d * inv_var - 1.0);
            }
        }
        let err = values[i] - mb.returns[i];
        value += err * err / bf;
        dvalue[i] = cfg.value_coef * 2.0 * err / bf;
    }
    let ent = entropy(&log_std);
    let mut grad = net.zeros_like();
    net.backward(&cache, &dmean, &dvalue, mb.seq.as_ref(), &mut grad);
    for j in 0..net.act_dim {
        let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&net.log_std[j]);
        grad.log_std[j] = if inside { dlog_std[j] - cfg.entropy_coef } else { 0.0 };
    }
    let stats = LossStats {
        total: policy + cfg.value_coef * value - cfg.entropy_coef * ent,
        policy_loss: policy,
        value_loss: value,
        entropy: ent,
        approx_kl: kl,
        clip_fraction: clipped as f64 / bf,
    };
    Ok((stats, grad))
}

/// Unclipped importance-weighted objective `mean(ρA)`.
pub fn surrogate_unclipped(net: &PolicyNet, mb: &Minibatch) -> Result<f64> {
    let (mean, _, _) = net.forward_train(&mb.obs, mb.seq.as_ref())?;
    let log_std = net.clamped_log_std();
    let mut s = 0.0;
    for i in 0..mb.len() {
        let lp = log_prob(mean.row(i), &log_std, mb.actions.row(i));
        s += (lp - mb.old_log_probs[i]).exp() * mb.advantages[i];
    }
    Ok(s / mb.len() as f64)
}

fn gather(buf: &RolloutBuffer, rows: &[usize], seq: Option<SeqLayout>) -> Minibatch {
    Minibatch {
        obs: buf.obs.select_rows(rows),
        actions: buf.actions.select_rows(rows),
        old_log_probs: rows.iter().map(|&r| buf.log_probs[r]).collect(),
        advantages: rows.iter().map(|&r| buf.advantages[r]).collect(),
        returns: rows.iter().map(|&r| buf.returns[r]).collect(),
        seq,
    }
}

/// Split the buffer into shuffled minibatches. Recurrent policies get whole
/// env trajectories laid out time-major.
pub fn minibatches(buf: &RolloutBuffer, size: usize, recurrent: bool, rng: &mut ChaCha8Rng) -> Vec<Minibatch> {
    if recurrent {
        let per = (size / buf.horizon).max(1);
        let mut envs: Vec<usize> = (0..buf.num_envs).collect();
        envs.shuffle(rng);
        envs.chunks(per)
            .map(|group| {
                let mut rows = Vec::with_capacity(group.len() * buf.horizon);
                for t in 0..buf.horizon {
                    rows.extend(group.iter().map(|&e| buf.row(e, t)));
                }
                let h0 = buf.hidden.select_rows(&group.iter().map(|&e| buf.row(e, 0)).collect::<Vec<_>>());
                let seq = SeqLayout {
                    n_seq: group.len(),
                    len: buf.horizon,
                    h0,
                    starts: rows.iter().map(|&r| buf.starts[r]).collect(),
                };
                gather(buf, &rows, Some(seq))
            })
            .collect()
    } else {
        let mut rows: Vec<usize> = (0..buf.len()).collect();
        rows.shuffle(rng);
        rows.chunks(size).map(|c| gather(buf, c, None)).collect()
    }
}

/// Epochs of minibatch Adam steps on the clipped objective. On a non-finite
/// loss the parameters and optimizer are restored and the update fails.
pub fn ppo_update(
    net: &mut PolicyNet,
    opt: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
    update: usize,
) -> Result<LossStats> {
    if buf.advantages.len() != buf.len() {
        return Err(Error::ContractViolation("advantages not computed".into()));
    }
    let saved = (net.clone(), opt.clone());
    let mut sum = LossStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        for mb in minibatches(buf, cfg.minibatch_size, net.gru.is_some(), rng) {
            let (stats, grad) = ppo_loss(net, &mb, cfg)?;
            let mut flat = grad.flatten();
            if !stats.total.is_finite() || flat.iter().any(|g| !g.is_finite()) {
                *net = saved.0;
                *opt = saved.1;
                return Err(Error::TrainingDiverged {
                    step: update,
                    last_stable: update.checked_sub(1),
                });
            }
            clip_grad_norm(&mut flat, cfg.max_grad_norm);
            opt.step(net, &flat);
            sum.total += stats.total;
            sum.policy_loss += stats.policy_loss;
            sum.value_loss += stats.value_loss;
            sum.entropy += stats.entropy;
            sum.approx_kl += stats.approx_kl;
            sum.clip_fraction += stats.clip_fraction;
            count += 1.0;
        }
    }
    if count > 0.0 {
        sum.total /= count;
        sum.policy_loss /= count;
        sum.value_loss /= count;
        sum.entropy /= count;
        sum.approx_kl /= count;
        sum.clip_fraction /= count;
    }
    Ok(sum)
}
