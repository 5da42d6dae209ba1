use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::nn::{Activation, Gru, GruStep, Linear, Mat, Mlp, MlpCache, Params};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const NORM_STD_FLOOR: f64 = 1e-2;
const NORM_CLIP: f64 = 10.0;

/// Network shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyArch {
    /// Hidden size of the recurrent layer; `None` disables it.
    pub recurrent: Option<usize>,
    /// MLP trunk widths.
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PolicyArch {
    fn default() -> Self {
        PolicyArch {
            recurrent: None,
            hidden: vec![128, 128, 64],
            init_log_std: -0.5,
        }
    }
}

/// Running per-dimension observation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ObsNorm {
    pub fn new(dim: usize) -> Self {
        ObsNorm {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, (o, v)) in out.iter_mut().zip(x).enumerate() {
            let std = self.var[j].sqrt().max(NORM_STD_FLOOR);
            *o = ((v - self.mean[j]) / std).clamp(-NORM_CLIP, NORM_CLIP);
        }
    }

    pub fn normalize(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(x.rows, x.cols);
        for i in 0..x.rows {
            self.normalize_into(x.row(i), out.row_mut(i));
        }
        out
    }

    /// Merge the statistics of the rows of `x`.
    pub fn update(&mut self, x: &Mat) {
        if x.rows == 0 {
            return;
        }
        let n = x.rows as f64;
        for j in 0..x.cols {
            let mean = (0..x.rows).map(|i| x.at(i, j)).sum::<f64>() / n;
            let var = (0..x.rows).map(|i| (x.at(i, j) - mean).powi(2)).sum::<f64>() / n;
            if self.count == 0.0 {
                self.mean[j] = mean;
                self.var[j] = var;
                continue;
            }
            let total = self.count + n;
            let delta = mean - self.mean[j];
            let m2 = self.var[j] * self.count + var * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count += x.rows as f64;
    }
}

/// Actor-critic network: optional GRU, MLP trunk, Gaussian mean head,
/// value head and a state-independent log-std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs_norm: ObsNorm,
    pub gru: Option<Gru>,
    pub trunk: Mlp,
    pub mean_head: Linear,
    pub value_head: Linear,
    pub log_std: Vec<f64>,
}

impl Params for PolicyNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        if let Some(g) = &self.gru {
            g.visit(f);
        }
        self.trunk.visit(f);
        self.mean_head.visit(f);
        self.value_head.visit(f);
        f(&self.log_std);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        if let Some(g) = &mut self.gru {
            g.visit_mut(f);
        }
        self.trunk.visit_mut(f);
        self.mean_head.visit_mut(f);
        self.value_head.visit_mut(f);
        f(&mut self.log_std);
    }
}

/// Result of one forward pass on one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
    /// Next recurrent state; empty without a recurrent layer.
    pub hidden: Vec<f64>,
}

/// Cached activations of a training forward pass.
pub struct ForwardCache {
    trunk: MlpCache,
    features: Mat,
    gru_steps: Vec<GruStep>,
}

/// Rows of a minibatch arranged as `len` time steps of `n_seq` parallel
/// sequences, time-major (`row = t * n_seq + s`).
#[derive(Debug, Clone)]
pub struct SeqLayout {
    pub n_seq: usize,
    pub len: usize,
    /// Recurrent state before the first step of each sequence.
    pub h0: Mat,
    /// Rows whose recurrent input is reset to zero (episode starts).
    pub starts: Vec<bool>,
}

impl PolicyNet {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, arch: &PolicyArch, rng: &mut R) -> Self {
        let gru = arch.recurrent.map(|h| Gru::init(obs_dim, h, rng));
        let trunk_in = arch.recurrent.unwrap_or(obs_dim);
        let mut sizes = vec![trunk_in];
        sizes.extend(&arch.hidden);
        let trunk = Mlp::init(&sizes, Activation::Elu, Activation::Elu, 1.0, rng);
        let feat = trunk.outputs();
        PolicyNet {
            obs_dim,
            act_dim,
            obs_norm: ObsNorm::new(obs_dim),
            gru,
            trunk,
            mean_head: Linear::init(feat, act_dim, 0.01, rng),
            value_head: Linear::init(feat, 1, 1.0, rng),
            log_std: vec![arch.init_log_std; act_dim],
        }
    }

    pub fn recurrent_size(&self) -> usize {
        self.gru.as_ref().map_or(0, Gru::size)
    }

    pub fn clamped_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// Single observation forward pass.
    pub fn forward(&self, obs: &[f64], hidden: &[f64]) -> Result<PolicyOutput> {
        check_dim("observation", self.obs_dim, obs.len())?;
        let mut x = vec![0.0; self.obs_dim];
        self.obs_norm.normalize_into(obs, &mut x);
        let (input, h_next) = match &self.gru {
            Some(g) => {
                check_dim("recurrent state", g.size(), hidden.len())?;
                let h = g.step_row(&x, hidden);
                (h.clone(), h)
            }
            None => (x, Vec::new()),
        };
        let f = self.trunk.forward_row(&input);
        let mut mean = vec![0.0; self.act_dim];
        self.mean_head.forward_row(&f, &mut mean);
        let mut value = [0.0];
        self.value_head.forward_row(&f, &mut value);
        Ok(PolicyOutput {
            mean,
            log_std: self.clamped_log_std(),
            value: value[0],
            hidden: h_next,
        })
    }

    /// Batched forward over raw observations; returns means, values and
    /// next recurrent states (zero columns without a recurrent layer).
    pub fn forward_batch(&self, obs: &Mat, hidden: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
        check_dim("observation", self.obs_dim, obs.cols)?;
        let x = self.obs_norm.normalize(obs);
        let (input, h_next) = match &self.gru {
            Some(g) => {
                check_dim("recurrent state", g.size(), hidden.cols)?;
                let (h, _) = g.step(&x, hidden);
                (h.clone(), h)
            }
            None => (x, Mat::zeros(obs.rows, 0)),
        };
        let f = self.trunk.forward(&input);
        let mean = self.mean_head.forward(&f);
        let v = self.value_head.forward(&f);
        Ok((mean, v.data, h_next))
    }

    /// Forward over a minibatch, keeping what the backward pass needs.
    pub fn forward_train(&self, obs: &Mat, seq: Option<&SeqLayout>) -> Result<(Mat, Vec<f64>, ForwardCache)> {
        check_dim("observation", self.obs_dim, obs.cols)?;
        let x = self.obs_norm.normalize(obs);
        let mut gru_steps = Vec::new();
        let input = match (&self.gru, seq) {
            (Some(g), Some(s)) => {
                check_dim("sequence rows", s.n_seq * s.len, obs.rows)?;
                let hs = g.size();
                let mut feats = Mat::zeros(obs.rows, hs);
                let mut h = s.h0.clone();
                for t in 0..s.len {
                    let rows: Vec<usize> = (t * s.n_seq..(t + 1) * s.n_seq).collect();
                    for (si, &r) in rows.iter().enumerate() {
                        if s.starts[r] {
                            h.row_mut(si).iter_mut().for_each(|v| *v = 0.0);
                        }
                    }
                    let (hn, step) = g.step(&x.select_rows(&rows), &h);
                    for (si, &r) in rows.iter().enumerate() {
                        feats.row_mut(r).copy_from_slice(hn.row(si));
                    }
                    gru_steps.push(step);
                    h = hn;
                }
                feats
            }
            (Some(_), None) => {
                return Err(crate::Error::ContractViolation(
                    "recurrent policy needs a sequence layout".into(),
                ))
            }
            (None, _) => x,
        };
        let (f, trunk) = self.trunk.forward_cached(&input);
        let mean = self.mean_head.forward(&f);
        let v = self.value_head.forward(&f);
        Ok((
            mean,
            v.data,
            ForwardCache {
                trunk,
                features: f,
                gru_steps,
            },
        ))
    }

    /// Backpropagate output gradients; accumulates into `grad` except the
    /// log-std entries, which callers fill directly.
    pub fn backward(&self, cache: &ForwardCache, dmean: &Mat, dvalue: &[f64], seq: Option<&SeqLayout>, grad: &mut PolicyNet) {
        let dv = Mat::from_vec(dvalue.len(), 1, dvalue.to_vec());
        let mut df = self
            .mean_head
            .backward(&cache.features, dmean, &mut grad.mean_head, true)
            .expect("requested");
        let dfv = self
            .value_head
            .backward(&cache.features, &dv, &mut grad.value_head, true)
            .expect("requested");
        for (a, b) in df.data.iter_mut().zip(&dfv.data) {
            *a += b;
        }
        let want_dx = self.gru.is_some();
        let dx = self.trunk.backward(&cache.trunk, &df, &mut grad.trunk, want_dx);
        if let (Some(g), Some(gg), Some(s), Some(dh_all)) = (&self.gru, grad.gru.as_mut(), seq, dx) {
            let hs = g.size();
            let mut carry = Mat::zeros(s.n_seq, hs);
            for t in (0..s.len).rev() {
                let rows: Vec<usize> = (t * s.n_seq..(t + 1) * s.n_seq).collect();
                let mut dh = dh_all.select_rows(&rows);
                for (a, b) in dh.data.iter_mut().zip(&carry.data) {
                    *a += b;
                }
                let mut prev = g.backward_step(&cache.gru_steps[t], &dh, gg);
                for (si, &r) in rows.iter().enumerate() {
                    if s.starts[r] {
                        prev.row_mut(si).iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                carry = prev;
            }
        }
    }
}

/// Draw `mean + exp(log_std) ⊙ ε` and return it with its log density.
pub fn sample_action<R: Rng>(mean: &[f64], log_std: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
    let a: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, l)| {
            let e: f64 = rng.sample(StandardNormal);
            m + l.exp() * e
        })
        .collect();
    let lp = log_prob(mean, log_std, &a);
    (a, lp)
}

/// Diagonal Gaussian log density.
pub fn log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((m, l), x) in mean.iter().zip(log_std).zip(a) {
        let z = (x - m) / l.exp();
        lp += -0.5 * z * z - l - 0.5 * (2.0 * PI).ln();
    }
    lp
}

/// Entropy of a diagonal Gaussian.
pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|l| 0.5 * (2.0 * PI * std::f64::consts::E).ln() + l).sum()
}
