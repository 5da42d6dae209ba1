//! Variational autoencoder over normalized joint angles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{JointAngles, NUM_JOINTS};
use crate::nn::{Activation, Adam, Mat, Mlp, Params};

/// Per-joint std floor; joints that never move normalize to zero.
const STD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub k: usize,
    pub activation: Activation,
    /// 19 → hidden… → 2k (μ then log σ²).
    pub encoder: Mlp,
    /// k → hidden… → 19.
    pub decoder: Mlp,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub limits: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeHyperparams {
    /// Encoder hidden sizes; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for VaeHyperparams {
    fn default() -> Self {
        VaeHyperparams {
            hidden: vec![64, 32],
            beta: 1.0,
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub total: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub kl: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
}

/// Loss terms averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Gradients for encoder and decoder, same layout as the model.
#[derive(Debug, Clone)]
pub struct VaeGrads {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl VaeGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut g = self.encoder.flatten();
        g.extend(self.decoder.flatten());
        g
    }
}

impl Params for VaeModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.encoder.visit(f);
        self.decoder.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}

/// `½ Σ (μ² + σ² − 1 − log σ²)` for one diagonal Gaussian.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

impl VaeModel {
    /// Fresh model with normalization statistics taken from `data`.
    pub fn init(
        data: &[JointAngles],
        k: usize,
        hidden: &[usize],
        limits: &[(f64, f64); NUM_JOINTS],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if !(1..=NUM_JOINTS).contains(&k) {
            return Err(Error::InvalidRank { k, max: NUM_JOINTS });
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = data.len() as f64;
        let mut mean = vec![0.0; NUM_JOINTS];
        for q in data {
            for (m, v) in mean.iter_mut().zip(q.as_slice()) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; NUM_JOINTS];
        for q in data {
            for ((s, v), m) in std.iter_mut().zip(q.as_slice()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        std.iter_mut().for_each(|s| *s = s.sqrt().max(STD_FLOOR));

        let mut enc_sizes = vec![NUM_JOINTS];
        enc_sizes.extend_from_slice(hidden);
        enc_sizes.push(2 * k);
        let mut dec_sizes = vec![k];
        dec_sizes.extend(hidden.iter().rev());
        dec_sizes.push(NUM_JOINTS);
        let activation = Activation::Elu;
        Ok(VaeModel {
            k,
            activation,
            encoder: Mlp::init(&enc_sizes, activation, Activation::Identity, 1.0, rng),
            decoder: Mlp::init(&dec_sizes, activation, Activation::Identity, 1.0, rng),
            norm_mean: mean,
            norm_std: std,
            limits: limits.iter().map(|(lo, hi)| [*lo, *hi]).collect(),
        })
    }

    fn check_layout(&self) -> Result<()> {
        let enc = self.encoder.sizes();
        let dec = self.decoder.sizes();
        check_dim("vae encoder input", NUM_JOINTS, enc[0])?;
        check_dim("vae encoder output", 2 * self.k, *enc.last().unwrap())?;
        check_dim("vae decoder input", self.k, dec[0])?;
        check_dim("vae decoder output", NUM_JOINTS, *dec.last().unwrap())?;
        for m in [&self.encoder, &self.decoder] {
            for w in m.layers.windows(2) {
                check_dim("vae layer chain", w[0].outputs(), w[1].inputs())?;
            }
        }
        check_dim("vae normalization", NUM_JOINTS, self.norm_mean.len())?;
        check_dim("vae normalization", NUM_JOINTS, self.norm_std.len())?;
        check_dim("vae limits", NUM_JOINTS, self.limits.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_layout()?;
        if !self.all_finite() {
            return Err(Error::NumericalFault("non-finite VAE weights".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(&self.norm_mean)
            .zip(&self.norm_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn normalize_batch(&self, batch: &[JointAngles]) -> Mat {
        let rows: Vec<Vec<f64>> = batch.iter().map(|q| self.normalize(q.as_slice())).collect();
        Mat::from_rows(&rows)
    }

    /// Posterior mean and standard deviation.
    pub fn encode(&self, q: &JointAngles) -> (Vec<f64>, Vec<f64>) {
        let out = self.encoder.forward_row(&self.normalize(q.as_slice()));
        let mu = out[..self.k].to_vec();
        let sigma = out[self.k..].iter().map(|lv| (0.5 * lv).exp()).collect();
        (mu, sigma)
    }

    /// Decoder output in radians before clamping.
    pub fn decode_raw(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim("vae latent", self.k, z.len())?;
        let out = self.decoder.forward_row(z);
        Ok(out
            .iter()
            .zip(&self.norm_mean)
            .zip(&self.norm_std)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }

    pub fn decode(&self, z: &[f64]) -> Result<JointAngles> {
        let mut q = self.decode_raw(z)?;
        for (v, l) in q.iter_mut().zip(&self.limits) {
            *v = v.clamp(l[0], l[1]);
        }
        JointAngles::from_slice(&q)
    }

    /// Mean per-joint absolute error of `decode(μ(q))` over `data`, radians.
    pub fn reconstruction_error(&self, data: &[JointAngles]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let total: f64 = data
            .iter()
            .map(|q| {
                let (mu, _) = self.encode(q);
                let r = self.decode(&mu).expect("latent has model dimension");
                r.as_slice()
                    .iter()
                    .zip(q.as_slice())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum();
        total / (data.len() * NUM_JOINTS) as f64
    }
}

/// Batch ELBO and its gradient.
///
/// Reconstruction is the squared error summed over the 19 normalized
/// joints; KL is `½ Σ (μ² + σ² − 1 − log σ²)`. Both are averaged over the
/// batch and combined as `reconstruction + beta · KL`. `eps` holds the
/// reparameterization noise, one row per sample.
pub fn elbo_loss(m: &VaeModel, batch: &[JointAngles], eps: &Mat, beta: f64) -> Result<(ElboTerms, VaeGrads)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dim("elbo noise rows", batch.len(), eps.rows)?;
    check_dim("elbo noise cols", m.k, eps.cols)?;
    m.validate()?;
    let k = m.k;
    let b = batch.len();
    let inv_b = 1.0 / b as f64;
    let x = m.normalize_batch(batch);

    let (enc_out, enc_cache) = m.encoder.forward_cached(&x);
    let mut z = Mat::zeros(b, k);
    let mut kl = 0.0;
    for i in 0..b {
        let row = enc_out.row(i);
        let (mu, lv) = row.split_at(k);
        kl += kl_divergence(mu, lv);
        for d in 0..k {
            z.data[i * k + d] = mu[d] + (0.5 * lv[d]).exp() * eps.at(i, d);
        }
    }
    let (xhat, dec_cache) = m.decoder.forward_cached(&z);
    let mut recon = 0.0;
    let mut dxhat = Mat::zeros(b, NUM_JOINTS);
    for ((d, xh), xv) in dxhat.data.iter_mut().zip(&xhat.data).zip(&x.data) {
        let e = xh - xv;
        recon += e * e;
        *d = 2.0 * e * inv_b;
    }
    recon *= inv_b;
    kl *= inv_b;

    let mut dec_grad = m.decoder.zeros_like();
    let dz = m
        .decoder
        .backward(&dec_cache, &dxhat, &mut dec_grad, true)
        .expect("requested");
    let mut denc = Mat::zeros(b, 2 * k);
    for i in 0..b {
        let row = enc_out.row(i);
        for d in 0..k {
            let mu = row[d];
            let lv = row[k + d];
            let sigma = (0.5 * lv).exp();
            let g = dz.at(i, d);
            denc.data[i * 2 * k + d] = g + beta * mu * inv_b;
            denc.data[i * 2 * k + k + d] =
                g * eps.at(i, d) * 0.5 * sigma + beta * 0.5 * (lv.exp() - 1.0) * inv_b;
        }
    }
    let mut enc_grad = m.encoder.zeros_like();
    m.encoder.backward(&enc_cache, &denc, &mut enc_grad, false);

    let total = recon + beta * kl;
    if !total.is_finite() {
        return Err(Error::NumericalFault("non-finite ELBO".into()));
    }
    Ok((
        ElboTerms {
            total,
            reconstruction: recon,
            kl,
        },
        VaeGrads {
            encoder: enc_grad,
            decoder: dec_grad,
        },
    ))
}

/// Train a VAE with Adam on shuffled minibatches; deterministic in `hp.seed`.
pub fn vae_train(
    data: &[JointAngles],
    k: usize,
    hp: &VaeHyperparams,
    limits: &[(f64, f64); NUM_JOINTS],
) -> Result<(VaeModel, TrainReport)> {
    if hp.batch_size == 0 || data.len() < hp.batch_size {
        return Err(Error::Config(format!(
            "dataset of {} postures is smaller than batch size {}",
            data.len(),
            hp.batch_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = VaeModel::init(data, k, &hp.hidden, limits, &mut rng)?;
    let mut opt = Adam::new(model.num_params(), hp.learning_rate);
    let mut report = TrainReport {
        total: Vec::with_capacity(hp.epochs),
        reconstruction: Vec::with_capacity(hp.epochs),
        kl: Vec::with_capacity(hp.epochs),
        epochs: 0,
        seed: hp.seed,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let (mut tot, mut rec, mut kl) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<JointAngles> = chunk.iter().map(|&i| data[i]).collect();
            let eps = Mat::from_vec(
                batch.len(),
                k,
                (0..batch.len() * k).map(|_| StandardNormal.sample(&mut rng)).collect(),
            );
            let diverged = || Error::TrainingDiverged {
                step: epoch,
                last_stable: epoch.checked_sub(1),
            };
            let (terms, grads) = elbo_loss(&model, &batch, &eps, hp.beta).map_err(|e| match e {
                Error::NumericalFault(_) => diverged(),
                other => other,
            })?;
            let w = batch.len() as f64 / data.len() as f64;
            tot += terms.total * w;
            rec += terms.reconstruction * w;
            kl += terms.kl * w;
            opt.step(&mut model, &grads.flatten());
            if !model.all_finite() {
                return Err(diverged());
            }
        }
        report.total.push(tot);
        report.reconstruction.push(rec);
        report.kl.push(kl);
        report.epochs = epoch + 1;
    }
    Ok((model, report))
}
