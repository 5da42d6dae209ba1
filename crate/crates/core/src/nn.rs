//! Minimal dense networks with hand-written backward passes.
//!
//! Everything is `f64` and row-major; a batch is a [`Mat`] with one sample
//! per row. Gradient containers reuse the parameter types so that every
//! model can be flattened in one fixed order for the optimizer, gradient
//! clipping and finite-difference checks.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Rows `idx` gathered into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (dst, &i) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(i));
        }
        out
    }

    /// Columns `[start, start + n)`.
    pub fn cols_range(&self, start: usize, n: usize) -> Mat {
        let mut out = Mat::zeros(self.rows, n);
        for i in 0..self.rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[start..start + n]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`, where `op` optionally transposes.
pub fn gemm(alpha: f64, a: &Mat, trans_a: bool, b: &Mat, trans_b: bool, beta: f64, c: &mut Mat) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.data.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, a.cols) } else { (a.cols, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols) } else { (b.cols, 1) };
    // SAFETY: shapes and strides are checked above; the buffers are owned
    // and do not alias (`c` is borrowed mutably).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Flat, ordered access to every trainable parameter.
pub trait Params {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn assign(&mut self, flat: &[f64]) {
        let mut off = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        });
        assert_eq!(off, flat.len(), "parameter count mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v = value));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |s| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }
}

/// Fully connected layer `y = x W + b` with `W` of shape `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Mat::zeros(inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    /// Scaled Glorot-normal weights, zero bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain * (2.0 / (inputs + outputs) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        Linear {
            weight: Mat::from_vec(inputs, outputs, data),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = Mat::zeros(x.rows, self.outputs());
        for i in 0..x.rows {
            y.row_mut(i).copy_from_slice(&self.bias);
        }
        gemm(1.0, x, false, &self.weight, false, 1.0, &mut y);
        y
    }

    /// Single-row forward that does not depend on batch composition.
    pub fn forward_row(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        let n = self.outputs();
        for (i, xi) in x.iter().enumerate() {
            let w = &self.weight.data[i * n..(i + 1) * n];
            for (o, wv) in out.iter_mut().zip(w) {
                *o += xi * wv;
            }
        }
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dx` when
    /// `want_dx`.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Linear, want_dx: bool) -> Option<Mat> {
        gemm(1.0, x, true, dy, false, 1.0, &mut grad.weight);
        for i in 0..dy.rows {
            for (g, d) in grad.bias.iter_mut().zip(dy.row(i)) {
                *g += d;
            }
        }
        want_dx.then(|| {
            let mut dx = Mat::zeros(dy.rows, self.inputs());
            gemm(1.0, dy, false, &self.weight, true, 0.0, &mut dx);
            dx
        })
    }
}

impl Params for Linear {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weight.data);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weight.data);
        f(&mut self.bias);
    }
}

/// Stack of linear layers; `hidden` after every layer except the last,
/// which uses `output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Per-layer inputs and pre-activations from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Mat>,
    pre: Vec<Mat>,
}

impl Mlp {
    pub fn init<R: Rng>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        last_gain: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { last_gain } else { 1.0 };
                Linear::init(sizes[i], sizes[i + 1], gain, rng)
            })
            .collect();
        Mlp {
            layers,
            hidden,
            output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    /// Layer sizes from input to output.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.inputs()];
        s.extend(self.layers.iter().map(|l| l.outputs()));
        s
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            h = layer.forward(&h);
            if act != Activation::Identity {
                h.data.iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        h
    }

    pub fn forward_cached(&self, x: &Mat) -> (Mat, MlpCache) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let z = layer.forward(&h);
            let mut a = z.clone();
            if act != Activation::Identity {
                a.data.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            cache.inputs.push(h);
            cache.pre.push(z);
            h = a;
        }
        (h, cache)
    }

    /// Single-row forward, independent of any batching.
    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let mut out = vec![0.0; layer.outputs()];
            layer.forward_row(&h, &mut out);
            if act != Activation::Identity {
                out.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            h = out;
        }
        h
    }

    /// Backpropagate `dy` (gradient w.r.t. the output); accumulates into
    /// `grad` and returns the gradient w.r.t. the input when requested.
    pub fn backward(&self, cache: &MlpCache, dy: &Mat, grad: &mut Mlp, want_dx: bool) -> Option<Mat> {
        let n = self.layers.len();
        let mut delta = dy.clone();
        let mut dx = None;
        for i in (0..n).rev() {
            let act = self.activation(i);
            if act != Activation::Identity {
                for (d, z) in delta.data.iter_mut().zip(&cache.pre[i].data) {
                    *d *= act.derivative(*z);
                }
            }
            let need = i > 0 || want_dx;
            let prev = self.layers[i].backward(&cache.inputs[i], &delta, &mut grad.layers[i], need);
            if i > 0 {
                delta = prev.expect("requested");
            } else {
                dx = prev;
            }
        }
        dx
    }
}

impl Params for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            l.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
    }
}

/// Single-layer gated recurrent unit, gate order `[reset, update, new]`:
///
/// ```text
/// r  = σ(x Wr + br + h Ur + cr)
/// z  = σ(x Wz + bz + h Uz + cz)
/// n  = tanh(x Wn + bn + r ⊙ (h Un + cn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub input: Linear,
    pub hidden: Linear,
}

/// Intermediate values of one GRU step.
#[derive(Debug, Clone)]
pub struct GruStep {
    x: Mat,
    h: Mat,
    r: Mat,
    z: Mat,
    n: Mat,
    gh_n: Mat,
}

impl Gru {
    pub fn init<R: Rng>(inputs: usize, size: usize, rng: &mut R) -> Self {
        Gru {
            input: Linear::init(inputs, 3 * size, 1.0, rng),
            hidden: Linear::init(size, 3 * size, 1.0, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn size(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn inputs(&self) -> usize {
        self.input.inputs()
    }

    fn gates(&self, gi: &[f64], gh: &[f64], h: &[f64], out: &mut [f64], rzn: Option<(&mut [f64], &mut [f64], &mut [f64])>) {
        let hs = h.len();
        let mut rzn = rzn;
        for k in 0..hs {
            let r = sigmoid(gi[k] + gh[k]);
            let z = sigmoid(gi[hs + k] + gh[hs + k]);
            let n = (gi[2 * hs + k] + r * gh[2 * hs + k]).tanh();
            out[k] = (1.0 - z) * n + z * h[k];
            if let Some((rr, zz, nn)) = rzn.as_mut() {
                rr[k] = r;
                zz[k] = z;
                nn[k] = n;
            }
        }
    }

    pub fn step_row(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hs = self.size();
        let mut gi = vec![0.0; 3 * hs];
        let mut gh = vec![0.0; 3 * hs];
        self.input.forward_row(x, &mut gi);
        self.hidden.forward_row(h, &mut gh);
        let mut out = vec![0.0; hs];
        self.gates(&gi, &gh, h, &mut out, None);
        out
    }

    pub fn step(&self, x: &Mat, h: &Mat) -> (Mat, GruStep) {
        let hs = self.size();
        let gi = self.input.forward(x);
        let gh = self.hidden.forward(h);
        let mut out = Mat::zeros(x.rows, hs);
        let mut r = Mat::zeros(x.rows, hs);
        let mut z = Mat::zeros(x.rows, hs);
        let mut n = Mat::zeros(x.rows, hs);
        for i in 0..x.rows {
            let (rr, zz, nn) = (
                &mut r.data[i * hs..(i + 1) * hs],
                &mut z.data[i * hs..(i + 1) * hs],
                &mut n.data[i * hs..(i + 1) * hs],
            );
            self.gates(gi.row(i), gh.row(i), h.row(i), out.row_mut(i), Some((rr, zz, nn)));
        }
        let gh_n = gh.cols_range(2 * hs, hs);
        (
            out,
            GruStep {
                x: x.clone(),
                h: h.clone(),
                r,
                z,
                n,
                gh_n,
            },
        )
    }

    /// Backward through one step; returns `dL/dh_prev`.
    pub fn backward_step(&self, s: &GruStep, dh_out: &Mat, grad: &mut Gru) -> Mat {
        let hs = self.size();
        let rows = dh_out.rows;
        let mut dgi = Mat::zeros(rows, 3 * hs);
        let mut dgh = Mat::zeros(rows, 3 * hs);
        let mut dh_prev = Mat::zeros(rows, hs);
        for i in 0..rows {
            for k in 0..hs {
                let idx = i * hs + k;
                let (r, z, n, h) = (s.r.data[idx], s.z.data[idx], s.n.data[idx], s.h.data[idx]);
                let d = dh_out.data[idx];
                let dn = d * (1.0 - z);
                let dz = d * (h - n);
                dh_prev.data[idx] = d * z;
                let dn_pre = dn * (1.0 - n * n);
                let dr = dn_pre * s.gh_n.data[idx];
                let dr_pre = dr * r * (1.0 - r);
                let dz_pre = dz * z * (1.0 - z);
                let gi = dgi.row_mut(i);
                gi[k] = dr_pre;
                gi[hs + k] = dz_pre;
                gi[2 * hs + k] = dn_pre;
                let gh = dgh.row_mut(i);
                gh[k] = dr_pre;
                gh[hs + k] = dz_pre;
                gh[2 * hs + k] = dn_pre * r;
            }
        }
        self.input.backward(&s.x, &dgi, &mut grad.input, false);
        let dh = self
            .hidden
            .backward(&s.h, &dgh, &mut grad.hidden, true)
            .expect("requested");
        for (a, b) in dh_prev.data.iter_mut().zip(&dh.data) {
            *a += b;
        }
        dh_prev
    }
}

impl Params for Gru {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.input.visit(f);
        self.hidden.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.input.visit_mut(f);
        self.hidden.visit_mut(f);
    }
}

/// Adam optimizer over a flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step<P: Params + ?Sized>(&mut self, params: &mut P, grad: &[f64]) {
        assert_eq!(grad.len(), self.m.len(), "gradient length");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for ((m, v), g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grad) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        }
        let (lr, eps) = (self.lr, self.eps);
        let (m, v) = (&self.m, &self.v);
        let mut off = 0;
        params.visit_mut(&mut |s| {
            for (k, p) in s.iter_mut().enumerate() {
                let mh = m[off + k] / b1t;
                let vh = v[off + k] / b2t;
                *p -= lr * mh / (vh.sqrt() + eps);
            }
            off += s.len();
        });
    }
}

/// Scale `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Central finite-difference gradient checks.
pub mod gradcheck {
    use super::Params;

    /// Largest relative error between an analytic gradient and central
    /// differences of `loss` over every parameter.
    pub fn max_fd_error<P: Params + Clone>(
        model: &P,
        analytic: &[f64],
        step: f64,
        loss: impl Fn(&P) -> f64,
    ) -> f64 {
        let base = model.flatten();
        assert_eq!(base.len(), analytic.len());
        let mut worst = 0.0f64;
        let mut probe = model.clone();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + step;
            probe.assign(&p);
            let up = loss(&probe);
            p[i] = base[i] - step;
            probe.assign(&p);
            let down = loss(&probe);
            let numeric = (up - down) / (2.0 * step);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::max_fd_error;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn gemm_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(ta, tb) in &[(false, false), (true, false), (false, true), (true, true)] {
            let (m, k, n) = (5, 7, 3);
            let a = if ta { random_mat(k, m, &mut rng) } else { random_mat(m, k, &mut rng) };
            let b = if tb { random_mat(n, k, &mut rng) } else { random_mat(k, n, &mut rng) };
            let mut c = random_mat(m, n, &mut rng);
            let c0 = c.clone();
            gemm(0.5, &a, ta, &b, tb, 2.0, &mut c);
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        let av = if ta { a.at(p, i) } else { a.at(i, p) };
                        let bv = if tb { b.at(j, p) } else { b.at(p, j) };
                        s += av * bv;
                    }
                    assert!((c.at(i, j) - (0.5 * s + 2.0 * c0.at(i, j))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn row_forward_matches_batch_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::init(&[6, 9, 4], Activation::Elu, Activation::Identity, 1.0, &mut rng);
        let x = random_mat(5, 6, &mut rng);
        let y = mlp.forward(&x);
        for i in 0..5 {
            let r = mlp.forward_row(x.row(i));
            for (a, b) in r.iter().zip(y.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for act in [Activation::Elu, Activation::Tanh] {
            let mlp = Mlp::init(&[4, 6, 5, 3], act, Activation::Identity, 1.0, &mut rng);
            let x = random_mat(7, 4, &mut rng);
            let target = random_mat(7, 3, &mut rng);
            let loss = |m: &Mlp| {
                let y = m.forward(&x);
                y.data.iter().zip(&target.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * 0.5
            };
            let (y, cache) = mlp.forward_cached(&x);
            let mut dy = y.clone();
            for (d, t) in dy.data.iter_mut().zip(&target.data) {
                *d -= t;
            }
            let mut grad = mlp.zeros_like();
            mlp.backward(&cache, &dy, &mut grad, false);
            let err = max_fd_error(&mlp, &grad.flatten(), 1e-5, loss);
            assert!(err < 1e-6, "{act:?}: {err}");
        }
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        #[derive(Clone)]
        struct Both(Gru, Linear);
        impl Params for Both {
            fn visit(&self, f: &mut dyn FnMut(&[f64])) {
                self.0.visit(f);
                self.1.visit(f);
            }
            fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
                self.0.visit_mut(f);
                self.1.visit_mut(f);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Both(Gru::init(3, 4, &mut rng), Linear::init(4, 2, 1.0, &mut rng));
        let xs: Vec<Mat> = (0..5).map(|_| random_mat(2, 3, &mut rng)).collect();
        let h0 = random_mat(2, 4, &mut rng);
        let loss = |m: &Both| {
            let mut h = h0.clone();
            let mut total = 0.0;
            for x in &xs {
                h = m.0.step(x, &h).0;
                let y = m.1.forward(&h);
                total += y.data.iter().map(|v| v.sin()).sum::<f64>();
            }
            total
        };
        // Forward with caches.
        let mut h = h0.clone();
        let mut steps = Vec::new();
        let mut hs = Vec::new();
        for x in &xs {
            let (hn, s) = model.0.step(x, &h);
            steps.push(s);
            h = hn;
            hs.push(h.clone());
        }
        let mut g = Both(model.0.zeros_like(), Linear::zeros(4, 2));
        let mut carry = Mat::zeros(2, 4);
        for t in (0..xs.len()).rev() {
            let y = model.1.forward(&hs[t]);
            let dy = Mat::from_vec(2, 2, y.data.iter().map(|v| v.cos()).collect());
            let dh = model.1.backward(&hs[t], &dy, &mut g.1, true).unwrap();
            for (c, d) in carry.data.iter_mut().zip(&dh.data) {
                *c += d;
            }
            carry = model.0.backward_step(&steps[t], &carry, &mut g.0);
        }
        let err = max_fd_error(&model, &g.flatten(), 1e-5, loss);
        assert!(err < 1e-6, "{err}");
        // Row step agrees with batched step.
        let r = model.0.step_row(xs[0].row(1), h0.row(1));
        let b = model.0.step(&xs[0], &h0).0;
        for (a, c) in r.iter().zip(b.row(1)) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Linear::zeros(2, 1);
        let mut opt = Adam::new(p.num_params(), 0.05);
        for _ in 0..2000 {
            let flat = p.flatten();
            let grad: Vec<f64> = flat.iter().zip([1.0, -2.0, 0.5]).map(|(v, t)| 2.0 * (v - t)).collect();
            opt.step(&mut p, &grad);
        }
        let flat = p.flatten();
        for (v, t) in flat.iter().zip([1.0, -2.0, 0.5]) {
            assert!((v - t).abs() < 1e-3);
        }
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
