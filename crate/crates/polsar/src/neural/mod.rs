//! Dense feed-forward machinery: tanh layers, sparse-autoencoder losses
//! with a KL sparsity penalty, softmax classification, analytic gradients
//! and a deterministic mini-batch gradient-descent trainer.
//!
//! Both autoencoder stages share one loss shape
//!
//! ```text
//! J = l2_weight * sum_W ||W||_F^2
//!   + recon_weight * (1/N) * sum_i ||x_i - x_i'||^2
//!   + kl_weight * sum_t KL(rho || rho_t)
//! ```
//!
//! where `rho_t` is the batch-mean activation of bottleneck unit t remapped
//! from tanh range to [0,1] via (h+1)/2 and clamped to [1e-6, 1-1e-6]. The
//! loss coefficients are exactly that — loss coefficients; the optimizer
//! step size lives in [`TrainConfig`].

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod train;

pub use train::{train_autoencoder, train_softmax, LossHistory, TrainConfig};

const RHO_CLAMP: f64 = 1e-6;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    /// y = W x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            y[r] = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }

    /// y = W^T x
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xr = x[r];
            for (yc, w) in y.iter_mut().zip(row) {
                *yc += w * xr;
            }
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Identity activation; used for softmax logits.
    Linear,
}

/// One dense layer: y = act(W x + b).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(out_dim: usize, in_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Mat::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.out_dim()];
        self.weights.matvec(x, &mut y);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
            if self.activation == Activation::Tanh {
                *v = v.tanh();
            }
        }
        y
    }

    /// Uniform init in ±scale/sqrt(fan_in); biases start at zero.
    pub fn init_params(&mut self, rng: &mut ChaCha8Rng, scale: f64) {
        let bound = scale / (self.in_dim() as f64).sqrt();
        for w in &mut self.weights.data {
            *w = rng.gen_range(-bound..bound);
        }
        for b in &mut self.bias {
            *b = 0.0;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    /// Gradient of the upstream loss through this layer.
    ///
    /// `delta` is dJ/d(activated output), `input`/`output` are the cached
    /// forward values. Accumulates into `dw`/`db` and returns dJ/d(input).
    fn backward(
        &self,
        input: &[f64],
        output: &[f64],
        delta: &[f64],
        dw: &mut Mat,
        db: &mut [f64],
    ) -> Vec<f64> {
        let mut delta_pre = delta.to_vec();
        if self.activation == Activation::Tanh {
            for (d, o) in delta_pre.iter_mut().zip(output) {
                *d *= 1.0 - o * o;
            }
        }
        for r in 0..self.out_dim() {
            let dr = delta_pre[r];
            db[r] += dr;
            let row = &mut dw.data[r * dw.cols..(r + 1) * dw.cols];
            for (w, x) in row.iter_mut().zip(input) {
                *w += dr * x;
            }
        }
        let mut dx = vec![0.0; self.in_dim()];
        self.weights.matvec_transpose(&delta_pre, &mut dx);
        dx
    }
}

/// Loss-term coefficients of a sparse autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityHyper {
    /// Weight of the mean squared reconstruction error.
    pub recon_weight: f64,
    /// Weight of the squared Frobenius norms of all weight matrices.
    pub l2_weight: f64,
    /// Weight of the summed KL sparsity divergence over bottleneck units.
    pub kl_weight: f64,
    /// Target mean (remapped) activation, in (0,1).
    pub rho: f64,
}

impl SparsityHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter(format!("rho must be in (0,1), got {}", self.rho)));
        }
        for (name, v) in [
            ("recon_weight", self.recon_weight),
            ("l2_weight", self.l2_weight),
            ("kl_weight", self.kl_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// KL divergence between Bernoulli means: rho ln(rho/rho_t) + (1-rho) ln((1-rho)/(1-rho_t)).
///
/// Non-negative, zero iff rho_t == rho. Callers clamp rho_t away from
/// {0, 1} before evaluating.
pub fn kl_sparsity(rho: f64, rho_t: f64) -> f64 {
    rho * (rho / rho_t).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_t)).ln()
}

/// Remapped batch-mean activation of every bottleneck unit, clamped to
/// [1e-6, 1-1e-6]. The boolean marks units whose raw mean hit the clamp
/// (their KL gradient is zero).
fn bottleneck_means(hidden: &[Vec<f64>]) -> (Vec<f64>, Vec<bool>) {
    let units = hidden[0].len();
    let n = hidden.len() as f64;
    let mut mean = vec![0.0; units];
    for h in hidden {
        for (m, v) in mean.iter_mut().zip(h) {
            *m += (v + 1.0) / 2.0;
        }
    }
    let mut clamped = vec![false; units];
    for (m, c) in mean.iter_mut().zip(clamped.iter_mut()) {
        *m /= n;
        let raw = *m;
        *m = raw.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP);
        *c = raw != *m;
    }
    (mean, clamped)
}

/// Breakdown of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub data_term: f64,
    pub l2: f64,
    pub kl: f64,
}

/// Per-layer parameter gradients, ordered encoder-then-decoder (or the
/// single classifier layer).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<(Mat, Vec<f64>)>,
}

/// Encoder/decoder stack trained with reconstruction + L2 + KL sparsity.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAutoencoder {
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
    pub hyper: SparsityHyper,
}

impl SparseAutoencoder {
    /// Two tanh encoder layers (input -> hidden -> bottleneck) mirrored by
    /// two decoder layers; the first-stage architecture.
    pub fn stacked(input: usize, hidden: usize, bottleneck: usize, hyper: SparsityHyper) -> Self {
        SparseAutoencoder {
            encoder: vec![
                DenseLayer::new(hidden, input, Activation::Tanh),
                DenseLayer::new(bottleneck, hidden, Activation::Tanh),
            ],
            decoder: vec![
                DenseLayer::new(hidden, bottleneck, Activation::Tanh),
                DenseLayer::new(input, hidden, Activation::Tanh),
            ],
            hyper,
        }
    }

    /// Single tanh encoder/decoder pair; the second-stage architecture.
    pub fn single(input: usize, bottleneck: usize, hyper: SparsityHyper) -> Self {
        SparseAutoencoder {
            encoder: vec![DenseLayer::new(bottleneck, input, Activation::Tanh)],
            decoder: vec![DenseLayer::new(input, bottleneck, Activation::Tanh)],
            hyper,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.encoder.last().unwrap().out_dim()
    }

    /// Hidden representation of one input vector; components in (-1, 1).
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut a = x.to_vec();
        for layer in &self.encoder {
            a = layer.forward(&a);
        }
        Ok(a)
    }

    /// Reconstruction from a hidden representation.
    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.bottleneck_dim() {
            return Err(Error::ShapeMismatch(format!(
                "decoder expects {} inputs, got {}",
                self.bottleneck_dim(),
                h.len()
            )));
        }
        let mut a = h.to_vec();
        for layer in &self.decoder {
            a = layer.forward(&a);
        }
        Ok(a)
    }

    fn all_layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    /// Forward pass caching every activation: `acts[0] = x`, last is the
    /// reconstruction; index `encoder.len()` is the bottleneck.
    fn forward_cached(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.encoder.len() + self.decoder.len() + 1);
        acts.push(x.to_vec());
        for layer in self.all_layers() {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    /// Three-term loss over a batch.
    pub fn loss(&self, batch: &[Vec<f64>]) -> Result<LossTerms> {
        if batch.is_empty() {
            return Err(Error::TooFewSamples("loss needs a non-empty batch".into()));
        }
        let n = batch.len() as f64;
        let bidx = self.encoder.len();
        let mut recon = 0.0;
        let mut hidden = Vec::with_capacity(batch.len());
        for x in batch {
            if x.len() != self.input_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "sample has {} features, model expects {}",
                    x.len(),
                    self.input_dim()
                )));
            }
            let acts = self.forward_cached(x);
            recon += x
                .iter()
                .zip(acts.last().unwrap())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            hidden.push(acts[bidx].clone());
        }
        let data_term = self.hyper.recon_weight * recon / n;

        let l2 = self.hyper.l2_weight
            * self.all_layers().map(|l| l.weights.frobenius_sq()).sum::<f64>();

        let (rho_t, _) = bottleneck_means(&hidden);
        let kl = self.hyper.kl_weight
            * rho_t.iter().map(|&r| kl_sparsity(self.hyper.rho, r)).sum::<f64>();

        Ok(LossTerms { total: data_term + l2 + kl, data_term, l2, kl })
    }

    /// Analytic gradients of [`SparseAutoencoder::loss`] for every parameter,
    /// ordered encoder-then-decoder.
    pub fn gradients(&self, batch: &[Vec<f64>]) -> Result<Gradients> {
        if batch.is_empty() {
            return Err(Error::TooFewSamples("gradients need a non-empty batch".into()));
        }
        let n = batch.len() as f64;
        let bidx = self.encoder.len();
        let layers: Vec<&DenseLayer> = self.all_layers().collect();
        let mut grads: Vec<(Mat, Vec<f64>)> = layers
            .iter()
            .map(|l| (Mat::zeros(l.out_dim(), l.in_dim()), vec![0.0; l.out_dim()]))
            .collect();

        let cached: Vec<Vec<Vec<f64>>> = batch
            .iter()
            .map(|x| {
                if x.len() != self.input_dim() {
                    return Err(Error::ShapeMismatch(format!(
                        "sample has {} features, model expects {}",
                        x.len(),
                        self.input_dim()
                    )));
                }
                Ok(self.forward_cached(x))
            })
            .collect::<Result<_>>()?;

        let hidden: Vec<Vec<f64>> = cached.iter().map(|acts| acts[bidx].clone()).collect();
        let (rho_t, clamped) = bottleneck_means(&hidden);
        // dKL/drho_t per unit, zero where the clamp is active
        let kl_grad: Vec<f64> = rho_t
            .iter()
            .zip(&clamped)
            .map(|(&r, &c)| {
                if c {
                    0.0
                } else {
                    self.hyper.kl_weight * (-self.hyper.rho / r + (1.0 - self.hyper.rho) / (1.0 - r))
                }
            })
            .collect();

        for (x, acts) in batch.iter().zip(&cached) {
            let recon = acts.last().unwrap();
            let mut delta: Vec<f64> = recon
                .iter()
                .zip(x)
                .map(|(r, t)| self.hyper.recon_weight * 2.0 / n * (r - t))
                .collect();
            for idx in (0..layers.len()).rev() {
                let (dw, db) = &mut grads[idx];
                delta = layers[idx].backward(&acts[idx], &acts[idx + 1], &delta, dw, db);
                if idx == bidx {
                    // crossing the bottleneck: add the sparsity-penalty path
                    // d rho_t / d h = 1/(2N) from the (h+1)/2 batch mean
                    for (d, g) in delta.iter_mut().zip(&kl_grad) {
                        *d += g / (2.0 * n);
                    }
                }
            }
        }

        for ((dw, _), layer) in grads.iter_mut().zip(&layers) {
            for (g, w) in dw.data.iter_mut().zip(&layer.weights.data) {
                *g += 2.0 * self.hyper.l2_weight * w;
            }
        }
        Ok(Gradients { layers: grads })
    }

    pub fn init_params(&mut self, rng: &mut ChaCha8Rng, scale: f64) {
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            layer.init_params(rng, scale);
        }
    }

    pub fn apply_step(&mut self, grads: &Gradients, step: f64) {
        for (layer, (dw, db)) in self
            .encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .zip(&grads.layers)
        {
            for (w, g) in layer.weights.data.iter_mut().zip(&dw.data) {
                *w -= step * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(db) {
                *b -= step * g;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.iter().chain(self.decoder.iter()).all(|l| l.is_finite())
    }

    /// The trained encoder stack, with the decoder disconnected.
    pub fn into_encoder(self) -> Vec<DenseLayer> {
        self.encoder
    }
}

/// Linear layer + softmax trained with cross-entropy and L2 weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    pub layer: DenseLayer,
    pub l2_weight: f64,
}

impl SoftmaxClassifier {
    pub fn new(classes: usize, in_dim: usize, l2_weight: f64) -> Self {
        SoftmaxClassifier {
            layer: DenseLayer::new(classes, in_dim, Activation::Linear),
            l2_weight,
        }
    }

    pub fn classes(&self) -> usize {
        self.layer.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.layer.in_dim()
    }

    /// Class probability distribution; numerically stable for large logits.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "classifier expects {} inputs, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        Ok(softmax(&self.layer.forward(x)))
    }

    /// Mean cross-entropy plus L2 over a labeled batch (labels zero-based).
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<LossTerms> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples vs {} labels",
                xs.len(),
                ys.len()
            )));
        }
        let n = xs.len() as f64;
        let mut ce = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            if y >= self.classes() {
                return Err(Error::ShapeMismatch(format!(
                    "label {y} out of range for {} classes",
                    self.classes()
                )));
            }
            let p = self.predict(x)?;
            ce -= p[y].max(1e-300).ln();
        }
        let data_term = ce / n;
        let l2 = self.l2_weight * self.layer.weights.frobenius_sq();
        Ok(LossTerms { total: data_term + l2, data_term, l2, kl: 0.0 })
    }

    pub fn gradients(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<Gradients> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples vs {} labels",
                xs.len(),
                ys.len()
            )));
        }
        let n = xs.len() as f64;
        let mut dw = Mat::zeros(self.classes(), self.in_dim());
        let mut db = vec![0.0; self.classes()];
        for (x, &y) in xs.iter().zip(ys) {
            let p = self.predict(x)?;
            for c in 0..self.classes() {
                let delta = (p[c] - if c == y { 1.0 } else { 0.0 }) / n;
                db[c] += delta;
                let row = &mut dw.data[c * dw.cols..(c + 1) * dw.cols];
                for (w, xv) in row.iter_mut().zip(x) {
                    *w += delta * xv;
                }
            }
        }
        for (g, w) in dw.data.iter_mut().zip(&self.layer.weights.data) {
            *g += 2.0 * self.l2_weight * w;
        }
        Ok(Gradients { layers: vec![(dw, db)] })
    }

    pub fn init_params(&mut self, rng: &mut ChaCha8Rng, scale: f64) {
        self.layer.init_params(rng, scale);
    }

    pub fn apply_step(&mut self, grads: &Gradients, step: f64) {
        let (dw, db) = &grads.layers[0];
        for (w, g) in self.layer.weights.data.iter_mut().zip(&dw.data) {
            *w -= step * g;
        }
        for (b, g) in self.layer.bias.iter_mut().zip(db) {
            *b -= step * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layer.is_finite()
    }
}

/// Stable softmax: shift by the max logit before exponentiating.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Deterministic in-place Fisher–Yates shuffle driven by the given RNG.
pub(crate) fn shuffle_indices(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    indices.shuffle(rng);
}
