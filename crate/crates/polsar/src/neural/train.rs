//! Mini-batch gradient descent with seeded initialization and shuffling.
//!
//! Training is fully deterministic: parameter init and the per-epoch shuffle
//! are both derived from `TrainConfig::seed`, and gradient accumulation runs
//! in sample-index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{shuffle_indices, SoftmaxClassifier, SparseAutoencoder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Gradient-descent step size.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Multiplier on the 1/sqrt(fan_in) init bound.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            init_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "init scale must be > 0, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Per-epoch loss records with a term breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct LossHistory {
    /// Name of the data term ("reconstruction" or "cross_entropy").
    pub data_term_name: &'static str,
    /// (epoch, total, data term, l2, kl)
    pub records: Vec<(usize, f64, f64, f64, f64)>,
}

impl LossHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,total,{},l2,kl", self.data_term_name)?;
        for (epoch, total, data, l2, kl) in &self.records {
            writeln!(out, "{epoch},{total},{data},{l2},{kl}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn final_total(&self) -> Option<f64> {
        self.records.last().map(|r| r.1)
    }
}

/// Trains the autoencoder in place. Initialization and shuffling derive
/// from `config.seed`; zero epochs returns the freshly initialized model.
pub fn train_autoencoder(
    ae: &mut SparseAutoencoder,
    data: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<LossHistory> {
    if data.is_empty() {
        return Err(Error::TooFewSamples("training needs a non-empty dataset".into()));
    }
    ae.hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    ae.init_params(&mut rng, config.init_scale);

    let mut history = LossHistory { data_term_name: "reconstruction", records: Vec::new() };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        shuffle_indices(&mut order, &mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| data[i].clone()).collect();
            let grads = ae.gradients(&batch)?;
            ae.apply_step(&grads, config.learning_rate);
        }
        let terms = ae.loss(data)?;
        if !terms.total.is_finite() || !ae.is_finite() {
            return Err(Error::DivergenceDetected(format!(
                "autoencoder loss became non-finite at epoch {epoch}"
            )));
        }
        history
            .records
            .push((epoch, terms.total, terms.data_term, terms.l2, terms.kl));
    }
    Ok(history)
}

/// Trains the softmax classifier in place on zero-based labels.
pub fn train_softmax(
    clf: &mut SoftmaxClassifier,
    xs: &[Vec<f64>],
    ys: &[usize],
    config: &TrainConfig,
) -> Result<LossHistory> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples vs {} labels",
            xs.len(),
            ys.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    clf.init_params(&mut rng, config.init_scale);

    let mut history = LossHistory { data_term_name: "cross_entropy", records: Vec::new() };
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 0..config.epochs {
        shuffle_indices(&mut order, &mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let grads = clf.gradients(&bx, &by)?;
            clf.apply_step(&grads, config.learning_rate);
        }
        let terms = clf.loss(xs, ys)?;
        if !terms.total.is_finite() || !clf.is_finite() {
            return Err(Error::DivergenceDetected(format!(
                "classifier loss became non-finite at epoch {epoch}"
            )));
        }
        history
            .records
            .push((epoch, terms.total, terms.data_term, terms.l2, 0.0));
    }
    Ok(history)
}
