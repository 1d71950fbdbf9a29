//! End-to-end classification pipeline: feature extraction, first
//! autoencoder, superpixels, robust features, second autoencoder, softmax.
//!
//! `fit` trains every stage on the labeled pixels only and then applies the
//! trained encoders to the whole image; superpixel generation is
//! unsupervised and always runs on the full hidden field. `predict`
//! recomputes features and segmentation for the target image, so a model
//! generalizes to any scene with the same band list.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabelMap, MultiBandImage};
use crate::decomp::{
    extract_features, fit_normalizer, normalize, Family, FeatureCube, NormStats,
};
use crate::error::{Error, Result};
use crate::neural::{
    train_autoencoder, train_softmax, DenseLayer, LossHistory, SoftmaxClassifier,
    SparseAutoencoder, SparsityHyper, TrainConfig,
};
use crate::superpixels::{slic_segment, HiddenField, SlicParams, SuperpixelMap};

pub mod model_io;

pub use model_io::{load_model, save_model};

/// Optimizer settings shared by the three trained stages; per-stage RNG
/// seeds are derived from the pipeline seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimSettings {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub init_scale: f64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        OptimSettings { learning_rate: 0.01, batch_size: 64, epochs: 200, init_scale: 1.0 }
    }
}

impl OptimSettings {
    fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            init_scale: self.init_scale,
        }
    }
}

/// Everything `fit` needs beyond the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub multilook_window: usize,
    /// Width of the first autoencoder's intermediate layer.
    pub ae1_hidden: usize,
    /// Bottleneck of the first autoencoder (the hidden field dimension).
    pub u1: usize,
    /// Bottleneck of the second autoencoder.
    pub u2: usize,
    pub ae1_hyper: SparsityHyper,
    pub ae2_hyper: SparsityHyper,
    pub softmax_l2: f64,
    pub optim: OptimSettings,
    pub slic: SlicParams,
    /// Restrict features to these decomposition families (None = all 33).
    pub families: Option<Vec<Family>>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let hyper = SparsityHyper {
            recon_weight: 1.0,
            l2_weight: 1e-4,
            kl_weight: 0.1,
            rho: 0.15,
        };
        PipelineConfig {
            multilook_window: 3,
            ae1_hidden: 32,
            u1: 5,
            u2: 10,
            ae1_hyper: hyper,
            ae2_hyper: hyper,
            softmax_l2: 1e-4,
            optim: OptimSettings::default(),
            slic: SlicParams::default(),
            families: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multilook_window == 0 || self.multilook_window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "multilook window must be odd, got {}",
                self.multilook_window
            )));
        }
        for (name, v) in [("ae1_hidden", self.ae1_hidden), ("u1", self.u1), ("u2", self.u2)] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 1")));
            }
        }
        self.ae1_hyper.validate()?;
        self.ae2_hyper.validate()?;
        if let Some(families) = &self.families {
            if families.is_empty() {
                return Err(Error::InvalidParameter("family list must be non-empty".into()));
            }
        }
        self.optim.with_seed(0).validate()?;
        Ok(())
    }

    /// Cube columns selected by the family restriction, for `n_bands` bands.
    pub fn feature_columns(&self, n_bands: usize) -> Option<Vec<usize>> {
        self.families
            .as_ref()
            .map(|fams| crate::decomp::cube::family_columns(fams, n_bands))
    }
}

/// splitmix64-style stage-seed derivation from the pipeline seed.
fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SEED_AE1: u64 = 1;
const SEED_AE2: u64 = 2;
const SEED_SOFTMAX: u64 = 3;
const SEED_SPLIT: u64 = 4;

/// A fitted pipeline; immutable, safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub bands: Vec<String>,
    pub class_names: Vec<String>,
    pub multilook_window: usize,
    pub families: Option<Vec<Family>>,
    pub normalizer: NormStats,
    pub encoder1: Vec<DenseLayer>,
    pub slic: SlicParams,
    pub encoder2: Vec<DenseLayer>,
    pub classifier: SoftmaxClassifier,
}

impl PipelineModel {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn u1(&self) -> usize {
        self.encoder1.last().map_or(0, |l| l.out_dim())
    }

    pub fn u2(&self) -> usize {
        self.encoder2.last().map_or(0, |l| l.out_dim())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder1.first().map_or(0, |l| l.in_dim())
    }

    /// Checks the stage dimension chain input -> u1 -> 2 u1 -> u2 -> C.
    pub fn validate(&self) -> Result<()> {
        if self.normalizer.mean.len() != self.input_dim()
            || self.normalizer.std.len() != self.input_dim()
        {
            return Err(Error::MalformedModel(format!(
                "normalizer covers {} features, encoder expects {}",
                self.normalizer.mean.len(),
                self.input_dim()
            )));
        }
        let mut dim = self.input_dim();
        for l in &self.encoder1 {
            if l.in_dim() != dim {
                return Err(Error::MalformedModel("first encoder dims do not chain".into()));
            }
            dim = l.out_dim();
        }
        let u1 = dim;
        let mut dim = 2 * u1;
        for l in &self.encoder2 {
            if l.in_dim() != dim {
                return Err(Error::MalformedModel(format!(
                    "second encoder expects {} inputs, got {}",
                    l.in_dim(),
                    dim
                )));
            }
            dim = l.out_dim();
        }
        if self.classifier.in_dim() != dim {
            return Err(Error::MalformedModel(format!(
                "classifier expects {} inputs, encoder provides {dim}",
                self.classifier.in_dim()
            )));
        }
        if self.classifier.classes() != self.n_classes() {
            return Err(Error::MalformedModel(format!(
                "classifier has {} outputs for {} classes",
                self.classifier.classes(),
                self.n_classes()
            )));
        }
        Ok(())
    }
}

/// Loss histories of the three trained stages.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub ae1_history: LossHistory,
    pub ae2_history: LossHistory,
    pub softmax_history: LossHistory,
}

/// Per-pixel class decisions plus the full probability distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMap {
    pub width: usize,
    pub height: usize,
    pub class_names: Vec<String>,
    /// Predicted class ids, 1-based (matching [`LabelMap`] conventions).
    pub ids: Vec<u8>,
    /// Pixel-major probability vectors, `n_classes` per pixel.
    pub probs: Vec<f64>,
}

impl PredictionMap {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn id_at(&self, x: usize, y: usize) -> u8 {
        self.ids[y * self.width + x]
    }

    pub fn probs_at(&self, x: usize, y: usize) -> &[f64] {
        let c = self.n_classes();
        let i = (y * self.width + x) * c;
        &self.probs[i..i + c]
    }

    /// The prediction raster as a label map (for PGM output and scoring).
    pub fn to_label_map(&self) -> Result<LabelMap> {
        LabelMap::new(self.width, self.height, self.ids.clone(), self.class_names.clone())
    }
}

/// Intermediate artifacts of one prediction pass, for inspection dumps.
#[derive(Debug, Clone)]
pub struct PredictArtifacts {
    pub features: FeatureCube,
    pub hidden: HiddenField,
    pub superpixels: SuperpixelMap,
}

/// Applies an encoder stack to every pixel of a normalized cube.
fn encode_field(cube: &FeatureCube, encoder: &[DenseLayer]) -> Result<HiddenField> {
    let out_dim = encoder.last().map_or(0, |l| l.out_dim());
    let (w, h) = (cube.width(), cube.height());
    let mut data = vec![0.0f64; w * h * out_dim];
    data.par_chunks_mut(w * out_dim)
        .enumerate()
        .try_for_each(|(y, row)| -> Result<()> {
            for x in 0..w {
                let mut a = cube.feature(x, y).to_vec();
                if a.len() != encoder[0].in_dim() {
                    return Err(Error::ShapeMismatch(format!(
                        "encoder expects {} features, cube has {}",
                        encoder[0].in_dim(),
                        a.len()
                    )));
                }
                for layer in encoder {
                    a = layer.forward(&a);
                }
                row[x * out_dim..(x + 1) * out_dim].copy_from_slice(&a);
            }
            Ok(())
        })?;
    HiddenField::new(w, h, out_dim, data)
}

/// Robust feature grid: per pixel the concatenation [h_i; c_j] of its own
/// hidden vector and its superpixel's feature centroid.
pub fn build_robust_features(hidden: &HiddenField, sp: &SuperpixelMap) -> Result<HiddenField> {
    if sp.width != hidden.width() || sp.height != hidden.height() {
        return Err(Error::DimensionMismatch(format!(
            "superpixel map {}x{} vs hidden field {}x{}",
            sp.width,
            sp.height,
            hidden.width(),
            hidden.height()
        )));
    }
    let u1 = hidden.dims();
    if sp.centers.iter().any(|c| c.feature.len() != u1) {
        return Err(Error::DimensionMismatch(
            "superpixel centroids disagree with hidden field dims".into(),
        ));
    }
    let (w, h) = (hidden.width(), hidden.height());
    let mut data = vec![0.0f64; w * h * 2 * u1];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * 2 * u1;
            data[base..base + u1].copy_from_slice(hidden.at(x, y));
            data[base + u1..base + 2 * u1].copy_from_slice(sp.centroid_of(x, y));
        }
    }
    HiddenField::new(w, h, 2 * u1, data)
}

fn labeled_pixels(labels: &LabelMap) -> Vec<(usize, u8)> {
    labels
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, &id)| id > 0)
        .map(|(i, &id)| (i, id))
        .collect()
}

/// Trains the full pipeline on the labeled pixels of `labels`.
pub fn fit(
    image: &MultiBandImage,
    labels: &LabelMap,
    config: &PipelineConfig,
) -> Result<(PipelineModel, FitReport)> {
    config.validate()?;
    if labels.width() != image.width() || labels.height() != image.height() {
        return Err(Error::DimensionMismatch(format!(
            "labels {}x{} vs image {}x{}",
            labels.width(),
            labels.height(),
            image.width(),
            image.height()
        )));
    }
    let present = labels.present_classes();
    if present.len() < 2 {
        return Err(Error::TooFewClasses(present.len()));
    }

    // features, family restriction, normalization fitted on train pixels
    let mut cube = extract_features(image, config.multilook_window)?;
    if let Some(cols) = config.feature_columns(image.bands().len()) {
        cube = cube.select_columns(&cols)?;
    }
    let stats = fit_normalizer(&cube, labels)?;
    let cube = normalize(&cube, &stats)?;

    let train = labeled_pixels(labels);
    let train_x: Vec<Vec<f64>> = train.iter().map(|&(i, _)| cube.feature_at(i).to_vec()).collect();

    // first autoencoder on pixel features
    let mut ae1 = SparseAutoencoder::stacked(cube.dims(), config.ae1_hidden, config.u1, config.ae1_hyper);
    let ae1_history = train_autoencoder(
        &mut ae1,
        &train_x,
        &config.optim.with_seed(derive_seed(config.seed, SEED_AE1)),
    )?;
    let encoder1 = ae1.into_encoder();

    // hidden field over the whole image, then unsupervised superpixels
    let hidden = encode_field(&cube, &encoder1)?;
    let sp = slic_segment(&hidden, &config.slic)?;
    let robust = build_robust_features(&hidden, &sp)?;

    let train_r: Vec<Vec<f64>> = train.iter().map(|&(i, _)| robust.at_index(i).to_vec()).collect();
    let mut ae2 = SparseAutoencoder::single(2 * config.u1, config.u2, config.ae2_hyper);
    let ae2_history = train_autoencoder(
        &mut ae2,
        &train_r,
        &config.optim.with_seed(derive_seed(config.seed, SEED_AE2)),
    )?;
    let encoder2 = ae2.into_encoder();

    // softmax on the robust embedding of the training pixels
    let train_z: Vec<Vec<f64>> = train_r
        .iter()
        .map(|r| {
            let mut a = r.clone();
            for layer in &encoder2 {
                a = layer.forward(&a);
            }
            a
        })
        .collect();
    let train_y: Vec<usize> = train.iter().map(|&(_, id)| id as usize - 1).collect();
    let mut classifier =
        SoftmaxClassifier::new(labels.n_classes(), config.u2, config.softmax_l2);
    let softmax_history = train_softmax(
        &mut classifier,
        &train_z,
        &train_y,
        &config.optim.with_seed(derive_seed(config.seed, SEED_SOFTMAX)),
    )?;

    let model = PipelineModel {
        bands: image.bands().to_vec(),
        class_names: labels.class_names().to_vec(),
        multilook_window: config.multilook_window,
        families: config.families.clone(),
        normalizer: stats,
        encoder1,
        slic: config.slic,
        encoder2,
        classifier,
    };
    model.validate()?;
    Ok((model, FitReport { ae1_history, ae2_history, softmax_history }))
}

/// Classifies every pixel of `image`, returning the intermediate artifacts
/// alongside the prediction.
pub fn predict_with_artifacts(
    model: &PipelineModel,
    image: &MultiBandImage,
) -> Result<(PredictionMap, PredictArtifacts)> {
    if image.bands() != model.bands.as_slice() {
        return Err(Error::BandMismatch {
            expected: model.bands.join(","),
            actual: image.bands().join(","),
        });
    }
    let mut cube = extract_features(image, model.multilook_window)?;
    if let Some(families) = &model.families {
        let cols = crate::decomp::cube::family_columns(families, image.bands().len());
        cube = cube.select_columns(&cols)?;
    }
    let cube = normalize(&cube, &model.normalizer)?;
    let hidden = encode_field(&cube, &model.encoder1)?;
    let sp = slic_segment(&hidden, &model.slic)?;
    let robust = build_robust_features(&hidden, &sp)?;

    let (w, h) = (image.width(), image.height());
    let c = model.n_classes();
    let mut ids = vec![0u8; w * h];
    let mut probs = vec![0.0f64; w * h * c];
    let rows: Result<Vec<(Vec<u8>, Vec<f64>)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row_ids = vec![0u8; w];
            let mut row_probs = vec![0.0f64; w * c];
            for x in 0..w {
                let mut a = robust.at(x, y).to_vec();
                for layer in &model.encoder2 {
                    a = layer.forward(&a);
                }
                let p = model.classifier.predict(&a)?;
                let mut best = 0usize;
                for (k, v) in p.iter().enumerate() {
                    if *v > p[best] {
                        best = k;
                    }
                }
                row_ids[x] = best as u8 + 1;
                row_probs[x * c..(x + 1) * c].copy_from_slice(&p);
            }
            Ok((row_ids, row_probs))
        })
        .collect();
    for (y, (row_ids, row_probs)) in rows?.into_iter().enumerate() {
        ids[y * w..(y + 1) * w].copy_from_slice(&row_ids);
        probs[y * w * c..(y + 1) * w * c].copy_from_slice(&row_probs);
    }

    Ok((
        PredictionMap {
            width: w,
            height: h,
            class_names: model.class_names.clone(),
            ids,
            probs,
        },
        PredictArtifacts { features: cube, hidden, superpixels: sp },
    ))
}

/// Classifies every pixel of `image`.
pub fn predict(model: &PipelineModel, image: &MultiBandImage) -> Result<PredictionMap> {
    predict_with_artifacts(model, image).map(|(p, _)| p)
}

/// Per-class random train/test split specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of each class's labeled pixels assigned to training.
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must be in (0,1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Splits the labeled pixels of every class into disjoint train and test
/// label maps. Every class keeps at least one pixel on each side.
pub fn split(labels: &LabelMap, spec: &SplitSpec) -> Result<(LabelMap, LabelMap)> {
    spec.validate()?;
    let mut train_ids = vec![0u8; labels.ids().len()];
    let mut test_ids = vec![0u8; labels.ids().len()];
    for class in labels.present_classes() {
        let mut members: Vec<usize> = labels
            .ids()
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            return Err(Error::ClassTooSmall { class, pixels: members.len() });
        }
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SEED_SPLIT ^ (class as u64) << 8));
        members.shuffle(&mut rng);
        let n_train = ((members.len() as f64 * spec.train_fraction).round() as usize)
            .clamp(1, members.len() - 1);
        for (rank, &i) in members.iter().enumerate() {
            if rank < n_train {
                train_ids[i] = class;
            } else {
                test_ids[i] = class;
            }
        }
    }
    let train = LabelMap::new(
        labels.width(),
        labels.height(),
        train_ids,
        labels.class_names().to_vec(),
    )?;
    let test = LabelMap::new(
        labels.width(),
        labels.height(),
        test_ids,
        labels.class_names().to_vec(),
    )?;
    Ok((train, test))
}

#[cfg(test)]
mod tests;
