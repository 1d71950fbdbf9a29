//! Scoring, band/feature ablation harnesses and raster rendering.
//!
//! The summary score is reported two ways because "overall accuracy" is
//! ambiguous in parts of the remote-sensing literature: `oa_trace` is the
//! standard trace/total accuracy, `oa_macro_precision` is the mean over
//! classes of the per-class precision (predicted-column diagonals), with
//! classes that were never predicted excluded from the mean.

use std::io::Write;
use std::path::Path;

use crate::data::{pauli_vector, LabelMap, MultiBandImage};
use crate::decomp::Family;
use crate::error::{Error, Result};
use crate::pipeline::{fit, predict, split, PipelineConfig, PredictionMap, SplitSpec};
use crate::superpixels::SuperpixelMap;

pub mod render;

pub use render::{render_boundaries, render_map, PALETTE};

/// C x C prediction counts over the labeled pixels: rows = truth class,
/// columns = predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn at(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes() + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        (0..self.n_classes()).map(|p| self.at(truth, p)).sum()
    }

    pub fn column_total(&self, predicted: usize) -> u64 {
        (0..self.n_classes()).map(|t| self.at(t, predicted)).sum()
    }
}

/// Scores of one prediction against one truth map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub confusion: ConfusionMatrix,
    /// Per-class recall: diagonal / truth-row total (NaN-free: 0 for empty rows).
    pub per_class_recall: Vec<f64>,
    /// Per-class precision: diagonal / predicted-column total (0 for empty columns).
    pub per_class_precision: Vec<f64>,
    /// Standard overall accuracy: trace / total.
    pub oa_trace: f64,
    /// Macro-averaged precision over predicted classes (empty columns excluded).
    pub oa_macro_precision: f64,
}

/// Confusion matrix and accuracy summary over pixels labeled in `truth`
/// (truth id 0 = unlabeled, excluded).
pub fn score(pred: &PredictionMap, truth: &LabelMap) -> Result<ScoreReport> {
    if pred.width != truth.width() || pred.height != truth.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width,
            pred.height,
            truth.width(),
            truth.height()
        )));
    }
    let c = truth.n_classes();
    if pred.n_classes() != c {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} classes, truth has {c}",
            pred.n_classes()
        )));
    }
    let mut counts = vec![0u64; c * c];
    for (&t, &p) in truth.ids().iter().zip(&pred.ids) {
        if t == 0 {
            continue;
        }
        if p == 0 || p as usize > c {
            return Err(Error::DimensionMismatch(format!(
                "predicted id {p} outside 1..={c}"
            )));
        }
        counts[(t as usize - 1) * c + (p as usize - 1)] += 1;
    }
    let confusion = ConfusionMatrix { class_names: truth.class_names().to_vec(), counts };

    let mut per_class_recall = vec![0.0; c];
    let mut per_class_precision = vec![0.0; c];
    let mut trace = 0u64;
    let mut precision_sum = 0.0;
    let mut predicted_classes = 0usize;
    for k in 0..c {
        let diag = confusion.at(k, k);
        trace += diag;
        let row = confusion.row_total(k);
        let col = confusion.column_total(k);
        per_class_recall[k] = if row > 0 { diag as f64 / row as f64 } else { 0.0 };
        per_class_precision[k] = if col > 0 { diag as f64 / col as f64 } else { 0.0 };
        if col > 0 {
            precision_sum += per_class_precision[k];
            predicted_classes += 1;
        }
    }
    let total = confusion.total();
    Ok(ScoreReport {
        oa_trace: if total > 0 { trace as f64 / total as f64 } else { 0.0 },
        oa_macro_precision: if predicted_classes > 0 {
            precision_sum / predicted_classes as f64
        } else {
            0.0
        },
        per_class_recall,
        per_class_precision,
        confusion,
    })
}

/// One ablation result table: rows are classes (recall, then precision,
/// then the two OA summaries), one column per evaluated variant.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub class_names: Vec<String>,
    pub column_names: Vec<String>,
    pub reports: Vec<ScoreReport>,
}

impl AblationTable {
    pub fn oa_trace(&self, column: &str) -> Option<f64> {
        self.column_names
            .iter()
            .position(|c| c == column)
            .map(|i| self.reports[i].oa_trace)
    }

    /// Table-layout CSV: per-class recall rows, precision rows, OA rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("class");
        for c in &self.column_names {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (k, name) in self.class_names.iter().enumerate() {
            out.push_str(name);
            for r in &self.reports {
                out.push(',');
                out.push_str(&r.per_class_recall[k].to_string());
            }
            out.push('\n');
        }
        for (k, name) in self.class_names.iter().enumerate() {
            out.push_str(&format!("precision:{name}"));
            for r in &self.reports {
                out.push(',');
                out.push_str(&r.per_class_precision[k].to_string());
            }
            out.push('\n');
        }
        out.push_str("OA_trace");
        for r in &self.reports {
            out.push(',');
            out.push_str(&r.oa_trace.to_string());
        }
        out.push('\n');
        out.push_str("OA_macro_precision");
        for r in &self.reports {
            out.push(',');
            out.push_str(&r.oa_macro_precision.to_string());
        }
        out.push('\n');
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// All non-empty subsets of the band list, ordered by subset size then band
/// order (L, P, C, LP, LC, PC, LPC for three bands).
pub fn all_band_subsets(bands: &[String]) -> Vec<Vec<String>> {
    let n = bands.len();
    let mut subsets: Vec<Vec<String>> = Vec::new();
    for mask in 1u32..(1 << n) {
        let subset: Vec<String> = (0..n)
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| bands[b].clone())
            .collect();
        subsets.push(subset);
    }
    subsets.sort_by_key(|s| s.len());
    subsets
}

fn run_one_cycle(
    image: &MultiBandImage,
    train: &LabelMap,
    test: &LabelMap,
    config: &PipelineConfig,
) -> Result<ScoreReport> {
    let (model, _) = fit(image, train, config)?;
    let pred = predict(&model, image)?;
    score(&pred, test)
}

/// Fits, predicts and scores one pipeline per band subset, with the split
/// and every seed shared across subsets.
pub fn run_band_ablation(
    image: &MultiBandImage,
    labels: &LabelMap,
    subsets: &[Vec<String>],
    config: &PipelineConfig,
    split_spec: &SplitSpec,
) -> Result<AblationTable> {
    if subsets.is_empty() {
        return Err(Error::InvalidParameter("band ablation needs at least one subset".into()));
    }
    for subset in subsets {
        if subset.is_empty() {
            return Err(Error::InvalidParameter("band subsets must be non-empty".into()));
        }
    }
    let (train, test) = split(labels, split_spec)?;
    let mut reports = Vec::with_capacity(subsets.len());
    let mut column_names = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let sub_image = image.select_bands(subset)?;
        reports.push(run_one_cycle(&sub_image, &train, &test, config)?);
        column_names.push(subset.join(""));
    }
    Ok(AblationTable {
        class_names: labels.class_names().to_vec(),
        column_names,
        reports,
    })
}

/// Fits, predicts and scores one pipeline per decomposition family; the
/// feature extraction of each cycle is restricted to that family's columns.
pub fn run_feature_ablation(
    image: &MultiBandImage,
    labels: &LabelMap,
    families: &[Family],
    config: &PipelineConfig,
    split_spec: &SplitSpec,
) -> Result<AblationTable> {
    if families.is_empty() {
        return Err(Error::InvalidParameter("feature ablation needs at least one family".into()));
    }
    let (train, test) = split(labels, split_spec)?;
    let mut reports = Vec::with_capacity(families.len());
    let mut column_names = Vec::with_capacity(families.len());
    for family in families {
        let mut cycle_config = config.clone();
        cycle_config.families = Some(vec![*family]);
        reports.push(run_one_cycle(image, &train, &test, &cycle_config)?);
        column_names.push(family.name().to_string());
    }
    Ok(AblationTable {
        class_names: labels.class_names().to_vec(),
        column_names,
        reports,
    })
}

/// Writes a single score report as CSV (same row layout as ablation tables,
/// one value column).
pub fn write_score_csv(report: &ScoreReport, column: &str, path: &Path) -> Result<()> {
    let table = AblationTable {
        class_names: report.confusion.class_names.clone(),
        column_names: vec![column.to_string()],
        reports: vec![report.clone()],
    };
    table.write_csv(path)
}

/// Writes the raw confusion counts as CSV (truth rows, predicted columns).
pub fn write_confusion_csv(confusion: &ConfusionMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("truth\\predicted");
    for name in &confusion.class_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (t, name) in confusion.class_names.iter().enumerate() {
        out.push_str(name);
        for p in 0..confusion.n_classes() {
            out.push(',');
            out.push_str(&confusion.at(t, p).to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Pauli RGB composite of the first band: R = |hh-vv|, G = |2 hv|,
/// B = |hh+vv| amplitudes, each channel scaled by its 97th percentile.
pub fn pauli_rgb(image: &MultiBandImage) -> Vec<u8> {
    let pixels = image.band_data(0);
    let mut channels = vec![[0.0f64; 3]; pixels.len()];
    for (c, s) in channels.iter_mut().zip(pixels) {
        let k = pauli_vector(s);
        c[0] = k[1].norm();
        c[1] = k[2].norm();
        c[2] = k[0].norm();
    }
    let mut rgb = vec![0u8; pixels.len() * 3];
    for ch in 0..3 {
        let mut values: Vec<f64> = channels.iter().map(|c| c[ch]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p97 = values[(values.len() - 1) * 97 / 100].max(1e-30);
        for (i, c) in channels.iter().enumerate() {
            rgb[i * 3 + ch] = ((c[ch] / p97).min(1.0) * 255.0).round() as u8;
        }
    }
    rgb
}

/// Marks pixels with a 4-neighbor in a different segment.
pub fn boundary_mask(sp: &SuperpixelMap) -> Vec<bool> {
    let (w, h) = (sp.width, sp.height);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = sp.label(x, y);
            let boundary = (x > 0 && sp.label(x - 1, y) != l)
                || (x + 1 < w && sp.label(x + 1, y) != l)
                || (y > 0 && sp.label(x, y - 1) != l)
                || (y + 1 < h && sp.label(x, y + 1) != l);
            mask[y * w + x] = boundary;
        }
    }
    mask
}
