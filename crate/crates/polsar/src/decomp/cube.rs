//! Per-pixel feature cubes, z-score normalization and feature-family
//! column selection.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::LabelMap;
use crate::error::{Error, Result};

use super::FEATURES_PER_BAND;

/// H x W grid of per-pixel feature vectors, pixel-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCube {
    width: usize,
    height: usize,
    dims: usize,
    data: Vec<f64>,
    stats: Option<NormStats>,
}

impl FeatureCube {
    pub fn new(width: usize, height: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * dims {
            return Err(Error::DimensionMismatch(format!(
                "cube data has {} values for {}x{}x{}",
                data.len(),
                width,
                height,
                dims
            )));
        }
        Ok(Self { width, height, dims, data, stats: None })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn stats(&self) -> Option<&NormStats> {
        self.stats.as_ref()
    }

    pub fn feature(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.dims;
        &self.data[i..i + self.dims]
    }

    pub fn feature_at(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.dims..(pixel + 1) * self.dims]
    }

    /// New cube keeping only the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<FeatureCube> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.dims) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} out of range for {} dims",
                self.dims
            )));
        }
        let mut data = Vec::with_capacity(self.pixels() * columns.len());
        for p in 0..self.pixels() {
            let src = self.feature_at(p);
            data.extend(columns.iter().map(|&c| src[c]));
        }
        FeatureCube::new(self.width, self.height, columns.len(), data)
    }

    /// Persists the cube in the PLSR1 feature envelope plus, when the cube
    /// is normalized, the stats sidecar `<path>.stats.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::format::save_feature_raster(self.width, self.height, self.dims, &self.data, path)?;
        if let Some(stats) = &self.stats {
            let mut os = path.as_os_str().to_os_string();
            os.push(".stats.json");
            std::fs::write(
                std::path::PathBuf::from(os),
                serde_json::to_string(stats).map_err(|e| Error::MalformedHeader(e.to_string()))?,
            )?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FeatureCube> {
        let (width, height, dims, data) = crate::data::format::load_feature_raster(path)?;
        FeatureCube::new(width, height, dims, data)
    }
}

/// Per-feature z-score parameters fitted on a pixel subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits per-feature mean and (population) standard deviation over the
/// pixels labeled in `mask`.
pub fn fit_normalizer(cube: &FeatureCube, mask: &LabelMap) -> Result<NormStats> {
    if mask.width() != cube.width() || mask.height() != cube.height() {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs cube {}x{}",
            mask.width(),
            mask.height(),
            cube.width(),
            cube.height()
        )));
    }
    let selected: Vec<usize> = mask
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, &id)| id > 0)
        .map(|(i, _)| i)
        .collect();
    if selected.len() < 2 {
        return Err(Error::TooFewSamples(format!(
            "normalizer needs >= 2 pixels, mask selects {}",
            selected.len()
        )));
    }
    let d = cube.dims();
    let n = selected.len() as f64;
    let mut mean = vec![0.0f64; d];
    for &p in &selected {
        for (m, v) in mean.iter_mut().zip(cube.feature_at(p)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0f64; d];
    for &p in &selected {
        for ((v, x), m) in var.iter_mut().zip(cube.feature_at(p)).zip(&mean) {
            let dlt = x - m;
            *v += dlt * dlt;
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(NormStats { mean, std })
}

/// Applies z-score normalization; features with std below 1e-12 map to 0.
pub fn normalize(cube: &FeatureCube, stats: &NormStats) -> Result<FeatureCube> {
    if stats.mean.len() != cube.dims() || stats.std.len() != cube.dims() {
        return Err(Error::ShapeMismatch(format!(
            "stats have {} features, cube has {}",
            stats.mean.len(),
            cube.dims()
        )));
    }
    let d = cube.dims();
    let mut data = Vec::with_capacity(cube.data().len());
    for p in 0..cube.pixels() {
        let src = cube.feature_at(p);
        for f in 0..d {
            let v = if stats.std[f] < 1e-12 {
                0.0
            } else {
                (src[f] - stats.mean[f]) / stats.std[f]
            };
            data.push(v);
        }
    }
    let mut out = FeatureCube::new(cube.width(), cube.height(), d, data)?;
    out.stats = Some(stats.clone());
    Ok(out)
}

/// The six decomposition families making up each band's 33 features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Coherency,
    Freeman,
    Krogager,
    Yamaguchi,
    Huynen,
    Cloude,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Coherency,
        Family::Freeman,
        Family::Krogager,
        Family::Yamaguchi,
        Family::Huynen,
        Family::Cloude,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Coherency => "coherency",
            Family::Freeman => "freeman",
            Family::Krogager => "krogager",
            Family::Yamaguchi => "yamaguchi",
            Family::Huynen => "huynen",
            Family::Cloude => "cloude",
        }
    }

    pub fn parse(name: &str) -> Result<Family> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown feature family {name}")))
    }

    /// Column range inside one band's 33-feature block.
    pub fn range(&self) -> std::ops::Range<usize> {
        match self {
            Family::Coherency => super::COHERENCY_RANGE,
            Family::Freeman => super::FREEMAN_RANGE,
            Family::Krogager => super::KROGAGER_RANGE,
            Family::Yamaguchi => super::YAMAGUCHI_RANGE,
            Family::Huynen => super::HUYNEN_RANGE,
            Family::Cloude => super::CLOUDE_RANGE,
        }
    }
}

/// Cube columns (over all bands) belonging to the given families.
pub fn family_columns(families: &[Family], n_bands: usize) -> Vec<usize> {
    let mut cols = Vec::new();
    for b in 0..n_bands {
        let base = b * FEATURES_PER_BAND;
        for fam in families {
            cols.extend(fam.range().map(|c| base + c));
        }
    }
    cols
}
