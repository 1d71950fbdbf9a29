//! PolSAR image data model: per-pixel scattering matrices under reciprocity,
//! multilook coherency matrices, label maps and the synthetic scene generator.
//!
//! Scattering data is stored in single precision, matching the on-disk
//! format bit for bit; all derived quantities are computed in f64.

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub mod format;
pub mod synth;

pub use synth::{synth_scene, ClassModel, SceneModels};

/// Per-pixel 2x2 complex scattering matrix under the reciprocity
/// assumption: only `s_hh`, `s_hv`, `s_vv` are stored, `s_vh == s_hv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringMatrix {
    pub s_hh: Complex32,
    pub s_hv: Complex32,
    pub s_vv: Complex32,
}

impl ScatteringMatrix {
    pub fn new(s_hh: Complex32, s_hv: Complex32, s_vv: Complex32) -> Self {
        Self { s_hh, s_hv, s_vv }
    }

    pub const ZERO: ScatteringMatrix = ScatteringMatrix {
        s_hh: Complex32::new(0.0, 0.0),
        s_hv: Complex32::new(0.0, 0.0),
        s_vv: Complex32::new(0.0, 0.0),
    };

    pub fn is_finite(&self) -> bool {
        [self.s_hh, self.s_hv, self.s_vv]
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Total backscattered power |hh|^2 + |vv|^2 + 2|hv|^2.
    pub fn span(&self) -> f64 {
        let hh = Complex64::new(self.s_hh.re as f64, self.s_hh.im as f64);
        let hv = Complex64::new(self.s_hv.re as f64, self.s_hv.im as f64);
        let vv = Complex64::new(self.s_vv.re as f64, self.s_vv.im as f64);
        hh.norm_sqr() + vv.norm_sqr() + 2.0 * hv.norm_sqr()
    }
}

/// Pauli scattering vector k = (hh+vv, hh-vv, 2hv) / sqrt(2).
///
/// Preserves total power: |k|^2 equals the span of `s`.
pub fn pauli_vector(s: &ScatteringMatrix) -> [Complex64; 3] {
    let hh = Complex64::new(s.s_hh.re as f64, s.s_hh.im as f64);
    let hv = Complex64::new(s.s_hv.re as f64, s.s_hv.im as f64);
    let vv = Complex64::new(s.s_vv.re as f64, s.s_vv.im as f64);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    [
        (hh + vv) * inv_sqrt2,
        (hh - vv) * inv_sqrt2,
        2.0 * hv * inv_sqrt2,
    ]
}

/// Inverse of [`pauli_vector`]: recover (hh, hv, vv) from a Pauli vector.
pub fn scattering_from_pauli(k: &[Complex64; 3]) -> ScatteringMatrix {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let hh = (k[0] + k[1]) * inv_sqrt2;
    let vv = (k[0] - k[1]) * inv_sqrt2;
    let hv = k[2] * inv_sqrt2;
    ScatteringMatrix {
        s_hh: Complex32::new(hh.re as f32, hh.im as f32),
        s_hv: Complex32::new(hv.re as f32, hv.im as f32),
        s_vv: Complex32::new(vv.re as f32, vv.im as f32),
    }
}

/// 3x3 Hermitian coherency matrix; only the upper triangle is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherencyMatrix {
    pub t11: f64,
    pub t22: f64,
    pub t33: f64,
    pub t12: Complex64,
    pub t13: Complex64,
    pub t23: Complex64,
}

impl CoherencyMatrix {
    pub const ZERO: CoherencyMatrix = CoherencyMatrix {
        t11: 0.0,
        t22: 0.0,
        t33: 0.0,
        t12: Complex64::new(0.0, 0.0),
        t13: Complex64::new(0.0, 0.0),
        t23: Complex64::new(0.0, 0.0),
    };

    /// Rank-1 coherency k * k^H from a Pauli vector.
    pub fn from_pauli_outer(k: &[Complex64; 3]) -> Self {
        CoherencyMatrix {
            t11: k[0].norm_sqr(),
            t22: k[1].norm_sqr(),
            t33: k[2].norm_sqr(),
            t12: k[0] * k[1].conj(),
            t13: k[0] * k[2].conj(),
            t23: k[1] * k[2].conj(),
        }
    }

    /// Total power, i.e. the trace.
    pub fn span(&self) -> f64 {
        self.t11 + self.t22 + self.t33
    }

    pub fn add_assign(&mut self, other: &CoherencyMatrix) {
        self.t11 += other.t11;
        self.t22 += other.t22;
        self.t33 += other.t33;
        self.t12 += other.t12;
        self.t13 += other.t13;
        self.t23 += other.t23;
    }

    pub fn scale(&self, factor: f64) -> CoherencyMatrix {
        CoherencyMatrix {
            t11: self.t11 * factor,
            t22: self.t22 * factor,
            t33: self.t33 * factor,
            t12: self.t12 * factor,
            t13: self.t13 * factor,
            t23: self.t23 * factor,
        }
    }

    /// Full 3x3 complex matrix (fills the lower triangle by conjugation).
    pub fn to_matrix(&self) -> [[Complex64; 3]; 3] {
        [
            [Complex64::new(self.t11, 0.0), self.t12, self.t13],
            [self.t12.conj(), Complex64::new(self.t22, 0.0), self.t23],
            [self.t13.conj(), self.t23.conj(), Complex64::new(self.t33, 0.0)],
        ]
    }

    /// Flat 9-real encoding: [t11, t22, t33, Re t12, Im t12, Re t13, Im t13, Re t23, Im t23].
    pub fn to_flat(&self) -> [f64; 9] {
        [
            self.t11, self.t22, self.t33, self.t12.re, self.t12.im, self.t13.re, self.t13.im,
            self.t23.re, self.t23.im,
        ]
    }

    pub fn from_flat(v: &[f64; 9]) -> Self {
        CoherencyMatrix {
            t11: v[0],
            t22: v[1],
            t33: v[2],
            t12: Complex64::new(v[3], v[4]),
            t13: Complex64::new(v[5], v[6]),
            t23: Complex64::new(v[7], v[8]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Covariance-basis moments (⟨|hh|²⟩, ⟨|vv|²⟩, ⟨|hv|²⟩, ⟨hh·vv*⟩) used by
    /// the model-based decompositions.
    pub fn lexicographic_moments(&self) -> (f64, f64, f64, Complex64) {
        let hhhh = 0.5 * (self.t11 + self.t22 + 2.0 * self.t12.re);
        let vvvv = 0.5 * (self.t11 + self.t22 - 2.0 * self.t12.re);
        let hvhv = 0.5 * self.t33;
        let hhvv = Complex64::new(0.5 * (self.t11 - self.t22), -self.t12.im);
        (hhhh, vvvv, hvhv, hhvv)
    }
}

/// A co-registered stack of single-look scattering images, one per band.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBandImage {
    width: usize,
    height: usize,
    bands: Vec<String>,
    /// Per band, row-major pixel data.
    data: Vec<Vec<ScatteringMatrix>>,
}

impl MultiBandImage {
    pub fn new(width: usize, height: usize, bands: Vec<String>) -> Result<Self> {
        if width == 0 || height == 0 || bands.is_empty() {
            return Err(Error::EmptyImage);
        }
        let data = bands
            .iter()
            .map(|_| vec![ScatteringMatrix::ZERO; width * height])
            .collect();
        Ok(Self { width, height, bands, data })
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

    pub fn bands(&self) -> &[String] {
        &self.bands
    }

    pub fn band_index(&self, band: &str) -> Option<usize> {
        self.bands.iter().position(|b| b == band)
    }

    pub fn band_data(&self, band: usize) -> &[ScatteringMatrix] {
        &self.data[band]
    }

    pub fn band_data_mut(&mut self, band: usize) -> &mut [ScatteringMatrix] {
        &mut self.data[band]
    }

    pub fn get(&self, band: usize, x: usize, y: usize) -> &ScatteringMatrix {
        &self.data[band][y * self.width + x]
    }

    pub fn set(&mut self, band: usize, x: usize, y: usize, s: ScatteringMatrix) {
        self.data[band][y * self.width + x] = s;
    }

    /// New image containing only the named bands, in the given order.
    pub fn select_bands(&self, bands: &[String]) -> Result<MultiBandImage> {
        let mut data = Vec::with_capacity(bands.len());
        for b in bands {
            let idx = self.band_index(b).ok_or_else(|| Error::BandMismatch {
                expected: b.clone(),
                actual: self.bands.join(","),
            })?;
            data.push(self.data[idx].clone());
        }
        Ok(MultiBandImage {
            width: self.width,
            height: self.height,
            bands: bands.to_vec(),
            data,
        })
    }
}

/// Boxcar multilook estimate of the coherency matrix at every pixel.
///
/// The window is clamped at image borders (edge replication), so the output
/// grid has the same dimensions as the input. `window` must be odd.
pub fn multilook_coherency(
    image: &MultiBandImage,
    band: usize,
    window: usize,
) -> Result<Vec<CoherencyMatrix>> {
    if image.pixels() == 0 {
        return Err(Error::EmptyImage);
    }
    if window % 2 == 0 || window == 0 {
        return Err(Error::InvalidParameter(format!(
            "multilook window must be odd, got {window}"
        )));
    }
    let (w, h) = (image.width, image.height);
    let pixels = image.band_data(band);
    let outer: Vec<CoherencyMatrix> = pixels
        .iter()
        .map(|s| CoherencyMatrix::from_pauli_outer(&pauli_vector(s)))
        .collect();
    let r = (window / 2) as isize;
    let norm = 1.0 / (window * window) as f64;

    let mut out = vec![CoherencyMatrix::ZERO; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, t) in row.iter_mut().enumerate() {
            let mut acc = CoherencyMatrix::ZERO;
            for dy in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    acc.add_assign(&outer[yy * w + xx]);
                }
            }
            *t = acc.scale(norm);
        }
    });
    Ok(out)
}

/// Ground-truth / prediction raster: class ids with 0 meaning unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    ids: Vec<u8>,
    class_names: Vec<String>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, ids: Vec<u8>, class_names: Vec<String>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "label grid has {} entries for {}x{} image",
                ids.len(),
                width,
                height
            )));
        }
        let c = class_names.len();
        if let Some(bad) = ids.iter().find(|&&id| id as usize > c) {
            return Err(Error::MalformedHeader(format!(
                "label id {bad} exceeds class count {c}"
            )));
        }
        Ok(Self { width, height, ids, class_names })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u8] {
        &self.ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.ids[y * self.width + x]
    }

    /// Classes that actually appear (id > 0) in the grid.
    pub fn present_classes(&self) -> Vec<u8> {
        let mut seen = vec![false; self.n_classes() + 1];
        for &id in &self.ids {
            seen[id as usize] = true;
        }
        (1..=self.n_classes() as u8).filter(|&c| seen[c as usize]).collect()
    }

    /// Block-grid layout cycling through all `class_names`: the image is cut
    /// into a near-square grid with at least one cell per class.
    pub fn block_layout(width: usize, height: usize, class_names: Vec<String>) -> Result<Self> {
        let c = class_names.len();
        if c == 0 || c > 255 {
            return Err(Error::InvalidParameter(format!("bad class count {c}")));
        }
        let rows = (c as f64).sqrt().floor().max(1.0) as usize;
        let cols = (c + rows - 1) / rows;
        let mut ids = vec![0u8; width * height];
        for y in 0..height {
            let by = (y * rows / height).min(rows - 1);
            for x in 0..width {
                let bx = (x * cols / width).min(cols - 1);
                let cell = by * cols + bx;
                ids[y * width + x] = (cell % c) as u8 + 1;
            }
        }
        LabelMap::new(width, height, ids, class_names)
    }
}
