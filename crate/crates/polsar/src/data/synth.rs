//! Synthetic speckled PolSAR scenes with known per-class coherency truth.
//!
//! Each pixel of class c draws i.i.d. circular complex Gaussian Pauli vectors
//! k ~ CN(0, Σ_c) — the standard fully developed speckle model — and stores
//! the first draw as a single-look scattering matrix. The per-pixel RNG
//! stream is derived from (seed, pixel index), so output is independent of
//! thread scheduling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{scattering_from_pauli, CoherencyMatrix, LabelMap, MultiBandImage};

/// Per-class ground truth: one Hermitian PSD coherency matrix per band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassModel {
    pub name: String,
    /// Band name -> flat coherency encoding, see [`CoherencyMatrix::to_flat`].
    pub sigma: BTreeMap<String, [f64; 9]>,
}

impl ClassModel {
    pub fn sigma_for(&self, band: &str) -> Option<CoherencyMatrix> {
        self.sigma.get(band).map(CoherencyMatrix::from_flat)
    }
}

/// Scene synthesis configuration: band list, number of looks, class models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneModels {
    pub bands: Vec<String>,
    pub looks: usize,
    pub classes: Vec<ClassModel>,
}

impl SceneModels {
    pub fn from_json(json: &str) -> Result<Self> {
        let models: SceneModels = serde_json::from_str(json)
            .map_err(|e| Error::MalformedHeader(format!("scene model config: {e}")))?;
        models.validate()?;
        Ok(models)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::InvalidParameter("scene model lists no bands".into()));
        }
        if self.looks == 0 {
            return Err(Error::InvalidParameter("looks must be >= 1".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::InvalidParameter("scene model lists no classes".into()));
        }
        for class in &self.classes {
            for band in &self.bands {
                let sigma = class.sigma_for(band).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "class {} has no covariance for band {band}",
                        class.name
                    ))
                })?;
                if sigma.span() <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "class {} band {band}: span must be positive",
                        class.name
                    )));
                }
                cholesky_psd(&sigma).map_err(|_| {
                    Error::InvalidParameter(format!(
                        "class {} band {band}: covariance is not positive semidefinite",
                        class.name
                    ))
                })?;
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}

/// Canonical coherency models for synthetic scenes, as flat encodings
/// (see [`CoherencyMatrix::to_flat`]). All are Hermitian PSD with unit span
/// scaled by `power`.
pub mod canonical {
    /// Dominant single-bounce return.
    pub fn surface(power: f64) -> [f64; 9] {
        [0.90 * power, 0.05 * power, 0.05 * power, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    }

    /// Dominant double-bounce return.
    pub fn double(power: f64) -> [f64; 9] {
        [0.05 * power, 0.90 * power, 0.05 * power, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    }

    /// Randomly oriented dipole cloud: coherency proportional to diag(2,1,1).
    pub fn volume(power: f64) -> [f64; 9] {
        [0.50 * power, 0.25 * power, 0.25 * power, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    }

    /// Helical scattering: strong imaginary T23 correlation.
    pub fn helix(power: f64) -> [f64; 9] {
        [
            0.10 * power,
            0.45 * power,
            0.45 * power,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.40 * power,
        ]
    }

    /// Surface/double mixture with real co-pol correlation.
    pub fn mixed(power: f64) -> [f64; 9] {
        [
            0.40 * power,
            0.40 * power,
            0.20 * power,
            0.30 * power,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ]
    }
}

/// Lower-triangular factor L with Σ = L·L^H for Hermitian PSD Σ.
/// Zero pivots (rank-deficient Σ) produce zero columns.
fn cholesky_psd(sigma: &CoherencyMatrix) -> Result<[[Complex64; 3]; 3]> {
    let a = sigma.to_matrix();
    let tol = 1e-9 * sigma.span().max(1e-300);
    let zero = Complex64::new(0.0, 0.0);
    let mut l = [[zero; 3]; 3];
    for j in 0..3 {
        let mut d = a[j][j].re;
        for k in 0..j {
            d -= l[j][k].norm_sqr();
        }
        if d <= tol {
            if d < -tol {
                return Err(Error::InvalidParameter("matrix is not PSD".into()));
            }
            continue; // rank-deficient direction: leave the column zero
        }
        let piv = d.sqrt();
        l[j][j] = Complex64::new(piv, 0.0);
        for i in (j + 1)..3 {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k].conj();
            }
            l[i][j] = s / piv;
        }
    }
    Ok(l)
}

fn draw_pauli(rng: &mut ChaCha8Rng, l: &[[Complex64; 3]; 3]) -> [Complex64; 3] {
    // CN(0, I) components: independent N(0, 1/2) real and imaginary parts.
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut z = [Complex64::new(0.0, 0.0); 3];
    for zi in &mut z {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *zi = Complex64::new(re * inv_sqrt2, im * inv_sqrt2);
    }
    let mut k = [Complex64::new(0.0, 0.0); 3];
    for i in 0..3 {
        for j in 0..=i {
            k[i] += l[i][j] * z[j];
        }
    }
    k
}

/// Generates a speckled scene over `layout`. Every labeled pixel draws
/// `looks` Pauli vectors from its class covariance and stores the first as
/// the single-look scattering matrix; unlabeled pixels stay zero.
/// Deterministic for a fixed seed.
pub fn synth_scene(
    models: &SceneModels,
    layout: &LabelMap,
    looks: usize,
    seed: u64,
) -> Result<(MultiBandImage, LabelMap)> {
    if looks == 0 {
        return Err(Error::InvalidParameter("looks must be >= 1".into()));
    }
    for class in layout.present_classes() {
        if class as usize > models.classes.len() {
            return Err(Error::MissingClassModel(class));
        }
    }

    // Factor every (class, band) covariance once.
    let mut factors: Vec<Vec<[[Complex64; 3]; 3]>> = Vec::with_capacity(models.classes.len());
    for class in &models.classes {
        let mut per_band = Vec::with_capacity(models.bands.len());
        for band in &models.bands {
            let sigma = class
                .sigma_for(band)
                .ok_or_else(|| Error::InvalidParameter(format!("no covariance for band {band}")))?;
            per_band.push(cholesky_psd(&sigma)?);
        }
        factors.push(per_band);
    }

    let (w, h) = (layout.width(), layout.height());
    let mut image = MultiBandImage::new(w, h, models.bands.clone())?;
    let n_bands = models.bands.len();
    let ids = layout.ids();
    // One RNG stream per pixel, consumed band-major within the pixel.
    let per_pixel: Vec<Vec<super::ScatteringMatrix>> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let class = ids[idx];
            if class == 0 {
                return vec![super::ScatteringMatrix::ZERO; n_bands];
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let mut out = Vec::with_capacity(n_bands);
            for band_factors in &factors[class as usize - 1] {
                let mut kept = [Complex64::new(0.0, 0.0); 3];
                for look in 0..looks {
                    let k = draw_pauli(&mut rng, band_factors);
                    if look == 0 {
                        kept = k;
                    }
                }
                out.push(scattering_from_pauli(&kept));
            }
            out
        })
        .collect();
    for b in 0..n_bands {
        let dst = image.band_data_mut(b);
        for (i, px) in per_pixel.iter().enumerate() {
            dst[i] = px[b];
        }
    }
    Ok((image, layout.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{multilook_coherency, pauli_vector};

    fn diag(a: f64, b: f64, c: f64) -> [f64; 9] {
        [a, b, c, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    }

    fn two_class_models() -> SceneModels {
        // identical except for the t22 scale
        let base = [1.0, 0.4, 0.3, 0.2, 0.1, 0.05, -0.02, 0.08, 0.03];
        let mut scaled = base;
        scaled[1] = 1.2;
        SceneModels {
            bands: vec!["L".into()],
            looks: 9,
            classes: vec![
                ClassModel {
                    name: "low".into(),
                    sigma: BTreeMap::from([("L".into(), base)]),
                },
                ClassModel {
                    name: "high".into(),
                    sigma: BTreeMap::from([("L".into(), scaled)]),
                },
            ],
        }
    }

    #[test]
    fn surface_only_covariance_forces_hh_eq_vv() {
        let models = SceneModels {
            bands: vec!["L".into()],
            looks: 1,
            classes: vec![ClassModel {
                name: "surface".into(),
                sigma: BTreeMap::from([("L".into(), diag(1.0, 0.0, 0.0))]),
            }],
        };
        let layout = LabelMap::new(8, 8, vec![1; 64], vec!["surface".into()]).unwrap();
        let (img, _) = synth_scene(&models, &layout, 1, 7).unwrap();
        for s in img.band_data(0) {
            assert!(s.s_hv.norm() < 1e-6, "hv should vanish, got {}", s.s_hv);
            assert!((s.s_hh - s.s_vv).norm() < 1e-6);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let models = two_class_models();
        let layout = LabelMap::block_layout(16, 16, models.class_names()).unwrap();
        let (a, _) = synth_scene(&models, &layout, 9, 42).unwrap();
        let (b, _) = synth_scene(&models, &layout, 9, 42).unwrap();
        assert_eq!(a, b);
        let (c, _) = synth_scene(&models, &layout, 9, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn missing_class_model_is_reported() {
        let models = two_class_models();
        let layout = LabelMap::new(
            2,
            1,
            vec![1, 3],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        assert!(matches!(
            synth_scene(&models, &layout, 1, 0),
            Err(Error::MissingClassModel(3))
        ));
    }

    #[test]
    fn per_class_mean_coherency_converges_to_sigma() {
        // law of large numbers: >= 2048 pixels per class, entries within 5%
        let models = two_class_models();
        let layout = LabelMap::block_layout(64, 64, models.class_names()).unwrap();
        let (img, truth) = synth_scene(&models, &layout, 9, 1234).unwrap();
        let t = multilook_coherency(&img, 0, 1).unwrap();

        for class in 1..=2u8 {
            let mut mean = CoherencyMatrix::ZERO;
            let mut count = 0usize;
            for (i, tt) in t.iter().enumerate() {
                if truth.ids()[i] == class {
                    mean.add_assign(tt);
                    count += 1;
                }
            }
            assert!(count >= 2000, "need >= 2000 pixels, got {count}");
            let mean = mean.scale(1.0 / count as f64);
            let sigma = models.classes[class as usize - 1].sigma_for("L").unwrap();
            let span = sigma.span();
            for (got, want) in mean.to_flat().iter().zip(sigma.to_flat().iter()) {
                assert!(
                    (got - want).abs() <= 0.05 * span,
                    "class {class}: entry {got} vs {want} (span {span})"
                );
            }
            // diagonal entries also within 5% relative
            assert!((mean.t11 - sigma.t11).abs() <= 0.05 * sigma.t11);
            assert!((mean.t22 - sigma.t22).abs() <= 0.05 * sigma.t22);
            assert!((mean.t33 - sigma.t33).abs() <= 0.05 * sigma.t33);
        }
    }

    #[test]
    fn draw_covariance_matches_rank_deficient_factor() {
        // Σ = diag(1, 0, 0): draws must stay on the first Pauli axis.
        let sigma = CoherencyMatrix::from_flat(&diag(1.0, 0.0, 0.0));
        let l = cholesky_psd(&sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let k = draw_pauli(&mut rng, &l);
            assert_eq!(k[1], Complex64::new(0.0, 0.0));
            assert_eq!(k[2], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn cholesky_reconstructs_full_rank_sigma() {
        let sigma =
            CoherencyMatrix::from_flat(&[2.0, 1.0, 0.5, 0.3, -0.2, 0.1, 0.05, -0.08, 0.12]);
        let l = cholesky_psd(&sigma).unwrap();
        let a = sigma.to_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..3 {
                    s += l[i][k] * l[j][k].conj();
                }
                assert!((s - a[i][j]).norm() < 1e-12, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn non_psd_sigma_rejected() {
        let bad = CoherencyMatrix::from_flat(&[1.0, 1.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        assert!(cholesky_psd(&bad).is_err());
    }

    #[test]
    fn unlabeled_pixels_stay_zero() {
        let models = two_class_models();
        let layout =
            LabelMap::new(2, 1, vec![0, 1], vec!["low".into(), "high".into()]).unwrap();
        let (img, _) = synth_scene(&models, &layout, 1, 0).unwrap();
        assert_eq!(img.get(0, 0, 0).span(), 0.0);
        assert!(img.get(0, 1, 0).span() > 0.0);
    }

    #[test]
    fn pauli_draw_power_is_positive() {
        let models = two_class_models();
        let layout = LabelMap::new(4, 4, vec![1; 16], models.class_names()).unwrap();
        let (img, _) = synth_scene(&models, &layout, 2, 9).unwrap();
        for s in img.band_data(0) {
            let k = pauli_vector(s);
            assert!(k.iter().map(|c| c.norm_sqr()).sum::<f64>() > 0.0);
        }
    }
}
