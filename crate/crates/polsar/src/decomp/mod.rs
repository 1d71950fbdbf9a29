//! Polarimetric target decompositions and the 33-feature-per-band extractor.
//!
//! Per band and pixel the feature vector concatenates, in order: 6 coherency
//! ratios, Freeman–Durden three-component powers, Krogager sphere/diplane/
//! helix parameters, Yamaguchi four-component powers, the nine Huynen
//! parameters, and the Cloude–Pottier eigenvalue features.
//!
//! Conventions fixed here (they vary across the literature):
//! * Huynen parameters read off the coherency matrix as
//!   2A = T11, B0±B = T22/T33, C = Re T12, D = -Im T12, E = Re T23,
//!   F = Im T23, G = Re T13, H = Im T13.
//! * Krogager works in the circular basis
//!   s_rr = (hh-vv)/2 + j·hv, s_ll = (vv-hh)/2 + j·hv, s_rl = j·(hh+vv)/2,
//!   with K_t the diplane orientation (arg s_rr - arg s_ll + pi)/4 wrapped
//!   to [0, pi/2).
//! * Cloude eigenvector angles use u = e^{j phi} (cos a, sin a cos b e^{j d},
//!   sin a sin b e^{j g}) with the global phase chosen so the first
//!   component is real non-negative; angles from near-zero components are 0.
//! * Negative model powers are clamped to 0 and never renormalized.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::data::{CoherencyMatrix, MultiBandImage, ScatteringMatrix};
use crate::error::{Error, Result};

pub mod cube;
pub mod eigen;

pub use cube::{fit_normalizer, normalize, Family, FeatureCube, NormStats};
pub use eigen::{eigh3, EigenDecomp3};

/// Features per band.
pub const FEATURES_PER_BAND: usize = 33;

/// Column layout of one band's feature block.
pub const COHERENCY_RANGE: std::ops::Range<usize> = 0..6;
pub const FREEMAN_RANGE: std::ops::Range<usize> = 6..9;
pub const KROGAGER_RANGE: std::ops::Range<usize> = 9..13;
pub const YAMAGUCHI_RANGE: std::ops::Range<usize> = 13..17;
pub const HUYNEN_RANGE: std::ops::Range<usize> = 17..26;
pub const CLOUDE_RANGE: std::ops::Range<usize> = 26..33;

/// The 33 per-band features of a single pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector33(pub [f64; FEATURES_PER_BAND]);

impl FeatureVector33 {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Six coherency-matrix ratios: |T13|/sqrt(T11 T33), |T23|/sqrt(T33 T22),
/// T22/S, T33/S, 10 log10 S, |T12|/sqrt(T11 T22).
///
/// Ratios touching a degenerate diagonal entry (<= 1e-12 * span) are defined
/// as 0; rank-deficient pixels are routine at low look counts.
pub fn coherency_features(t: &CoherencyMatrix) -> [f64; 6] {
    let span = t.span();
    let eps = 1e-12 * span;
    let ratio = |num: f64, d1: f64, d2: f64| -> f64 {
        if d1 <= eps || d2 <= eps {
            0.0
        } else {
            (num / (d1 * d2).sqrt()).clamp(0.0, 1.0)
        }
    };
    [
        ratio(t.t13.norm(), t.t11, t.t33),
        ratio(t.t23.norm(), t.t33, t.t22),
        t.t22 / span,
        t.t33 / span,
        10.0 * span.log10(),
        ratio(t.t12.norm(), t.t11, t.t22),
    ]
}

/// Surface/double-bounce split of remainder covariance moments, shared by
/// the Freeman–Durden and Yamaguchi decompositions. Returns (P_odd, P_dbl).
fn surface_double_split(a: f64, b: f64, c: Complex64) -> (f64, f64) {
    if a <= 0.0 || b <= 0.0 {
        return (0.0, 0.0);
    }
    // Shrink the correlation onto the Cauchy–Schwarz boundary if speckle
    // pushed it past; keeps the fitted powers non-negative.
    let mut c = c;
    let cs = c.norm_sqr();
    if cs > a * b {
        c *= (a * b / cs).sqrt();
    }
    let num = (a * b - c.norm_sqr()).max(0.0);
    if c.re >= 0.0 {
        // surface dominant: double-bounce component fixed at alpha = -1
        let fd = num / (a + b + 2.0 * c.re);
        let ps = (a - fd).max(0.0) + (b - fd).max(0.0);
        (ps, 2.0 * fd)
    } else {
        // double dominant: surface component fixed at beta = 1
        let fs = num / (a + b - 2.0 * c.re);
        let pd = (a - fs).max(0.0) + (b - fs).max(0.0);
        (2.0 * fs, pd)
    }
}

/// Freeman–Durden three-component powers (P_odd, P_dbl, P_vol).
///
/// Volume power comes from the cross-polarized channel under the randomly
/// oriented dipole model; the remainder is split between surface and
/// double-bounce mechanisms. Components are non-negative and sum to at most
/// the span.
pub fn freeman(t: &CoherencyMatrix) -> [f64; 3] {
    let (hhhh, vvvv, hvhv, hhvv) = t.lexicographic_moments();
    let span = t.span();
    let pv = 8.0 * hvhv;
    let a = hhhh - 3.0 * hvhv;
    let b = vvvv - 3.0 * hvhv;
    if a <= 0.0 || b <= 0.0 {
        return [0.0, 0.0, pv.clamp(0.0, span)];
    }
    let c = hhvv - Complex64::new(hvhv, 0.0);
    let (ps, pd) = surface_double_split(a, b, c);
    [ps.max(0.0), pd.max(0.0), pv.max(0.0)]
}

/// Krogager sphere–diplane–helix parameters (K_s, K_d, K_h, K_t).
///
/// K_s, K_d, K_h are circular-basis magnitudes and scale linearly with the
/// scattering matrix; K_t is the diplane orientation angle in [0, pi/2).
pub fn krogager(s: &ScatteringMatrix) -> [f64; 4] {
    let hh = Complex64::new(s.s_hh.re as f64, s.s_hh.im as f64);
    let hv = Complex64::new(s.s_hv.re as f64, s.s_hv.im as f64);
    let vv = Complex64::new(s.s_vv.re as f64, s.s_vv.im as f64);
    let j = Complex64::new(0.0, 1.0);
    let s_rr = (hh - vv) * 0.5 + j * hv;
    let s_ll = (vv - hh) * 0.5 + j * hv;
    let s_rl = j * (hh + vv) * 0.5;

    let (rr, ll) = (s_rr.norm(), s_ll.norm());
    let ks = s_rl.norm();
    let kd = rr.min(ll);
    let kh = (rr - ll).abs();
    let theta = (s_rr.arg() - s_ll.arg() + std::f64::consts::PI) / 4.0;
    let kt = theta.rem_euclid(std::f64::consts::FRAC_PI_2);
    [ks, kd, kh, kt]
}

/// Yamaguchi four-component powers (P_odd, P_dbl, P_vol, P_hlx).
///
/// Helix power is 2|Im T23|, capped by the cross-polarized budget so the
/// volume fit stays non-negative; the volume model follows the co-pol ratio
/// branches of the four-component method.
pub fn yamaguchi4(t: &CoherencyMatrix) -> [f64; 4] {
    let (hhhh, vvvv, hvhv, hhvv) = t.lexicographic_moments();
    let span = t.span();
    let pc = (2.0 * t.t23.im.abs()).min(4.0 * hvhv).max(0.0);

    // volume model moments per unit power: (hh, vv, hv, Re hhvv)
    let thr = 10f64.powf(0.2); // 2 dB
    let (m_hh, m_vv, m_hv, m_hhvv) = if vvvv > hhhh * thr {
        (3.0 / 15.0, 8.0 / 15.0, 2.0 / 15.0, 2.0 / 15.0)
    } else if vvvv * thr < hhhh {
        (8.0 / 15.0, 3.0 / 15.0, 2.0 / 15.0, 2.0 / 15.0)
    } else {
        (3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0)
    };

    let mut pv = ((hvhv - pc / 4.0) / m_hv).max(0.0);
    if pc + pv >= span {
        pv = (span - pc).max(0.0);
        return [0.0, 0.0, pv, pc];
    }
    let a = hhhh - pv * m_hh - pc / 4.0;
    let b = vvvv - pv * m_vv - pc / 4.0;
    let c = hhvv - Complex64::new(pv * m_hhvv, 0.0) + Complex64::new(pc / 4.0, 0.0);
    let (ps, pd) = surface_double_split(a, b, c);
    [ps.max(0.0), pd.max(0.0), pv, pc]
}

/// Nine Huynen parameters (A, B0, B, C, D, E, F, G, H) as a linear map of
/// the coherency matrix; see the module docs for the sign convention.
pub fn huynen(t: &CoherencyMatrix) -> [f64; 9] {
    [
        0.5 * t.t11,
        0.5 * (t.t22 + t.t33),
        0.5 * (t.t22 - t.t33),
        t.t12.re,
        -t.t12.im,
        t.t23.re,
        t.t23.im,
        t.t13.re,
        t.t13.im,
    ]
}

/// Inverse of [`huynen`], used as the round-trip oracle.
pub fn huynen_inverse(p: &[f64; 9]) -> CoherencyMatrix {
    CoherencyMatrix {
        t11: 2.0 * p[0],
        t22: p[1] + p[2],
        t33: p[1] - p[2],
        t12: Complex64::new(p[3], -p[4]),
        t13: Complex64::new(p[7], p[8]),
        t23: Complex64::new(p[5], p[6]),
    }
}

/// Cloude–Pottier eigenvalue features (alpha, beta, delta, gamma, lambda,
/// Entropy, Anisotropy). Angle parameters are probability-weighted means
/// over the eigenvectors; lambda is the probability-weighted mean
/// eigenvalue.
pub fn cloude(t: &CoherencyMatrix) -> Result<[f64; 7]> {
    const TINY: f64 = 1e-12;
    let e = eigh3(t)?;
    let total: f64 = e.values.iter().sum();
    if total <= 0.0 {
        return Ok([0.0; 7]);
    }
    let p: Vec<f64> = e.values.iter().map(|l| (l / total).max(0.0)).collect();

    let mut entropy = 0.0;
    for &pi in &p {
        if pi > 0.0 {
            entropy -= pi * pi.ln();
        }
    }
    let entropy = (entropy / 3f64.ln()).clamp(0.0, 1.0);

    let denom = e.values[1] + e.values[2];
    let anisotropy = if denom > TINY * t.span() {
        ((e.values[1] - e.values[2]) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let (mut alpha, mut beta, mut delta, mut gamma, mut lambda) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..3 {
        let u = &e.vectors[i];
        let a1 = u[0].norm();
        let alpha_i = a1.clamp(0.0, 1.0).acos();
        let beta_i = u[2].norm().atan2(u[1].norm());
        // gauge: rotate so the first component is real non-negative
        let phase = if a1 > TINY { u[0] / a1 } else { Complex64::new(1.0, 0.0) };
        let delta_i = if a1 > TINY && u[1].norm() > TINY {
            (u[1] * phase.conj()).arg()
        } else {
            0.0
        };
        let gamma_i = if a1 > TINY && u[2].norm() > TINY {
            (u[2] * phase.conj()).arg()
        } else {
            0.0
        };
        alpha += p[i] * alpha_i;
        beta += p[i] * beta_i;
        delta += p[i] * delta_i;
        gamma += p[i] * gamma_i;
        lambda += p[i] * e.values[i];
    }
    Ok([alpha, beta, delta, gamma, lambda, entropy, anisotropy])
}

/// All 33 features of one pixel: multilook coherency features plus the
/// coherent Krogager parameters from the single-look scattering matrix.
pub fn feature_vector(t: &CoherencyMatrix, s: &ScatteringMatrix) -> Result<FeatureVector33> {
    let mut out = [0.0f64; FEATURES_PER_BAND];
    out[COHERENCY_RANGE].copy_from_slice(&coherency_features(t));
    out[FREEMAN_RANGE].copy_from_slice(&freeman(t));
    out[KROGAGER_RANGE].copy_from_slice(&krogager(s));
    out[YAMAGUCHI_RANGE].copy_from_slice(&yamaguchi4(t));
    out[HUYNEN_RANGE].copy_from_slice(&huynen(t));
    out[CLOUDE_RANGE].copy_from_slice(&cloude(t)?);
    Ok(FeatureVector33(out))
}

/// Extracts the full per-pixel feature cube: 33 features per band,
/// concatenated in image band order.
pub fn extract_features(image: &MultiBandImage, window: usize) -> Result<FeatureCube> {
    let (w, h) = (image.width(), image.height());
    let n_bands = image.bands().len();
    let dims = FEATURES_PER_BAND * n_bands;
    let mut data = vec![0.0f64; w * h * dims];

    for b in 0..n_bands {
        let t_grid = crate::data::multilook_coherency(image, b, window)?;
        let s_grid = image.band_data(b);
        let band_name = &image.bands()[b];
        let offset = b * FEATURES_PER_BAND;
        let rows: Result<Vec<Vec<f64>>> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row = vec![0.0f64; w * FEATURES_PER_BAND];
                for x in 0..w {
                    let idx = y * w + x;
                    let t = &t_grid[idx];
                    if !(t.span() > 0.0) {
                        return Err(Error::DegenerateSpan {
                            x,
                            y,
                            band: band_name.clone(),
                        });
                    }
                    let fv = feature_vector(t, &s_grid[idx]).map_err(|e| {
                        Error::InvalidParameter(format!("pixel ({x},{y}) band {band_name}: {e}"))
                    })?;
                    row[x * FEATURES_PER_BAND..(x + 1) * FEATURES_PER_BAND]
                        .copy_from_slice(fv.as_slice());
                }
                Ok(row)
            })
            .collect();
        let rows = rows?;
        for (y, row) in rows.iter().enumerate() {
            for x in 0..w {
                let dst = (y * w + x) * dims + offset;
                data[dst..dst + FEATURES_PER_BAND]
                    .copy_from_slice(&row[x * FEATURES_PER_BAND..(x + 1) * FEATURES_PER_BAND]);
            }
        }
    }
    FeatureCube::new(w, h, dims, data)
}
