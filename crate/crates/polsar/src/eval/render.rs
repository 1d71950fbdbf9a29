//! Class-map and superpixel-boundary rendering as binary PPM (P6).
//! PPM keeps the output byte-exact without any image dependency.

use std::io::Write;
use std::path::Path;

use crate::data::{LabelMap, MultiBandImage};
use crate::error::{Error, Result};
use crate::superpixels::SuperpixelMap;

/// Fixed 16-color class palette; index 0 (unlabeled) is black.
pub const PALETTE: [[u8; 3]; 16] = [
    [0, 0, 0],       // 0 unlabeled
    [230, 25, 75],   // red
    [60, 180, 75],   // green
    [255, 225, 25],  // yellow
    [0, 130, 200],   // blue
    [245, 130, 48],  // orange
    [145, 30, 180],  // purple
    [70, 240, 240],  // cyan
    [240, 50, 230],  // magenta
    [210, 245, 60],  // lime
    [250, 190, 212], // pink
    [0, 128, 128],   // teal
    [220, 190, 255], // lavender
    [170, 110, 40],  // brown
    [255, 250, 200], // beige
    [128, 0, 0],     // maroon
];

fn write_ppm(width: usize, height: usize, rgb: &[u8], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P6\n{width} {height}\n255\n")?;
    out.write_all(rgb)?;
    out.flush()?;
    Ok(())
}

/// Renders a class-id raster through the fixed palette.
pub fn render_map(labels: &LabelMap, path: &Path) -> Result<()> {
    if labels.n_classes() >= PALETTE.len() {
        return Err(Error::PaletteTooSmall {
            classes: labels.n_classes(),
            colors: PALETTE.len(),
        });
    }
    let mut rgb = Vec::with_capacity(labels.ids().len() * 3);
    for &id in labels.ids() {
        rgb.extend_from_slice(&PALETTE[id as usize]);
    }
    write_ppm(labels.width(), labels.height(), &rgb, path)
}

/// Draws superpixel boundaries in white over the Pauli RGB composite of
/// `base`.
pub fn render_boundaries(sp: &SuperpixelMap, base: &MultiBandImage, path: &Path) -> Result<()> {
    if sp.width != base.width() || sp.height != base.height() {
        return Err(Error::DimensionMismatch(format!(
            "superpixel map {}x{} vs image {}x{}",
            sp.width,
            sp.height,
            base.width(),
            base.height()
        )));
    }
    let mut rgb = super::pauli_rgb(base);
    for (i, on_boundary) in super::boundary_mask(sp).iter().enumerate() {
        if *on_boundary {
            rgb[i * 3] = 255;
            rgb[i * 3 + 1] = 255;
            rgb[i * 3 + 2] = 255;
        }
    }
    write_ppm(sp.width, sp.height, &rgb, path)
}
