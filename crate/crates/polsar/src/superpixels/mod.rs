//! SLIC-style superpixel generation over the autoencoder's hidden field.
//!
//! The distance between a pixel and a cluster center is
//! `D = (m/s) * D_s + D_h` with `D_s` the Euclidean position distance,
//! `D_h` the Euclidean feature distance, `m` the compactness weight and
//! `s` the seeding interval. Assignment searches centers within a 2s x 2s
//! window; all tie-breaks resolve to the lowest segment id so the result is
//! reproducible bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-pixel feature field the segmentation runs on (the bottleneck
/// representation of the first autoencoder).
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenField {
    width: usize,
    height: usize,
    dims: usize,
    data: Vec<f64>,
}

impl HiddenField {
    pub fn new(width: usize, height: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * dims {
            return Err(Error::DimensionMismatch(format!(
                "hidden field has {} values for {}x{}x{}",
                data.len(),
                width,
                height,
                dims
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("hidden field value #{bad}")));
        }
        Ok(Self { width, height, dims, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.dims;
        &self.data[i..i + self.dims]
    }

    pub fn at_index(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.dims..(pixel + 1) * self.dims]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Squared feature-gradient magnitude from central differences
    /// (coordinates clamped at borders).
    fn gradient_sq(&self, x: usize, y: usize) -> f64 {
        let xm = self.at(x.saturating_sub(1), y);
        let xp = self.at((x + 1).min(self.width - 1), y);
        let ym = self.at(x, y.saturating_sub(1));
        let yp = self.at(x, (y + 1).min(self.height - 1));
        let gx: f64 = xp.iter().zip(xm).map(|(a, b)| (a - b) * (a - b)).sum();
        let gy: f64 = yp.iter().zip(ym).map(|(a, b)| (a - b) * (a - b)).sum();
        gx + gy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    /// Requested superpixel count; the seeded grid rounds it.
    pub k: usize,
    /// Compactness weight m.
    pub m: f64,
    pub max_iters: usize,
    /// Connected components smaller than this fraction of s^2 are merged.
    pub min_segment_frac: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams { k: 0, m: 10.0, max_iters: 10, min_segment_frac: 0.25 }
    }
}

impl SlicParams {
    /// The default segment budget: one superpixel per ~256 pixels.
    pub fn auto_k(pixels: usize) -> usize {
        pixels.div_ceil(256).max(1)
    }

    pub fn effective_k(&self, pixels: usize) -> usize {
        if self.k == 0 { Self::auto_k(pixels) } else { self.k }
    }

    pub fn validate(&self, pixels: usize) -> Result<()> {
        let k = self.effective_k(pixels);
        if k > pixels {
            return Err(Error::KTooLarge { requested: k, pixels });
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(Error::InvalidParameter(format!("m must be > 0, got {}", self.m)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.min_segment_frac > 0.0 && self.min_segment_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "min_segment_frac must be in (0,1), got {}",
                self.min_segment_frac
            )));
        }
        Ok(())
    }
}

/// One cluster center: mean position and mean feature of its members.
#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    pub x: f64,
    pub y: f64,
    pub feature: Vec<f64>,
    pub count: usize,
}

/// Final segmentation: per-pixel segment ids 0..K'-1 plus per-segment
/// centers.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub centers: Vec<Center>,
}

impl SuperpixelMap {
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn n_segments(&self) -> usize {
        self.centers.len()
    }

    /// Feature centroid of the segment the pixel belongs to.
    pub fn centroid_of(&self, x: usize, y: usize) -> &[f64] {
        &self.centers[self.label(x, y) as usize].feature
    }

    /// Writes `id,x,y,count,c1..cD` rows.
    pub fn write_centers_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let dims = self.centers.first().map_or(0, |c| c.feature.len());
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let cols: Vec<String> = (1..=dims).map(|i| format!("c{i}")).collect();
        writeln!(out, "id,x,y,count,{}", cols.join(","))?;
        for (id, c) in self.centers.iter().enumerate() {
            let feats: Vec<String> = c.feature.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{id},{},{},{},{}", c.x, c.y, c.count, feats.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The segmentation distance: (m/s) * D_s + D_h.
pub fn slic_distance(
    pi: (f64, f64),
    pj: (f64, f64),
    hi: &[f64],
    hj: &[f64],
    m: f64,
    s: f64,
) -> f64 {
    let ds = ((pi.0 - pj.0).powi(2) + (pi.1 - pj.1).powi(2)).sqrt();
    let dh = hi
        .iter()
        .zip(hj)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    (m / s) * ds + dh
}

/// Grid-seeded initial centers: interval s = sqrt(H*W/K), each seed moved to
/// the lowest-gradient position in its 3x3 neighborhood (ties keep the seed,
/// then lowest scan index). Returns the centers and s.
pub fn init_centers(field: &HiddenField, k: usize) -> Result<(Vec<Center>, f64)> {
    let pixels = field.pixels();
    if k == 0 || k > pixels {
        return Err(Error::KTooLarge { requested: k, pixels });
    }
    let (w, h) = (field.width, field.height);
    let s = ((pixels as f64) / k as f64).sqrt();
    let nx = ((w as f64 / s).round() as usize).clamp(1, w);
    let ny = ((h as f64 / s).round() as usize).clamp(1, h);

    let mut centers = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let x0 = (((gx as f64 + 0.5) * w as f64 / nx as f64).floor() as usize).min(w - 1);
            let y0 = (((gy as f64 + 0.5) * h as f64 / ny as f64).floor() as usize).min(h - 1);
            // perturb to the lowest feature gradient in the 3x3 neighborhood
            let mut best = (x0, y0);
            let mut best_grad = field.gradient_sq(x0, y0);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let x = (x0 as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let y = (y0 as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let g = field.gradient_sq(x, y);
                    if g < best_grad {
                        best_grad = g;
                        best = (x, y);
                    }
                }
            }
            centers.push(Center {
                x: best.0 as f64,
                y: best.1 as f64,
                feature: field.at(best.0, best.1).to_vec(),
                count: 0,
            });
        }
    }
    Ok((centers, s))
}

/// Full SLIC segmentation: iterative windowed assignment and center updates
/// until labels stop changing (or `max_iters`), then connectivity
/// enforcement and centroid computation.
pub fn slic_segment(field: &HiddenField, params: &SlicParams) -> Result<SuperpixelMap> {
    params.validate(field.pixels())?;
    let k = params.effective_k(field.pixels());
    let (mut centers, s) = init_centers(field, k)?;
    let (w, h) = (field.width, field.height);

    let mut labels = vec![u32::MAX; w * h];
    for _ in 0..params.max_iters {
        let new_labels = assign_pixels(field, &centers, &labels, params.m, s);
        let changed = new_labels != labels;
        labels = new_labels;
        update_centers(field, &labels, &mut centers);
        if !changed {
            break;
        }
    }

    enforce_connectivity(field, &mut labels, params.min_segment_frac, s);
    let centers = segment_centroids(field, &labels)?;
    Ok(SuperpixelMap { width: w, height: h, labels, centers })
}

/// One assignment sweep: each pixel takes the distance-minimizing center
/// among those within the 2s x 2s window (lowest id wins ties). Pixels with
/// no candidate keep their previous label, or fall back to a full scan on
/// the first sweep.
fn assign_pixels(
    field: &HiddenField,
    centers: &[Center],
    previous: &[u32],
    m: f64,
    s: f64,
) -> Vec<u32> {
    let w = field.width;
    let mut labels = vec![u32::MAX; field.pixels()];
    labels
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let p = (x as f64, y as f64);
                let hp = field.at(x, y);
                let mut best = f64::INFINITY;
                let mut best_id = u32::MAX;
                for (id, c) in centers.iter().enumerate() {
                    if (p.0 - c.x).abs() > s || (p.1 - c.y).abs() > s {
                        continue;
                    }
                    let d = slic_distance(p, (c.x, c.y), hp, &c.feature, m, s);
                    if d < best {
                        best = d;
                        best_id = id as u32;
                    }
                }
                if best_id == u32::MAX {
                    let prev = previous[y * w + x];
                    if prev != u32::MAX {
                        best_id = prev;
                    } else {
                        // first sweep orphan: nearest center by full scan
                        for (id, c) in centers.iter().enumerate() {
                            let d = slic_distance(p, (c.x, c.y), hp, &c.feature, m, s);
                            if d < best {
                                best = d;
                                best_id = id as u32;
                            }
                        }
                    }
                }
                *out = best_id;
            }
        });
    labels
}

/// Recomputes centers as member means, accumulating in pixel index order.
/// Centers with no members keep their previous state.
fn update_centers(field: &HiddenField, labels: &[u32], centers: &mut [Center]) {
    let dims = field.dims;
    let w = field.width;
    let mut sums: Vec<(f64, f64, Vec<f64>, usize)> =
        centers.iter().map(|_| (0.0, 0.0, vec![0.0; dims], 0usize)).collect();
    for (i, &label) in labels.iter().enumerate() {
        let slot = &mut sums[label as usize];
        slot.0 += (i % w) as f64;
        slot.1 += (i / w) as f64;
        for (acc, v) in slot.2.iter_mut().zip(field.at_index(i)) {
            *acc += v;
        }
        slot.3 += 1;
    }
    for (center, (sx, sy, sf, n)) in centers.iter_mut().zip(sums) {
        if n == 0 {
            continue;
        }
        let inv = 1.0 / n as f64;
        center.x = sx * inv;
        center.y = sy * inv;
        center.count = n;
        center.feature = sf.into_iter().map(|v| v * inv).collect();
    }
}

/// Rewrites labels so every segment is 4-connected: connected components are
/// relabeled in scan order, then components smaller than
/// `min_segment_frac * s^2` merge into the adjacent component with the
/// nearest feature centroid (lowest id on ties) until none remain.
pub fn enforce_connectivity(field: &HiddenField, labels: &mut Vec<u32>, min_segment_frac: f64, s: f64) {
    let (w, h) = (field.width, field.height);
    let dims = field.dims;

    // connected-component labeling, components numbered in scan order
    let mut comp = vec![u32::MAX; w * h];
    let mut comp_pixels: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = comp_pixels.len() as u32;
        let mut members = Vec::new();
        comp[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            let mut try_push = |j: usize| {
                if comp[j] == u32::MAX && labels[j] == labels[i] {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                try_push(i - 1);
            }
            if x + 1 < w {
                try_push(i + 1);
            }
            if y > 0 {
                try_push(i - w);
            }
            if y + 1 < h {
                try_push(i + w);
            }
        }
        comp_pixels.push(members);
    }

    let n_comp = comp_pixels.len();
    // per-component feature sums and adjacency on the component graph
    let mut feat_sum: Vec<Vec<f64>> = vec![vec![0.0; dims]; n_comp];
    let mut count: Vec<usize> = vec![0; n_comp];
    for (c, members) in comp_pixels.iter().enumerate() {
        for &i in members {
            for (acc, v) in feat_sum[c].iter_mut().zip(field.at_index(i)) {
                *acc += v;
            }
        }
        count[c] = members.len();
    }

    // union-find over components
    let mut parent: Vec<u32> = (0..n_comp as u32).collect();
    fn find(parent: &mut [u32], mut c: u32) -> u32 {
        while parent[c as usize] != c {
            parent[c as usize] = parent[parent[c as usize] as usize];
            c = parent[c as usize];
        }
        c
    }

    let threshold = (min_segment_frac * s * s).max(1.0);
    loop {
        let mut merged_any = false;
        for c in 0..n_comp as u32 {
            let root = find(&mut parent, c);
            if root != c || (count[root as usize] as f64) >= threshold {
                continue;
            }
            // adjacent roots, scanned from this component's current pixels
            let mut neighbors: Vec<u32> = Vec::new();
            for &i in &comp_pixels[root as usize] {
                let (x, y) = (i % w, i / w);
                for j in neighbor_indices(x, y, w, h) {
                    let r = find(&mut parent, comp[j]);
                    if r != root && !neighbors.contains(&r) {
                        neighbors.push(r);
                    }
                }
            }
            if neighbors.is_empty() {
                continue; // single-component image
            }
            // nearest feature centroid, lowest id on ties
            neighbors.sort_unstable();
            let my_centroid: Vec<f64> = feat_sum[root as usize]
                .iter()
                .map(|v| v / count[root as usize] as f64)
                .collect();
            let mut best = neighbors[0];
            let mut best_d = f64::INFINITY;
            for &nb in &neighbors {
                let nc = count[nb as usize] as f64;
                let d: f64 = feat_sum[nb as usize]
                    .iter()
                    .zip(&my_centroid)
                    .map(|(sum, mv)| {
                        let v = sum / nc - mv;
                        v * v
                    })
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = nb;
                }
            }
            // merge root into best
            parent[root as usize] = best;
            count[best as usize] += count[root as usize];
            let moved = std::mem::take(&mut comp_pixels[root as usize]);
            let sums = std::mem::take(&mut feat_sum[root as usize]);
            for (acc, v) in feat_sum[best as usize].iter_mut().zip(sums) {
                *acc += v;
            }
            comp_pixels[best as usize].extend(moved);
            merged_any = true;
        }
        if !merged_any {
            break;
        }
    }

    // final ids in order of first pixel occurrence
    let mut remap: Vec<u32> = vec![u32::MAX; n_comp];
    let mut next = 0u32;
    for i in 0..w * h {
        let root = find(&mut parent, comp[i]);
        if remap[root as usize] == u32::MAX {
            remap[root as usize] = next;
            next += 1;
        }
        labels[i] = remap[root as usize];
    }
}

fn neighbor_indices(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let mut out = [usize::MAX; 4];
    let i = y * w + x;
    let mut n = 0;
    if x > 0 {
        out[n] = i - 1;
        n += 1;
    }
    if x + 1 < w {
        out[n] = i + 1;
        n += 1;
    }
    if y > 0 {
        out[n] = i - w;
        n += 1;
    }
    if y + 1 < h {
        out[n] = i + w;
        n += 1;
    }
    out.into_iter().take(n)
}

/// Exact per-segment means of member positions and features. Labels must be
/// contiguous 0..K'-1.
pub fn segment_centroids(field: &HiddenField, labels: &[u32]) -> Result<Vec<Center>> {
    if labels.len() != field.pixels() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} pixels",
            labels.len(),
            field.pixels()
        )));
    }
    let n_seg = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let dims = field.dims;
    let w = field.width;
    let mut centers: Vec<Center> = (0..n_seg)
        .map(|_| Center { x: 0.0, y: 0.0, feature: vec![0.0; dims], count: 0 })
        .collect();
    for (i, &label) in labels.iter().enumerate() {
        let c = &mut centers[label as usize];
        c.x += (i % w) as f64;
        c.y += (i / w) as f64;
        for (acc, v) in c.feature.iter_mut().zip(field.at_index(i)) {
            *acc += v;
        }
        c.count += 1;
    }
    for c in &mut centers {
        if c.count == 0 {
            return Err(Error::DimensionMismatch("segment ids are not contiguous".into()));
        }
        let inv = 1.0 / c.count as f64;
        c.x *= inv;
        c.y *= inv;
        for v in &mut c.feature {
            *v *= inv;
        }
    }
    Ok(centers)
}

#[cfg(test)]
mod tests;
