use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn constant_field(w: usize, h: usize, dims: usize, value: f64) -> HiddenField {
    HiddenField::new(w, h, dims, vec![value; w * h * dims]).unwrap()
}

/// Two feature plateaus split at a vertical boundary (x < split is "left").
fn two_plateau_field(w: usize, h: usize, split: usize) -> HiddenField {
    let dims = 2;
    let mut data = vec![0.0; w * h * dims];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * dims;
            if x < split {
                data[i] = 0.5;
                data[i + 1] = -0.5;
            } else {
                data[i] = -0.5;
                data[i + 1] = 0.5;
            }
        }
    }
    HiddenField::new(w, h, dims, data).unwrap()
}

fn assert_four_connected(map: &SuperpixelMap) {
    // brute-force connected-component check per segment
    let (w, h) = (map.width, map.height);
    let mut seen = vec![false; w * h];
    for seg in 0..map.n_segments() as u32 {
        let start = match map.labels.iter().position(|&l| l == seg) {
            Some(i) => i,
            None => panic!("segment {seg} is empty"),
        };
        let mut stack = vec![start];
        let mut reached = 0usize;
        let mut visited = vec![false; w * h];
        visited[start] = true;
        while let Some(i) = stack.pop() {
            reached += 1;
            seen[i] = true;
            let (x, y) = (i % w, i / w);
            for j in [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ]
            .into_iter()
            .flatten()
            {
                if !visited[j] && map.labels[j] == seg {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        let total = map.labels.iter().filter(|&&l| l == seg).count();
        assert_eq!(reached, total, "segment {seg} is not 4-connected");
    }
    assert!(seen.iter().all(|&s| s), "labels do not cover the grid");
}

// --- distance ---

#[test]
fn distance_zero_for_identical_pixel() {
    let d = slic_distance((3.0, 4.0), (3.0, 4.0), &[0.1, 0.2], &[0.1, 0.2], 10.0, 8.0);
    assert_eq!(d, 0.0);
}

#[test]
fn distance_three_four_five_triangle() {
    let d = slic_distance((0.0, 0.0), (3.0, 4.0), &[0.7; 5], &[0.7; 5], 10.0, 10.0);
    assert!((d - 5.0).abs() < 1e-15);
}

#[test]
fn distance_pure_feature_term() {
    let hi = [1.0, 0.0, 0.0, 0.0, 0.0];
    let hj = [0.0; 5];
    let d = slic_distance((2.0, 2.0), (2.0, 2.0), &hi, &hj, 3.0, 7.0);
    assert!((d - 1.0).abs() < 1e-15);
}

// --- seeding ---

#[test]
fn init_centers_exact_grid() {
    let field = constant_field(100, 100, 3, 0.2);
    let (centers, s) = init_centers(&field, 100).unwrap();
    assert_eq!(s, 10.0);
    assert_eq!(centers.len(), 100);
    // constant field: gradients all equal, seeds stay on the grid
    for (i, c) in centers.iter().enumerate() {
        let gx = i % 10;
        let gy = i / 10;
        assert_eq!(c.x, (gx * 10 + 5) as f64);
        assert_eq!(c.y, (gy * 10 + 5) as f64);
    }
}

#[test]
fn init_centers_one_per_pixel() {
    let field = constant_field(4, 3, 1, 0.0);
    let (centers, s) = init_centers(&field, 12).unwrap();
    assert_eq!(centers.len(), 12);
    assert!((s - 1.0).abs() < 1e-12);
    let mut positions: Vec<(usize, usize)> =
        centers.iter().map(|c| (c.x as usize, c.y as usize)).collect();
    positions.sort_unstable();
    positions.dedup();
    assert_eq!(positions.len(), 12);
}

#[test]
fn init_centers_rejects_oversized_k() {
    let field = constant_field(4, 4, 1, 0.0);
    assert!(matches!(
        init_centers(&field, 17),
        Err(Error::KTooLarge { requested: 17, pixels: 16 })
    ));
}

#[test]
fn seeds_move_off_feature_edges() {
    // a sharp feature edge: seeds near it must shift to the flat side
    let field = two_plateau_field(12, 12, 6);
    let (centers, _) = init_centers(&field, 4).unwrap();
    for c in &centers {
        // gradient at the seed position must be locally minimal: never on
        // the columns touching the boundary
        assert!(
            !(4..=6).contains(&(c.x as usize)),
            "seed sits on the plateau edge at x = {}",
            c.x
        );
    }
}

// --- segmentation ---

#[test]
fn constant_field_tiles_near_the_seed_grid() {
    let field = constant_field(128, 128, 5, 0.1);
    let params = SlicParams { k: 64, ..SlicParams::default() };
    let map = slic_segment(&field, &params).unwrap();

    let s2 = (128.0f64 * 128.0 / 64.0) as usize; // s^2 = 256
    assert_four_connected(&map);
    for c in &map.centers {
        assert!(
            c.count >= s2 / 2 && c.count <= s2 * 2,
            "segment size {} outside factor 2 of {s2}",
            c.count
        );
    }
    // partition sanity: between K/2 and 2K segments
    assert!(map.n_segments() >= 32 && map.n_segments() <= 128);
}

#[test]
fn constant_field_assignment_is_optimal_at_convergence() {
    let field = constant_field(64, 64, 2, 0.3);
    let params = SlicParams { k: 16, ..SlicParams::default() };
    let map = slic_segment(&field, &params).unwrap();
    let s = (64.0f64 * 64.0 / 16.0).sqrt();
    for y in 0..64 {
        for x in 0..64 {
            let assigned = map.label(x, y) as usize;
            let p = (x as f64, y as f64);
            let d_assigned = slic_distance(
                p,
                (map.centers[assigned].x, map.centers[assigned].y),
                field.at(x, y),
                &map.centers[assigned].feature,
                params.m,
                s,
            );
            for (id, c) in map.centers.iter().enumerate() {
                if id == assigned || (p.0 - c.x).abs() > s || (p.1 - c.y).abs() > s {
                    continue;
                }
                let d = slic_distance(p, (c.x, c.y), field.at(x, y), &c.feature, params.m, s);
                assert!(
                    d >= d_assigned - 1e-12,
                    "pixel ({x},{y}) prefers center {id}: {d} < {d_assigned}"
                );
            }
        }
    }
}

#[test]
fn small_m_respects_the_plateau_boundary() {
    let split = 36;
    let field = two_plateau_field(64, 32, split);
    let params = SlicParams { k: 8, m: 0.01, ..SlicParams::default() };
    let map = slic_segment(&field, &params).unwrap();
    assert_four_connected(&map);

    let mut straddlers = 0;
    for seg in 0..map.n_segments() as u32 {
        let mut left = false;
        let mut right = false;
        for y in 0..32 {
            for x in 0..64 {
                if map.label(x, y) == seg {
                    if x < split {
                        left = true;
                    } else {
                        right = true;
                    }
                }
            }
        }
        if left && right {
            straddlers += 1;
        }
    }
    assert_eq!(straddlers, 0, "{straddlers} segments straddle the boundary");
}

#[test]
fn large_m_gives_grid_like_segments_that_straddle() {
    let split = 36;
    let field = two_plateau_field(64, 32, split);
    let params = SlicParams { k: 8, m: 1000.0, ..SlicParams::default() };
    let map = slic_segment(&field, &params).unwrap();
    let straddlers = (0..map.n_segments() as u32)
        .filter(|&seg| {
            let left = map
                .labels
                .iter()
                .enumerate()
                .any(|(i, &l)| l == seg && i % 64 < split);
            let right = map
                .labels
                .iter()
                .enumerate()
                .any(|(i, &l)| l == seg && i % 64 >= split);
            left && right
        })
        .count();
    assert!(straddlers > 0, "expected grid-like segments across the boundary");
}

#[test]
fn larger_m_does_not_increase_average_spatial_variance() {
    let field = two_plateau_field(64, 32, 36);
    let avg_var = |m: f64| -> f64 {
        let params = SlicParams { k: 8, m, ..SlicParams::default() };
        let map = slic_segment(&field, &params).unwrap();
        let mut total = 0.0;
        for seg in 0..map.n_segments() as u32 {
            let c = &map.centers[seg as usize];
            let mut var = 0.0;
            let mut n = 0.0;
            for (i, &l) in map.labels.iter().enumerate() {
                if l == seg {
                    let x = (i % 64) as f64;
                    let y = (i / 64) as f64;
                    var += (x - c.x).powi(2) + (y - c.y).powi(2);
                    n += 1.0;
                }
            }
            total += var / n;
        }
        total / map.n_segments() as f64
    };
    assert!(avg_var(1000.0) <= avg_var(0.01) + 1e-9);
}

#[test]
fn segmentation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f64> = (0..48 * 48 * 3).map(|_| rng.gen_range(-0.9..0.9)).collect();
    let field = HiddenField::new(48, 48, 3, data).unwrap();
    let params = SlicParams { k: 12, ..SlicParams::default() };
    let a = slic_segment(&field, &params).unwrap();
    let b = slic_segment(&field, &params).unwrap();
    assert_eq!(a, b);
}

// --- connectivity ---

#[test]
fn enforce_connectivity_is_idempotent_on_clean_maps() {
    let field = constant_field(32, 32, 2, 0.0);
    let params = SlicParams { k: 4, ..SlicParams::default() };
    let map = slic_segment(&field, &params).unwrap();

    let mut labels = map.labels.clone();
    let s = (32.0f64 * 32.0 / 4.0).sqrt();
    enforce_connectivity(&field, &mut labels, params.min_segment_frac, s);
    assert_eq!(labels, map.labels);
}

#[test]
fn orphan_pixel_is_absorbed() {
    let field = constant_field(8, 8, 1, 0.5);
    let mut labels = vec![0u32; 64];
    labels[3 * 8 + 4] = 1; // lone pixel inside segment 0
    enforce_connectivity(&field, &mut labels, 0.25, 4.0);
    assert!(labels.iter().all(|&l| l == 0));
}

#[test]
fn checkerboard_collapses_to_connected_segments() {
    let w = 16;
    let h = 16;
    let mut labels: Vec<u32> = (0..w * h).map(|i| ((i % w + i / w) % 2) as u32).collect();
    let field = constant_field(w, h, 1, 0.0);
    let s = 4.0;
    let min_frac = 0.25; // threshold = 4 pixels
    enforce_connectivity(&field, &mut labels, min_frac, s);

    let n_seg = labels.iter().max().unwrap() + 1;
    let map = SuperpixelMap {
        width: w,
        height: h,
        labels: labels.clone(),
        centers: segment_centroids(&field, &labels).unwrap(),
    };
    assert_four_connected(&map);
    for seg in 0..n_seg {
        let size = labels.iter().filter(|&&l| l == seg).count();
        assert!(
            size as f64 >= min_frac * s * s || n_seg == 1,
            "segment {seg} has {size} pixels"
        );
    }
}

// --- centroids ---

#[test]
fn singleton_centroid_is_the_pixel_feature() {
    let field = HiddenField::new(2, 1, 2, vec![0.1, 0.2, 0.7, -0.3]).unwrap();
    let centers = segment_centroids(&field, &[0, 1]).unwrap();
    assert_eq!(centers[0].feature, vec![0.1, 0.2]);
    assert_eq!(centers[1].feature, vec![0.7, -0.3]);
    assert_eq!(centers[1].x, 1.0);
}

#[test]
fn two_pixel_centroid_is_the_midpoint() {
    let field = HiddenField::new(2, 1, 1, vec![0.2, 0.4]).unwrap();
    let centers = segment_centroids(&field, &[0, 0]).unwrap();
    assert!((centers[0].feature[0] - 0.3).abs() < 1e-15);
}

#[test]
fn centroids_match_brute_force_accumulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (w, h, dims) = (17, 11, 4);
    let data: Vec<f64> = (0..w * h * dims).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let field = HiddenField::new(w, h, dims, data).unwrap();

    // random labels remapped to first-occurrence order so ids are contiguous
    let raw: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..5)).collect();
    let mut remap: Vec<Option<u32>> = vec![None; 5];
    let mut next = 0u32;
    let labels: Vec<u32> = raw
        .iter()
        .map(|&r| {
            *remap[r as usize].get_or_insert_with(|| {
                let id = next;
                next += 1;
                id
            })
        })
        .collect();

    let centers = segment_centroids(&field, &labels).unwrap();
    for seg in 0..next {
        let mut fx = vec![0.0; dims];
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0.0;
        for y in 0..h {
            for x in 0..w {
                if labels[y * w + x] == seg {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                    for (acc, v) in fx.iter_mut().zip(field.at(x, y)) {
                        *acc += v;
                    }
                }
            }
        }
        let c = &centers[seg as usize];
        assert!((c.x - sx / n).abs() < 1e-12);
        assert!((c.y - sy / n).abs() < 1e-12);
        for (got, want) in c.feature.iter().zip(fx.iter().map(|v| v / n)) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(c.count as f64, n);
    }
}
