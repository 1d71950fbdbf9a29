use super::*;
use crate::data::synth::{canonical, synth_scene, ClassModel, SceneModels};
use crate::superpixels::{segment_centroids, Center};
use std::collections::BTreeMap;

fn scene_models(bands: &[&str], sigmas: Vec<(&str, Vec<[f64; 9]>)>) -> SceneModels {
    // sigmas: per class (name, one sigma per band)
    SceneModels {
        bands: bands.iter().map(|b| b.to_string()).collect(),
        looks: 9,
        classes: sigmas
            .into_iter()
            .map(|(name, per_band)| ClassModel {
                name: name.into(),
                sigma: bands
                    .iter()
                    .zip(per_band)
                    .map(|(b, s)| (b.to_string(), s))
                    .collect::<BTreeMap<_, _>>(),
            })
            .collect(),
    }
}

fn two_class_scene(size: usize, seed: u64) -> (crate::data::MultiBandImage, LabelMap) {
    let models = scene_models(
        &["L"],
        vec![
            ("surface", vec![canonical::surface(1.0)]),
            ("double", vec![canonical::double(1.0)]),
        ],
    );
    let layout = LabelMap::block_layout(size, size, models.class_names()).unwrap();
    synth_scene(&models, &layout, 9, seed).unwrap()
}

fn quick_config(epochs: usize, seed: u64) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.optim.epochs = epochs;
    config.seed = seed;
    config
}

// --- robust features ---

#[test]
fn single_pixel_robust_feature_doubles_the_hidden_vector() {
    let hidden = HiddenField::new(1, 1, 3, vec![0.2, -0.4, 0.6]).unwrap();
    let sp = SuperpixelMap {
        width: 1,
        height: 1,
        labels: vec![0],
        centers: segment_centroids(&hidden, &[0]).unwrap(),
    };
    let robust = build_robust_features(&hidden, &sp).unwrap();
    assert_eq!(robust.at(0, 0), &[0.2, -0.4, 0.6, 0.2, -0.4, 0.6]);
}

#[test]
fn constant_field_gives_identical_robust_features() {
    let hidden = HiddenField::new(4, 4, 2, vec![0.1; 32]).unwrap();
    let labels = vec![0u32; 16];
    let sp = SuperpixelMap {
        width: 4,
        height: 4,
        labels: labels.clone(),
        centers: segment_centroids(&hidden, &labels).unwrap(),
    };
    let robust = build_robust_features(&hidden, &sp).unwrap();
    let first = robust.at(0, 0).to_vec();
    for y in 0..4 {
        for x in 0..4 {
            assert_eq!(robust.at(x, y), &first[..]);
        }
    }
}

#[test]
fn robust_second_half_matches_brute_force_segment_mean() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let (w, h, dims) = (6, 5, 3);
    let data: Vec<f64> = (0..w * h * dims).map(|_| rng.gen_range(-0.9..0.9)).collect();
    let hidden = HiddenField::new(w, h, dims, data).unwrap();
    // two vertical segments
    let labels: Vec<u32> = (0..w * h).map(|i| if i % w < 3 { 0 } else { 1 }).collect();
    let sp = SuperpixelMap {
        width: w,
        height: h,
        labels: labels.clone(),
        centers: segment_centroids(&hidden, &labels).unwrap(),
    };
    let robust = build_robust_features(&hidden, &sp).unwrap();
    for seg in 0..2u32 {
        let mut mean = vec![0.0; dims];
        let mut n = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            if l == seg {
                n += 1.0;
                for (m, v) in mean.iter_mut().zip(hidden.at_index(i)) {
                    *m += v;
                }
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        for (i, &l) in labels.iter().enumerate() {
            if l == seg {
                let r = robust.at_index(i);
                assert_eq!(&r[..dims], hidden.at_index(i));
                for (got, want) in r[dims..].iter().zip(&mean) {
                    assert!((got - want).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn robust_features_reject_mismatched_dims() {
    let hidden = HiddenField::new(2, 2, 2, vec![0.0; 8]).unwrap();
    let sp = SuperpixelMap {
        width: 3,
        height: 2,
        labels: vec![0; 6],
        centers: vec![Center { x: 0.0, y: 0.0, feature: vec![0.0; 2], count: 6 }],
    };
    assert!(matches!(
        build_robust_features(&hidden, &sp),
        Err(Error::DimensionMismatch(_))
    ));
}

// --- fit / predict ---

#[test]
fn fit_is_deterministic_and_separates_two_classes() {
    let (image, labels) = two_class_scene(32, 77);
    let config = quick_config(60, 5);
    let (model_a, report) = fit(&image, &labels, &config).unwrap();
    let (model_b, _) = fit(&image, &labels, &config).unwrap();
    assert_eq!(model_a, model_b);
    assert!(!report.ae1_history.records.is_empty());
    assert!(!report.ae2_history.records.is_empty());
    assert!(!report.softmax_history.records.is_empty());

    // training accuracy on the fully labeled scene
    let pred = predict(&model_a, &image).unwrap();
    let correct = labels
        .ids()
        .iter()
        .zip(&pred.ids)
        .filter(|(&truth, &p)| truth > 0 && truth == p)
        .count();
    let labeled = labels.ids().iter().filter(|&&t| t > 0).count();
    let acc = correct as f64 / labeled as f64;
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn fit_rejects_single_class() {
    let (image, _) = two_class_scene(16, 1);
    let one_class = LabelMap::new(16, 16, vec![1; 256], vec!["only".into()]).unwrap();
    assert!(matches!(
        fit(&image, &one_class, &quick_config(5, 0)),
        Err(Error::TooFewClasses(1))
    ));
}

#[test]
fn predict_probabilities_sum_to_one() {
    let (image, labels) = two_class_scene(24, 9);
    let (model, _) = fit(&image, &labels, &quick_config(30, 2)).unwrap();
    let pred = predict(&model, &image).unwrap();
    for y in 0..24 {
        for x in 0..24 {
            let s: f64 = pred.probs_at(x, y).iter().sum();
            assert!((s - 1.0).abs() <= 1e-9, "probability sum {s}");
            assert!(pred.id_at(x, y) >= 1 && pred.id_at(x, y) <= 2);
        }
    }
}

#[test]
fn identical_pixels_in_same_superpixel_predict_identically() {
    // constant image: every pixel has identical features, so within any one
    // superpixel the robust features (and thus predictions) are bit-equal
    let (image, labels) = two_class_scene(24, 4);
    let mut constant = image.clone();
    let first = *constant.get(0, 0, 0);
    for p in constant.band_data_mut(0) {
        *p = first;
    }
    let (model, _) = fit(&image, &labels, &quick_config(20, 3)).unwrap();
    let (pred, artifacts) = predict_with_artifacts(&model, &constant).unwrap();
    let sp = &artifacts.superpixels;
    for seg in 0..sp.n_segments() as u32 {
        let mut reference: Option<Vec<f64>> = None;
        for y in 0..24 {
            for x in 0..24 {
                if sp.label(x, y) == seg {
                    let p = pred.probs_at(x, y);
                    match &reference {
                        None => reference = Some(p.to_vec()),
                        Some(r) => assert_eq!(p, &r[..], "segment {seg} pixel ({x},{y})"),
                    }
                }
            }
        }
    }
}

#[test]
fn predict_rejects_band_mismatch() {
    let (image, labels) = two_class_scene(16, 6);
    let (model, _) = fit(&image, &labels, &quick_config(5, 0)).unwrap();
    let models = scene_models(
        &["X"],
        vec![
            ("surface", vec![canonical::surface(1.0)]),
            ("double", vec![canonical::double(1.0)]),
        ],
    );
    let layout = LabelMap::block_layout(16, 16, models.class_names()).unwrap();
    let (other, _) = synth_scene(&models, &layout, 9, 0).unwrap();
    assert!(matches!(
        predict(&model, &other),
        Err(Error::BandMismatch { .. })
    ));
}

#[test]
fn band_subset_model_has_matching_input_dim() {
    // fitting on any band subset yields input dim 33 * |subset|
    let models = scene_models(
        &["L", "P", "C"],
        vec![
            (
                "surface",
                vec![canonical::surface(1.0), canonical::surface(1.0), canonical::surface(1.0)],
            ),
            (
                "double",
                vec![canonical::double(1.0), canonical::double(1.0), canonical::double(1.0)],
            ),
        ],
    );
    let layout = LabelMap::block_layout(16, 16, models.class_names()).unwrap();
    let (image, labels) = synth_scene(&models, &layout, 9, 11).unwrap();
    for subset in [vec!["L"], vec!["L", "C"], vec!["L", "P", "C"]] {
        let bands: Vec<String> = subset.iter().map(|s| s.to_string()).collect();
        let sub = image.select_bands(&bands).unwrap();
        let (model, _) = fit(&sub, &labels, &quick_config(5, 0)).unwrap();
        assert_eq!(model.input_dim(), 33 * subset.len());
        assert_eq!(model.u1(), 5);
        assert_eq!(model.u2(), 10);
    }
}

// --- split ---

#[test]
fn split_half_and_half() {
    let ids = vec![1u8; 10];
    let labels = LabelMap::new(10, 1, ids, vec!["a".into()]).unwrap();
    let (train, test) = split(&labels, &SplitSpec { train_fraction: 0.5, seed: 0 }).unwrap();
    assert_eq!(train.ids().iter().filter(|&&i| i == 1).count(), 5);
    assert_eq!(test.ids().iter().filter(|&&i| i == 1).count(), 5);
}

#[test]
fn split_same_seed_same_result() {
    let (_, labels) = two_class_scene(16, 3);
    let spec = SplitSpec { train_fraction: 0.3, seed: 42 };
    let (a_train, a_test) = split(&labels, &spec).unwrap();
    let (b_train, b_test) = split(&labels, &spec).unwrap();
    assert_eq!(a_train, b_train);
    assert_eq!(a_test, b_test);
    let other = split(&labels, &SplitSpec { train_fraction: 0.3, seed: 43 }).unwrap();
    assert_ne!(a_train, other.0);
}

#[test]
fn split_is_disjoint_and_covers_every_class() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    for trial in 0..20 {
        let names: Vec<String> = (1..=4).map(|i| format!("c{i}")).collect();
        let ids: Vec<u8> = (0..400).map(|_| rng.gen_range(0..5)).collect();
        let labels = LabelMap::new(20, 20, ids, names).unwrap();
        let spec = SplitSpec { train_fraction: 0.25, seed: trial };
        let (train, test) = split(&labels, &spec).unwrap();
        for i in 0..400 {
            let (t, e, o) = (train.ids()[i], test.ids()[i], labels.ids()[i]);
            assert!(t == 0 || e == 0, "pixel {i} in both splits");
            assert_eq!(t.max(e), o, "pixel {i} lost or relabeled");
        }
        for class in labels.present_classes() {
            assert!(train.ids().contains(&class), "class {class} missing from train");
            assert!(test.ids().contains(&class), "class {class} missing from test");
        }
    }
}

#[test]
fn split_rejects_tiny_class() {
    let labels =
        LabelMap::new(3, 1, vec![1, 2, 2], vec!["a".into(), "b".into()]).unwrap();
    assert!(matches!(
        split(&labels, &SplitSpec { train_fraction: 0.5, seed: 0 }),
        Err(Error::ClassTooSmall { class: 1, pixels: 1 })
    ));
}

// --- persistence ---

#[test]
fn model_round_trip_is_byte_exact() {
    let (image, labels) = two_class_scene(16, 8);
    let (model, _) = fit(&image, &labels, &quick_config(10, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.plsrm");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);

    let path2 = dir.path().join("model2.plsrm");
    save_model(&loaded, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn corrupted_payload_is_malformed_model() {
    let (image, labels) = two_class_scene(16, 8);
    let (model, _) = fit(&image, &labels, &quick_config(5, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.plsrm");
    save_model(&model, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_model(&path), Err(Error::MalformedModel(_))));
}

#[test]
fn unsupported_version_is_reported() {
    let (image, labels) = two_class_scene(16, 8);
    let (model, _) = fit(&image, &labels, &quick_config(5, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.plsrm");
    save_model(&model, &path).unwrap();
    let text = std::fs::read(&path).unwrap();
    let patched = String::from_utf8_lossy(&text).replace("\"version\":1", "\"version\":9");
    std::fs::write(&path, patched.as_bytes()).unwrap();
    assert!(matches!(load_model(&path), Err(Error::VersionMismatch(9))));
}

#[test]
fn loaded_model_predicts_bit_identically() {
    let (image, labels) = two_class_scene(20, 13);
    let (model, _) = fit(&image, &labels, &quick_config(15, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.plsrm");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let a = predict(&model, &image).unwrap();
    let b = predict(&loaded, &image).unwrap();
    assert_eq!(a, b);
}

