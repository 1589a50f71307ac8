use std::collections::BTreeSet;
use std::path::Path;

use docclean::data::augment::apply;
use docclean::data::*;
use docclean::{imageio, Error, Shape4, Tensor4};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn write(path: &Path, h: usize, w: usize, c: usize, f: impl Fn(usize, usize) -> f32) {
    let t = Tensor4::from_fn(Shape4::new(1, h, w, c), |_, y, x, _| f(y, x));
    imageio::save(path, &t).unwrap();
}

fn tree() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::create_dir(d.path().join("noisy")).unwrap();
    std::fs::create_dir(d.path().join("clean")).unwrap();
    d
}

fn patch(v: f32, size: usize) -> Patch {
    Patch {
        noisy: Tensor4::full(Shape4::new(1, size, size, 3), v),
        target: Tensor4::full(Shape4::new(1, size, size, 1), 1.0),
        source: 0,
        scale: 1.0,
        origin: (0, 0),
    }
}

#[test]
fn scan_orders_pairs_and_reports_problems() {
    let d = tree();
    for stem in ["b", "a"] {
        write(&d.path().join(format!("noisy/{stem}.png")), 8, 8, 3, |_, _| 0.5);
        write(&d.path().join(format!("clean/{stem}.png")), 8, 8, 1, |_, _| 1.0);
    }
    std::fs::write(d.path().join("noisy/readme.txt"), "x").unwrap();
    let ds = scan_pairs(d.path(), ColorMode::Gray).unwrap();
    let stems: Vec<_> = ds.records.iter().map(|r| r.stem.as_str()).collect();
    assert_eq!(stems, ["a", "b"]);
    assert_eq!(ds.records[0].dims, (8, 8));

    write(&d.path().join("noisy/page.png"), 200, 300, 3, |_, _| 0.5);
    write(&d.path().join("clean/page.png"), 200, 301, 1, |_, _| 1.0);
    write(&d.path().join("noisy/lonely.png"), 4, 4, 3, |_, _| 0.5);
    match scan_pairs(d.path(), ColorMode::Gray) {
        Err(Error::Dataset(errs)) => {
            assert_eq!(errs.len(), 2, "{errs:?}");
            assert!(errs.iter().any(|e| e.contains("page") && e.contains("mismatch")));
            assert!(errs.iter().any(|e| e.contains("lonely")));
        }
        other => panic!("expected dataset error, got {other:?}"),
    }

    let empty = tree();
    assert!(scan_pairs(empty.path(), ColorMode::Color).unwrap().records.is_empty());
    assert!(matches!(
        scan_pairs(&empty.path().join("nope"), ColorMode::Color),
        Err(Error::Config(_))
    ));
}

#[test]
fn extraction_from_disk_counts_patches_per_scale() {
    let d = tree();
    write(&d.path().join("noisy/p.png"), 512, 512, 3, |y, x| {
        ((y + x) % 7) as f32 / 7.0
    });
    write(&d.path().join("clean/p.png"), 512, 512, 1, |y, _| (y % 2) as f32);
    let ds = scan_pairs(d.path(), ColorMode::Binary).unwrap();
    let ps = extract_patches(&ds, 256, 192).unwrap();
    // 512*0.7 = 358 -> {0,102}; 512 -> {0,192,256}; 717 -> {0,192,384,461}
    let by_scale = |s: f64| ps.patches.iter().filter(|p| p.scale == s).count();
    assert_eq!((by_scale(0.7), by_scale(1.0), by_scale(1.4)), (4, 9, 16));
    let origins: BTreeSet<_> = ps
        .patches
        .iter()
        .filter(|p| p.scale == 1.0)
        .map(|p| p.origin.0)
        .collect();
    assert_eq!(origins.into_iter().collect::<Vec<_>>(), [0, 192, 256]);
    for p in &ps.patches {
        assert_eq!(p.noisy.shape(), Shape4::new(1, 256, 256, 3));
        assert_eq!(p.target.shape(), Shape4::new(1, 256, 256, 1));
        assert!(p.target.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
    // scale 1.0 patches are exact crops of the source
    let src = imageio::load_rgb(&ds.records[0].noisy).unwrap();
    let p = ps
        .patches
        .iter()
        .find(|p| p.scale == 1.0 && p.origin == (192, 256))
        .unwrap();
    assert_eq!(p.noisy, src.crop(192, 256, 256, 256));
}

#[test]
fn stride_outside_range_is_rejected() {
    let n = Tensor4::full(Shape4::new(1, 300, 300, 3), 0.5f32);
    let t = Tensor4::full(Shape4::new(1, 300, 300, 1), 1.0f32);
    assert!(pair_patches(&n, &t, ColorMode::Gray, 0, &[1.0], 256, 0).is_err());
    assert!(pair_patches(&n, &t, ColorMode::Gray, 0, &[1.0], 256, 257).is_err());
    assert_eq!(
        pair_patches(&n, &t, ColorMode::Gray, 0, &[1.0], 256, 128)
            .unwrap()
            .len(),
        4
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tiling_covers_every_pixel(dim in 1usize..2000, window in 1usize..300, stride_frac in 0.01f64..1.0) {
        let stride = ((window as f64 * stride_frac).ceil() as usize).max(1);
        let o = axis_origins(dim, window, stride);
        prop_assert_eq!(o[0], 0);
        prop_assert!(o.windows(2).all(|w| w[0] < w[1] && w[1] - w[0] <= stride));
        prop_assert!(*o.last().unwrap() + window >= dim);
        prop_assert!(dim < window || *o.last().unwrap() + window == dim);
    }
}

#[test]
fn augmentation_is_deterministic_and_leaves_targets_alone() {
    let spec = AugmentSpec {
        seed: 42,
        probability: 1.0,
        ..AugmentSpec::default()
    };
    spec.validate().unwrap();
    let base = Patch {
        noisy: Tensor4::from_fn(Shape4::new(1, 32, 32, 3), |_, y, x, c| {
            ((y * 3 + x * 5 + c) % 11) as f32 / 10.0
        }),
        ..patch(0.0, 32)
    };
    let batch: Vec<Patch> = (0..12).map(|_| base.clone()).collect();
    let a = augment_all(&batch, 0, &spec);
    let b = augment_all(&batch, 0, &spec);
    let serial: Vec<Patch> = batch
        .iter()
        .enumerate()
        .map(|(i, p)| augment(p, i as u64, &spec))
        .collect();
    assert_eq!(a, b);
    assert_eq!(a, serial);
    for p in &a {
        assert_eq!(p.target, base.target);
        assert!(p.noisy.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(!spec.sample(0).is_empty());
    }
    assert!(a.iter().any(|p| p.noisy != base.noisy));

    let off = AugmentSpec::disabled();
    assert!(batch.iter().enumerate().all(|(i, p)| augment(p, i as u64, &off) == *p));
    let none = AugmentSpec {
        probability: 1.0,
        brightness_contrast: false,
        jpeg: false,
        iso_noise: false,
        blur: false,
        ..AugmentSpec::default()
    };
    assert_eq!(augment(&base, 3, &none), base);
}

#[test]
fn augmentation_probability_is_respected() {
    let spec = AugmentSpec {
        seed: 7,
        ..AugmentSpec::default()
    };
    let hits = (0..4000).filter(|&i| !spec.sample(i).is_empty()).count();
    assert!((hits as f64 / 4000.0 - 0.3).abs() < 0.03, "{hits}");
}

#[test]
fn individual_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let half = patch(0.5, 16).noisy;
    let up = apply(
        &half,
        Transform::BrightnessContrast {
            brightness: 0.1,
            contrast: 0.0,
        },
        &mut rng,
    );
    assert!(up.data().iter().all(|&v| (v - 0.6).abs() < 1e-6));
    let c = apply(
        &half,
        Transform::BrightnessContrast {
            brightness: 0.0,
            contrast: 1.5,
        },
        &mut rng,
    );
    assert!(c.data().iter().all(|&v| v == 1.0));

    for kind in [BlurKind::Gaussian, BlurKind::Box, BlurKind::Motion] {
        for kernel in [3, 5, 7] {
            let b = apply(&half, Transform::Blur { kind, kernel }, &mut rng);
            assert!(b.max_abs_diff(&half) < 1e-6, "{kind:?} {kernel}");
        }
    }
    let j = apply(&half, Transform::Jpeg { quality: 40 }, &mut rng);
    assert!(j.max_abs_diff(&half) <= 2.0 / 255.0);
    let n = apply(&half, Transform::IsoNoise { sigma: 0.05 }, &mut rng);
    let mean = n.data().iter().map(|&v| v as f64).sum::<f64>() / n.data().len() as f64;
    assert!((mean - 0.5).abs() < 0.01 && n.max_abs_diff(&half) > 0.0);
}

#[test]
fn bad_augment_specs() {
    for spec in [
        AugmentSpec {
            probability: 1.5,
            ..AugmentSpec::default()
        },
        AugmentSpec {
            jpeg_quality: (90, 40),
            ..AugmentSpec::default()
        },
        AugmentSpec {
            blur_kernel: (4, 7),
            ..AugmentSpec::default()
        },
    ] {
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn split_is_a_seeded_partition() {
    let ps = PatchSet {
        patches: (0..10)
            .map(|i| Patch {
                source: i,
                ..patch(0.5, 4)
            })
            .collect(),
    };
    let (tr, va) = split(ps.clone(), DEFAULT_TRAIN_FRACTION, 5).unwrap();
    assert_eq!((tr.len(), va.len()), (8, 2));
    let ids = |s: &PatchSet| s.patches.iter().map(|p| p.source).collect::<Vec<_>>();
    let mut all = [ids(&tr), ids(&va)].concat();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    let (tr2, va2) = split(ps.clone(), 0.8, 5).unwrap();
    assert_eq!((ids(&tr), ids(&va)), (ids(&tr2), ids(&va2)));
    let (tr3, _) = split(ps.clone(), 0.8, 6).unwrap();
    assert_ne!(ids(&tr), ids(&tr3));

    let one = PatchSet {
        patches: vec![patch(0.5, 4)],
    };
    assert!(split(one, 0.8, 0).is_err());
    assert!(split(ps.clone(), 1.0, 0).is_err());
    assert!(split(ps, 0.0, 0).is_err());
}
