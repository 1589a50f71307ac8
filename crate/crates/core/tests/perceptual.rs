mod common;

use common::*;
use docclean::container::Container;
use docclean::nn::ConvParams;
use docclean::perceptual::{
    gram, l1_pixel_loss, rgb_to_ycbcr, CompositeLoss, FeatureExtractor, FeatureTaps, LossWeights, PixelMode, Stage,
};
use docclean::{CheckpointError, Error, Shape4, Tensor4};
use proptest::prelude::*;
use rand::Rng;

fn oracle_stages(fx: &FeatureExtractor<f64>) -> Vec<OracleStage> {
    fx.stages()
        .iter()
        .map(|s| match s {
            Stage::Conv { params, .. } => Some((
                params.kernel.data.clone(),
                params.bias.as_ref().unwrap().data.clone(),
                params.c_out(),
            )),
            Stage::MaxPool => None,
        })
        .collect()
}

fn toy_vgg(seed: u64) -> FeatureExtractor<f64> {
    FeatureExtractor::vgg19_random([4, 5, 6, 6, 7], seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn l1_matches_loop_oracle(h in 1usize..9, w in 1usize..9, gray: bool, seed: u64) {
        let mut r = rng(seed);
        let c = if gray { 1 } else { 3 };
        let a = random_tensor(Shape4::new(2, h, w, c), 0.0, 1.0, &mut r);
        let b = random_tensor(Shape4::new(2, h, w, c), 0.0, 1.0, &mut r);
        let (mode, want) = if gray {
            (PixelMode::Gray, l1_oracle(&a, &b))
        } else {
            (PixelMode::Color, l1_oracle(&ycbcr_oracle(&a), &ycbcr_oracle(&b)))
        };
        let got = l1_pixel_loss(&a, &b, mode).unwrap();
        prop_assert!(rel_err(got, want) <= 1e-6);
    }

    #[test]
    fn gram_matches_oracle_and_is_symmetric_psd(h in 1usize..9, w in 1usize..9, c in 1usize..9, seed: u64) {
        let mut r = rng(seed);
        let f = random_tensor(Shape4::new(1, h, w, c), -2.0, 2.0, &mut r);
        let g = gram(&f, 0);
        let want = gram_oracle(&f, 0);
        for (a, b) in g.data.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3));
        }
        for i in 0..c {
            for j in 0..c {
                prop_assert_eq!(g.at(i, j), g.at(j, i));
            }
        }
        for _ in 0..4 {
            let v: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
            let q: f64 = (0..c).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| v[i] * g.at(i, j) * v[j]).sum();
            prop_assert!(q >= -1e-12);
        }
        let g3 = gram(&f.map(|v| v * 1.5), 0);
        for (a, b) in g.data.iter().zip(&g3.data) {
            prop_assert!((a * 2.25 - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn feature_and_style_match_loop_oracle(h in 4usize..9, w in 4usize..9, gray: bool, seed: u64) {
        let fx = toy_vgg(seed);
        let taps = FeatureTaps {
            content: vec!["conv1-2".into()],
            style: vec!["conv1-1".into(), "conv2-1".into()],
        };
        let loss = CompositeLoss::new(LossWeights::default(), taps, Some(fx.clone())).unwrap();
        let mut r = rng(seed ^ 7);
        let c = if gray { 1 } else { 3 };
        let a = random_tensor(Shape4::new(2, h, w, c), 0.0, 1.0, &mut r);
        let b = random_tensor(Shape4::new(2, h, w, c), 0.0, 1.0, &mut r);

        let stages = oracle_stages(&fx);
        let (fa, fb) = (extractor_oracle(&stages[..4], &a, true), extractor_oracle(&stages[..4], &b, true));
        // Stage indices: 0 conv1-1, 1 conv1-2, 2 pool, 3 conv2-1.
        let want_feature = l1_oracle(&fa[1], &fb[1]);
        let mut want_style = 0.0;
        for j in [0, 3] {
            for n in 0..2 {
                let (ga, gb) = (gram_oracle(&fa[j], n), gram_oracle(&fb[j], n));
                want_style += ga.iter().zip(&gb).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
            }
        }
        let terms = loss.evaluate(&a, &b).unwrap();
        prop_assert!(rel_err(loss.feature_loss(&a, &b).unwrap(), want_feature) <= 1e-6);
        prop_assert!(rel_err(terms.feature, want_feature) <= 1e-6);
        prop_assert!(rel_err(terms.style, want_style) <= 1e-6);
        prop_assert!(rel_err(loss.style_loss(&b, &a).unwrap(), want_style) <= 1e-6);
    }
}

#[test]
fn l1_basic_cases() {
    let a = Tensor4::full(Shape4::new(1, 3, 3, 1), 0.5f64);
    let b = Tensor4::full(Shape4::new(1, 3, 3, 1), 0.75f64);
    assert_eq!(l1_pixel_loss(&a, &a, PixelMode::Gray).unwrap(), 0.0);
    assert_eq!(l1_pixel_loss(&a, &b, PixelMode::Gray).unwrap(), 0.25);
    let c = Tensor4::full(Shape4::new(1, 3, 4, 1), 0.5f64);
    assert!(matches!(l1_pixel_loss(&a, &c, PixelMode::Gray), Err(Error::Shape(_))));
    let rgb = rgb_to_ycbcr(&Tensor4::full(Shape4::new(1, 1, 1, 3), 1.0f64)).unwrap();
    for (got, want) in rgb.data().iter().zip([1.0, 0.5, 0.5]) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn style_loss_hand_computed() {
    // One identity conv, no normalization: features equal the image.
    let fx = FeatureExtractor::new(
        vec![Stage::Conv {
            name: "conv1-1".into(),
            params: ConvParams {
                bias: Some(docclean::ParamTensor::zeros(vec![3])),
                ..ConvParams::identity(3)
            },
        }],
        false,
    )
    .unwrap();
    let taps = FeatureTaps {
        content: vec!["conv1-1".into()],
        style: vec!["conv1-1".into()],
    };
    let loss = CompositeLoss::new(LossWeights::default(), taps, Some(fx)).unwrap();
    // Two pixels (H=2, W=1). Prediction: red, green. Truth: red, red.
    let pred = Tensor4::from_vec(Shape4::new(1, 2, 1, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
    let truth = Tensor4::from_vec(Shape4::new(1, 2, 1, 3), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    // G_pred = diag(1,1,0)/6, G_truth = diag(2,0,0)/6 -> |diff| sums to 2/6.
    let style = loss.style_loss(&pred, &truth).unwrap();
    assert!((style - 1.0 / 3.0).abs() < 1e-15, "{style}");
    // Feature term: mean |pred - truth| over 6 values = 2/6.
    assert!((loss.feature_loss(&pred, &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(loss.style_loss(&truth, &truth).unwrap(), 0.0);
}

#[test]
fn composite_weighting() {
    let fx = toy_vgg(3);
    let mut r = rng(4);
    let a = random_tensor(Shape4::new(1, 16, 16, 3), 0.0, 1.0, &mut r);
    let b = random_tensor(Shape4::new(1, 16, 16, 3), 0.0, 1.0, &mut r);
    let base = CompositeLoss::new(LossWeights::default(), FeatureTaps::default(), Some(fx.clone())).unwrap();
    let t = base.evaluate(&a, &b).unwrap();
    assert!(t.pixel > 0.0 && t.feature > 0.0 && t.style > 0.0);
    assert_eq!(
        LossWeights::default(),
        LossWeights {
            pixel: 10.0,
            feature: 0.1,
            style: 10.0
        }
    );
    assert!((t.total - (10.0 * t.pixel + 0.1 * t.feature + 10.0 * t.style)).abs() < 1e-12);

    let doubled = CompositeLoss::new(
        LossWeights {
            pixel: 20.0,
            feature: 0.2,
            style: 20.0,
        },
        FeatureTaps::default(),
        Some(fx.clone()),
    )
    .unwrap();
    assert!((doubled.evaluate(&a, &b).unwrap().total - 2.0 * t.total).abs() < 1e-12 * t.total);

    let pixel = CompositeLoss::new(
        LossWeights {
            pixel: 10.0,
            feature: 0.0,
            style: 0.0,
        },
        FeatureTaps::default(),
        None,
    )
    .unwrap();
    assert_eq!(pixel.evaluate(&a, &b).unwrap().total, 10.0 * t.pixel);

    let same = base.evaluate(&a, &a).unwrap();
    assert_eq!((same.pixel, same.feature, same.style, same.total), (0.0, 0.0, 0.0, 0.0));
    assert!((base.evaluate(&b, &a).unwrap().style - t.style).abs() < 1e-15);
}

#[test]
fn missing_extractor_is_reported() {
    let loss = CompositeLoss::<f64> {
        weights: LossWeights::default(),
        taps: FeatureTaps::default(),
        extractor: None,
    };
    let a = Tensor4::full(Shape4::new(1, 4, 4, 3), 0.2);
    assert!(matches!(loss.evaluate(&a, &a), Err(Error::Config(_))));
}

fn check_composite_gradient(c: usize, seed: u64) {
    let fx = toy_vgg(seed);
    let loss = CompositeLoss::new(LossWeights::default(), FeatureTaps::default(), Some(fx)).unwrap();
    let mut r = rng(seed + 1);
    let shape = Shape4::new(2, 16, 16, c);
    let pred = random_tensor(shape, 0.05, 0.95, &mut r);
    let truth = random_tensor(shape, 0.0, 1.0, &mut r);
    let (_, grad) = loss.evaluate_with_grad(&pred, &truth).unwrap();
    let mut xs = pred.data().to_vec();
    for _ in 0..40 {
        let i = r.random_range(0..xs.len());
        let num = central_diff(&mut xs, i, 1e-4, |v| {
            loss.evaluate(&Tensor4::from_vec(shape, v.to_vec()).unwrap(), &truth)
                .unwrap()
                .total
        });
        assert!(
            rel_err(grad.data()[i], num) <= 1e-3,
            "c={c} [{i}]: {} vs {num}",
            grad.data()[i]
        );
    }
}

#[test]
fn composite_gradient_matches_finite_differences_color() {
    check_composite_gradient(3, 51);
}

#[test]
fn composite_gradient_matches_finite_differences_gray() {
    check_composite_gradient(1, 61);
}

#[test]
fn extractor_container_round_trip_and_missing_tensor() {
    let fx = FeatureExtractor::<f32>::vgg19_random([2, 2, 2, 2, 2], 9);
    let c = fx.to_container();
    let back =
        FeatureExtractor::<f32>::from_container(&Container::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
    assert_eq!(back, fx);
    for tap in ["conv1-1", "conv1-2", "conv2-1", "conv3-1", "conv4-1", "conv5-1"] {
        back.tap_index(tap).unwrap();
    }
    let probe = Tensor4::full(Shape4::new(1, 16, 16, 3), 0.3f32);
    let last = back.stages().len() - 1;
    let a = back.forward(&probe, last).unwrap();
    let b = back.forward(&probe, last).unwrap();
    assert_eq!(a.stage_output(last), b.stage_output(last));

    let mut partial = c.clone();
    partial.tensors.retain(|(n, _)| !n.starts_with("vgg19/conv5-1/"));
    match FeatureExtractor::<f32>::from_container(&partial) {
        Err(Error::Checkpoint(CheckpointError::MissingTensors(names))) => {
            assert_eq!(names, ["vgg19/conv5-1/kernel", "vgg19/conv5-1/bias"]);
        }
        other => panic!("unexpected {other:?}"),
    }
}
