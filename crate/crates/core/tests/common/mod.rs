//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use docclean::{Shape4, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Shape4, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor4<f64> {
    Tensor4::from_fn(shape, |_, _, _, _| rng.random_range(lo..hi))
}

/// Zero-padded 3x3 convolution written as six nested loops.
pub fn conv_oracle(x: &Tensor4<f64>, kernel: &[f64], bias: Option<&[f64]>, c_out: usize) -> Tensor4<f64> {
    let s = x.shape();
    let mut out = Tensor4::zeros(s.with_channels(c_out));
    for n in 0..s.n {
        for y in 0..s.h {
            for xx in 0..s.w {
                for co in 0..c_out {
                    let mut acc = bias.map_or(0.0, |b| b[co]);
                    for ky in 0..3 {
                        for kx in 0..3 {
                            for ci in 0..s.c {
                                let sy = y as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                    continue;
                                }
                                let w = kernel[((ky * 3 + kx) * s.c + ci) * c_out + co];
                                acc += w * x.at(n, sy as usize, sx as usize, ci);
                            }
                        }
                    }
                    out.set(n, y, xx, co, acc);
                }
            }
        }
    }
    out
}

/// Relative error with a floor so that two near-zero values compare equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central difference of `f` w.r.t. `params[i]`.
pub fn central_diff(params: &mut [f64], i: usize, step: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = params[i];
    params[i] = orig + step;
    let plus = f(params);
    params[i] = orig - step;
    let minus = f(params);
    params[i] = orig;
    (plus - minus) / (2.0 * step)
}

/// Mean absolute difference by explicit loops.
pub fn l1_oracle(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    let s = a.shape();
    let mut acc = 0.0;
    for n in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                for c in 0..s.c {
                    acc += (a.at(n, y, x, c) - b.at(n, y, x, c)).abs();
                }
            }
        }
    }
    acc / (s.n * s.h * s.w * s.c) as f64
}

pub fn ycbcr_oracle(x: &Tensor4<f64>) -> Tensor4<f64> {
    Tensor4::from_fn(x.shape(), |n, y, xx, c| {
        let (r, g, b) = (x.at(n, y, xx, 0), x.at(n, y, xx, 1), x.at(n, y, xx, 2));
        match c {
            0 => 0.299 * r + 0.587 * g + 0.114 * b,
            1 => 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b,
            _ => 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b,
        }
    })
}

/// Gram matrix of batch item `n` by triple loop, normalized by H*W*C.
pub fn gram_oracle(f: &Tensor4<f64>, n: usize) -> Vec<f64> {
    let s = f.shape();
    let mut g = vec![0.0; s.c * s.c];
    for c1 in 0..s.c {
        for c2 in 0..s.c {
            let mut acc = 0.0;
            for y in 0..s.h {
                for x in 0..s.w {
                    acc += f.at(n, y, x, c1) * f.at(n, y, x, c2);
                }
            }
            g[c1 * s.c + c2] = acc / (s.h * s.w * s.c) as f64;
        }
    }
    g
}

/// 2x2/2 max pooling by loops.
pub fn pool_oracle(x: &Tensor4<f64>) -> Tensor4<f64> {
    let s = x.shape();
    Tensor4::from_fn(Shape4::new(s.n, s.h / 2, s.w / 2, s.c), |n, y, xx, c| {
        let mut m = f64::NEG_INFINITY;
        for dy in 0..2 {
            for dx in 0..2 {
                m = m.max(x.at(n, 2 * y + dy, 2 * xx + dx, c));
            }
        }
        m
    })
}

/// A feature-extractor description for the oracle: `Some((kernel, bias, c_out))`
/// for a conv+ReLU, `None` for a pool.
pub type OracleStage = Option<(Vec<f64>, Vec<f64>, usize)>;

/// Activations after every stage, with optional ImageNet normalization and
/// grey-to-RGB replication, computed with the loop oracles only.
pub fn extractor_oracle(stages: &[OracleStage], x: &Tensor4<f64>, normalize: bool) -> Vec<Tensor4<f64>> {
    const MEAN: [f64; 3] = [0.485, 0.456, 0.406];
    const STD: [f64; 3] = [0.229, 0.224, 0.225];
    let s = x.shape();
    let mut cur = Tensor4::from_fn(s.with_channels(3), |n, y, xx, c| {
        let v = if s.c == 1 { x.at(n, y, xx, 0) } else { x.at(n, y, xx, c) };
        if normalize {
            (v - MEAN[c]) / STD[c]
        } else {
            v
        }
    });
    let mut out = Vec::new();
    for st in stages {
        cur = match st {
            Some((k, b, co)) => conv_oracle(&cur, k, Some(b), *co).map(|v| v.max(0.0)),
            None => pool_oracle(&cur),
        };
        out.push(cur.clone());
    }
    out
}

/// Clean page with dark strokes on white and a stained, noisy copy.
/// Returns `(noisy rgb, clean gray)`.
pub fn synthetic_page(size: usize, seed: u64) -> (Tensor4<f32>, Tensor4<f32>) {
    let mut r = rng(seed);
    let mut clean = vec![1.0f32; size * size];
    for _ in 0..size / 6 {
        let (y, x) = (r.random_range(0..size), r.random_range(0..size));
        let horizontal = r.random_bool(0.5);
        let len = r.random_range(size / 8..size / 2);
        for t in 0..len {
            let (yy, xx) = if horizontal { (y, x + t) } else { (y + t, x) };
            if yy < size && xx < size {
                clean[yy * size + xx] = 0.0;
            }
        }
    }
    let (cy, cx) = (r.random_range(0.0..size as f32), r.random_range(0.0..size as f32));
    let noisy = Tensor4::from_fn(Shape4::new(1, size, size, 3), |_, y, x, c| {
        let d2 = ((y as f32 - cy).powi(2) + (x as f32 - cx).powi(2)) / (size * size) as f32;
        let stain = 0.35 * (-4.0 * d2).exp() * [1.0, 0.8, 0.5][c];
        (clean[y * size + x] * 0.85 + 0.1 - stain).clamp(0.0, 1.0)
    });
    let clean = Tensor4::from_vec(Shape4::new(1, size, size, 1), clean).unwrap();
    (noisy, clean)
}

/// Narrow random VGG-19 with its first convolution scaled by `scale`.
/// The style term grows with the square of the activation scale, so a
/// small `scale` keeps it from swamping the pixel term.
pub fn toy_extractor(scale: f32, seed: u64) -> docclean::perceptual::FeatureExtractor<f32> {
    use docclean::perceptual::{FeatureExtractor, Stage};
    let mut stages = FeatureExtractor::<f32>::vgg19_random([4, 5, 6, 6, 7], seed)
        .stages()
        .to_vec();
    if let Stage::Conv { params, .. } = &mut stages[0] {
        params.kernel.data.iter_mut().for_each(|v| *v *= scale);
        if let Some(b) = params.bias.as_mut() {
            b.data.iter_mut().for_each(|v| *v *= scale);
        }
    }
    FeatureExtractor::new(stages, true).expect("same topology")
}

pub fn plane(h: usize, w: usize, v: Vec<f32>) -> Tensor4<f32> {
    Tensor4::from_vec(Shape4::new(1, h, w, 1), v).unwrap()
}

/// Random binary image; `fg` is the chance of an ink pixel.
pub fn random_binary(h: usize, w: usize, fg: f64, r: &mut ChaCha8Rng) -> Tensor4<f32> {
    plane(
        h,
        w,
        (0..h * w).map(|_| if r.random_bool(fg) { 0.0 } else { 1.0 }).collect(),
    )
}

pub fn fmeasure_oracle(p: &Tensor4<f32>, g: &Tensor4<f32>) -> f64 {
    let s = p.shape();
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for y in 0..s.h {
        for x in 0..s.w {
            let (a, b) = (p.at(0, y, x, 0), g.at(0, y, x, 0));
            if a == 0.0 && b == 0.0 {
                tp += 1.0;
            } else if a == 0.0 {
                fp += 1.0;
            } else if b == 0.0 {
                fn_ += 1.0;
            }
        }
    }
    if tp + fp == 0.0 && tp + fn_ == 0.0 {
        return 100.0;
    }
    if tp + fp == 0.0 || tp + fn_ == 0.0 {
        return 0.0;
    }
    let (precision, recall) = (tp / (tp + fp), tp / (tp + fn_));
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

pub fn psnr_oracle(p: &Tensor4<f32>, g: &Tensor4<f32>, peak: f64) -> f64 {
    let mut se = 0.0;
    for i in 0..p.data().len() {
        se += (p.data()[i] as f64 - g.data()[i] as f64) * (p.data()[i] as f64 - g.data()[i] as f64);
    }
    let mse = se / p.data().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `None` for the degenerate case (no non-uniform block but some flips).
pub fn drd_oracle(p: &Tensor4<f32>, g: &Tensor4<f32>) -> Option<f64> {
    let s = p.shape();
    let mut wm = [[0.0f64; 5]; 5];
    let mut total_w = 0.0;
    for (i, row) in wm.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 2.0, j as f64 - 2.0);
            if di != 0.0 || dj != 0.0 {
                *v = 1.0 / (di * di + dj * dj).sqrt();
                total_w += *v;
            }
        }
    }
    let gt_at = |y: i64, x: i64| -> f64 {
        if y < 0 || x < 0 || y >= s.h as i64 || x >= s.w as i64 {
            1.0
        } else {
            g.at(0, y as usize, x as usize, 0) as f64
        }
    };
    let mut sum = 0.0;
    let mut flips = 0;
    for y in 0..s.h {
        for x in 0..s.w {
            let b = p.at(0, y, x, 0) as f64;
            if b == g.at(0, y, x, 0) as f64 {
                continue;
            }
            flips += 1;
            for i in 0..5 {
                for j in 0..5 {
                    sum += wm[i][j] / total_w * (gt_at(y as i64 + i as i64 - 2, x as i64 + j as i64 - 2) - b).abs();
                }
            }
        }
    }
    let mut nubn = 0;
    let mut by = 0;
    while by < s.h {
        let mut bx = 0;
        while bx < s.w {
            let mut vals = std::collections::BTreeSet::new();
            for y in by..(by + 8).min(s.h) {
                for x in bx..(bx + 8).min(s.w) {
                    vals.insert(g.at(0, y, x, 0).to_bits());
                }
            }
            if vals.len() == 2 {
                nubn += 1;
            }
            bx += 8;
        }
        by += 8;
    }
    match (flips, nubn) {
        (0, _) => Some(0.0),
        (_, 0) => None,
        _ => Some(sum / nubn as f64),
    }
}

/// Direct per-pixel SSIM over a border-truncated 11x11 Gaussian window.
pub fn ssim_oracle(p: &Tensor4<f32>, g: &Tensor4<f32>, peak: f64) -> f64 {
    let s = p.shape();
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let mut acc = 0.0;
    for y in 0..s.h as i64 {
        for x in 0..s.w as i64 {
            let mut taps = Vec::new();
            for dy in -5i64..=5 {
                for dx in -5i64..=5 {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy >= 0 && xx >= 0 && yy < s.h as i64 && xx < s.w as i64 {
                        let wgt = (-((dy * dy + dx * dx) as f64) / (2.0 * 1.5 * 1.5)).exp();
                        taps.push((
                            wgt,
                            p.at(0, yy as usize, xx as usize, 0) as f64,
                            g.at(0, yy as usize, xx as usize, 0) as f64,
                        ));
                    }
                }
            }
            let norm: f64 = taps.iter().map(|t| t.0).sum();
            let ma: f64 = taps.iter().map(|t| t.0 * t.1).sum::<f64>() / norm;
            let mb: f64 = taps.iter().map(|t| t.0 * t.2).sum::<f64>() / norm;
            let va: f64 = taps.iter().map(|t| t.0 * (t.1 - ma).powi(2)).sum::<f64>() / norm;
            let vb: f64 = taps.iter().map(|t| t.0 * (t.2 - mb).powi(2)).sum::<f64>() / norm;
            let cov: f64 = taps.iter().map(|t| t.0 * (t.1 - ma) * (t.2 - mb)).sum::<f64>() / norm;
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    acc / (s.h * s.w) as f64
}
