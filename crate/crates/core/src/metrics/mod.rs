//! Binarization and restoration quality metrics.
//!
//! Binary images use 0 for foreground ink and 1 for background.

pub mod report;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

pub use report::{evaluate, evaluate_pairs, MetricReport, MetricRow, PsnrPeak, Task};

pub const DRD_WINDOW: usize = 5;
pub const NUBN_BLOCK: usize = 8;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "prediction {} vs ground truth {}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Checks a `1 x H x W x 1` two-valued image and returns `(h, w)`.
fn binary_plane(x: &Tensor4<f32>) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::Shape(format!("expected a 1xHxWx1 image, got {s}")));
    }
    if let Some(&v) = x.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinary(v as f64));
    }
    Ok((s.h, s.w))
}

/// F-measure in percent over foreground (0) pixels.
pub fn fmeasure(pred: &Tensor4<f32>, gt: &Tensor4<f32>) -> Result<f64> {
    same_shape(pred, gt)?;
    binary_plane(pred)?;
    binary_plane(gt)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p == 0.0, g == 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let (pred_fg, gt_fg) = (tp + fp, tp + fn_);
    Ok(match (pred_fg, gt_fg) {
        (0, 0) => 100.0,
        (0, _) | (_, 0) => 0.0,
        _ => 100.0 * 2.0 * tp as f64 / (pred_fg + gt_fg) as f64,
    })
}

/// `10 log10(peak^2 / MSE)` over all values; infinite for identical inputs.
pub fn psnr<T: Scalar>(pred: &Tensor4<T>, gt: &Tensor4<T>, peak: f64) -> Result<f64> {
    same_shape(pred, gt)?;
    let mse = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        / pred.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}

/// Normalized 5x5 reciprocal-distance weights, row-major, centre 0.
pub fn drd_weights() -> [f64; DRD_WINDOW * DRD_WINDOW] {
    let r = (DRD_WINDOW / 2) as i32;
    let mut w = [0.0; DRD_WINDOW * DRD_WINDOW];
    for i in -r..=r {
        for j in -r..=r {
            if (i, j) != (0, 0) {
                w[((i + r) * DRD_WINDOW as i32 + j + r) as usize] = 1.0 / ((i * i + j * j) as f64).sqrt();
            }
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// 8x8 ground-truth blocks, partial border blocks included, holding both values.
pub fn nubn(gt: &Tensor4<f32>) -> usize {
    let s = gt.shape();
    let mut count = 0;
    for by in (0..s.h).step_by(NUBN_BLOCK) {
        for bx in (0..s.w).step_by(NUBN_BLOCK) {
            let mut seen = [false; 2];
            for y in by..(by + NUBN_BLOCK).min(s.h) {
                for x in bx..(bx + NUBN_BLOCK).min(s.w) {
                    seen[(gt.at(0, y, x, 0) != 0.0) as usize] = true;
                }
            }
            count += (seen[0] && seen[1]) as usize;
        }
    }
    count
}

/// Distance reciprocal distortion; neighbours outside the image count as
/// background.
pub fn drd(pred: &Tensor4<f32>, gt: &Tensor4<f32>) -> Result<f64> {
    same_shape(pred, gt)?;
    let (h, w) = binary_plane(pred)?;
    binary_plane(gt)?;
    let weights = drd_weights();
    let r = (DRD_WINDOW / 2) as isize;
    let mut total = 0.0;
    let mut flips = 0usize;
    for y in 0..h {
        for x in 0..w {
            let p = pred.at(0, y, x, 0);
            if p == gt.at(0, y, x, 0) {
                continue;
            }
            flips += 1;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    let g = if (0..h as isize).contains(&yy) && (0..w as isize).contains(&xx) {
                        gt.at(0, yy as usize, xx as usize, 0)
                    } else {
                        1.0
                    };
                    total += weights[((dy + r) * DRD_WINDOW as isize + dx + r) as usize] * (g - p).abs() as f64;
                }
            }
        }
    }
    match (nubn(gt), flips) {
        (_, 0) => Ok(0.0),
        (0, _) => Err(Error::DegenerateGroundTruth),
        (n, _) => Ok(total / n as f64),
    }
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect()
}

/// Mean local SSIM of single-channel images with dynamic range `peak`.
///
/// The Gaussian window is cut at the image border and renormalized, and
/// every pixel contributes one local value.
pub fn ssim<T: Scalar>(pred: &Tensor4<T>, gt: &Tensor4<T>, peak: f64) -> Result<f64> {
    same_shape(pred, gt)?;
    let s = pred.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::Shape(format!("SSIM takes a 1xHxWx1 image, got {s}")));
    }
    let (h, w) = (s.h, s.w);
    let g = gaussian_window();
    let r = SSIM_WINDOW / 2;
    let a: Vec<f64> = pred.data().iter().map(|v| v.as_f64()).collect();
    let b: Vec<f64> = gt.data().iter().map(|v| v.as_f64()).collect();
    // separable filtering of the five moment planes with border renormalization
    let planes: [Vec<f64>; 5] = [
        a.clone(),
        b.clone(),
        a.iter().map(|v| v * v).collect(),
        b.iter().map(|v| v * v).collect(),
        a.iter().zip(&b).map(|(x, y)| x * y).collect(),
    ];
    let filter = |src: &[f64]| -> Vec<f64> {
        let mut tmp = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
                let (mut acc, mut norm) = (0.0, 0.0);
                for xx in lo..=hi {
                    let k = g[xx + r - x];
                    acc += k * src[y * w + xx];
                    norm += k;
                }
                tmp[y * w + x] = acc / norm;
            }
        }
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
            for x in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for yy in lo..=hi {
                    let k = g[yy + r - y];
                    acc += k * tmp[yy * w + x];
                    norm += k;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    let [mu_a, mu_b, aa, bb, ab] = planes.map(|p| filter(&p));
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let total: f64 = (0..h * w)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / (h * w) as f64)
}
