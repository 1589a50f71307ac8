//! Multi-scale overlapping patch extraction.

use crate::data::dataset::{ColorMode, PairedDataset};
use crate::data::resize::resize_bilinear;
use crate::error::{Error, Result};
use crate::imageio;
use crate::perceptual::luma;
use crate::tensor::{Shape4, Tensor4};

pub const PATCH_SIZE: usize = 256;
pub const TRAINING_SCALES: [f64; 3] = [0.7, 1.0, 1.4];
pub const DEFAULT_TRAIN_STRIDE: usize = 192;

/// Origins `0, s, 2s, ...` along one axis with the last clamped so the
/// window ends flush with `dim`. A dimension no larger than the window
/// has the single origin 0.
pub fn axis_origins(dim: usize, window: usize, stride: usize) -> Vec<usize> {
    assert!(stride >= 1, "stride must be positive");
    if dim <= window {
        return vec![0];
    }
    let last = dim - window;
    let mut out: Vec<usize> = (0..last).step_by(stride).collect();
    out.push(last);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// `1 x P x P x 3`
    pub noisy: Tensor4<f32>,
    /// `1 x P x P x out_channels`
    pub target: Tensor4<f32>,
    pub source: usize,
    pub scale: f64,
    /// (y, x) in the rescaled source image.
    pub origin: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

fn pad_to(x: &Tensor4<f32>, h: usize, w: usize) -> Tensor4<f32> {
    let s = x.shape();
    Tensor4::from_fn(Shape4::new(s.n, h, w, s.c), |n, y, xx, c| {
        if y < s.h && xx < s.w {
            x.at(n, y, xx, c)
        } else {
            0.0
        }
    })
}

/// Target image in the layout `mode` trains on.
pub fn prepare_target(clean_rgb: &Tensor4<f32>, mode: ColorMode) -> Result<Tensor4<f32>> {
    match mode {
        ColorMode::Color => Ok(clean_rgb.clone()),
        ColorMode::Gray | ColorMode::Binary => luma(clean_rgb),
    }
}

/// Patches of one noisy/target pair at the training scales.
///
/// Both images are bilinearly rescaled, zero-padded up to `patch` when
/// smaller, and tiled with `stride`. Binary targets are re-thresholded at
/// 0.5 after scaling.
pub fn pair_patches(
    noisy: &Tensor4<f32>,
    target: &Tensor4<f32>,
    mode: ColorMode,
    source: usize,
    scales: &[f64],
    patch: usize,
    stride: usize,
) -> Result<Vec<Patch>> {
    if !(1..=patch).contains(&stride) {
        return Err(Error::Config(format!("stride must be in [1, {patch}], got {stride}")));
    }
    let (ns, ts) = (noisy.shape(), target.shape());
    if (ns.h, ns.w) != (ts.h, ts.w) {
        return Err(Error::Shape(format!("noisy {ns} vs target {ts}")));
    }
    let mut out = Vec::new();
    for &scale in scales {
        let h = ((ns.h as f64 * scale).round() as usize).max(1);
        let w = ((ns.w as f64 * scale).round() as usize).max(1);
        let mut n = resize_bilinear(noisy, h, w);
        let mut t = resize_bilinear(target, h, w);
        if mode == ColorMode::Binary {
            t = t.map(|v| if v < 0.5 { 0.0 } else { 1.0 });
        }
        let (ph, pw) = (h.max(patch), w.max(patch));
        if (ph, pw) != (h, w) {
            n = pad_to(&n, ph, pw);
            t = pad_to(&t, ph, pw);
        }
        for &y in &axis_origins(ph, patch, stride) {
            for &x in &axis_origins(pw, patch, stride) {
                out.push(Patch {
                    noisy: n.crop(y, x, patch, patch),
                    target: t.crop(y, x, patch, patch),
                    source,
                    scale,
                    origin: (y, x),
                });
            }
        }
    }
    Ok(out)
}

/// Loads every pair of `ds` and cuts it into training patches.
pub fn extract_patches(ds: &PairedDataset, patch: usize, stride: usize) -> Result<PatchSet> {
    let mut patches = Vec::new();
    for (i, rec) in ds.records.iter().enumerate() {
        let noisy = imageio::load_rgb(&rec.noisy)?;
        let target = prepare_target(&imageio::load_rgb(&rec.clean)?, ds.color_mode)?;
        patches.extend(pair_patches(
            &noisy,
            &target,
            ds.color_mode,
            i,
            &TRAINING_SCALES,
            patch,
            stride,
        )?);
    }
    Ok(PatchSet { patches })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_enumeration() {
        assert_eq!(axis_origins(256, 256, 128), vec![0]);
        assert_eq!(axis_origins(512, 256, 192), vec![0, 192, 256]);
        assert_eq!(axis_origins(400, 256, 192), vec![0, 144]);
        assert_eq!(axis_origins(100, 256, 17), vec![0]);
        assert_eq!(axis_origins(2560, 256, 256).len(), 10);
    }

    #[test]
    fn small_image_gives_one_padded_patch() {
        let n = Tensor4::full(Shape4::new(1, 100, 100, 3), 0.5f32);
        let t = Tensor4::full(Shape4::new(1, 100, 100, 1), 1.0f32);
        let p = pair_patches(&n, &t, ColorMode::Gray, 0, &[1.0], 256, 128).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].noisy.shape(), Shape4::new(1, 256, 256, 3));
        assert_eq!(p[0].noisy.at(0, 99, 99, 0), 0.5);
        assert_eq!(p[0].noisy.at(0, 100, 0, 0), 0.0);
        assert_eq!(p[0].target.at(0, 0, 150, 0), 0.0);
    }
}
