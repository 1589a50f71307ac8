//! Photometric augmentation applied to the noisy side of a patch pair.

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageDecoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::patches::Patch;
use crate::error::{Error, Result};
use crate::imageio::quantize;
use crate::tensor::{Shape4, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlurKind {
    Gaussian,
    Box,
    Motion,
}

/// One concrete photometric transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Transform {
    /// `y = x * (1 + contrast) + brightness`
    BrightnessContrast {
        brightness: f32,
        contrast: f32,
    },
    Jpeg {
        quality: u8,
    },
    IsoNoise {
        sigma: f32,
    },
    Blur {
        kind: BlurKind,
        kernel: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub seed: u64,
    /// Chance that a patch is augmented at all.
    pub probability: f64,
    pub brightness_contrast: bool,
    pub jpeg: bool,
    pub iso_noise: bool,
    pub blur: bool,
    pub brightness: f32,
    pub contrast: f32,
    pub jpeg_quality: (u8, u8),
    pub iso_sigma: (f32, f32),
    pub blur_kernel: (usize, usize),
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            seed: 0,
            probability: 0.3,
            brightness_contrast: true,
            jpeg: true,
            iso_noise: true,
            blur: true,
            brightness: 0.2,
            contrast: 0.2,
            jpeg_quality: (40, 95),
            iso_sigma: (0.01, 0.05),
            blur_kernel: (3, 7),
        }
    }
}

fn bad(msg: String) -> Error {
    Error::Config(format!("augmentation: {msg}"))
}

impl AugmentSpec {
    pub fn disabled() -> Self {
        AugmentSpec {
            probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(bad(format!("probability {} outside [0, 1]", self.probability)));
        }
        if !(self.brightness >= 0.0 && self.contrast >= 0.0) {
            return Err(bad("brightness/contrast ranges must be non-negative".into()));
        }
        let (q0, q1) = self.jpeg_quality;
        if q0 == 0 || q0 > q1 || q1 > 100 {
            return Err(bad(format!("jpeg quality range {q0}..{q1}")));
        }
        let (s0, s1) = self.iso_sigma;
        if !(s0 >= 0.0 && s0 <= s1) {
            return Err(bad(format!("iso sigma range {s0}..{s1}")));
        }
        let (k0, k1) = self.blur_kernel;
        if k0 == 0 || k0 > k1 || k0 % 2 == 0 || k1 % 2 == 0 {
            return Err(bad(format!("blur kernel range {k0}..{k1} must be odd and ordered")));
        }
        Ok(())
    }

    fn families(&self) -> Vec<u8> {
        [self.brightness_contrast, self.jpeg, self.iso_noise, self.blur]
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| i as u8)
            .collect()
    }

    /// Transforms drawn for patch `index`. Empty when the patch is skipped.
    pub fn sample(&self, index: u64) -> Vec<Transform> {
        let mut rng = ChaCha8Rng::seed_from_u64(patch_seed(self.seed, index));
        let families = self.families();
        if families.is_empty() || !rng.random_bool(self.probability) {
            return Vec::new();
        }
        let mut out = Vec::new();
        // at least one transform, each enabled family otherwise coin-flipped
        let forced = families[rng.random_range(0..families.len())];
        for &f in &families {
            if f != forced && !rng.random_bool(0.5) {
                continue;
            }
            out.push(match f {
                0 => Transform::BrightnessContrast {
                    brightness: rng.random_range(-self.brightness..=self.brightness),
                    contrast: rng.random_range(-self.contrast..=self.contrast),
                },
                1 => Transform::Jpeg {
                    quality: rng.random_range(self.jpeg_quality.0..=self.jpeg_quality.1),
                },
                2 => Transform::IsoNoise {
                    sigma: rng.random_range(self.iso_sigma.0..=self.iso_sigma.1),
                },
                _ => {
                    let kind = [BlurKind::Gaussian, BlurKind::Box, BlurKind::Motion][rng.random_range(0..3)];
                    let steps = (self.blur_kernel.1 - self.blur_kernel.0) / 2;
                    Transform::Blur {
                        kind,
                        kernel: self.blur_kernel.0 + 2 * rng.random_range(0..=steps),
                    }
                }
            });
        }
        out
    }
}

/// splitmix64 of the pair so neighbouring indices get unrelated streams.
pub fn patch_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn clamp01(x: Tensor4<f32>) -> Tensor4<f32> {
    x.map(|v| v.clamp(0.0, 1.0))
}

fn jpeg_roundtrip(x: &Tensor4<f32>, quality: u8) -> Tensor4<f32> {
    let s = x.shape();
    let bytes: Vec<u8> = x.data().iter().map(|&v| quantize(v)).collect();
    let color = if s.c == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode(&bytes, s.w as u32, s.h as u32 * s.n as u32, color)
        .expect("in-memory jpeg encode");
    let dec = image::codecs::jpeg::JpegDecoder::new(std::io::Cursor::new(buf)).expect("jpeg decode");
    let mut raw = vec![0u8; dec.total_bytes() as usize];
    dec.read_image(&mut raw).expect("jpeg decode");
    Tensor4::from_vec(s, raw.into_iter().map(|b| b as f32 / 255.0).collect()).expect("same shape")
}

fn kernel_2d(kind: BlurKind, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut w = vec![0f32; k * k];
    let r = (k / 2) as f32;
    match kind {
        BlurKind::Box => w.iter_mut().for_each(|v| *v = 1.0),
        BlurKind::Gaussian => {
            let sigma = 0.3 * ((k as f32 - 1.0) * 0.5 - 1.0) + 0.8;
            for y in 0..k {
                for x in 0..k {
                    let d2 = (y as f32 - r).powi(2) + (x as f32 - r).powi(2);
                    w[y * k + x] = (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        BlurKind::Motion => {
            let theta = rng.random_range(0.0..std::f32::consts::PI);
            let (dy, dx) = theta.sin_cos();
            let steps = 4 * k;
            for i in 0..=steps {
                let t = -r + 2.0 * r * i as f32 / steps as f32;
                let (y, x) = ((r + t * dy).round() as usize, (r + t * dx).round() as usize);
                w[y * k + x] = 1.0;
            }
        }
    }
    let total: f32 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn blur(x: &Tensor4<f32>, w: &[f32], k: usize) -> Tensor4<f32> {
    let s = x.shape();
    let r = (k / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    Tensor4::from_fn(s, |n, y, xx, c| {
        let mut acc = 0f32;
        for ky in 0..k {
            let sy = clampi(y as isize + ky as isize - r, s.h);
            for kx in 0..k {
                let sx = clampi(xx as isize + kx as isize - r, s.w);
                acc += w[ky * k + kx] * x.at(n, sy, sx, c);
            }
        }
        acc
    })
}

/// Applies `t` to an image in `[0, 1]`; the result is clamped to `[0, 1]`.
pub fn apply(x: &Tensor4<f32>, t: Transform, rng: &mut ChaCha8Rng) -> Tensor4<f32> {
    match t {
        Transform::BrightnessContrast { brightness, contrast } => clamp01(x.map(|v| v * (1.0 + contrast) + brightness)),
        Transform::Jpeg { quality } => jpeg_roundtrip(&clamp01(x.clone()), quality),
        Transform::IsoNoise { sigma } => {
            let normal = Normal::new(0.0f32, sigma).expect("finite sigma");
            let s: Shape4 = x.shape();
            let noise: Vec<f32> = (0..s.len()).map(|_| normal.sample(rng)).collect();
            clamp01(Tensor4::from_fn(s, |n, y, xx, c| {
                x.at(n, y, xx, c) + noise[x.index(n, y, xx, c)]
            }))
        }
        Transform::Blur { kind, kernel } => {
            let w = kernel_2d(kind, kernel, rng);
            clamp01(blur(x, &w, kernel))
        }
    }
}

/// Augments patch `index` in place of a copy; the target is left untouched.
pub fn augment(p: &Patch, index: u64, spec: &AugmentSpec) -> Patch {
    let transforms = spec.sample(index);
    if transforms.is_empty() {
        return p.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(patch_seed(spec.seed ^ 0xA5A5_A5A5, index));
    let mut noisy = p.noisy.clone();
    for t in transforms {
        noisy = apply(&noisy, t, &mut rng);
    }
    Patch { noisy, ..p.clone() }
}

/// Augments a batch; `first_index` is the global index of `patches[0]`.
pub fn augment_all(patches: &[Patch], first_index: u64, spec: &AugmentSpec) -> Vec<Patch> {
    patches
        .par_iter()
        .enumerate()
        .map(|(i, p)| augment(p, first_index + i as u64, spec))
        .collect()
}
