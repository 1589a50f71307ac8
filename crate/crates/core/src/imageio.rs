//! 8-bit image files <-> `[0,1]` tensors of shape `1 x H x W x C`.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

pub const EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

pub fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((h as usize, w as usize))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor4<f32> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Tensor4::from_vec(Shape4::new(1, h as usize, w as usize, 3), data).expect("buffer matches dims")
}

pub fn gray_to_tensor(img: &GrayImage) -> Tensor4<f32> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Tensor4::from_vec(Shape4::new(1, h as usize, w as usize, 1), data).expect("buffer matches dims")
}

pub fn load_rgb(path: &Path) -> Result<Tensor4<f32>> {
    Ok(rgb_to_tensor(&open(path)?.to_rgb8()))
}

/// Loads as single-channel luma.
pub fn load_gray(path: &Path) -> Result<Tensor4<f32>> {
    Ok(gray_to_tensor(&open(path)?.to_luma8()))
}

/// `round(x * 255)` clamped to `[0, 255]`.
pub fn quantize(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Converts item 0 of a 1- or 3-channel tensor to an 8-bit image.
pub fn tensor_to_image(t: &Tensor4<f32>) -> Result<DynamicImage> {
    let s = t.shape();
    let bytes: Vec<u8> = t.item(0).iter().map(|&v| quantize(v)).collect();
    let (w, h) = (s.w as u32, s.h as u32);
    match s.c {
        1 => Ok(DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("buffer matches dims"),
        )),
        3 => Ok(DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("buffer matches dims"),
        )),
        c => Err(Error::ChannelMismatch { expected: 3, got: c }),
    }
}

/// Writes an image; the format follows the file extension.
pub fn save(path: &Path, t: &Tensor4<f32>) -> Result<()> {
    tensor_to_image(t)?.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
