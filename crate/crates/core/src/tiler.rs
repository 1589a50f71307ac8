//! Full-image inference over overlapping fixed-size tiles.

use rayon::prelude::*;

use crate::data::axis_origins;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::tensor::{Shape4, Tensor4};

pub const DEFAULT_INFER_STRIDE: usize = 192;
pub const DEFAULT_THRESHOLD: f32 = 0.5;

/// Tile origins and per-pixel coverage for one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
    /// Canvas after reflect padding; at least `patch` on both axes.
    pub padded_height: usize,
    pub padded_width: usize,
    pub patch: usize,
    pub stride: usize,
    /// Row-major `(y, x)` origins on the padded canvas.
    pub origins: Vec<(usize, usize)>,
    /// Tiles covering each canvas pixel, row-major.
    pub coverage: Vec<u32>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn coverage_at(&self, y: usize, x: usize) -> u32 {
        self.coverage[y * self.padded_width + x]
    }

    pub fn is_padded(&self) -> bool {
        (self.padded_height, self.padded_width) != (self.height, self.width)
    }
}

pub fn plan_grid(h: usize, w: usize, stride: usize) -> Result<PatchGrid> {
    plan_grid_with(h, w, crate::data::PATCH_SIZE, stride)
}

pub fn plan_grid_with(h: usize, w: usize, patch: usize, stride: usize) -> Result<PatchGrid> {
    if h == 0 || w == 0 || patch == 0 {
        return Err(Error::Config(format!(
            "cannot tile a {h}x{w} image with {patch} px patches"
        )));
    }
    if !(1..=patch).contains(&stride) {
        return Err(Error::Config(format!("stride must be in [1, {patch}], got {stride}")));
    }
    let (ph, pw) = (h.max(patch), w.max(patch));
    let ys = axis_origins(ph, patch, stride);
    let xs = axis_origins(pw, patch, stride);
    let origins: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect();
    let mut coverage = vec![0u32; ph * pw];
    for &(y0, x0) in &origins {
        for y in y0..y0 + patch {
            coverage[y * pw + x0..y * pw + x0 + patch]
                .iter_mut()
                .for_each(|c| *c += 1);
        }
    }
    Ok(PatchGrid {
        height: h,
        width: w,
        padded_height: ph,
        padded_width: pw,
        patch,
        stride,
        origins,
        coverage,
    })
}

/// Mirror index without repeating the edge pixel (`dcb|abcd|cba`).
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

pub fn reflect_pad(x: &Tensor4<f32>, h: usize, w: usize) -> Tensor4<f32> {
    let s = x.shape();
    Tensor4::from_fn(Shape4::new(s.n, h, w, s.c), |n, y, xx, c| {
        x.at(n, reflect_index(y, s.h), reflect_index(xx, s.w), c)
    })
}

/// Anything that maps a batch of `N x P x P x 3` tiles to `N x P x P x C`.
pub trait PatchModel: Sync {
    fn out_channels(&self) -> usize;
    fn predict(&self, batch: &Tensor4<f32>) -> Result<Tensor4<f32>>;
}

impl PatchModel for Network<f32> {
    fn out_channels(&self) -> usize {
        self.config().out_channels
    }

    fn predict(&self, batch: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        self.forward(batch)
    }
}

/// Averages tile predictions into the image; `tiles` may arrive in any order.
///
/// Tiles are summed in grid order in f64, so the result does not depend
/// on the order they were produced in.
pub fn merge(grid: &PatchGrid, tiles: Vec<(usize, Tensor4<f32>)>, channels: usize) -> Result<Tensor4<f32>> {
    let mut slots: Vec<Option<Tensor4<f32>>> = vec![None; grid.len()];
    for (i, t) in tiles {
        let want = Shape4::new(1, grid.patch, grid.patch, channels);
        if t.shape() != want {
            return Err(Error::Shape(format!("tile {i} is {}, expected {want}", t.shape())));
        }
        match slots.get_mut(i) {
            Some(slot @ None) => *slot = Some(t),
            Some(Some(_)) => return Err(Error::Shape(format!("tile {i} given twice"))),
            None => {
                return Err(Error::Shape(format!(
                    "tile index {i} outside a {}-tile grid",
                    grid.len()
                )))
            }
        }
    }
    let (ph, pw) = (grid.padded_height, grid.padded_width);
    let mut sum = vec![0f64; ph * pw * channels];
    for (slot, &(y0, x0)) in slots.iter().zip(&grid.origins) {
        let t = slot.as_ref().ok_or_else(|| Error::Shape("missing tile".into()))?;
        for y in 0..grid.patch {
            let row = &t.data()[y * grid.patch * channels..(y + 1) * grid.patch * channels];
            let base = ((y0 + y) * pw + x0) * channels;
            for (acc, &v) in sum[base..base + row.len()].iter_mut().zip(row) {
                *acc += v as f64;
            }
        }
    }
    let (h, w) = (grid.height, grid.width);
    Ok(Tensor4::from_fn(Shape4::new(1, h, w, channels), |_, y, x, c| {
        (sum[(y * pw + x) * channels + c] / grid.coverage_at(y, x) as f64) as f32
    }))
}

/// Runs `model` on every tile of `image` (`1 x H x W x 3`) and merges the
/// predictions by plain averaging. `batch` tiles go through the model at once.
pub fn infer_tiled<M: PatchModel + ?Sized>(
    model: &M,
    image: &Tensor4<f32>,
    grid: &PatchGrid,
    batch: usize,
) -> Result<Tensor4<f32>> {
    let s = image.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Shape(format!("expected a 1xHxWx3 image, got {s}")));
    }
    if (s.h, s.w) != (grid.height, grid.width) {
        return Err(Error::Shape(format!(
            "image {s} does not match a {}x{} grid",
            grid.height, grid.width
        )));
    }
    let canvas = if grid.is_padded() {
        reflect_pad(image, grid.padded_height, grid.padded_width)
    } else {
        image.clone()
    };
    let p = grid.patch;
    let indices: Vec<usize> = (0..grid.len()).collect();
    let chunks: Vec<Vec<(usize, Tensor4<f32>)>> = indices
        .par_chunks(batch.max(1))
        .map(|chunk| {
            let crops: Vec<Tensor4<f32>> = chunk
                .iter()
                .map(|&i| canvas.crop(grid.origins[i].0, grid.origins[i].1, p, p))
                .collect();
            let out = model.predict(&Tensor4::stack(&crops.iter().collect::<Vec<_>>())?)?;
            if out.shape() != Shape4::new(chunk.len(), p, p, model.out_channels()) {
                return Err(Error::Shape(format!(
                    "model returned {} for {} tiles",
                    out.shape(),
                    chunk.len()
                )));
            }
            Ok(chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| (i, out.slice_batch(k, 1)))
                .collect())
        })
        .collect::<Result<_>>()?;
    merge(grid, chunks.into_iter().flatten().collect(), model.out_channels())
}

/// `< threshold` becomes foreground (0), the rest background (1).
pub fn binarize(x: &Tensor4<f32>, threshold: f32) -> Tensor4<f32> {
    x.map(|v| if v < threshold { 0.0 } else { 1.0 })
}
