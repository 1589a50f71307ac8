//! 3x3, stride-1, zero-padded ("same") convolution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Scalar, Shape4, Tensor4};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;
/// Upper bound on im2col buffer elements per band of output rows.
const BAND_ELEMS: usize = 1 << 20;

/// Kernel laid out as `[ky][kx][c_in][c_out]`, optional per-output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub kernel: ParamTensor<T>,
    pub bias: Option<ParamTensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub kernel: ParamTensor<T>,
    pub bias: Option<ParamTensor<T>>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(c_in: usize, c_out: usize, bias: bool) -> Self {
        Self {
            kernel: ParamTensor::zeros(vec![KERNEL, KERNEL, c_in, c_out]),
            bias: bias.then(|| ParamTensor::zeros(vec![c_out])),
        }
    }

    pub fn c_in(&self) -> usize {
        self.kernel.shape[2]
    }

    pub fn c_out(&self) -> usize {
        self.kernel.shape[3]
    }

    /// Kernel that copies its input (requires `c_in == c_out`).
    pub fn identity(channels: usize) -> Self {
        let mut p = Self::zeros(channels, channels, false);
        for c in 0..channels {
            let centre = (KERNEL + 1) * channels * channels;
            p.kernel.data[centre + c * channels + c] = T::one();
        }
        p
    }
}

fn band_rows(w: usize, c_in: usize, h: usize) -> usize {
    (BAND_ELEMS / (w * TAPS * c_in).max(1)).clamp(1, h)
}

/// Fills `col` with the 3x3 neighbourhoods of rows `y0..y1` of one image.
fn im2col<T: Scalar>(x: &[T], h: usize, w: usize, c: usize, y0: usize, y1: usize, col: &mut [T]) {
    let row_len = TAPS * c;
    for y in y0..y1 {
        for xx in 0..w {
            let dst = &mut col[((y - y0) * w + xx) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let sy = y as isize + ky as isize - 1;
                for kx in 0..KERNEL {
                    let sx = xx as isize + kx as isize - 1;
                    let seg = &mut dst[(ky * KERNEL + kx) * c..][..c];
                    if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                        seg.fill(T::zero());
                    } else {
                        let src = (sy as usize * w + sx as usize) * c;
                        seg.copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
    }
}

/// Scatter-adds column gradients back onto the image gradient.
fn col2im<T: Scalar>(col: &[T], h: usize, w: usize, c: usize, y0: usize, y1: usize, dx: &mut [T]) {
    let row_len = TAPS * c;
    for y in y0..y1 {
        for xx in 0..w {
            let src = &col[((y - y0) * w + xx) * row_len..][..row_len];
            for ky in 0..KERNEL {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let sx = xx as isize + kx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let seg = &src[(ky * KERNEL + kx) * c..][..c];
                    let dst = &mut dx[(sy as usize * w + sx as usize) * c..][..c];
                    for (d, &s) in dst.iter_mut().zip(seg) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

fn check_params<T: Scalar>(x: Shape4, p: &ConvParams<T>) -> Result<()> {
    if p.kernel.shape.len() != 4 || p.kernel.shape[0] != KERNEL || p.kernel.shape[1] != KERNEL {
        return Err(Error::Config(format!(
            "kernel must be 3x3xCinxCout, got {:?}",
            p.kernel.shape
        )));
    }
    if x.c != p.c_in() {
        return Err(Error::ChannelMismatch {
            expected: p.c_in(),
            got: x.c,
        });
    }
    Ok(())
}

pub fn conv2d<T: Scalar>(x: &Tensor4<T>, p: &ConvParams<T>) -> Result<Tensor4<T>> {
    let s = x.shape();
    check_params(s, p)?;
    let c_out = p.c_out();
    let out_shape = s.with_channels(c_out);
    let mut out = Tensor4::zeros(out_shape);
    let rows = band_rows(s.w, s.c, s.h);
    let k = &p.kernel.data;
    out.data_mut()
        .par_chunks_mut(out_shape.item_len())
        .zip(x.data().par_chunks(s.item_len()))
        .for_each(|(dst, src)| {
            let mut col = vec![T::zero(); rows * s.w * TAPS * s.c];
            let mut y0 = 0;
            while y0 < s.h {
                let y1 = (y0 + rows).min(s.h);
                let m = (y1 - y0) * s.w;
                im2col(src, s.h, s.w, s.c, y0, y1, &mut col);
                let band = &mut dst[y0 * s.w * c_out..y1 * s.w * c_out];
                T::gemm(m, TAPS * s.c, c_out, &col, false, k, false, band, false);
                y0 = y1;
            }
            if let Some(b) = &p.bias {
                for px in dst.chunks_mut(c_out) {
                    for (v, &bb) in px.iter_mut().zip(&b.data) {
                        *v = *v + bb;
                    }
                }
            }
        });
    Ok(out)
}

/// Gradients of a convolution given its input and the upstream gradient.
/// Returns `(dx, grads)`; `dx` is skipped when `need_dx` is false.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    p: &ConvParams<T>,
    dy: &Tensor4<T>,
    need_dx: bool,
) -> Result<(Option<Tensor4<T>>, ConvGrads<T>)> {
    let s = x.shape();
    check_params(s, p)?;
    let c_out = p.c_out();
    if dy.shape() != s.with_channels(c_out) {
        return Err(Error::Shape(format!(
            "upstream gradient {} for conv output {}",
            dy.shape(),
            s.with_channels(c_out)
        )));
    }
    let rows = band_rows(s.w, s.c, s.h);
    let k = &p.kernel.data;
    let klen = k.len();

    let partials: Vec<(Vec<T>, Vec<T>, Vec<T>)> = x
        .data()
        .par_chunks(s.item_len())
        .zip(dy.data().par_chunks(s.item_len() / s.c * c_out))
        .map(|(src, g)| {
            let mut col = vec![T::zero(); rows * s.w * TAPS * s.c];
            let mut dcol = if need_dx { col.clone() } else { Vec::new() };
            let mut dk = vec![T::zero(); klen];
            let mut dx = if need_dx {
                vec![T::zero(); s.item_len()]
            } else {
                Vec::new()
            };
            let mut y0 = 0;
            while y0 < s.h {
                let y1 = (y0 + rows).min(s.h);
                let m = (y1 - y0) * s.w;
                let gband = &g[y0 * s.w * c_out..y1 * s.w * c_out];
                im2col(src, s.h, s.w, s.c, y0, y1, &mut col);
                T::gemm(TAPS * s.c, m, c_out, &col, true, gband, false, &mut dk, true);
                if need_dx {
                    T::gemm(m, c_out, TAPS * s.c, gband, false, k, true, &mut dcol, false);
                    col2im(&dcol, s.h, s.w, s.c, y0, y1, &mut dx);
                }
                y0 = y1;
            }
            let mut db = vec![T::zero(); c_out];
            if p.bias.is_some() {
                for px in g.chunks(c_out) {
                    for (d, &v) in db.iter_mut().zip(px) {
                        *d = *d + v;
                    }
                }
            }
            (dx, dk, db)
        })
        .collect();

    let mut grads = ConvGrads {
        kernel: ParamTensor::zeros(p.kernel.shape.clone()),
        bias: p.bias.as_ref().map(|b| ParamTensor::zeros(b.shape.clone())),
    };
    let mut dx_all = Vec::with_capacity(if need_dx { s.len() } else { 0 });
    // Summed in batch order so results do not depend on scheduling.
    for (dx, dk, db) in partials {
        for (a, b) in grads.kernel.data.iter_mut().zip(dk) {
            *a = *a + b;
        }
        if let Some(gb) = grads.bias.as_mut() {
            for (a, b) in gb.data.iter_mut().zip(db) {
                *a = *a + b;
            }
        }
        dx_all.extend(dx);
    }
    let dx = if need_dx {
        Some(Tensor4::from_vec(s, dx_all)?)
    } else {
        None
    };
    Ok((dx, grads))
}
