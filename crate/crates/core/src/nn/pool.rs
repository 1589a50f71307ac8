use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor4};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Returns the pooled tensor and the flat source index of every maximum.
pub fn max_pool2<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>)> {
    let s = x.shape();
    let (h, w) = (s.h / 2, s.w / 2);
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("{s} is too small to pool")));
    }
    let out_shape = Shape4::new(s.n, h, w, s.c);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    for n in 0..s.n {
        for y in 0..h {
            for xx in 0..w {
                for c in 0..s.c {
                    let mut best = x.index(n, 2 * y, 2 * xx, c);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = x.index(n, 2 * y + dy, 2 * xx + dx, c);
                        if x.data()[i] > x.data()[best] {
                            best = i;
                        }
                    }
                    out.push(x.data()[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((Tensor4::from_vec(out_shape, out)?, argmax))
}

pub fn max_pool2_backward<T: Scalar>(input: Shape4, argmax: &[usize], dy: &Tensor4<T>) -> Tensor4<T> {
    let mut dx = Tensor4::zeros(input);
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] = dx.data()[i] + g;
    }
    dx
}
