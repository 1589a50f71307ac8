use crate::tensor::{Scalar, Tensor4};

/// `C x C` second-order feature statistics of one image, normalized by
/// `1 / (H * W * C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> GramMatrix<T> {
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.channels + j]
    }
}

/// Gram matrix of batch item `n` of `features`.
pub fn gram<T: Scalar>(features: &Tensor4<T>, n: usize) -> GramMatrix<T> {
    let s = features.shape();
    let hw = s.h * s.w;
    let mut data = vec![T::zero(); s.c * s.c];
    T::gemm(
        s.c,
        hw,
        s.c,
        features.item(n),
        true,
        features.item(n),
        false,
        &mut data,
        false,
    );
    let norm = T::from_f64_lossy(1.0 / (hw * s.c) as f64);
    data.iter_mut().for_each(|v| *v = *v * norm);
    GramMatrix { channels: s.c, data }
}

/// Gradient w.r.t. the features of item `n`, given `d_gram` for its Gram
/// matrix, written into `out` (length `H * W * C`).
pub fn gram_backward<T: Scalar>(features: &Tensor4<T>, n: usize, d_gram: &[T], out: &mut [T]) {
    let s = features.shape();
    let hw = s.h * s.w;
    let norm = T::from_f64_lossy(1.0 / (hw * s.c) as f64);
    let c = s.c;
    let mut sym = vec![T::zero(); c * c];
    for i in 0..c {
        for j in 0..c {
            sym[i * c + j] = (d_gram[i * c + j] + d_gram[j * c + i]) * norm;
        }
    }
    T::gemm(hw, c, c, features.item(n), false, &sym, false, out, false);
}
