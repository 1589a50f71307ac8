use crate::tensor::{Scalar, Shape4, Tensor4};

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear<T: Scalar>(x: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let s = x.shape();
    if (s.h, s.w) == (h, w) {
        return x.clone();
    }
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (pos.floor() as usize).min(src - 1);
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let (ys, xs) = (axis(h, s.h), axis(w, s.w));
    let mut out = Tensor4::zeros(Shape4::new(s.n, h, w, s.c));
    for n in 0..s.n {
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                for c in 0..s.c {
                    let top = x.at(n, y0, x0, c).as_f64() * (1.0 - fx) + x.at(n, y0, x1, c).as_f64() * fx;
                    let bot = x.at(n, y1, x0, c).as_f64() * (1.0 - fx) + x.at(n, y1, x1, c).as_f64() * fx;
                    out.set(n, oy, ox, c, T::from_f64_lossy(top * (1.0 - fy) + bot * fy));
                }
            }
        }
    }
    out
}
