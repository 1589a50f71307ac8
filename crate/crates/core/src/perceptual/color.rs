use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Full-range BT.601 RGB -> YCbCr on [0,1] values, rows Y, Cb, Cr.
pub const RGB_TO_YCBCR: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
];
pub const YCBCR_OFFSET: [f64; 3] = [0.0, 0.5, 0.5];

fn check<T: Scalar>(x: &Tensor4<T>) -> Result<()> {
    if x.shape().c != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            got: x.shape().c,
        });
    }
    Ok(())
}

pub fn rgb_to_ycbcr<T: Scalar>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    check(x)?;
    let mut out = x.clone();
    for px in out.data_mut().chunks_mut(3) {
        let rgb = [px[0].as_f64(), px[1].as_f64(), px[2].as_f64()];
        for (o, (row, off)) in px.iter_mut().zip(RGB_TO_YCBCR.iter().zip(YCBCR_OFFSET)) {
            *o = T::from_f64_lossy(off + row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2]);
        }
    }
    Ok(out)
}

/// Pulls a gradient w.r.t. YCbCr values back to RGB (transpose of the matrix).
pub fn ycbcr_backward<T: Scalar>(dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    check(dy)?;
    let mut out = dy.clone();
    for px in out.data_mut().chunks_mut(3) {
        let g = [px[0].as_f64(), px[1].as_f64(), px[2].as_f64()];
        for (j, o) in px.iter_mut().enumerate() {
            let v: f64 = (0..3).map(|i| RGB_TO_YCBCR[i][j] * g[i]).sum();
            *o = T::from_f64_lossy(v);
        }
    }
    Ok(out)
}

/// BT.601 luma of an RGB tensor as a single channel.
pub fn luma<T: Scalar>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    check(x)?;
    let w = RGB_TO_YCBCR[0];
    let data = x
        .data()
        .chunks(3)
        .map(|p| T::from_f64_lossy(w[0] * p[0].as_f64() + w[1] * p[1].as_f64() + w[2] * p[2].as_f64()))
        .collect();
    Tensor4::from_vec(x.shape().with_channels(1), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape4;

    fn px(r: f64, g: f64, b: f64) -> Vec<f64> {
        let t = Tensor4::from_vec(Shape4::new(1, 1, 1, 3), vec![r, g, b]).unwrap();
        rgb_to_ycbcr(&t).unwrap().into_vec()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn reference_colours() {
        assert!(close(&px(1.0, 1.0, 1.0), &[1.0, 0.5, 0.5]));
        assert!(close(&px(0.0, 0.0, 0.0), &[0.0, 0.5, 0.5]));
        assert!(close(&px(1.0, 0.0, 0.0), &[0.299, 0.331264, 1.0]));
    }

    #[test]
    fn single_channel_rejected() {
        let t = Tensor4::<f32>::zeros(Shape4::new(1, 2, 2, 1));
        assert!(rgb_to_ycbcr(&t).is_err());
    }
}
