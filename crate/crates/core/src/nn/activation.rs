use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// NaN passes through so divergence stays visible downstream.
pub fn relu6<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let six = T::from_f64_lossy(6.0);
    x.map(|v| if v.is_nan() { v } else { v.max(T::zero()).min(six) })
}

/// Gradient passes where `0 < x < 6`.
pub fn relu6_backward<T: Scalar>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    let six = T::from_f64_lossy(6.0);
    zip_map(x, dy, |v, g| if v > T::zero() && v < six { g } else { T::zero() })
}

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v.is_nan() { v } else { v.max(T::zero()) })
}

pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_map(x, dy, |v, g| if v > T::zero() { g } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    // Evaluated on the non-positive side so exp never overflows.
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Takes the sigmoid *output* `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor4<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_map(y, dy, |s, g| g * s * (T::one() - s))
}

pub fn add<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_map(a, b, |x, y| x + y)
}

fn zip_map<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>, f: impl Fn(T, T) -> T) -> Result<Tensor4<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{} vs {}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor4::from_vec(a.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape4;

    fn t(v: &[f64]) -> Tensor4<f64> {
        Tensor4::from_vec(Shape4::new(1, 1, v.len(), 1), v.to_vec()).unwrap()
    }

    #[test]
    fn relu6_clamps() {
        assert_eq!(relu6(&t(&[-1.0, 3.0, 7.0])).data(), &[0.0, 3.0, 6.0]);
    }

    #[test]
    fn sigmoid_values() {
        let y = sigmoid(&t(&[0.0, 1e4, -1e4, 2.5, -2.5]));
        assert_eq!(y.data()[0], 0.5);
        assert_eq!(y.data()[1], 1.0);
        assert_eq!(y.data()[2], 0.0);
        assert!((y.data()[3] + y.data()[4] - 1.0).abs() < 1e-15);
        let y32 = sigmoid(&t(&[1e4]).cast::<f32>());
        assert!(y32.is_finite());
    }
}
