use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Scalar, Tensor4};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: ParamTensor<T>,
    pub beta: ParamTensor<T>,
    pub running_mean: ParamTensor<T>,
    pub running_var: ParamTensor<T>,
    pub epsilon: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads<T> {
    pub gamma: ParamTensor<T>,
    pub beta: ParamTensor<T>,
}

/// Values kept from a train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    normalized: Tensor4<T>,
    inv_std: Vec<f64>,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: ParamTensor::filled(vec![channels], T::one()),
            beta: ParamTensor::zeros(vec![channels]),
            running_mean: ParamTensor::zeros(vec![channels]),
            running_var: ParamTensor::filled(vec![channels], T::one()),
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

fn check<T: Scalar>(x: &Tensor4<T>, p: &BatchNormParams<T>) -> Result<()> {
    if x.shape().is_empty() {
        return Err(Error::EmptyBatch);
    }
    if x.shape().c != p.channels() {
        return Err(Error::ChannelMismatch {
            expected: p.channels(),
            got: x.shape().c,
        });
    }
    Ok(())
}

/// Dispatches on `mode`; train mode updates the running statistics.
pub fn batch_norm<T: Scalar>(x: &Tensor4<T>, p: &mut BatchNormParams<T>, mode: Mode) -> Result<Tensor4<T>> {
    match mode {
        Mode::Train => batch_norm_train(x, p).map(|(y, _)| y),
        Mode::Infer => batch_norm_infer(x, p),
    }
}

pub fn batch_norm_train<T: Scalar>(
    x: &Tensor4<T>,
    p: &mut BatchNormParams<T>,
) -> Result<(Tensor4<T>, BatchNormCache<T>)> {
    check(x, p)?;
    let c = p.channels();
    let count = (x.shape().len() / c) as f64;
    let mut mean = vec![0.0f64; c];
    for px in x.data().chunks(c) {
        for (m, v) in mean.iter_mut().zip(px) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0f64; c];
    for px in x.data().chunks(c) {
        for ((s, v), m) in var.iter_mut().zip(px).zip(&mean) {
            let d = v.as_f64() - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.epsilon).sqrt()).collect();

    let mut normalized = Tensor4::zeros(x.shape());
    let mut y = Tensor4::zeros(x.shape());
    for ((src, nrm), dst) in x
        .data()
        .chunks(c)
        .zip(normalized.data_mut().chunks_mut(c))
        .zip(y.data_mut().chunks_mut(c))
    {
        for ch in 0..c {
            let xh = (src[ch].as_f64() - mean[ch]) * inv_std[ch];
            nrm[ch] = T::from_f64_lossy(xh);
            dst[ch] = T::from_f64_lossy(p.gamma.data[ch].as_f64() * xh + p.beta.data[ch].as_f64());
        }
    }

    let mom = p.momentum;
    for ch in 0..c {
        let rm = &mut p.running_mean.data[ch];
        *rm = T::from_f64_lossy(mom * rm.as_f64() + (1.0 - mom) * mean[ch]);
        let rv = &mut p.running_var.data[ch];
        *rv = T::from_f64_lossy(mom * rv.as_f64() + (1.0 - mom) * var[ch]);
    }
    Ok((y, BatchNormCache { normalized, inv_std }))
}

pub fn batch_norm_infer<T: Scalar>(x: &Tensor4<T>, p: &BatchNormParams<T>) -> Result<Tensor4<T>> {
    check(x, p)?;
    let c = p.channels();
    let (scale, shift): (Vec<T>, Vec<T>) = (0..c)
        .map(|ch| {
            let s = p.gamma.data[ch].as_f64() / (p.running_var.data[ch].as_f64() + p.epsilon).sqrt();
            let b = p.beta.data[ch].as_f64() - s * p.running_mean.data[ch].as_f64();
            (T::from_f64_lossy(s), T::from_f64_lossy(b))
        })
        .unzip();
    let mut y = x.clone();
    for px in y.data_mut().chunks_mut(c) {
        for ch in 0..c {
            px[ch] = px[ch] * scale[ch] + shift[ch];
        }
    }
    Ok(y)
}

/// Backward pass of a train-mode batch normalization.
pub fn batch_norm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    p: &BatchNormParams<T>,
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, BatchNormGrads<T>)> {
    if dy.shape() != cache.normalized.shape() {
        return Err(Error::Shape(format!(
            "upstream gradient {} for batch norm output {}",
            dy.shape(),
            cache.normalized.shape()
        )));
    }
    let c = p.channels();
    let count = (dy.shape().len() / c) as f64;
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for (g, xh) in dy.data().chunks(c).zip(cache.normalized.data().chunks(c)) {
        for ch in 0..c {
            let gv = g[ch].as_f64();
            dgamma[ch] += gv * xh[ch].as_f64();
            dbeta[ch] += gv;
        }
    }
    let mut dx = Tensor4::zeros(dy.shape());
    for ((dst, g), xh) in dx
        .data_mut()
        .chunks_mut(c)
        .zip(dy.data().chunks(c))
        .zip(cache.normalized.data().chunks(c))
    {
        for ch in 0..c {
            let k = p.gamma.data[ch].as_f64() * cache.inv_std[ch] / count;
            let v = k * (count * g[ch].as_f64() - dbeta[ch] - xh[ch].as_f64() * dgamma[ch]);
            dst[ch] = T::from_f64_lossy(v);
        }
    }
    let to_param = |v: Vec<f64>| ParamTensor {
        shape: vec![c],
        data: v.into_iter().map(T::from_f64_lossy).collect(),
    };
    Ok((
        dx,
        BatchNormGrads {
            gamma: to_param(dgamma),
            beta: to_param(dbeta),
        },
    ))
}
