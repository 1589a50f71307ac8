//! Composite training loss: weighted pixel L1, feature reconstruction and
//! Gram-matrix style terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perceptual::color::{rgb_to_ycbcr, ycbcr_backward};
use crate::perceptual::extractor::FeatureExtractor;
use crate::perceptual::gram::{gram, gram_backward};
use crate::tensor::{Scalar, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pixel: f64,
    pub feature: f64,
    pub style: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pixel: 10.0,
            feature: 0.1,
            style: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pixel", self.pixel), ("feature", self.feature), ("style", self.style)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "loss weight `{name}` must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn needs_extractor(&self) -> bool {
        self.feature > 0.0 || self.style > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTaps {
    pub content: Vec<String>,
    pub style: Vec<String>,
}

impl Default for FeatureTaps {
    fn default() -> Self {
        Self {
            content: vec!["conv1-2".into()],
            style: ["conv1-1", "conv2-1", "conv3-1", "conv4-1", "conv5-1"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Colour space of the pixel term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PixelMode {
    /// Three channels compared in YCbCr.
    Color,
    /// Single channel compared directly.
    Gray,
}

impl PixelMode {
    pub fn for_channels(c: usize) -> Result<Self> {
        match c {
            3 => Ok(PixelMode::Color),
            1 => Ok(PixelMode::Gray),
            _ => Err(Error::Config(format!("images must have 1 or 3 channels, got {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossTerms {
    pub pixel: f64,
    pub feature: f64,
    pub style: f64,
    pub total: f64,
}

fn check_pair<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {} vs ground truth {}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn mean_abs<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .sum::<f64>()
        / a.len() as f64
}

/// Mean absolute difference, in YCbCr for [`PixelMode::Color`].
pub fn l1_pixel_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>, mode: PixelMode) -> Result<f64> {
    check_pair(pred, target)?;
    match mode {
        PixelMode::Color => Ok(mean_abs(rgb_to_ycbcr(pred)?.data(), rgb_to_ycbcr(target)?.data())),
        PixelMode::Gray => {
            if pred.shape().c != 1 {
                return Err(Error::ChannelMismatch {
                    expected: 1,
                    got: pred.shape().c,
                });
            }
            Ok(mean_abs(pred.data(), target.data()))
        }
    }
}

fn l1_pixel_grad<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>, mode: PixelMode, scale: f64) -> Result<Tensor4<T>> {
    let (p, t) = match mode {
        PixelMode::Color => (rgb_to_ycbcr(pred)?, rgb_to_ycbcr(target)?),
        PixelMode::Gray => (pred.clone(), target.clone()),
    };
    let k = T::from_f64_lossy(scale / p.shape().len() as f64);
    let data = p.data().iter().zip(t.data()).map(|(&a, &b)| sign(a - b) * k).collect();
    let g = Tensor4::from_vec(p.shape(), data)?;
    match mode {
        PixelMode::Color => ycbcr_backward(&g),
        PixelMode::Gray => Ok(g),
    }
}

/// The pixel, feature and style terms together with the extractor and taps.
#[derive(Debug, Clone)]
pub struct CompositeLoss<T> {
    pub weights: LossWeights,
    pub taps: FeatureTaps,
    pub extractor: Option<FeatureExtractor<T>>,
}

struct TapPlan {
    content: Vec<usize>,
    style: Vec<usize>,
    last: usize,
}

impl<T: Scalar> CompositeLoss<T> {
    pub fn new(weights: LossWeights, taps: FeatureTaps, extractor: Option<FeatureExtractor<T>>) -> Result<Self> {
        weights.validate()?;
        let loss = Self {
            weights,
            taps,
            extractor,
        };
        if let Some(fx) = &loss.extractor {
            if loss.taps.style.is_empty() {
                return Err(Error::Config("style tap set must not be empty".into()));
            }
            for t in loss.taps.content.iter().chain(&loss.taps.style) {
                fx.tap_index(t)?;
            }
        }
        Ok(loss)
    }

    /// Pixel term only; the perceptual weights are forced to zero.
    pub fn pixel_only(pixel: f64) -> Self {
        Self {
            weights: LossWeights {
                pixel,
                feature: 0.0,
                style: 0.0,
            },
            taps: FeatureTaps::default(),
            extractor: None,
        }
    }

    fn extractor(&self) -> Result<&FeatureExtractor<T>> {
        self.extractor
            .as_ref()
            .ok_or_else(|| Error::Config("feature extractor weights are not loaded".into()))
    }

    fn tap_plan(&self, fx: &FeatureExtractor<T>) -> Result<TapPlan> {
        let content = self
            .taps
            .content
            .iter()
            .map(|t| fx.tap_index(t))
            .collect::<Result<Vec<_>>>()?;
        let style = self
            .taps
            .style
            .iter()
            .map(|t| fx.tap_index(t))
            .collect::<Result<Vec<_>>>()?;
        let last = content.iter().chain(&style).copied().max().unwrap_or(0);
        Ok(TapPlan { content, style, last })
    }

    /// Feature reconstruction term: per tap, mean absolute activation
    /// difference (the `1/(H W C)`-normalized L1 norm), averaged over the batch.
    pub fn feature_loss(&self, pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<f64> {
        check_pair(pred, target)?;
        let fx = self.extractor()?;
        let plan = self.tap_plan(fx)?;
        let (tp, tt) = (fx.forward(pred, plan.last)?, fx.forward(target, plan.last)?);
        Ok(plan
            .content
            .iter()
            .map(|&j| mean_abs(tp.stage_output(j).data(), tt.stage_output(j).data()))
            .sum())
    }

    /// Style term: sum over taps of the entrywise L1 distance between Gram
    /// matrices, averaged over the batch.
    pub fn style_loss(&self, pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<f64> {
        Ok(self.evaluate_inner(pred, target, false)?.0.style)
    }

    pub fn evaluate(&self, pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<LossTerms> {
        Ok(self.evaluate_inner(pred, target, false)?.0)
    }

    /// Loss terms and the gradient of the total w.r.t. `pred`.
    pub fn evaluate_with_grad(&self, pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(LossTerms, Tensor4<T>)> {
        let (terms, grad) = self.evaluate_inner(pred, target, true)?;
        Ok((terms, grad.expect("gradient requested")))
    }

    fn evaluate_inner(
        &self,
        pred: &Tensor4<T>,
        target: &Tensor4<T>,
        want_grad: bool,
    ) -> Result<(LossTerms, Option<Tensor4<T>>)> {
        check_pair(pred, target)?;
        let mode = PixelMode::for_channels(pred.shape().c)?;
        let w = self.weights;
        let mut terms = LossTerms {
            pixel: l1_pixel_loss(pred, target, mode)?,
            ..LossTerms::default()
        };
        let mut grad = if want_grad {
            Some(l1_pixel_grad(pred, target, mode, w.pixel)?)
        } else {
            None
        };

        let perceptual = w.needs_extractor() || (!want_grad && self.extractor.is_some());
        if perceptual {
            let fx = self.extractor()?;
            let plan = self.tap_plan(fx)?;
            let tp = fx.forward(pred, plan.last)?;
            let tt = fx.forward(target, plan.last)?;
            let batch = pred.shape().n;
            let mut stage_grads: Vec<Option<Tensor4<T>>> = vec![None; plan.last + 1];
            let mut add_grad = |i: usize, g: Tensor4<T>| -> Result<()> {
                match stage_grads[i].as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        stage_grads[i] = Some(g);
                        Ok(())
                    }
                }
            };

            for &j in &plan.content {
                let (a, b) = (tp.stage_output(j), tt.stage_output(j));
                terms.feature += mean_abs(a.data(), b.data());
                if want_grad && w.feature > 0.0 {
                    let k = T::from_f64_lossy(w.feature / a.shape().len() as f64);
                    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| sign(x - y) * k).collect();
                    add_grad(j, Tensor4::from_vec(a.shape(), data)?)?;
                }
            }

            for &j in &plan.style {
                let (a, b) = (tp.stage_output(j), tt.stage_output(j));
                let mut feat_grad = want_grad.then(|| Tensor4::zeros(a.shape()));
                for n in 0..batch {
                    let (ga, gb) = (gram(a, n), gram(b, n));
                    let dist: f64 = ga
                        .data
                        .iter()
                        .zip(&gb.data)
                        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
                        .sum();
                    terms.style += dist / batch as f64;
                    if let Some(fg) = feat_grad.as_mut() {
                        let k = T::from_f64_lossy(w.style / batch as f64);
                        let dg: Vec<T> = ga.data.iter().zip(&gb.data).map(|(&x, &y)| sign(x - y) * k).collect();
                        gram_backward(a, n, &dg, fg.item_mut(n));
                    }
                }
                if let Some(fg) = feat_grad {
                    if w.style > 0.0 {
                        add_grad(j, fg)?;
                    }
                }
            }

            if let Some(g) = grad.as_mut() {
                if stage_grads.iter().any(Option::is_some) {
                    g.add_assign(&fx.backward(&tp, stage_grads)?)?;
                }
            }
        }
        terms.total = w.pixel * terms.pixel + w.feature * terms.feature + w.style * terms.style;
        Ok((terms, grad))
    }
}
