//! Executable M-x network: parameters, forward passes and backpropagation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::plan::{Activation, LayerPlan, LayerSpec, ModelConfig, INPUT_CHANNELS};
use crate::nn::{self, BatchNormCache, BatchNormParams, ConvGrads, ConvParams, KERNEL};
use crate::tensor::{ParamTensor, Scalar, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub name: String,
    pub conv: ConvParams<T>,
    pub bn: Option<BatchNormParams<T>>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualLayer<T> {
    pub name: String,
    pub conv1: ConvParams<T>,
    pub bn1: BatchNormParams<T>,
    pub conv2: ConvParams<T>,
    pub bn2: BatchNormParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(ConvLayer<T>),
    Residual(ResidualLayer<T>),
    /// Adds the output of layer `from` (an index into the layer list).
    SkipAdd {
        from: usize,
    },
}

/// Whether a named tensor is updated by the optimizer or is BN running state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Trainable,
    State,
}

/// Per-tensor gradients, in [`Network::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<ParamTensor<T>>,
}

enum LayerCache<T> {
    Conv(Option<BatchNormCache<T>>),
    Residual {
        bn1: BatchNormCache<T>,
        hidden: Tensor4<T>,
        bn2: BatchNormCache<T>,
    },
    Skip,
}

/// Activations recorded by [`Network::forward_train`].
pub struct Trace<T> {
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Tensor4<T>>,
    caches: Vec<LayerCache<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &Tensor4<T> {
        self.acts.last().expect("trace holds the network input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    plan: LayerPlan,
    layers: Vec<Layer<T>>,
}

fn he_init<T: Scalar>(p: &mut ConvParams<T>, rng: &mut ChaCha8Rng) {
    let fan_in = (KERNEL * KERNEL * p.c_in()) as f64;
    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
    for w in p.kernel.data.iter_mut() {
        *w = T::from_f64_lossy(normal.sample(rng));
    }
}

fn apply_activation<T: Scalar>(x: Tensor4<T>, act: Activation) -> Tensor4<T> {
    match act {
        Activation::Relu6 => nn::relu6(&x),
        Activation::Sigmoid => nn::sigmoid(&x),
        Activation::None => x,
    }
}

fn activation_backward<T: Scalar>(out: &Tensor4<T>, dy: &Tensor4<T>, act: Activation) -> Result<Tensor4<T>> {
    match act {
        // The ReLU6 mask can be read off the clamped output.
        Activation::Relu6 => nn::relu6_backward(out, dy),
        Activation::Sigmoid => nn::sigmoid_backward(out, dy),
        Activation::None => Ok(dy.clone()),
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor4<T>>, g: &Tensor4<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => {
            *slot = Some(g.clone());
            Ok(())
        }
    }
}

impl<T: Scalar> Network<T> {
    /// Builds the plan for `cfg` and initializes its parameters from `seed`.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let plan = LayerPlan::build(cfg)?;
        Self::from_plan(plan, seed)
    }

    pub fn from_plan(plan: LayerPlan, seed: u64) -> Result<Self> {
        plan.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(plan.layers.len());
        for spec in &plan.layers {
            let layer = match spec {
                LayerSpec::Conv {
                    name,
                    c_in,
                    c_out,
                    batch_norm,
                    activation,
                    bias,
                } => {
                    let mut conv = ConvParams::zeros(*c_in, *c_out, *bias);
                    he_init(&mut conv, &mut rng);
                    Layer::Conv(ConvLayer {
                        name: name.clone(),
                        conv,
                        bn: batch_norm.then(|| BatchNormParams::new(*c_out)),
                        activation: *activation,
                    })
                }
                LayerSpec::Residual { name, channels } => {
                    let mut conv1 = ConvParams::zeros(*channels, *channels, false);
                    let mut conv2 = ConvParams::zeros(*channels, *channels, false);
                    he_init(&mut conv1, &mut rng);
                    he_init(&mut conv2, &mut rng);
                    Layer::Residual(ResidualLayer {
                        name: name.clone(),
                        conv1,
                        bn1: BatchNormParams::new(*channels),
                        conv2,
                        bn2: BatchNormParams::new(*channels),
                    })
                }
                LayerSpec::SkipAdd { from } => Layer::SkipAdd {
                    from: plan
                        .layer_index(from)
                        .ok_or_else(|| Error::Config(format!("skip source {from} not found")))?,
                },
            };
            layers.push(layer);
        }
        Ok(Self { plan, layers })
    }

    pub fn plan(&self) -> &LayerPlan {
        &self.plan
    }

    pub fn config(&self) -> &ModelConfig {
        &self.plan.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Every tensor in a fixed order: `(name, kind, tensor)`.
    pub fn named_tensors(&self) -> Vec<(String, TensorKind, &ParamTensor<T>)> {
        let mut out = Vec::new();
        fn bn<'a, T>(out: &mut Vec<(String, TensorKind, &'a ParamTensor<T>)>, prefix: &str, p: &'a BatchNormParams<T>) {
            out.push((format!("{prefix}/gamma"), TensorKind::Trainable, &p.gamma));
            out.push((format!("{prefix}/beta"), TensorKind::Trainable, &p.beta));
            out.push((format!("{prefix}/running_mean"), TensorKind::State, &p.running_mean));
            out.push((format!("{prefix}/running_var"), TensorKind::State, &p.running_var));
        }
        for layer in &self.layers {
            match layer {
                Layer::Conv(l) => {
                    out.push((format!("{}/conv/kernel", l.name), TensorKind::Trainable, &l.conv.kernel));
                    if let Some(b) = &l.conv.bias {
                        out.push((format!("{}/conv/bias", l.name), TensorKind::Trainable, b));
                    }
                    if let Some(p) = &l.bn {
                        bn(&mut out, &format!("{}/bn", l.name), p);
                    }
                }
                Layer::Residual(r) => {
                    out.push((
                        format!("{}/conv1/kernel", r.name),
                        TensorKind::Trainable,
                        &r.conv1.kernel,
                    ));
                    bn(&mut out, &format!("{}/bn1", r.name), &r.bn1);
                    out.push((
                        format!("{}/conv2/kernel", r.name),
                        TensorKind::Trainable,
                        &r.conv2.kernel,
                    ));
                    bn(&mut out, &format!("{}/bn2", r.name), &r.bn2);
                }
                Layer::SkipAdd { .. } => {}
            }
        }
        out
    }

    /// Mutable access in the same order as [`Network::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(TensorKind, &mut ParamTensor<T>)> {
        let mut out = Vec::new();
        fn bn<'a, T>(out: &mut Vec<(TensorKind, &'a mut ParamTensor<T>)>, p: &'a mut BatchNormParams<T>) {
            out.push((TensorKind::Trainable, &mut p.gamma));
            out.push((TensorKind::Trainable, &mut p.beta));
            out.push((TensorKind::State, &mut p.running_mean));
            out.push((TensorKind::State, &mut p.running_var));
        }
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(l) => {
                    out.push((TensorKind::Trainable, &mut l.conv.kernel));
                    if let Some(b) = &mut l.conv.bias {
                        out.push((TensorKind::Trainable, b));
                    }
                    if let Some(p) = &mut l.bn {
                        bn(&mut out, p);
                    }
                }
                Layer::Residual(r) => {
                    out.push((TensorKind::Trainable, &mut r.conv1.kernel));
                    bn(&mut out, &mut r.bn1);
                    out.push((TensorKind::Trainable, &mut r.conv2.kernel));
                    bn(&mut out, &mut r.bn2);
                }
                Layer::SkipAdd { .. } => {}
            }
        }
        out
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.named_tensors()
            .into_iter()
            .filter(|(_, k, _)| *k == TensorKind::Trainable)
            .map(|(n, _, _)| n)
            .collect()
    }

    pub fn trainable(&self) -> Vec<&ParamTensor<T>> {
        self.named_tensors()
            .into_iter()
            .filter(|(_, k, _)| *k == TensorKind::Trainable)
            .map(|(_, _, t)| t)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        self.tensors_mut()
            .into_iter()
            .filter(|(k, _)| *k == TensorKind::Trainable)
            .map(|(_, t)| t)
            .collect()
    }

    /// Element count of all trainable tensors.
    pub fn trainable_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.shape().c != INPUT_CHANNELS {
            return Err(Error::ChannelMismatch {
                expected: INPUT_CHANNELS,
                got: x.shape().c,
            });
        }
        if x.shape().is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(())
    }

    /// Inference-mode forward pass using BN running statistics.
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let mut outputs: Vec<Option<Tensor4<T>>> = vec![None; self.layers.len()];
        let skip_sources: Vec<usize> = self
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::SkipAdd { from } => Some(*from),
                _ => None,
            })
            .collect();
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Conv(l) => {
                    let mut z = nn::conv2d(&cur, &l.conv)?;
                    if let Some(bn) = &l.bn {
                        z = nn::batch_norm_infer(&z, bn)?;
                    }
                    apply_activation(z, l.activation)
                }
                Layer::Residual(r) => {
                    let h = nn::batch_norm_infer(&nn::conv2d(&cur, &r.conv1)?, &r.bn1)?;
                    let h = nn::relu6(&h);
                    let mut s = nn::batch_norm_infer(&nn::conv2d(&h, &r.conv2)?, &r.bn2)?;
                    s.add_assign(&cur)?;
                    nn::relu6(&s)
                }
                Layer::SkipAdd { from } => {
                    let src = outputs[*from].as_ref().expect("skip source precedes use");
                    nn::add(&cur, src)?
                }
            };
            if skip_sources.contains(&i) {
                outputs[i] = Some(cur.clone());
            }
        }
        Ok(cur)
    }

    /// Train-mode forward pass: batch statistics, running-stat updates and a
    /// trace for [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Trace<T>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for layer in self.layers.iter_mut() {
            let cur = acts.last().expect("input pushed");
            let (out, cache) = match layer {
                Layer::Conv(l) => {
                    let z = nn::conv2d(cur, &l.conv)?;
                    let (z, cache) = match &mut l.bn {
                        Some(bn) => {
                            let (z, c) = nn::batch_norm_train(&z, bn)?;
                            (z, Some(c))
                        }
                        None => (z, None),
                    };
                    (apply_activation(z, l.activation), LayerCache::Conv(cache))
                }
                Layer::Residual(r) => {
                    let (h, bn1) = nn::batch_norm_train(&nn::conv2d(cur, &r.conv1)?, &mut r.bn1)?;
                    let hidden = nn::relu6(&h);
                    let (mut s, bn2) = nn::batch_norm_train(&nn::conv2d(&hidden, &r.conv2)?, &mut r.bn2)?;
                    s.add_assign(cur)?;
                    (nn::relu6(&s), LayerCache::Residual { bn1, hidden, bn2 })
                }
                Layer::SkipAdd { from } => (nn::add(cur, &acts[*from + 1])?, LayerCache::Skip),
            };
            acts.push(out);
            caches.push(cache);
        }
        Ok(Trace { acts, caches })
    }

    /// Backpropagates `dy` (gradient w.r.t. the network output) through a
    /// train-mode trace.
    pub fn backward(&self, trace: &Trace<T>, dy: &Tensor4<T>) -> Result<Gradients<T>> {
        if dy.shape() != trace.output().shape() {
            return Err(Error::Shape(format!(
                "output gradient {} for output {}",
                dy.shape(),
                trace.output().shape()
            )));
        }
        let n = self.layers.len();
        // Extra gradient arriving at layer outputs through skip connections.
        let mut extra: Vec<Option<Tensor4<T>>> = vec![None; n];
        let mut per_layer: Vec<Vec<ParamTensor<T>>> = vec![Vec::new(); n];
        let mut grad = dy.clone();
        for i in (0..n).rev() {
            if let Some(e) = extra[i].take() {
                grad.add_assign(&e)?;
            }
            let input = &trace.acts[i];
            let output = &trace.acts[i + 1];
            let need_dx = i > 0;
            grad = match (&self.layers[i], &trace.caches[i]) {
                (Layer::Conv(l), LayerCache::Conv(cache)) => {
                    let mut g = activation_backward(output, &grad, l.activation)?;
                    let mut bn_grads = None;
                    if let (Some(bn), Some(cache)) = (&l.bn, cache) {
                        let (dz, gb) = nn::batch_norm_backward(cache, bn, &g)?;
                        g = dz;
                        bn_grads = Some(gb);
                    }
                    let (dx, gc) = nn::conv2d_backward(input, &l.conv, &g, need_dx)?;
                    let ConvGrads { kernel, bias } = gc;
                    let slot = &mut per_layer[i];
                    slot.push(kernel);
                    slot.extend(bias);
                    if let Some(gb) = bn_grads {
                        slot.push(gb.gamma);
                        slot.push(gb.beta);
                    }
                    dx.unwrap_or(g)
                }
                (Layer::Residual(r), LayerCache::Residual { bn1, hidden, bn2 }) => {
                    let ds = nn::relu6_backward(output, &grad)?;
                    let (dc2, g_bn2) = nn::batch_norm_backward(bn2, &r.bn2, &ds)?;
                    let (dh, g_c2) = nn::conv2d_backward(hidden, &r.conv2, &dc2, true)?;
                    let dh = nn::relu6_backward(hidden, &dh.expect("requested"))?;
                    let (dc1, g_bn1) = nn::batch_norm_backward(bn1, &r.bn1, &dh)?;
                    let (dx, g_c1) = nn::conv2d_backward(input, &r.conv1, &dc1, need_dx)?;
                    per_layer[i] = vec![
                        g_c1.kernel,
                        g_bn1.gamma,
                        g_bn1.beta,
                        g_c2.kernel,
                        g_bn2.gamma,
                        g_bn2.beta,
                    ];
                    match dx {
                        Some(mut dx) => {
                            dx.add_assign(&ds)?;
                            dx
                        }
                        None => ds,
                    }
                }
                (Layer::SkipAdd { from }, LayerCache::Skip) => {
                    accumulate(&mut extra[*from], &grad)?;
                    grad
                }
                _ => return Err(Error::Shape("trace does not match network".into())),
            };
        }
        Ok(Gradients {
            tensors: per_layer.into_iter().flatten().collect(),
        })
    }

    /// Converts every tensor to another element type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let bn = |p: &BatchNormParams<T>| BatchNormParams {
            gamma: p.gamma.cast(),
            beta: p.beta.cast(),
            running_mean: p.running_mean.cast(),
            running_var: p.running_var.cast(),
            epsilon: p.epsilon,
            momentum: p.momentum,
        };
        let conv = |p: &ConvParams<T>| ConvParams {
            kernel: p.kernel.cast(),
            bias: p.bias.as_ref().map(|b| b.cast()),
        };
        Network {
            plan: self.plan.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv(c) => Layer::Conv(ConvLayer {
                        name: c.name.clone(),
                        conv: conv(&c.conv),
                        bn: c.bn.as_ref().map(bn),
                        activation: c.activation,
                    }),
                    Layer::Residual(r) => Layer::Residual(ResidualLayer {
                        name: r.name.clone(),
                        conv1: conv(&r.conv1),
                        bn1: bn(&r.bn1),
                        conv2: conv(&r.conv2),
                        bn2: bn(&r.bn2),
                    }),
                    Layer::SkipAdd { from } => Layer::SkipAdd { from: *from },
                })
                .collect(),
        }
    }
}
