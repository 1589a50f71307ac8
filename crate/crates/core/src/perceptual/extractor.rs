//! Frozen VGG-19 feature extractor used by the feature and style losses.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::container::Container;
use crate::error::{CheckpointError, Error, Result};
use crate::nn::{self, ConvParams};
use crate::tensor::{ParamTensor, Scalar, Shape4, Tensor4};

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// VGG-19 convolution names through `conv5-1`, grouped by pooling block.
pub const VGG19_BLOCKS: [&[&str]; 5] = [
    &["conv1-1", "conv1-2"],
    &["conv2-1", "conv2-2"],
    &["conv3-1", "conv3-2", "conv3-3", "conv3-4"],
    &["conv4-1", "conv4-2", "conv4-3", "conv4-4"],
    &["conv5-1"],
];
pub const VGG19_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];

pub fn kernel_name(layer: &str) -> String {
    format!("vgg19/{layer}/kernel")
}

pub fn bias_name(layer: &str) -> String {
    format!("vgg19/{layer}/bias")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage<T> {
    /// 3x3 same-padded convolution with bias followed by ReLU; its tap
    /// exposes the post-ReLU activation.
    Conv {
        name: String,
        params: ConvParams<T>,
    },
    MaxPool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor<T> {
    stages: Vec<Stage<T>>,
    /// Apply ImageNet mean/std normalization before the first stage.
    normalize: bool,
}

/// Per-stage records from a forward pass.
pub struct ExtractorTrace<T> {
    input_shape: Shape4,
    replicated: bool,
    /// `acts[i]` is the input of stage `i`; `acts[i + 1]` its output.
    acts: Vec<Tensor4<T>>,
    pool_index: Vec<Option<(Shape4, Vec<usize>)>>,
}

impl<T: Scalar> ExtractorTrace<T> {
    pub fn stage_output(&self, stage: usize) -> &Tensor4<T> {
        &self.acts[stage + 1]
    }
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(stages: Vec<Stage<T>>, normalize: bool) -> Result<Self> {
        let mut c = 3;
        for s in &stages {
            if let Stage::Conv { name, params } = s {
                if params.c_in() != c {
                    return Err(CheckpointError::ShapeMismatch {
                        name: kernel_name(name),
                        expected: vec![3, 3, c, params.c_out()],
                        found: params.kernel.shape.clone(),
                    }
                    .into());
                }
                c = params.c_out();
            }
        }
        Ok(Self { stages, normalize })
    }

    /// VGG-19 topology through `conv5-1` with block widths `widths` and
    /// He-initialized random weights. Full-width weights come from
    /// [`FeatureExtractor::load`]; narrow random variants serve tests.
    pub fn vgg19_random(widths: [usize; 5], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::new();
        let mut c = 3;
        for (b, names) in VGG19_BLOCKS.iter().enumerate() {
            if b > 0 {
                stages.push(Stage::MaxPool);
            }
            for name in names.iter() {
                let mut params = ConvParams::zeros(c, widths[b], true);
                let normal = Normal::new(0.0, (2.0 / (9 * c) as f64).sqrt()).expect("positive std");
                for w in params.kernel.data.iter_mut() {
                    *w = T::from_f64_lossy(normal.sample(&mut rng));
                }
                if let Some(bias) = params.bias.as_mut() {
                    for v in bias.data.iter_mut() {
                        *v = T::from_f64_lossy(normal.sample(&mut rng) * 0.1);
                    }
                }
                stages.push(Stage::Conv {
                    name: name.to_string(),
                    params,
                });
                c = widths[b];
            }
        }
        Self {
            stages,
            normalize: true,
        }
    }

    /// Reads the VGG-19 convolutions through `conv5-1` from a container.
    pub fn from_container(c: &Container) -> Result<Self> {
        let mut missing = Vec::new();
        for names in VGG19_BLOCKS {
            for name in names {
                for t in [kernel_name(name), bias_name(name)] {
                    if c.get(&t).is_none() {
                        missing.push(t);
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(CheckpointError::MissingTensors(missing).into());
        }
        let mut stages = Vec::new();
        for (b, names) in VGG19_BLOCKS.iter().enumerate() {
            if b > 0 {
                stages.push(Stage::MaxPool);
            }
            for name in names.iter() {
                let kernel = c.get(&kernel_name(name)).expect("checked").clone();
                let bias = c.get(&bias_name(name)).expect("checked").clone();
                if kernel.shape.len() != 4 || kernel.shape[0] != 3 || kernel.shape[1] != 3 {
                    return Err(CheckpointError::ShapeMismatch {
                        name: kernel_name(name),
                        expected: vec![3, 3, 0, 0],
                        found: kernel.shape,
                    }
                    .into());
                }
                if bias.shape != [kernel.shape[3]] {
                    return Err(CheckpointError::ShapeMismatch {
                        name: bias_name(name),
                        expected: vec![kernel.shape[3]],
                        found: bias.shape,
                    }
                    .into());
                }
                stages.push(Stage::Conv {
                    name: name.to_string(),
                    params: ConvParams {
                        kernel: kernel.cast(),
                        bias: Some(bias.cast()),
                    },
                });
            }
        }
        Self::new(stages, true)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    pub fn to_container(&self) -> Container {
        let mut out = Container::default();
        out.meta.insert("extractor.topology".into(), "vgg19".into());
        for s in &self.stages {
            if let Stage::Conv { name, params } = s {
                out.tensors.push((kernel_name(name), params.kernel.cast::<f32>()));
                let bias = params
                    .bias
                    .as_ref()
                    .map(|b| b.cast::<f32>())
                    .unwrap_or_else(|| ParamTensor::zeros(vec![params.c_out()]));
                out.tensors.push((bias_name(name), bias));
            }
        }
        out
    }

    pub fn stages(&self) -> &[Stage<T>] {
        &self.stages
    }

    /// Stage index of the conv named `tap`.
    pub fn tap_index(&self, tap: &str) -> Result<usize> {
        self.stages
            .iter()
            .position(|s| matches!(s, Stage::Conv { name, .. } if name == tap))
            .ok_or_else(|| Error::Config(format!("feature tap `{tap}` is not a layer of the extractor")))
    }

    /// Copies the extractor to another element type.
    pub fn cast<U: Scalar>(&self) -> FeatureExtractor<U> {
        FeatureExtractor {
            stages: self
                .stages
                .iter()
                .map(|s| match s {
                    Stage::Conv { name, params } => Stage::Conv {
                        name: name.clone(),
                        params: ConvParams {
                            kernel: params.kernel.cast(),
                            bias: params.bias.as_ref().map(|b| b.cast()),
                        },
                    },
                    Stage::MaxPool => Stage::MaxPool,
                })
                .collect(),
            normalize: self.normalize,
        }
    }

    fn preprocess(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, bool)> {
        let s = x.shape();
        let (mut out, replicated) = match s.c {
            3 => (x.clone(), false),
            1 => {
                let data = x.data().iter().flat_map(|&v| [v, v, v]).collect();
                (Tensor4::from_vec(s.with_channels(3), data)?, true)
            }
            c => return Err(Error::ChannelMismatch { expected: 3, got: c }),
        };
        if self.normalize {
            for px in out.data_mut().chunks_mut(3) {
                for ch in 0..3 {
                    px[ch] = T::from_f64_lossy((px[ch].as_f64() - IMAGENET_MEAN[ch]) / IMAGENET_STD[ch]);
                }
            }
        }
        Ok((out, replicated))
    }

    /// Runs stages `0..=last`.
    pub fn forward(&self, x: &Tensor4<T>, last: usize) -> Result<ExtractorTrace<T>> {
        let (input, replicated) = self.preprocess(x)?;
        let mut acts = vec![input];
        let mut pool_index = Vec::new();
        for stage in &self.stages[..=last] {
            let cur = acts.last().expect("input pushed");
            let (out, idx) = match stage {
                Stage::Conv { params, .. } => (nn::relu(&nn::conv2d(cur, params)?), None),
                Stage::MaxPool => {
                    let (o, idx) = nn::max_pool2(cur)?;
                    (o, Some((cur.shape(), idx)))
                }
            };
            acts.push(out);
            pool_index.push(idx);
        }
        Ok(ExtractorTrace {
            input_shape: x.shape(),
            replicated,
            acts,
            pool_index,
        })
    }

    /// Gradient w.r.t. the raw input given gradients at stage outputs.
    /// `stage_grads[i]` (if any) is added at the output of stage `i`.
    pub fn backward(&self, trace: &ExtractorTrace<T>, mut stage_grads: Vec<Option<Tensor4<T>>>) -> Result<Tensor4<T>> {
        let last = trace.acts.len() - 2;
        stage_grads.resize(last + 1, None);
        let mut grad: Option<Tensor4<T>> = None;
        for i in (0..=last).rev() {
            if let Some(g) = stage_grads[i].take() {
                match grad.as_mut() {
                    Some(acc) => acc.add_assign(&g)?,
                    None => grad = Some(g),
                }
            }
            let Some(g) = grad.take() else { continue };
            grad = Some(match &self.stages[i] {
                Stage::Conv { params, .. } => {
                    let g = nn::relu_backward(&trace.acts[i + 1], &g)?;
                    nn::conv2d_backward(&trace.acts[i], params, &g, true)?
                        .0
                        .expect("requested")
                }
                Stage::MaxPool => {
                    let (shape, idx) = trace.pool_index[i].as_ref().expect("pool stage records indices");
                    nn::max_pool2_backward(*shape, idx, &g)
                }
            });
        }
        let s = trace.acts[0].shape();
        let mut g = grad.unwrap_or_else(|| Tensor4::zeros(s));
        if self.normalize {
            for px in g.data_mut().chunks_mut(3) {
                for ch in 0..3 {
                    px[ch] = T::from_f64_lossy(px[ch].as_f64() / IMAGENET_STD[ch]);
                }
            }
        }
        if trace.replicated {
            let data = g.data().chunks(3).map(|p| p[0] + p[1] + p[2]).collect();
            g = Tensor4::from_vec(trace.input_shape, data)?;
        }
        Ok(g)
    }
}
