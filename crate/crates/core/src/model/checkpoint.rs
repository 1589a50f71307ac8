//! Model checkpoints on top of the tensor container.

use std::collections::BTreeMap;
use std::path::Path;

use crate::container::Container;
use crate::error::{CheckpointError, Error, Result};
use crate::model::network::Network;
use crate::model::plan::ModelConfig;
use crate::tensor::Scalar;

const KEY_VARIANT: &str = "model.variant";
const KEY_OUT: &str = "model.out_channels";
const KEY_INPUT: &str = "model.input_size";
const KEY_EPS: &str = "model.bn_epsilon";
const KEY_MOMENTUM: &str = "model.bn_momentum";

pub fn to_container<T: Scalar>(model: &Network<T>, metadata: &BTreeMap<String, String>) -> Container {
    let cfg = model.config();
    let mut meta = metadata.clone();
    meta.insert(KEY_VARIANT.into(), cfg.variant.to_string());
    meta.insert(KEY_OUT.into(), cfg.out_channels.to_string());
    meta.insert(KEY_INPUT.into(), cfg.input_size.to_string());
    if let Some((eps, mom)) = bn_constants(model) {
        meta.insert(KEY_EPS.into(), eps.to_string());
        meta.insert(KEY_MOMENTUM.into(), mom.to_string());
    }
    let tensors = model
        .named_tensors()
        .into_iter()
        .map(|(name, _, t)| (name, t.cast::<f32>()))
        .collect();
    Container { meta, tensors }
}

fn bn_constants<T: Scalar>(model: &Network<T>) -> Option<(f64, f64)> {
    use crate::model::network::Layer;
    model.layers().iter().find_map(|l| match l {
        Layer::Conv(c) => c.bn.as_ref().map(|b| (b.epsilon, b.momentum)),
        Layer::Residual(r) => Some((r.bn1.epsilon, r.bn1.momentum)),
        Layer::SkipAdd { .. } => None,
    })
}

pub fn config_from_meta(meta: &BTreeMap<String, String>) -> Result<ModelConfig, CheckpointError> {
    let get = |k: &str| {
        meta.get(k).ok_or_else(|| CheckpointError::Manifest {
            line: 0,
            msg: format!("missing metadata `{k}`"),
        })
    };
    let bad = |k: &str, e: String| CheckpointError::Manifest {
        line: 0,
        msg: format!("bad `{k}`: {e}"),
    };
    Ok(ModelConfig {
        variant: get(KEY_VARIANT)?
            .parse()
            .map_err(|e: Error| bad(KEY_VARIANT, e.to_string()))?,
        out_channels: get(KEY_OUT)?
            .parse()
            .map_err(|e: std::num::ParseIntError| bad(KEY_OUT, e.to_string()))?,
        input_size: get(KEY_INPUT)?
            .parse()
            .map_err(|e: std::num::ParseIntError| bad(KEY_INPUT, e.to_string()))?,
    })
}

/// Builds a model with `cfg` and fills it from `c`, checking every shape.
pub fn from_container<T: Scalar>(c: &Container, cfg: &ModelConfig) -> Result<Network<T>> {
    let mut model = Network::<T>::new(cfg, 0)?;
    let expected: Vec<(String, Vec<usize>)> = model
        .named_tensors()
        .into_iter()
        .map(|(n, _, t)| (n, t.shape.clone()))
        .collect();
    let eps = c.meta.get(KEY_EPS).and_then(|v| v.parse::<f64>().ok());
    let mom = c.meta.get(KEY_MOMENTUM).and_then(|v| v.parse::<f64>().ok());

    let mut missing = Vec::new();
    let mut found = Vec::with_capacity(expected.len());
    for (name, shape) in expected {
        match c.get(&name) {
            Some(t) if t.shape != shape => {
                return Err(CheckpointError::ShapeMismatch {
                    name,
                    expected: shape,
                    found: t.shape.clone(),
                }
                .into())
            }
            Some(t) => found.push(Some(t)),
            None => {
                missing.push(name);
                found.push(None);
            }
        }
    }
    if !missing.is_empty() {
        return Err(CheckpointError::MissingTensors(missing).into());
    }
    for ((_, dst), src) in model.tensors_mut().into_iter().zip(found) {
        *dst = src.expect("checked above").cast();
    }
    if eps.is_some() || mom.is_some() {
        use crate::model::network::Layer;
        for layer in model.layers_mut() {
            let bns: Vec<&mut crate::nn::BatchNormParams<T>> = match layer {
                Layer::Conv(l) => l.bn.iter_mut().collect(),
                Layer::Residual(r) => vec![&mut r.bn1, &mut r.bn2],
                Layer::SkipAdd { .. } => vec![],
            };
            for bn in bns {
                if let Some(e) = eps {
                    bn.epsilon = e;
                }
                if let Some(m) = mom {
                    bn.momentum = m;
                }
            }
        }
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Network<T>, metadata: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    to_container(model, metadata).save(path)
}

/// Loads a checkpoint using the configuration recorded in its manifest.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Network<T>, BTreeMap<String, String>)> {
    let c = Container::load(path)?;
    let cfg = config_from_meta(&c.meta)?;
    let model = from_container(&c, &cfg)?;
    Ok((model, c.meta))
}

/// Loads a checkpoint into a model built from `cfg`; a checkpoint trained
/// with another layout fails with a shape mismatch.
pub fn load_checkpoint_as<T: Scalar>(path: &Path, cfg: &ModelConfig) -> Result<Network<T>> {
    let c = Container::load(path)?;
    let recorded = config_from_meta(&c.meta)?;
    if recorded.out_channels != cfg.out_channels || recorded.variant != cfg.variant {
        // Report the first tensor whose shape differs, as the caller asked
        // for a layout the file does not hold.
        let expected = Network::<T>::new(cfg, 0)?;
        for (name, _, t) in expected.named_tensors() {
            if let Some(found) = c.get(&name) {
                if found.shape != t.shape {
                    return Err(CheckpointError::ShapeMismatch {
                        name,
                        expected: t.shape.clone(),
                        found: found.shape.clone(),
                    }
                    .into());
                }
            }
        }
        return Err(CheckpointError::ShapeMismatch {
            name: KEY_VARIANT.into(),
            expected: vec![cfg.variant.max_width(), cfg.out_channels],
            found: vec![recorded.variant.max_width(), recorded.out_channels],
        }
        .into());
    }
    from_container(&c, cfg)
}
