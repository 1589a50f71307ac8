//! Adam training of the cleanup networks with best-validation checkpointing.

pub mod adam;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{augment, patch_seed, AugmentSpec, Patch, PatchSet};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, ModelConfig, Network};
use crate::perceptual::{CompositeLoss, LossTerms, LossWeights};
use crate::tensor::Tensor4;

pub use adam::{adam_step, AdamConfig, AdamState};

pub const DEFAULT_BATCH_SIZE: usize = 8;
pub const DEFAULT_EPOCHS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub weights: LossWeights,
    pub augment: AugmentSpec,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            adam: AdamConfig::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: DEFAULT_EPOCHS,
            max_steps: None,
            seed: 0,
            weights: LossWeights::default(),
            augment: AugmentSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.adam.validate()?;
        self.weights.validate()?;
        self.augment.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: u64,
}

/// Where [`Trainer::fit`] writes.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    /// Extra metadata stored in every checkpoint.
    pub meta: BTreeMap<String, String>,
}

impl FitOutput {
    pub fn in_dir(dir: &Path) -> Self {
        FitOutput {
            checkpoint: dir.join("best.ckpt"),
            history: dir.join("history.csv"),
            meta: BTreeMap::new(),
        }
    }
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        let _ = writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_loss);
    }
    s
}

/// Stacks patches into `(noisy, target)` batches.
pub fn stack_batch(patches: &[&Patch]) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
    if patches.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let noisy: Vec<_> = patches.iter().map(|p| &p.noisy).collect();
    let target: Vec<_> = patches.iter().map(|p| &p.target).collect();
    Ok((Tensor4::stack(&noisy)?, Tensor4::stack(&target)?))
}

fn check_finite(terms: &LossTerms, what: &str) -> Result<()> {
    if terms.total.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { tensor: what.into() })
    }
}

/// Mean composite loss over `val`, one patch at a time in inference mode.
pub fn validate(model: &Network<f32>, val: &PatchSet, loss: &CompositeLoss<f32>) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let totals = val
        .patches
        .par_iter()
        .map(|p| Ok(loss.evaluate(&model.forward(&p.noisy)?, &p.target)?.total))
        .collect::<Result<Vec<f64>>>()?;
    Ok(totals.iter().sum::<f64>() / totals.len() as f64)
}

pub struct Trainer {
    cfg: TrainConfig,
    model: Network<f32>,
    loss: CompositeLoss<f32>,
    names: Vec<String>,
    adam: AdamState,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, loss: CompositeLoss<f32>) -> Result<Self> {
        let model = Network::new(&cfg.model, cfg.seed)?;
        Self::with_model(cfg, model, loss)
    }

    pub fn with_model(cfg: TrainConfig, model: Network<f32>, loss: CompositeLoss<f32>) -> Result<Self> {
        cfg.validate()?;
        if model.config() != &cfg.model {
            return Err(Error::Config("model does not match the training configuration".into()));
        }
        if loss.weights.needs_extractor() && loss.extractor.is_none() {
            return Err(Error::Config(
                "perceptual terms are weighted but no feature extractor is loaded".into(),
            ));
        }
        let names = model.trainable_names();
        let adam = AdamState::new(&model.trainable());
        Ok(Trainer {
            cfg,
            model,
            loss,
            names,
            adam,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Network<f32> {
        &self.model
    }

    pub fn into_model(self) -> Network<f32> {
        self.model
    }

    pub fn loss(&self) -> &CompositeLoss<f32> {
        &self.loss
    }

    pub fn steps(&self) -> u64 {
        self.adam.step
    }

    /// Loss of `patches` under the current weights in inference mode.
    pub fn evaluate(&self, patches: &[&Patch]) -> Result<LossTerms> {
        let (x, y) = stack_batch(patches)?;
        self.loss.evaluate(&self.model.forward(&x)?, &y)
    }

    /// One optimizer step on `patches`; returns the pre-update loss.
    pub fn step(&mut self, patches: &[&Patch]) -> Result<LossTerms> {
        let (x, y) = stack_batch(patches)?;
        let trace = self.model.forward_train(&x)?;
        let (terms, dy) = self.loss.evaluate_with_grad(trace.output(), &y)?;
        check_finite(&terms, "training loss")?;
        let grads = self.model.backward(&trace, &dy)?;
        let mut params = self.model.trainable_mut();
        adam_step(&mut params, &self.names, &grads.tensors, &mut self.adam, &self.cfg.adam)?;
        Ok(terms)
    }

    /// Trains for the configured epochs, validating after each one and
    /// saving a checkpoint whenever the validation loss improves.
    ///
    /// A non-finite loss aborts the run; the best checkpoint written so
    /// far is left in place.
    pub fn fit(&mut self, train: &PatchSet, val: &PatchSet, out: &FitOutput) -> Result<FitReport> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Config(format!(
                "need non-empty splits, got {} train and {} validation patches",
                train.len(),
                val.len()
            )));
        }
        let n = train.len();
        let mut history = Vec::new();
        let mut best = (0, f64::INFINITY);
        for epoch in 1..=self.cfg.max_epochs {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(patch_seed(self.cfg.seed, epoch as u64)));
            let (mut sum, mut seen) = (0.0, 0usize);
            for chunk in order.chunks(self.cfg.batch_size) {
                if self.cfg.max_steps.is_some_and(|m| self.adam.step >= m) {
                    break;
                }
                // augmentation draws are keyed by (epoch, patch id)
                let first = ((epoch - 1) * n) as u64;
                let batch: Vec<Patch> = chunk
                    .par_iter()
                    .map(|&i| augment(&train.patches[i], first + i as u64, &self.cfg.augment))
                    .collect();
                let refs: Vec<&Patch> = batch.iter().collect();
                let terms = self.step(&refs)?;
                sum += terms.total * chunk.len() as f64;
                seen += chunk.len();
            }
            if seen == 0 {
                break;
            }
            let val_loss = validate(&self.model, val, &self.loss)?;
            if !val_loss.is_finite() {
                return Err(Error::NonFinite {
                    tensor: "validation loss".into(),
                });
            }
            let rec = EpochRecord {
                epoch,
                train_loss: sum / seen as f64,
                val_loss,
            };
            history.push(rec);
            std::fs::write(&out.history, history_csv(&history)).map_err(|source| Error::Io {
                path: out.history.clone(),
                source,
            })?;
            log::info!("epoch {epoch}: train {:.6} val {:.6}", rec.train_loss, rec.val_loss);
            if val_loss < best.1 {
                best = (epoch, val_loss);
                let mut meta = out.meta.clone();
                meta.insert("train.epoch".into(), epoch.to_string());
                meta.insert("train.step".into(), self.adam.step.to_string());
                meta.insert("train.val_loss".into(), val_loss.to_string());
                save_checkpoint(&self.model, &meta, &out.checkpoint)?;
            }
        }
        Ok(FitReport {
            history,
            best_epoch: best.0,
            best_val_loss: best.1,
            steps: self.adam.step,
        })
    }
}
