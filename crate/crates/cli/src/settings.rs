//! Training settings: defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::exit::usage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: PathBuf,
    pub out: PathBuf,
    pub variant: String,
    pub color_mode: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub patch_size: usize,
    pub stride: usize,
    pub train_fraction: f64,
    pub max_steps: Option<u64>,
    pub extractor: Option<PathBuf>,
    pub no_perceptual: bool,
    pub lambda_pixel: f64,
    pub lambda_feature: f64,
    pub lambda_style: f64,
    pub augment: bool,
    pub augment_probability: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let w = docclean::perceptual::LossWeights::default();
        let a = docclean::train::AdamConfig::default();
        TrainSettings {
            data: PathBuf::from("data"),
            out: PathBuf::from("run"),
            variant: "m16".into(),
            color_mode: "gray".into(),
            epochs: docclean::train::DEFAULT_EPOCHS,
            batch_size: docclean::train::DEFAULT_BATCH_SIZE,
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            adam_eps: a.eps,
            seed: 0,
            patch_size: docclean::data::PATCH_SIZE,
            stride: docclean::data::DEFAULT_TRAIN_STRIDE,
            train_fraction: docclean::data::DEFAULT_TRAIN_FRACTION,
            max_steps: None,
            extractor: None,
            no_perceptual: false,
            lambda_pixel: w.pixel,
            lambda_feature: w.feature,
            lambda_style: w.style,
            augment: true,
            augment_probability: docclean::data::AugmentSpec::default().probability,
        }
    }
}

impl TrainSettings {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}
