use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use docclean::data::{extract_patches, scan_pairs, split, AugmentSpec, ColorMode};
use docclean::model::{ModelConfig, Variant};
use docclean::perceptual::{CompositeLoss, FeatureExtractor, FeatureTaps, LossWeights};
use docclean::train::{AdamConfig, FitOutput, TrainConfig, Trainer};

use crate::exit::usage;
use crate::settings::TrainSettings;

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root holding noisy/ and clean/.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for checkpoints, history and manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// m16, m32 or m64.
    #[arg(long)]
    variant: Option<String>,
    /// gray, color or binary targets.
    #[arg(long)]
    color_mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patch_size: Option<usize>,
    /// Training patch stride in pixels.
    #[arg(long)]
    stride: Option<usize>,
    /// Fraction of patches used for training; the rest validates.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// VGG-19 weight container for the perceptual terms.
    #[arg(long)]
    extractor: Option<PathBuf>,
    /// Drop the feature and style terms.
    #[arg(long)]
    no_perceptual: bool,
    #[arg(long)]
    lambda_pixel: Option<f64>,
    #[arg(long)]
    lambda_feature: Option<f64>,
    #[arg(long)]
    lambda_style: Option<f64>,
    #[arg(long)]
    augment_probability: Option<f64>,
    #[arg(long)]
    no_augment: bool,
}

fn effective(args: TrainArgs) -> anyhow::Result<TrainSettings> {
    let mut s = match &args.config {
        Some(p) => TrainSettings::from_file(p)?,
        None => TrainSettings::default(),
    };
    macro_rules! over {
        ($($field:ident <- $flag:ident),* $(,)?) => {
            $(if let Some(v) = args.$flag { s.$field = v.into(); })*
        };
    }
    over!(
        data <- data, out <- out, variant <- variant, color_mode <- color_mode, epochs <- epochs,
        batch_size <- batch_size, learning_rate <- lr, seed <- seed, patch_size <- patch_size,
        stride <- stride, train_fraction <- train_fraction, lambda_pixel <- lambda_pixel,
        lambda_feature <- lambda_feature, lambda_style <- lambda_style,
        augment_probability <- augment_probability,
    );
    if args.max_steps.is_some() {
        s.max_steps = args.max_steps;
    }
    if args.extractor.is_some() {
        s.extractor = args.extractor;
    }
    s.no_perceptual |= args.no_perceptual;
    if args.no_augment {
        s.augment = false;
    }
    Ok(s)
}

fn loss_weights(s: &TrainSettings) -> LossWeights {
    if s.no_perceptual {
        LossWeights {
            pixel: s.lambda_pixel,
            feature: 0.0,
            style: 0.0,
        }
    } else {
        LossWeights {
            pixel: s.lambda_pixel,
            feature: s.lambda_feature,
            style: s.lambda_style,
        }
    }
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let s = effective(args)?;
    let variant: Variant = s.variant.parse()?;
    let mode: ColorMode = s.color_mode.parse()?;
    let weights = loss_weights(&s);
    log::info!(
        "effective loss weights λ = ({}, {}, {})",
        weights.pixel,
        weights.feature,
        weights.style
    );

    let extractor = if weights.needs_extractor() {
        let path = s.extractor.as_ref().ok_or_else(|| {
            usage("the feature and style terms need VGG-19 weights: pass --extractor <file> or --no-perceptual")
        })?;
        Some(FeatureExtractor::<f32>::load(path).with_context(|| format!("loading extractor {}", path.display()))?)
    } else {
        None
    };
    let loss = CompositeLoss::new(weights, FeatureTaps::default(), extractor)?;

    let mut model = ModelConfig::new(variant, mode.out_channels());
    model.input_size = s.patch_size;
    let cfg = TrainConfig {
        model,
        adam: AdamConfig {
            learning_rate: s.learning_rate,
            beta1: s.beta1,
            beta2: s.beta2,
            eps: s.adam_eps,
        },
        batch_size: s.batch_size,
        max_epochs: s.epochs,
        max_steps: s.max_steps,
        seed: s.seed,
        weights,
        augment: AugmentSpec {
            seed: s.seed,
            probability: if s.augment { s.augment_probability } else { 0.0 },
            ..AugmentSpec::default()
        },
    };
    cfg.validate()?;

    let ds = scan_pairs(&s.data, mode)?;
    if ds.records.is_empty() {
        return Err(usage(format!("no image pairs found under {}", s.data.display())));
    }
    let patches = extract_patches(&ds, s.patch_size, s.stride)?;
    log::info!("{} pairs -> {} patches", ds.records.len(), patches.len());
    let (train, val) = split(patches, s.train_fraction, s.seed)?;

    std::fs::create_dir_all(&s.out).with_context(|| format!("creating {}", s.out.display()))?;
    let manifest = s.out.join("manifest.toml");
    std::fs::write(&manifest, s.to_toml()).with_context(|| format!("writing {}", manifest.display()))?;

    let mut out = FitOutput::in_dir(&s.out);
    out.meta.insert("train.seed".into(), s.seed.to_string());
    out.meta.insert("train.color_mode".into(), mode.to_string());
    let mut trainer = Trainer::new(cfg, loss)?;
    let report = trainer.fit(&train, &val, &out)?;
    log::info!(
        "best validation loss {:.6} at epoch {} after {} steps; checkpoint {}",
        report.best_val_loss,
        report.best_epoch,
        report.steps,
        out.checkpoint.display()
    );
    Ok(())
}
