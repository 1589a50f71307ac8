use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use docclean::model::{load_checkpoint, load_checkpoint_as, ModelConfig, Network, Variant};
use docclean::tiler::{binarize, infer_tiled, plan_grid, DEFAULT_INFER_STRIDE, DEFAULT_THRESHOLD};
use docclean::{imageio, Tensor4};

use crate::exit::usage;

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image file or directory of images.
    #[arg(long)]
    input: PathBuf,
    /// Output file (single input) or directory.
    #[arg(long)]
    output: PathBuf,
    /// Tile stride in pixels.
    #[arg(long, default_value_t = DEFAULT_INFER_STRIDE)]
    stride: usize,
    /// Threshold the output into a two-valued image.
    #[arg(long)]
    binarize: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f32,
    /// Tiles per forward pass.
    #[arg(long, default_value_t = 4)]
    batch: usize,
    /// Expected variant; loading fails if the checkpoint holds another.
    #[arg(long)]
    variant: Option<String>,
    /// Expected output channels.
    #[arg(long)]
    out_channels: Option<usize>,
}

fn load_model(args: &InferArgs) -> anyhow::Result<Network<f32>> {
    let (model, _) = load_checkpoint::<f32>(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    if args.variant.is_none() && args.out_channels.is_none() {
        return Ok(model);
    }
    let recorded = *model.config();
    let variant: Variant = match &args.variant {
        Some(v) => v.parse()?,
        None => recorded.variant,
    };
    let cfg = ModelConfig {
        variant,
        out_channels: args.out_channels.unwrap_or(recorded.out_channels),
        input_size: recorded.input_size,
    };
    Ok(load_checkpoint_as(&args.checkpoint, &cfg)?)
}

fn clean_one(model: &Network<f32>, args: &InferArgs, src: &Path, dst: &Path) -> anyhow::Result<()> {
    let img = imageio::load_rgb(src)?;
    let s = img.shape();
    let grid = plan_grid(s.h, s.w, args.stride)?;
    let mut out: Tensor4<f32> = infer_tiled(model, &img, &grid, args.batch)?;
    if args.binarize {
        if out.shape().c != 1 {
            return Err(usage("--binarize needs a single-channel model"));
        }
        out = binarize(&out, args.threshold);
    }
    imageio::save(dst, &out)?;
    log::info!(
        "{} -> {} ({}x{}, {} tiles)",
        src.display(),
        dst.display(),
        s.w,
        s.h,
        grid.len()
    );
    Ok(())
}

pub fn run(args: InferArgs) -> anyhow::Result<()> {
    if !args.input.exists() {
        return Err(usage(format!("input {} does not exist", args.input.display())));
    }
    let model = load_model(&args)?;
    if args.input.is_dir() {
        std::fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
        let mut inputs: Vec<PathBuf> = std::fs::read_dir(&args.input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && imageio::is_image(p))
            .collect();
        inputs.sort();
        for src in inputs {
            let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
            clean_one(&model, &args, &src, &args.output.join(format!("{stem}.png")))?;
        }
    } else {
        if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        clean_one(&model, &args, &args.input, &args.output)?;
    }
    Ok(())
}
