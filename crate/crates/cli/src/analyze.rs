use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use docclean::container::Container;
use docclean::model::{
    config_from_meta, layer_breakdown, param_stats, to_container, LayerPlan, LayerStats, ModelConfig, Network, Variant,
};
use serde::Serialize;

use crate::exit::emit;

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// m16, m32 or m64.
    #[arg(long, default_value = "m16")]
    variant: String,
    #[arg(long, default_value_t = 3)]
    out_channels: usize,
    /// Square input side used for Mult-Adds.
    #[arg(long, default_value_t = 256)]
    input_size: usize,
    /// Read the layout from a checkpoint instead of the flags.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Serialize)]
struct Analysis {
    variant: String,
    out_channels: usize,
    input_size: usize,
    trainable_params: u64,
    mult_adds: u64,
    checkpoint_bytes: usize,
    layers: Vec<LayerStats>,
}

pub fn run(args: AnalyzeArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.checkpoint {
        Some(p) => config_from_meta(&Container::load(p)?.meta)?,
        None => ModelConfig::new(args.variant.parse::<Variant>()?, args.out_channels),
    };
    cfg.input_size = args.input_size;
    let plan = LayerPlan::build(&cfg)?;
    let stats = param_stats(&plan, cfg.input_size, cfg.input_size);
    let model = Network::<f32>::from_plan(plan.clone(), 0)?;
    let checkpoint_bytes = to_container(&model, &BTreeMap::new()).to_bytes()?.len();
    let a = Analysis {
        variant: cfg.variant.to_string(),
        out_channels: cfg.out_channels,
        input_size: cfg.input_size,
        trainable_params: stats.trainable_params,
        mult_adds: stats.mult_adds,
        checkpoint_bytes,
        layers: layer_breakdown(&plan, cfg.input_size, cfg.input_size),
    };
    if args.json {
        return emit(&(serde_json::to_string_pretty(&a)? + "\n"));
    }
    let mut s = String::new();
    writeln!(s, "model            {} (out_channels {})", a.variant, a.out_channels)?;
    writeln!(s, "input            {0}x{0}", a.input_size)?;
    writeln!(
        s,
        "trainable params {} ({:.3}M)",
        a.trainable_params,
        a.trainable_params as f64 / 1e6
    )?;
    writeln!(s, "mult-adds        {} ({:.3}G)", a.mult_adds, a.mult_adds as f64 / 1e9)?;
    writeln!(s, "checkpoint size  {} bytes", a.checkpoint_bytes)?;
    writeln!(s)?;
    writeln!(
        s,
        "{:<12} {:<10} {:<22} {:>10} {:>14}",
        "layer", "kind", "shape", "params", "mult-adds"
    )?;
    for l in &a.layers {
        writeln!(
            s,
            "{:<12} {:<10} {:<22} {:>10} {:>14}",
            l.name, l.kind, l.shape, l.params, l.mult_adds
        )?;
    }
    emit(&s)
}
