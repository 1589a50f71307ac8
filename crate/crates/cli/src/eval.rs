use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use docclean::metrics::{report::evaluate_matched, PsnrPeak, Task};

use crate::exit::{emit, usage};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted images.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth images with matching stems.
    #[arg(long)]
    gt: PathBuf,
    /// binarize, gray or color.
    #[arg(long, default_value = "binarize")]
    task: String,
    /// PSNR peak: 255 or 1.0.
    #[arg(long, default_value = "255")]
    peak: String,
    /// Format printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let task: Task = args.task.parse()?;
    let peak: PsnrPeak = args.peak.parse()?;
    let (report, unmatched) = evaluate_matched(&args.pred, &args.gt, task, peak)?;
    let (csv, json) = (report.to_csv(), report.to_json());
    emit(match args.format {
        Format::Csv => &csv,
        Format::Json => &json,
    })?;
    if let Some(p) = &args.csv {
        std::fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.json {
        std::fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?;
    }
    if !unmatched.is_empty() {
        for e in &unmatched {
            eprintln!("unmatched: {e}");
        }
        return Err(usage(format!("{} unmatched file(s)", unmatched.len())));
    }
    Ok(())
}
