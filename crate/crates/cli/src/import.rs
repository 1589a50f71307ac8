//! VGG-19 `.npy` dumps (Keras or torchvision naming) into a weight container.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use docclean::container::Container;
use docclean::perceptual::{bias_name, kernel_name, FeatureExtractor, VGG19_BLOCKS};
use docclean::ParamTensor;
use npyz::{DType, NpyFile, Order};

use crate::exit::usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// Keras names imply HWIO, torchvision names OIHW.
    Auto,
    /// `[kh, kw, in, out]`
    Hwio,
    /// `[out, in, kh, kw]`
    Oihw,
}

#[derive(Args, Debug)]
pub struct ImportArgs {
    /// Directory of .npy files, one per tensor.
    #[arg(long)]
    input: PathBuf,
    /// Container file to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Layout::Auto)]
    layout: Layout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Kernel,
    Bias,
}

/// torchvision `features.N` index of each VGG-19 convolution through conv5-1.
const TORCH_INDEX: [usize; 13] = [0, 2, 5, 7, 10, 12, 14, 16, 19, 21, 23, 25, 28];

fn layer_names() -> Vec<&'static str> {
    VGG19_BLOCKS.iter().flat_map(|b| b.iter().copied()).collect()
}

/// Maps a file stem to (layer, part, naming-implied layout).
fn classify(stem: &str) -> Option<(&'static str, Part, Layout)> {
    let norm = stem.replace(['.', '/', ':'], "_");
    let t: Vec<&str> = norm.split('_').filter(|s| !s.is_empty()).collect();
    let part = |s: &str| match s {
        "kernel" | "W" | "weight" | "weights" => Some(Part::Kernel),
        "bias" | "b" | "biases" => Some(Part::Bias),
        _ => None,
    };
    let names = layer_names();
    if t.len() >= 3 && t[0] == "features" {
        let idx: usize = t[1].parse().ok()?;
        let k = TORCH_INDEX.iter().position(|&i| i == idx)?;
        return Some((names[k], part(t[2])?, Layout::Oihw));
    }
    if t.len() >= 3 && t[0].starts_with("block") && t[1].starts_with("conv") {
        let b: usize = t[0].trim_start_matches("block").parse().ok()?;
        let l: usize = t[1].trim_start_matches("conv").parse().ok()?;
        let name = format!("conv{b}-{l}");
        let layer = names.into_iter().find(|n| *n == name)?;
        return Some((layer, part(t[2])?, Layout::Hwio));
    }
    None
}

fn read_npy(path: &Path) -> anyhow::Result<(Vec<usize>, Vec<f32>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let npy = NpyFile::new(&bytes[..]).with_context(|| format!("parsing {}", path.display()))?;
    if npy.order() != Order::C {
        return Err(usage(format!(
            "{}: Fortran-ordered arrays are not supported",
            path.display()
        )));
    }
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    let data = match npy.dtype() {
        DType::Plain(t) if t.type_char() == npyz::TypeChar::Float && t.size_field() == 4 => npy.into_vec::<f32>()?,
        DType::Plain(t) if t.type_char() == npyz::TypeChar::Float && t.size_field() == 8 => {
            npy.into_vec::<f64>()?.into_iter().map(|v| v as f32).collect()
        }
        other => {
            return Err(usage(format!(
                "{}: unsupported dtype {}",
                path.display(),
                other.descr()
            )))
        }
    };
    Ok((shape, data))
}

fn oihw_to_hwio(shape: &[usize], data: &[f32]) -> anyhow::Result<(Vec<usize>, Vec<f32>)> {
    let &[o, i, kh, kw] = shape else {
        return Err(usage(format!("expected a 4-d kernel, got shape {shape:?}")));
    };
    let mut out = vec![0f32; data.len()];
    for oo in 0..o {
        for ii in 0..i {
            for y in 0..kh {
                for x in 0..kw {
                    out[((y * kw + x) * i + ii) * o + oo] = data[((oo * i + ii) * kh + y) * kw + x];
                }
            }
        }
    }
    Ok((vec![kh, kw, i, o], out))
}

pub fn import_dir(input: &Path, layout: Layout) -> anyhow::Result<Container> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "npy"))
        .collect();
    entries.sort();
    let mut found: BTreeMap<String, ParamTensor<f32>> = BTreeMap::new();
    for path in entries {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((layer, part, implied)) = classify(stem) else {
            log::debug!("skipping {}", path.display());
            continue;
        };
        let (shape, data) = read_npy(&path)?;
        let (name, shape, data) = match part {
            Part::Bias => (bias_name(layer), shape, data),
            Part::Kernel => {
                let (shape, data) = match if layout == Layout::Auto { implied } else { layout } {
                    Layout::Oihw => oihw_to_hwio(&shape, &data)?,
                    _ => (shape, data),
                };
                (kernel_name(layer), shape, data)
            }
        };
        if found.insert(name.clone(), ParamTensor { shape, data }).is_some() {
            return Err(usage(format!("{name} provided by more than one file")));
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("source".into(), "import-weights".into());
    meta.insert("layout".into(), format!("{layout:?}").to_lowercase());
    let c = Container {
        meta,
        tensors: found.into_iter().collect(),
    };
    // validates names, shapes and the channel chain
    FeatureExtractor::<f32>::from_container(&c)?;
    Ok(c)
}

pub fn run(args: ImportArgs) -> anyhow::Result<()> {
    if !args.input.is_dir() {
        return Err(usage(format!("{} is not a directory", args.input.display())));
    }
    let c = import_dir(&args.input, args.layout)?;
    c.save(&args.output)?;
    log::info!("wrote {} tensors to {}", c.tensors.len(), args.output.display());
    Ok(())
}
