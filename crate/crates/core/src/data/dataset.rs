use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio;

/// What the clean targets represent; fixes the model's output channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorMode {
    Gray,
    Color,
    Binary,
}

impl ColorMode {
    pub fn out_channels(self) -> usize {
        match self {
            ColorMode::Color => 3,
            ColorMode::Gray | ColorMode::Binary => 1,
        }
    }
}

impl FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gray" | "grey" | "grayscale" => Ok(ColorMode::Gray),
            "color" | "colour" | "rgb" => Ok(ColorMode::Color),
            "binary" | "binarize" => Ok(ColorMode::Binary),
            _ => Err(Error::Config(format!("unknown color mode `{s}` (gray, color, binary)"))),
        }
    }
}

impl std::fmt::Display for ColorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColorMode::Gray => "gray",
            ColorMode::Color => "color",
            ColorMode::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub stem: String,
    pub noisy: PathBuf,
    pub clean: PathBuf,
    /// (height, width)
    pub dims: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedDataset {
    pub records: Vec<PairRecord>,
    pub color_mode: ColorMode,
}

fn stems(dir: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if !path.is_file() || !imageio::is_image(&path) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        out.entry(stem).or_default().push(path);
    }
    Ok(out)
}

/// Pairs `<root>/noisy/<stem>.*` with `<root>/clean/<stem>.*`.
///
/// Orphans, duplicate stems and size mismatches are collected and
/// reported together. An empty tree yields an empty dataset.
pub fn scan_pairs(root: &Path, color_mode: ColorMode) -> Result<PairedDataset> {
    let (noisy_dir, clean_dir) = (root.join("noisy"), root.join("clean"));
    for d in [&noisy_dir, &clean_dir] {
        if !d.is_dir() {
            return Err(Error::Config(format!(
                "dataset directory {} does not exist",
                d.display()
            )));
        }
    }
    let noisy = stems(&noisy_dir)?;
    let clean = stems(&clean_dir)?;
    let mut errors = Vec::new();
    let mut records = Vec::new();
    for (stem, paths) in &noisy {
        let Some(cpaths) = clean.get(stem) else {
            errors.push(format!("{}: no clean counterpart", paths[0].display()));
            continue;
        };
        if paths.len() > 1 || cpaths.len() > 1 {
            errors.push(format!("{stem}: ambiguous stem with several files"));
            continue;
        }
        let (n, c) = (&paths[0], &cpaths[0]);
        let (nd, cd) = match (imageio::dimensions(n), imageio::dimensions(c)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                errors.push(e.to_string());
                continue;
            }
        };
        if nd != cd {
            errors.push(format!(
                "{stem}: dimension mismatch, noisy {}x{} vs clean {}x{}",
                nd.1, nd.0, cd.1, cd.0
            ));
            continue;
        }
        records.push(PairRecord {
            stem: stem.clone(),
            noisy: n.clone(),
            clean: c.clone(),
            dims: nd,
        });
    }
    for (stem, paths) in &clean {
        if !noisy.contains_key(stem) {
            errors.push(format!("{}: no noisy counterpart", paths[0].display()));
        }
    }
    if !errors.is_empty() {
        return Err(Error::Dataset(errors));
    }
    if records.is_empty() {
        log::warn!("dataset at {} contains no image pairs", root.display());
    }
    Ok(PairedDataset { records, color_mode })
}
