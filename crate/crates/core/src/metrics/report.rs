use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::imageio;
use crate::metrics::{drd, fmeasure, psnr, ssim};
use crate::perceptual::luma;
use crate::tensor::Tensor4;
use crate::tiler::{binarize, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binarize,
    Gray,
    Color,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binarize" | "binary" => Ok(Task::Binarize),
            "gray" | "grey" => Ok(Task::Gray),
            "color" | "colour" => Ok(Task::Color),
            _ => Err(Error::Config(format!("unknown task `{s}` (binarize, gray, color)"))),
        }
    }
}

/// PSNR peak convention: 8-bit code values or unit range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PsnrPeak {
    #[serde(rename = "255")]
    EightBit,
    #[serde(rename = "1")]
    Unit,
}

impl PsnrPeak {
    pub fn value(self) -> f64 {
        match self {
            PsnrPeak::EightBit => 255.0,
            PsnrPeak::Unit => 1.0,
        }
    }
}

impl FromStr for PsnrPeak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "255" => Ok(PsnrPeak::EightBit),
            "1" | "1.0" => Ok(PsnrPeak::Unit),
            _ => Err(Error::Config(format!("PSNR peak must be 255 or 1, got `{s}`"))),
        }
    }
}

fn finite_or_string<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&fmt_value(*v))
    }
}

fn opt_finite_or_string<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => finite_or_string(v, s),
        None => s.serialize_none(),
    }
}

fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

/// One image's scores. F-measure and DRD exist for the binarization task only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub stem: String,
    #[serde(serialize_with = "opt_finite_or_string")]
    pub fmeasure: Option<f64>,
    #[serde(serialize_with = "finite_or_string")]
    pub psnr: f64,
    #[serde(serialize_with = "opt_finite_or_string")]
    pub drd: Option<f64>,
    #[serde(serialize_with = "finite_or_string")]
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub task: Task,
    pub psnr_peak: PsnrPeak,
    pub rows: Vec<MetricRow>,
    pub mean: MetricRow,
}

fn mean_of(rows: &[MetricRow], f: impl Fn(&MetricRow) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = rows.iter().map(f).collect();
    vals.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricReport {
    pub fn new(task: Task, psnr_peak: PsnrPeak, rows: Vec<MetricRow>) -> Self {
        let mean = MetricRow {
            stem: "mean".into(),
            fmeasure: mean_of(&rows, |r| r.fmeasure),
            psnr: mean_of(&rows, |r| Some(r.psnr)).unwrap_or(f64::NAN),
            drd: mean_of(&rows, |r| r.drd),
            ssim: mean_of(&rows, |r| Some(r.ssim)).unwrap_or(f64::NAN),
        };
        MetricReport {
            task,
            psnr_peak,
            rows,
            mean,
        }
    }

    /// `stem,fmeasure,psnr,drd,ssim` rows followed by the mean row.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_value).unwrap_or_default();
        let mut s = String::from("stem,fmeasure,psnr,drd,ssim\n");
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.stem,
                opt(r.fmeasure),
                fmt_value(r.psnr),
                opt(r.drd),
                fmt_value(r.ssim)
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn to_unit_luma(x: &Tensor4<f32>) -> Result<Tensor4<f32>> {
    if x.shape().c == 1 {
        Ok(x.clone())
    } else {
        luma(x)
    }
}

fn scale(x: &Tensor4<f32>, peak: PsnrPeak) -> Tensor4<f64> {
    x.cast::<f64>().map(|v| v * peak.value())
}

/// Scores one prediction against its ground truth, both in `[0, 1]`.
pub fn score_pair(stem: &str, pred: &Tensor4<f32>, gt: &Tensor4<f32>, task: Task, peak: PsnrPeak) -> Result<MetricRow> {
    let (pred, gt) = match task {
        Task::Color => (pred.clone(), gt.clone()),
        Task::Gray | Task::Binarize => (to_unit_luma(pred)?, to_unit_luma(gt)?),
    };
    let (fm, dr) = if task == Task::Binarize {
        let b = binarize(&pred, DEFAULT_THRESHOLD);
        (Some(fmeasure(&b, &gt)?), Some(drd(&b, &gt)?))
    } else {
        (None, None)
    };
    let (lp, lg) = (to_unit_luma(&pred)?, to_unit_luma(&gt)?);
    Ok(MetricRow {
        stem: stem.to_string(),
        fmeasure: fm,
        psnr: psnr(&scale(&pred, peak), &scale(&gt, peak), peak.value())?,
        drd: dr,
        ssim: ssim(&scale(&lp, peak), &scale(&lg, peak), peak.value())?,
    })
}

/// Scores in-memory `(stem, prediction, ground truth)` triples in parallel.
pub fn evaluate_pairs(
    pairs: &[(String, Tensor4<f32>, Tensor4<f32>)],
    task: Task,
    peak: PsnrPeak,
) -> Result<MetricReport> {
    let rows = pairs
        .par_iter()
        .map(|(stem, p, g)| score_pair(stem, p, g, task, peak))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::new(task, peak, rows))
}

fn image_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for e in rd {
        let path = e
            .map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if path.is_file() && imageio::is_image(&path) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Matches `pred_dir` and `gt_dir` by file stem and scores every pair;
/// any unmatched stem is an error listing them all.
pub fn evaluate(pred_dir: &Path, gt_dir: &Path, task: Task, peak: PsnrPeak) -> Result<MetricReport> {
    let (report, unmatched) = evaluate_matched(pred_dir, gt_dir, task, peak)?;
    if unmatched.is_empty() {
        Ok(report)
    } else {
        Err(Error::Dataset(unmatched))
    }
}

/// Scores the stems present in both directories and lists the rest.
pub fn evaluate_matched(
    pred_dir: &Path,
    gt_dir: &Path,
    task: Task,
    peak: PsnrPeak,
) -> Result<(MetricReport, Vec<String>)> {
    let preds = image_stems(pred_dir)?;
    let gts = image_stems(gt_dir)?;
    let mut unmatched: Vec<String> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .map(|k| format!("{k}: no ground truth in {}", gt_dir.display()))
        .collect();
    unmatched.extend(
        gts.keys()
            .filter(|k| !preds.contains_key(*k))
            .map(|k| format!("{k}: no prediction in {}", pred_dir.display())),
    );
    let load = |p: &Path| match task {
        Task::Color => imageio::load_rgb(p),
        Task::Gray | Task::Binarize => imageio::load_gray(p),
    };
    let pairs = preds
        .iter()
        .filter(|(stem, _)| gts.contains_key(*stem))
        .map(|(stem, p)| Ok((stem.clone(), load(p)?, load(&gts[stem])?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((evaluate_pairs(&pairs, task, peak)?, unmatched))
}
