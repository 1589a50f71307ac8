//! Parameter and Mult-Add accounting.
//!
//! One multiply-accumulate counts as one Mult-Add. Only convolutions are
//! counted; batch normalization, activations and skip additions are not.

use serde::Serialize;

use crate::model::plan::{LayerPlan, LayerSpec};
use crate::nn::KERNEL;

const TAPS: u64 = (KERNEL * KERNEL) as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamStats {
    pub trainable_params: u64,
    pub mult_adds: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerStats {
    pub name: String,
    pub kind: &'static str,
    pub shape: String,
    pub params: u64,
    pub mult_adds: u64,
}

fn conv_params(c_in: usize, c_out: usize, bn: bool, bias: bool) -> u64 {
    let (ci, co) = (c_in as u64, c_out as u64);
    TAPS * ci * co + if bias { co } else { 0 } + if bn { 2 * co } else { 0 }
}

pub fn layer_breakdown(plan: &LayerPlan, h: usize, w: usize) -> Vec<LayerStats> {
    let px = (h * w) as u64;
    plan.layers
        .iter()
        .map(|layer| match layer {
            LayerSpec::Conv {
                name,
                c_in,
                c_out,
                batch_norm,
                bias,
                ..
            } => LayerStats {
                name: name.clone(),
                kind: "conv",
                shape: format!("3x3x{c_in}x{c_out}"),
                params: conv_params(*c_in, *c_out, *batch_norm, *bias),
                mult_adds: TAPS * (*c_in as u64) * (*c_out as u64) * px,
            },
            LayerSpec::Residual { name, channels } => LayerStats {
                name: name.clone(),
                kind: "residual",
                shape: format!("2x3x3x{channels}x{channels}"),
                params: 2 * conv_params(*channels, *channels, true, false),
                mult_adds: 2 * TAPS * (*channels as u64).pow(2) * px,
            },
            LayerSpec::SkipAdd { from } => LayerStats {
                name: layer.name(),
                kind: "skip-add",
                shape: format!("+{from}"),
                params: 0,
                mult_adds: 0,
            },
        })
        .collect()
}

/// Trainable parameters: conv kernels, the output bias and BN gamma/beta.
pub fn count_params(plan: &LayerPlan) -> u64 {
    layer_breakdown(plan, 1, 1).iter().map(|l| l.params).sum()
}

pub fn count_mult_adds(plan: &LayerPlan, h: usize, w: usize) -> u64 {
    layer_breakdown(plan, h, w).iter().map(|l| l.mult_adds).sum()
}

pub fn param_stats(plan: &LayerPlan, h: usize, w: usize) -> ParamStats {
    ParamStats {
        trainable_params: count_params(plan),
        mult_adds: count_mult_adds(plan, h, w),
    }
}
