//! Declarative M-16/M-32/M-64 layouts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum channel width of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    M16,
    M32,
    M64,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::M16, Variant::M32, Variant::M64];

    pub fn max_width(self) -> usize {
        match self {
            Variant::M16 => 16,
            Variant::M32 => 32,
            Variant::M64 => 64,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.max_width())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "m16" | "16" => Ok(Variant::M16),
            "m32" | "32" => Ok(Variant::M32),
            "m64" | "64" => Ok(Variant::M64),
            _ => Err(Error::Config(format!(
                "unknown variant `{s}` (expected m16, m32 or m64)"
            ))),
        }
    }
}

pub const INPUT_CHANNELS: usize = 3;
pub const DEFAULT_INPUT_SIZE: usize = 256;
pub const RESIDUAL_BLOCKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// 1 for binarization and grayscale cleanup, 3 for color cleanup.
    pub out_channels: usize,
    pub input_size: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant, out_channels: usize) -> Self {
        Self {
            variant,
            out_channels,
            input_size: DEFAULT_INPUT_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_channels != 1 && self.out_channels != 3 {
            return Err(Error::Config(format!(
                "out_channels must be 1 or 3, got {}",
                self.out_channels
            )));
        }
        if self.input_size == 0 {
            return Err(Error::Config("input_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu6,
    Sigmoid,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        name: String,
        c_in: usize,
        c_out: usize,
        batch_norm: bool,
        activation: Activation,
        bias: bool,
    },
    /// conv-BN-ReLU6-conv-BN, identity shortcut add, ReLU6.
    Residual { name: String, channels: usize },
    /// Adds the output of the named encoder layer to the running tensor.
    SkipAdd { from: String },
}

impl LayerSpec {
    pub fn name(&self) -> String {
        match self {
            LayerSpec::Conv { name, .. } | LayerSpec::Residual { name, .. } => name.clone(),
            LayerSpec::SkipAdd { from } => format!("skip<{from}>"),
        }
    }

    fn out_channels(&self, current: usize) -> usize {
        match self {
            LayerSpec::Conv { c_out, .. } => *c_out,
            LayerSpec::Residual { channels, .. } => *channels,
            LayerSpec::SkipAdd { .. } => current,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub config: ModelConfig,
    pub layers: Vec<LayerSpec>,
}

fn conv(name: &str, c_in: usize, c_out: usize) -> LayerSpec {
    LayerSpec::Conv {
        name: name.to_string(),
        c_in,
        c_out,
        batch_norm: true,
        activation: Activation::Relu6,
        bias: false,
    }
}

fn skip(from: &str) -> LayerSpec {
    LayerSpec::SkipAdd { from: from.to_string() }
}

impl LayerPlan {
    /// Builds the layout for `cfg`:
    ///
    /// * encoder: 3x3 convs widening 16 -> 32 -> 64 up to the variant width,
    /// * five residual blocks at the variant width,
    /// * decoder: five convs, the first ones narrowing back while adding
    ///   the shape-matched encoder outputs, the last one a sigmoid head.
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.out_channels;
        let mut layers = Vec::new();
        let enc_widths: &[usize] = match cfg.variant {
            Variant::M16 => &[16],
            Variant::M32 => &[16, 32],
            Variant::M64 => &[16, 32, 64],
        };
        let mut c = INPUT_CHANNELS;
        for (i, &w) in enc_widths.iter().enumerate() {
            layers.push(conv(&format!("enc{}", i + 1), c, w));
            c = w;
        }
        for i in 0..RESIDUAL_BLOCKS {
            layers.push(LayerSpec::Residual {
                name: format!("res{}", i + 1),
                channels: c,
            });
        }
        // Decoder: each step narrows to the matching encoder width and adds
        // that encoder's output, then hidden convs at width 16 up to four.
        let mut dec = 0;
        for i in (0..enc_widths.len()).rev() {
            dec += 1;
            let width = enc_widths[i];
            layers.push(conv(&format!("dec{dec}"), c, width));
            layers.push(skip(&format!("enc{}", i + 1)));
            c = width;
        }
        while dec < 4 {
            dec += 1;
            layers.push(conv(&format!("dec{dec}"), c, 16));
            c = 16;
        }
        layers.push(LayerSpec::Conv {
            name: "dec5".to_string(),
            c_in: c,
            c_out: out,
            batch_norm: false,
            activation: Activation::Sigmoid,
            bias: true,
        });
        let plan = Self { config: *cfg, layers };
        plan.validate()?;
        Ok(plan)
    }

    /// Checks channel continuity and that every skip joins equal shapes.
    pub fn validate(&self) -> Result<()> {
        let mut c = INPUT_CHANNELS;
        let mut outputs: Vec<(String, usize)> = Vec::new();
        let mut residuals = 0;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv { name, c_in, .. } => {
                    if *c_in != c {
                        return Err(Error::Config(format!(
                            "layer {name} expects {c_in} channels but receives {c}"
                        )));
                    }
                }
                LayerSpec::Residual { name, channels } => {
                    residuals += 1;
                    if *channels != c {
                        return Err(Error::Config(format!(
                            "residual block {name} has width {channels} but receives {c}"
                        )));
                    }
                }
                LayerSpec::SkipAdd { from } => {
                    let src = outputs
                        .iter()
                        .find(|(n, _)| n == from)
                        .ok_or_else(|| Error::Config(format!("skip source {from} not found")))?;
                    if src.1 != c {
                        return Err(Error::Config(format!(
                            "skip from {from} ({} channels) cannot join {c} channels",
                            src.1
                        )));
                    }
                }
            }
            c = layer.out_channels(c);
            outputs.push((layer.name(), c));
        }
        if residuals != RESIDUAL_BLOCKS {
            return Err(Error::Config(format!(
                "expected {RESIDUAL_BLOCKS} residual blocks, found {residuals}"
            )));
        }
        match self.layers.last() {
            Some(LayerSpec::Conv {
                activation: Activation::Sigmoid,
                c_out,
                ..
            }) if *c_out == self.config.out_channels => Ok(()),
            _ => Err(Error::Config(
                "final layer must be a sigmoid conv producing out_channels".into(),
            )),
        }
    }

    /// Index of the layer whose output a skip named `from` refers to.
    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name() == name)
    }
}
