use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named network sizes plus a free-form escape hatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    S,
    SD,
    M,
    L,
    Custom,
}

impl Variant {
    pub const NAMED: [Variant; 4] = [Variant::S, Variant::SD, Variant::M, Variant::L];

    /// (block count, trunk channels) of a named variant.
    pub fn dimensions(self) -> Option<(usize, usize)> {
        match self {
            Variant::S => Some((4, 32)),
            Variant::SD => Some((8, 16)),
            Variant::M => Some((12, 32)),
            Variant::L => Some((16, 32)),
            Variant::Custom => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::S => "S",
            Variant::SD => "SD",
            Variant::M => "M",
            Variant::L => "L",
            Variant::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Ok(Variant::S),
            "SD" => Ok(Variant::SD),
            "M" => Ok(Variant::M),
            "L" => Ok(Variant::L),
            "CUSTOM" => Ok(Variant::Custom),
            _ => Err(Error::config(format!(
                "unknown variant '{s}' (expected S, SD, M, L or custom)"
            ))),
        }
    }
}

/// Optional departures from the full architecture used for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    pub head_kernel: usize,
    pub projection: bool,
    pub channel_attention: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            head_kernel: 3,
            projection: true,
            channel_attention: true,
        }
    }
}

impl Ablation {
    /// Projection kept, channel attention dropped.
    pub fn no_attention() -> Self {
        Ablation {
            channel_attention: false,
            ..Self::default()
        }
    }

    /// Neither projection nor attention: plain residual trunk.
    pub fn baseline() -> Self {
        Ablation {
            projection: false,
            channel_attention: false,
            ..Self::default()
        }
    }
}

pub const SUPPORTED_SCALES: [usize; 3] = [2, 3, 4];
pub const HEAD_KERNELS: [usize; 4] = [1, 3, 5, 7];
pub const RES_INTERNAL_CHANNELS: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub scale: usize,
    pub n_blocks: usize,
    pub trunk_channels: usize,
    pub res_internal_channels: usize,
    pub head_kernel: usize,
    pub enable_projection: bool,
    pub enable_channel_attention: bool,
}

impl ModelConfig {
    /// Resolves a named variant at the given scale.
    pub fn variant(variant: Variant, scale: usize, ablation: Ablation) -> Result<Self> {
        let (n_blocks, trunk_channels) = variant.dimensions().ok_or_else(|| {
            Error::config("the custom variant needs explicit blocks and channels")
        })?;
        let config = ModelConfig {
            variant,
            scale,
            n_blocks,
            trunk_channels,
            res_internal_channels: RES_INTERNAL_CHANNELS,
            head_kernel: ablation.head_kernel,
            enable_projection: ablation.projection,
            enable_channel_attention: ablation.channel_attention,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn custom(scale: usize, n_blocks: usize, trunk_channels: usize) -> Result<Self> {
        let config = ModelConfig {
            variant: Variant::Custom,
            scale,
            n_blocks,
            trunk_channels,
            res_internal_channels: RES_INTERNAL_CHANNELS,
            head_kernel: 3,
            enable_projection: true,
            enable_channel_attention: true,
        };
        config.validate()?;
        Ok(config)
    }

    /// Two blocks of eight channels at ×2; the gradient-check configuration.
    pub fn micro() -> Self {
        Self::custom(2, 2, 8).expect("micro config is valid")
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Result<Self> {
        self.head_kernel = ablation.head_kernel;
        self.enable_projection = ablation.projection;
        self.enable_channel_attention = ablation.channel_attention;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_SCALES.contains(&self.scale) {
            return Err(Error::config(format!(
                "unsupported scale {} (expected 2, 3 or 4)",
                self.scale
            )));
        }
        if !HEAD_KERNELS.contains(&self.head_kernel) {
            return Err(Error::config(format!(
                "unsupported head kernel {} (expected 1, 3, 5 or 7)",
                self.head_kernel
            )));
        }
        if self.n_blocks == 0 || self.trunk_channels == 0 || self.res_internal_channels == 0 {
            return Err(Error::config("block count and channel widths must be positive"));
        }
        if self.enable_channel_attention && !self.enable_projection {
            return Err(Error::config(
                "channel attention operates on projected features and requires projection",
            ));
        }
        if let Some((blocks, channels)) = self.variant.dimensions() {
            if (blocks, channels) != (self.n_blocks, self.trunk_channels) {
                return Err(Error::config(format!(
                    "variant {} has {blocks} blocks of {channels} channels, config says {} of {}",
                    self.variant, self.n_blocks, self.trunk_channels
                )));
            }
        }
        Ok(())
    }

    /// Output channels of the tail and skip convolutions before pixel shuffle.
    pub fn upsample_channels(&self) -> usize {
        self.scale * self.scale * 3
    }

    /// Short label such as `SD x4` or `L x2 (no-CA)`.
    pub fn label(&self) -> String {
        let mut s = match self.variant {
            Variant::Custom => format!(
                "custom[L={},C={}] x{}",
                self.n_blocks, self.trunk_channels, self.scale
            ),
            v => format!("{v} x{}", self.scale),
        };
        if !self.enable_projection {
            s.push_str(" (baseline)");
        } else if !self.enable_channel_attention {
            s.push_str(" (no-CA)");
        }
        if self.head_kernel != 3 {
            s.push_str(&format!(" head{}x{}", self.head_kernel, self.head_kernel));
        }
        s
    }
}
