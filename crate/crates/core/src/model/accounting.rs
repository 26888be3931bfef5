use serde::Serialize;

use super::Model;
use crate::error::{Error, Result};
use crate::tensor::{ConvParams, Scalar};

/// Reference output resolution for multi-add figures.
pub const DEFAULT_HR_RESOLUTION: (usize, usize) = (1280, 720);

/// One convolution in the network, for summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub params: usize,
    /// True for layers applied to pooled 1×1 features.
    pub pooled: bool,
}

impl LayerInfo {
    fn of<T: Scalar>(name: String, conv: &ConvParams<T>, pooled: bool) -> Self {
        LayerInfo {
            name,
            kernel: conv.kernel(),
            in_channels: conv.in_channels(),
            out_channels: conv.out_channels(),
            params: conv.param_count(),
            pooled,
        }
    }

    /// Multiply-accumulates on an h×w feature grid.
    pub fn multiadds(&self, h: usize, w: usize) -> u64 {
        let area = if self.pooled { 1 } else { (h * w) as u64 };
        (self.kernel * self.kernel * self.in_channels * self.out_channels) as u64 * area
    }
}

impl<T: Scalar> Model<T> {
    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = vec![LayerInfo::of("head".into(), &self.head, false)];
        for (i, block) in self.blocks.iter().enumerate() {
            for (name, conv) in block.convs() {
                let pooled = name.starts_with("att");
                out.push(LayerInfo::of(format!("blocks.{i}.{name}"), conv, pooled));
            }
        }
        out.push(LayerInfo::of("tail".into(), &self.tail, false));
        out.push(LayerInfo::of("skip".into(), &self.skip, false));
        out
    }

    /// Every convolution weight and bias plus the three λ scalars per block.
    pub fn count_params(&self) -> usize {
        self.params().iter().map(|(_, s)| s.value.len()).sum()
    }

    /// Multiply-accumulates of one forward pass producing an H×W output.
    ///
    /// Trunk convolutions run at (H/p, W/p); pixel shuffle, pooling and
    /// activations are free.
    pub fn count_multiadds(&self, (width, height): (usize, usize)) -> Result<u64> {
        let p = self.config.scale;
        if width == 0 || height == 0 || width % p != 0 || height % p != 0 {
            return Err(Error::config(format!(
                "resolution {width}x{height} is not divisible by scale {p}"
            )));
        }
        let (h, w) = (height / p, width / p);
        Ok(self.layers().iter().map(|l| l.multiadds(h, w)).sum())
    }
}
