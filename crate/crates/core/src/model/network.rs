use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::block::{AafBlock, BlockTrace};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{
    add, add_assign, conv2d, conv2d_backward, pixel_shuffle, pixel_unshuffle, ConvParams,
    GradSlot, Scalar, Tensor,
};

/// The full network: head convolution, stacked blocks, and the sum of an
/// upsampled tail and an upsampled global skip from the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub config: ModelConfig,
    pub head: ConvParams<T>,
    pub blocks: Vec<AafBlock<T>>,
    pub tail: ConvParams<T>,
    pub skip: ConvParams<T>,
}

/// Everything the backward pass needs from one training forward.
#[derive(Debug, Clone)]
pub struct ModelTrace<T = f32> {
    input: Tensor<T>,
    /// Trunk features x_0 ..= x_L.
    features: Vec<Tensor<T>>,
    blocks: Vec<BlockTrace<T>>,
}

impl<T> ModelTrace<T> {
    pub fn features(&self) -> &[Tensor<T>] {
        &self.features
    }

    pub fn blocks(&self) -> &[BlockTrace<T>] {
        &self.blocks
    }
}

/// Per-block feature factors (λ_res, λ_att, λ_x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaTriple {
    pub block: usize,
    pub res: f64,
    pub att: f64,
    pub x: f64,
}

impl<T: Scalar> Model<T> {
    /// Builds a model with fan-in uniform weights, zero biases and unit λ.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.trunk_channels;
        let up = config.upsample_channels();
        let head = ConvParams::init_uniform(3, c, config.head_kernel, &mut rng)?;
        let blocks = (1..=config.n_blocks)
            .map(|i| AafBlock::new(i, &config, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let tail = ConvParams::init_uniform(c, up, 3, &mut rng)?;
        let skip = ConvParams::init_uniform(3, up, 3, &mut rng)?;
        Ok(Model {
            config,
            head,
            blocks,
            tail,
            skip,
        })
    }

    pub fn scale(&self) -> usize {
        self.config.scale
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.shape().c != 3 {
            return Err(Error::config(format!(
                "model input must have 3 channels, got {}",
                input.shape()
            )));
        }
        Ok(())
    }

    /// Super-resolves an (n, 3, h, w) batch to (n, 3, p·h, p·w).
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut features = vec![conv2d(input, &self.head)?];
        for block in &self.blocks {
            let history: Vec<&Tensor<T>> = features.iter().collect();
            let next = block.forward(&history)?;
            features.push(next);
        }
        let last = features.last().unwrap();
        self.reconstruct(input, last)
    }

    fn reconstruct(&self, input: &Tensor<T>, last: &Tensor<T>) -> Result<Tensor<T>> {
        let p = self.config.scale;
        let tail = pixel_shuffle(&conv2d(last, &self.tail)?, p)?;
        let skip = pixel_shuffle(&conv2d(input, &self.skip)?, p)?;
        add(&tail, &skip)
    }

    /// Forward pass that keeps the intermediates required by [`Model::backward`].
    pub fn forward_train(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ModelTrace<T>)> {
        self.check_input(input)?;
        let mut features = vec![conv2d(input, &self.head)?];
        let mut traces = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let history: Vec<&Tensor<T>> = features.iter().collect();
            let (next, trace) = block.forward_traced(&history)?;
            features.push(next);
            traces.push(trace);
        }
        let output = self.reconstruct(input, features.last().unwrap())?;
        let trace = ModelTrace {
            input: input.clone(),
            features,
            blocks: traces,
        };
        Ok((output, trace))
    }

    /// Accumulates ∂loss/∂θ into every parameter slot given ∂loss/∂output.
    pub fn backward(&mut self, trace: &ModelTrace<T>, grad_output: &Tensor<T>) -> Result<()> {
        let p = self.config.scale;
        let last = trace.features.last().unwrap();
        let g_up = pixel_unshuffle(grad_output, p)?;

        let g_skip = conv2d_backward(&trace.input, &self.skip, &g_up, false)?;
        self.skip.accumulate(&g_skip)?;
        let g_tail = conv2d_backward(last, &self.tail, &g_up, true)?;
        self.tail.accumulate(&g_tail)?;

        let mut feature_grads: Vec<Tensor<T>> =
            trace.features.iter().map(Tensor::zeros_like).collect();
        feature_grads[self.blocks.len()] = g_tail.input.unwrap();

        // x_i only feeds blocks > i, so its gradient is complete when block i runs
        for (i, block) in self.blocks.iter_mut().enumerate().rev() {
            let history: Vec<&Tensor<T>> = trace.features[..=i].iter().collect();
            let grad = std::mem::replace(
                &mut feature_grads[i + 1],
                Tensor::zeros_like(&trace.features[i + 1]),
            );
            let history_grads = block.backward(&history, &trace.blocks[i], &grad)?;
            for (acc, g) in feature_grads.iter_mut().zip(&history_grads) {
                add_assign(acc, g)?;
            }
        }

        let g_head = conv2d_backward(&trace.input, &self.head, &feature_grads[0], false)?;
        self.head.accumulate(&g_head)
    }

    /// Named parameter slots in a stable order (the checkpoint order).
    pub fn params(&self) -> Vec<(String, &GradSlot<T>)> {
        let mut out = vec![
            ("head.weight".to_string(), &self.head.weight),
            ("head.bias".to_string(), &self.head.bias),
        ];
        for (i, block) in self.blocks.iter().enumerate() {
            for (name, slot) in block.params() {
                out.push((format!("blocks.{i}.{name}"), slot));
            }
        }
        out.push(("tail.weight".to_string(), &self.tail.weight));
        out.push(("tail.bias".to_string(), &self.tail.bias));
        out.push(("skip.weight".to_string(), &self.skip.weight));
        out.push(("skip.bias".to_string(), &self.skip.bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut GradSlot<T>)> {
        let mut out = vec![
            ("head.weight".to_string(), &mut self.head.weight),
            ("head.bias".to_string(), &mut self.head.bias),
        ];
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (name, slot) in block.params_mut() {
                out.push((format!("blocks.{i}.{name}"), slot));
            }
        }
        out.push(("tail.weight".to_string(), &mut self.tail.weight));
        out.push(("tail.bias".to_string(), &mut self.tail.bias));
        out.push(("skip.weight".to_string(), &mut self.skip.weight));
        out.push(("skip.bias".to_string(), &mut self.skip.bias));
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, slot) in self.params_mut() {
            slot.zero_grad();
        }
    }

    pub fn lambda_report(&self) -> Vec<LambdaTriple> {
        self.blocks
            .iter()
            .map(|b| {
                let (res, att, x) = b.lambdas();
                LambdaTriple {
                    block: b.index,
                    res: res.to_f64().unwrap(),
                    att: att.to_f64().unwrap(),
                    x: x.to_f64().unwrap(),
                }
            })
            .collect()
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            head: self.head.cast(),
            blocks: self.blocks.iter().map(AafBlock::cast).collect(),
            tail: self.tail.cast(),
            skip: self.skip.cast(),
        }
    }
}

/// λ table as CSV with a header row.
pub fn lambda_csv(report: &[LambdaTriple]) -> String {
    let mut out = String::from("block,lambda_res,lambda_att,lambda_x\n");
    for t in report {
        out.push_str(&format!("{},{},{},{}\n", t.block, t.res, t.att, t.x));
    }
    out
}
