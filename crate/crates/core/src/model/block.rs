use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{
    add, add_assign, channel_concat, channel_scale, channel_scale_backward, channel_split,
    conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward, relu, relu_backward,
    scale, sigmoid, sigmoid_backward, weighted_sum3, weighted_sum3_backward, ConvParams,
    GradSlot, Scalar, Tensor,
};

use super::ModelConfig;

const CONV_SLOT_NAMES: [(&str, &str); 5] = [
    ("proj.weight", "proj.bias"),
    ("att1.weight", "att1.bias"),
    ("att2.weight", "att2.bias"),
    ("res1.weight", "res1.bias"),
    ("res2.weight", "res2.bias"),
];

/// One attentive auxiliary feature block.
///
/// Block `i` (1-based) projects the concatenation of all `i` earlier trunk
/// features down to `C` channels, gates the projection per channel, and mixes
/// it with a two-layer residual branch of its immediate predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct AafBlock<T = f32> {
    pub index: usize,
    pub proj: Option<ConvParams<T>>,
    pub att_conv1: Option<ConvParams<T>>,
    pub att_conv2: Option<ConvParams<T>>,
    pub res_conv1: ConvParams<T>,
    pub res_conv2: ConvParams<T>,
    pub lambda_res: GradSlot<T>,
    pub lambda_att: GradSlot<T>,
    pub lambda_x: GradSlot<T>,
}

/// Intermediate values of one block, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockTrace<T = f32> {
    concat: Option<Tensor<T>>,
    projected: Option<Tensor<T>>,
    attention: Option<AttentionTrace<T>>,
    res_hidden: Tensor<T>,
    res_active: Tensor<T>,
    res_out: Tensor<T>,
    /// The auxiliary term: gated projection, or the bare projection without attention.
    auxiliary: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
struct AttentionTrace<T> {
    pooled: Tensor<T>,
    hidden: Tensor<T>,
    active: Tensor<T>,
    gate: Tensor<T>,
}

impl<T> BlockTrace<T> {
    /// Pre-activation inputs of every ReLU in the block.
    pub fn relu_inputs(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.res_hidden];
        if let Some(att) = &self.attention {
            out.push(&att.hidden);
        }
        out
    }
}

impl<T: Scalar> AafBlock<T> {
    pub fn new<R: Rng + ?Sized>(index: usize, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let c = config.trunk_channels;
        let proj = if config.enable_projection {
            Some(ConvParams::init_uniform(index * c, c, 1, rng)?)
        } else {
            None
        };
        let (att_conv1, att_conv2) = if config.enable_channel_attention {
            (
                Some(ConvParams::init_uniform(c, c, 1, rng)?),
                Some(ConvParams::init_uniform(c, c, 1, rng)?),
            )
        } else {
            (None, None)
        };
        let internal = config.res_internal_channels;
        Ok(AafBlock {
            index,
            proj,
            att_conv1,
            att_conv2,
            res_conv1: ConvParams::init_uniform(c, internal, 3, rng)?,
            res_conv2: ConvParams::init_uniform(internal, c, 3, rng)?,
            lambda_res: GradSlot::scalar(T::one()),
            lambda_att: GradSlot::scalar(T::one()),
            lambda_x: GradSlot::scalar(T::one()),
        })
    }

    pub fn lambdas(&self) -> (T, T, T) {
        (self.lambda_res.get(), self.lambda_att.get(), self.lambda_x.get())
    }

    /// Named parameter slots in a stable order.
    pub fn params(&self) -> Vec<(&'static str, &GradSlot<T>)> {
        let convs = [
            self.proj.as_ref(),
            self.att_conv1.as_ref(),
            self.att_conv2.as_ref(),
            Some(&self.res_conv1),
            Some(&self.res_conv2),
        ];
        let mut out = Vec::new();
        for ((weight, bias), conv) in CONV_SLOT_NAMES.iter().zip(convs) {
            if let Some(conv) = conv {
                out.push((*weight, &conv.weight));
                out.push((*bias, &conv.bias));
            }
        }
        out.push(("lambda_res", &self.lambda_res));
        out.push(("lambda_att", &self.lambda_att));
        out.push(("lambda_x", &self.lambda_x));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut GradSlot<T>)> {
        let convs = [
            self.proj.as_mut(),
            self.att_conv1.as_mut(),
            self.att_conv2.as_mut(),
            Some(&mut self.res_conv1),
            Some(&mut self.res_conv2),
        ];
        let mut out = Vec::new();
        for ((weight, bias), conv) in CONV_SLOT_NAMES.iter().zip(convs) {
            if let Some(conv) = conv {
                out.push((*weight, &mut conv.weight));
                out.push((*bias, &mut conv.bias));
            }
        }
        out.push(("lambda_res", &mut self.lambda_res));
        out.push(("lambda_att", &mut self.lambda_att));
        out.push(("lambda_x", &mut self.lambda_x));
        out
    }

    /// Convolutions with their names, for accounting.
    pub fn convs(&self) -> Vec<(&'static str, &ConvParams<T>)> {
        [
            ("proj", self.proj.as_ref()),
            ("att1", self.att_conv1.as_ref()),
            ("att2", self.att_conv2.as_ref()),
            ("res1", Some(&self.res_conv1)),
            ("res2", Some(&self.res_conv2)),
        ]
        .into_iter()
        .filter_map(|(n, c)| c.map(|c| (n, c)))
        .collect()
    }

    fn check_history(&self, history: &[&Tensor<T>]) -> Result<()> {
        if history.len() != self.index {
            return Err(Error::config(format!(
                "block {} needs {} earlier features, got {}",
                self.index,
                self.index,
                history.len()
            )));
        }
        let c = self.res_conv1.in_channels();
        let first = history[0].shape();
        for (i, h) in history.iter().enumerate() {
            let s = h.shape();
            if s.c != c || (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                return Err(Error::shape(format!(
                    "block {}: feature x{i} is {s}, expected {c} channels matching {first}",
                    self.index
                )));
            }
        }
        Ok(())
    }

    /// Computes `x_i` from `[x_0, .., x_{i-1}]`, returning the trace for backward.
    pub fn forward_traced(&self, history: &[&Tensor<T>]) -> Result<(Tensor<T>, BlockTrace<T>)> {
        self.check_history(history)?;
        let prev = history[self.index - 1];

        let (concat, projected, attention, auxiliary) = match &self.proj {
            Some(proj) => {
                let concat = channel_concat(history)?;
                let projected = conv2d(&concat, proj)?;
                match (&self.att_conv1, &self.att_conv2) {
                    (Some(c1), Some(c2)) => {
                        let pooled = global_avg_pool(&projected);
                        let hidden = conv2d(&pooled, c1)?;
                        let active = relu(&hidden);
                        let gate = sigmoid(&conv2d(&active, c2)?);
                        let gated = channel_scale(&projected, &gate)?;
                        let trace = AttentionTrace {
                            pooled,
                            hidden,
                            active,
                            gate,
                        };
                        (Some(concat), Some(projected), Some(trace), Some(gated))
                    }
                    _ => {
                        let aux = projected.clone();
                        (Some(concat), Some(projected), None, Some(aux))
                    }
                }
            }
            None => (None, None, None, None),
        };

        let res_hidden = conv2d(prev, &self.res_conv1)?;
        let res_active = relu(&res_hidden);
        let res_out = conv2d(&res_active, &self.res_conv2)?;

        let (l_res, l_att, l_x) = self.lambdas();
        let out = match &auxiliary {
            Some(aux) => weighted_sum3(&res_out, aux, prev, l_res, l_att, l_x)?,
            None => add(&scale(&res_out, l_res), &scale(prev, l_x))?,
        };
        let trace = BlockTrace {
            concat,
            projected,
            attention,
            res_hidden,
            res_active,
            res_out,
            auxiliary,
        };
        Ok((out, trace))
    }

    pub fn forward(&self, history: &[&Tensor<T>]) -> Result<Tensor<T>> {
        self.forward_traced(history).map(|(out, _)| out)
    }

    /// Accumulates parameter gradients and returns the gradient for each
    /// history entry `x_0 .. x_{i-1}`.
    pub fn backward(
        &mut self,
        history: &[&Tensor<T>],
        trace: &BlockTrace<T>,
        grad: &Tensor<T>,
    ) -> Result<Vec<Tensor<T>>> {
        self.check_history(history)?;
        let prev = history[self.index - 1];
        let (l_res, l_att, l_x) = self.lambdas();

        let (g_res, g_aux, g_prev) = match &trace.auxiliary {
            Some(aux) => {
                let g = weighted_sum3_backward((&trace.res_out, aux, prev), (l_res, l_att, l_x), grad)?;
                self.lambda_res.accumulate_scalar(g.la);
                self.lambda_att.accumulate_scalar(g.lb);
                self.lambda_x.accumulate_scalar(g.lc);
                (g.a, Some(g.b), g.c)
            }
            None => {
                let cast = |v: f64| T::from(v).unwrap();
                self.lambda_res.accumulate_scalar(cast(grad.dot(&trace.res_out)?));
                self.lambda_x.accumulate_scalar(cast(grad.dot(prev)?));
                (scale(grad, l_res), None, scale(grad, l_x))
            }
        };

        let mut history_grads: Vec<Tensor<T>> =
            history.iter().map(|h| Tensor::zeros_like(h)).collect();
        add_assign(&mut history_grads[self.index - 1], &g_prev)?;

        // residual branch
        let g2 = conv2d_backward(&trace.res_active, &self.res_conv2, &g_res, true)?;
        self.res_conv2.accumulate(&g2)?;
        let g_hidden = relu_backward(&trace.res_hidden, g2.input.as_ref().unwrap())?;
        let g1 = conv2d_backward(prev, &self.res_conv1, &g_hidden, true)?;
        self.res_conv1.accumulate(&g1)?;
        add_assign(&mut history_grads[self.index - 1], g1.input.as_ref().unwrap())?;

        // auxiliary branch
        if let (Some(g_aux), Some(proj)) = (g_aux, self.proj.as_mut()) {
            let projected = trace.projected.as_ref().unwrap();
            let g_projected = match (&trace.attention, &mut self.att_conv1, &mut self.att_conv2) {
                (Some(att), Some(c1), Some(c2)) => {
                    let (mut g_proj, g_gate) = channel_scale_backward(projected, &att.gate, &g_aux)?;
                    let g_logit = sigmoid_backward(&att.gate, &g_gate)?;
                    let gc2 = conv2d_backward(&att.active, c2, &g_logit, true)?;
                    c2.accumulate(&gc2)?;
                    let g_h = relu_backward(&att.hidden, gc2.input.as_ref().unwrap())?;
                    let gc1 = conv2d_backward(&att.pooled, c1, &g_h, true)?;
                    c1.accumulate(&gc1)?;
                    let g_pool =
                        global_avg_pool_backward(gc1.input.as_ref().unwrap(), projected.shape())?;
                    add_assign(&mut g_proj, &g_pool)?;
                    g_proj
                }
                _ => g_aux,
            };
            let concat = trace.concat.as_ref().unwrap();
            let gp = conv2d_backward(concat, proj, &g_projected, true)?;
            proj.accumulate(&gp)?;
            let widths: Vec<usize> = history.iter().map(|h| h.shape().c).collect();
            let parts = channel_split(gp.input.as_ref().unwrap(), &widths)?;
            for (acc, part) in history_grads.iter_mut().zip(&parts) {
                add_assign(acc, part)?;
            }
        }
        Ok(history_grads)
    }

    pub fn cast<U: Scalar>(&self) -> AafBlock<U> {
        AafBlock {
            index: self.index,
            proj: self.proj.as_ref().map(ConvParams::cast),
            att_conv1: self.att_conv1.as_ref().map(ConvParams::cast),
            att_conv2: self.att_conv2.as_ref().map(ConvParams::cast),
            res_conv1: self.res_conv1.cast(),
            res_conv2: self.res_conv2.cast(),
            lambda_res: self.lambda_res.cast(),
            lambda_att: self.lambda_att.cast(),
            lambda_x: self.lambda_x.cast(),
        }
    }
}
