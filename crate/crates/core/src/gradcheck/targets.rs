//! Ready-made objectives for checking each kernel op and the whole network.
//!
//! Every objective is a fixed random projection `Σ R ⊙ f(θ)` so that each
//! output element contributes with a different weight.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    cross_precision_gradcheck, finite_diff_gradcheck, sign_signature, Evaluation,
    GradCheckReport, GradTarget, Precision, SIGNATURE_SEED,
};
use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::tensor::{self, ConvParams, GradSlot, Scalar, Shape, Tensor};
use crate::train::l1_loss;

type Forward<T> = fn(&[&Tensor<T>]) -> Result<Tensor<T>>;
type Backward<T> = fn(&[&Tensor<T>], &Tensor<T>) -> Result<Vec<Tensor<T>>>;
/// Tensors whose sign pattern selects the branch of a piecewise-linear op.
type Branches<T> = fn(&[&Tensor<T>]) -> Result<Vec<Tensor<T>>>;

fn smooth<T: Scalar>(_: &[&Tensor<T>]) -> Result<Vec<Tensor<T>>> {
    Ok(Vec::new())
}

/// A single op (or short chain) with all of its inputs as parameters.
pub struct OpTarget<T: Scalar> {
    pub name: &'static str,
    slots: Vec<(String, GradSlot<T>)>,
    projection: Tensor<T>,
    forward: Forward<T>,
    backward: Backward<T>,
    branches: Branches<T>,
}

// Values are drawn as f32 so every precision builds a bit-identical instance.
fn random<T: Scalar>(shape: Shape, lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let data = (0..shape.len())
        .map(|_| T::from(rng.random_range(lo..hi)).unwrap())
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Values with magnitude in [0.1, 1] and random sign, clear of ReLU/L1 kinks.
fn away_from_zero<T: Scalar>(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let data = (0..shape.len())
        .map(|_| {
            let m: f32 = rng.random_range(0.1..1.0);
            T::from(if rng.random_bool(0.5) { m } else { -m }).unwrap()
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn values<'a, T: Scalar>(slots: &'a [(String, GradSlot<T>)]) -> Vec<&'a Tensor<T>> {
    slots.iter().map(|(_, s)| &s.value).collect()
}

/// Per-element terms `R ⊙ out`, each formed exactly in f64.
fn project<T: Scalar>(out: &Tensor<T>, projection: &Tensor<T>) -> Vec<f64> {
    out.data()
        .iter()
        .zip(projection.data())
        .map(|(a, b)| a.to_f64().unwrap() * b.to_f64().unwrap())
        .collect()
}

impl<T: Scalar> OpTarget<T> {
    fn build(
        name: &'static str,
        inputs: Vec<(&str, Tensor<T>)>,
        forward: Forward<T>,
        backward: Backward<T>,
        branches: Branches<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let slots: Vec<(String, GradSlot<T>)> = inputs
            .into_iter()
            .map(|(n, t)| (format!("{name}.{n}"), GradSlot::new(t)))
            .collect();
        let out_shape = forward(&values(&slots))?.shape();
        let projection = random(out_shape, -1.0, 1.0, rng);
        Ok(OpTarget {
            name,
            slots,
            projection,
            forward,
            backward,
            branches,
        })
    }

    /// One objective per kernel op, plus conv→relu and the L1 loss, for a seed.
    pub fn all(seed: u64) -> Result<Vec<Self>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = &mut rng;
        let s = |n, c, h, w| Shape::new(n, c, h, w);
        let mut out = Vec::new();

        out.push(Self::build(
            "conv2d",
            vec![
                ("input", random(s(2, 3, 5, 5), -1.0, 1.0, r)),
                ("weight", random(s(4, 3, 3, 3), -0.5, 0.5, r)),
                ("bias", random(s(4, 1, 1, 1), -0.5, 0.5, r)),
            ],
            |v| conv2d_of(v),
            |v, g| {
                let p = conv_params(v)?;
                let grads = tensor::conv2d_backward(v[0], &p, g, true)?;
                Ok(vec![grads.input.unwrap(), grads.weight, grads.bias])
            },
            smooth,
            r,
        )?);
        out.push(Self::build(
            "conv2d_relu",
            vec![
                ("input", random(s(1, 2, 6, 6), -1.0, 1.0, r)),
                ("weight", random(s(3, 2, 3, 3), -0.5, 0.5, r)),
                ("bias", random(s(3, 1, 1, 1), -0.2, 0.2, r)),
            ],
            |v| Ok(tensor::relu(&conv2d_of(v)?)),
            |v, g| {
                let p = conv_params(v)?;
                let pre = tensor::conv2d(v[0], &p)?;
                let g_pre = tensor::relu_backward(&pre, g)?;
                let grads = tensor::conv2d_backward(v[0], &p, &g_pre, true)?;
                Ok(vec![grads.input.unwrap(), grads.weight, grads.bias])
            },
            |v| Ok(vec![conv2d_of(v)?]),
            r,
        )?);
        out.push(Self::build(
            "relu",
            vec![("input", away_from_zero(s(2, 3, 4, 4), r))],
            |v| Ok(tensor::relu(v[0])),
            |v, g| Ok(vec![tensor::relu_backward(v[0], g)?]),
            |v| Ok(vec![v[0].clone()]),
            r,
        )?);
        out.push(Self::build(
            "sigmoid",
            vec![("input", random(s(2, 3, 4, 4), -4.0, 4.0, r))],
            |v| Ok(tensor::sigmoid(v[0])),
            |v, g| Ok(vec![tensor::sigmoid_backward(&tensor::sigmoid(v[0]), g)?]),
            smooth,
            r,
        )?);
        out.push(Self::build(
            "global_avg_pool",
            vec![("input", random(s(2, 3, 5, 4), -1.0, 1.0, r))],
            |v| Ok(tensor::global_avg_pool(v[0])),
            |v, g| Ok(vec![tensor::global_avg_pool_backward(g, v[0].shape())?]),
            smooth,
            r,
        )?);
        out.push(Self::build(
            "pixel_shuffle",
            vec![("input", random(s(2, 12, 3, 4), -1.0, 1.0, r))],
            |v| tensor::pixel_shuffle(v[0], 2),
            |_, g| Ok(vec![tensor::pixel_unshuffle(g, 2)?]),
            smooth,
            r,
        )?);
        out.push(Self::build(
            "channel_concat",
            vec![
                ("a", random(s(2, 2, 3, 3), -1.0, 1.0, r)),
                ("b", random(s(2, 3, 3, 3), -1.0, 1.0, r)),
                ("c", random(s(2, 1, 3, 3), -1.0, 1.0, r)),
            ],
            |v| tensor::channel_concat(v),
            |v, g| {
                let widths: Vec<usize> = v.iter().map(|t| t.shape().c).collect();
                tensor::channel_split(g, &widths)
            },
            smooth,
            r,
        )?);
        out.push(Self::build(
            "channel_scale",
            vec![
                ("x", random(s(2, 3, 4, 4), -1.0, 1.0, r)),
                ("s", random(s(2, 3, 1, 1), -1.0, 1.0, r)),
            ],
            |v| tensor::channel_scale(v[0], v[1]),
            |v, g| {
                let (gx, gs) = tensor::channel_scale_backward(v[0], v[1], g)?;
                Ok(vec![gx, gs])
            },
            smooth,
            r,
        )?);
        out.push(Self::build(
            "weighted_sum3",
            vec![
                ("a", random(s(1, 2, 3, 3), -1.0, 1.0, r)),
                ("b", random(s(1, 2, 3, 3), -1.0, 1.0, r)),
                ("c", random(s(1, 2, 3, 3), -1.0, 1.0, r)),
                ("lambda_a", random(s(1, 1, 1, 1), 0.2, 1.5, r)),
                ("lambda_b", random(s(1, 1, 1, 1), 0.2, 1.5, r)),
                ("lambda_c", random(s(1, 1, 1, 1), 0.2, 1.5, r)),
            ],
            |v| {
                let l = |i: usize| v[i].data()[0];
                tensor::weighted_sum3(v[0], v[1], v[2], l(3), l(4), l(5))
            },
            |v, g| {
                let l = |i: usize| v[i].data()[0];
                let w = tensor::weighted_sum3_backward((v[0], v[1], v[2]), (l(3), l(4), l(5)), g)?;
                Ok(vec![
                    w.a,
                    w.b,
                    w.c,
                    Tensor::scalar(w.la),
                    Tensor::scalar(w.lb),
                    Tensor::scalar(w.lc),
                ])
            },
            smooth,
            r,
        )?);
        out.push(Self::build(
            "add",
            vec![
                ("a", random(s(2, 2, 3, 3), -1.0, 1.0, r)),
                ("b", random(s(2, 2, 3, 3), -1.0, 1.0, r)),
            ],
            |v| tensor::add(v[0], v[1]),
            |_, g| Ok(vec![g.clone(), g.clone()]),
            smooth,
            r,
        )?);
        let target = random::<f32>(s(1, 3, 4, 4), -1.0, 1.0, r);
        let pred = tensor::add(&target, &away_from_zero(target.shape(), r))?.cast::<T>();
        let target = target.cast::<T>();
        out.push(Self::build(
            "l1_loss",
            vec![("pred", pred), ("target", target)],
            // the loss is a scalar; broadcast it into a 1-element tensor
            |v| Ok(Tensor::scalar(T::from(l1_loss(v[0], v[1])?.0).unwrap())),
            |v, g| {
                let (_, grad_pred) = l1_loss(v[0], v[1])?;
                let up = g.data()[0];
                let gp = tensor::scale(&grad_pred, up);
                Ok(vec![gp.clone(), tensor::scale(&gp, -T::one())])
            },
            |v| Ok(vec![tensor::add(v[0], &tensor::scale(v[1], -T::one()))?]),
            r,
        )?);
        Ok(out)
    }
}

/// Checks every op objective for one seed; wide mode probes the f64 kernels,
/// standard mode scores the f32 kernels against an f64 reference.
pub fn check_ops(precision: Precision, seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let config = precision.config(seed);
    let mut wide = OpTarget::<f64>::all(seed)?;
    match precision {
        Precision::Wide => wide
            .iter_mut()
            .map(|t| Ok((t.name, finite_diff_gradcheck(t, &config)?)))
            .collect(),
        Precision::Standard => OpTarget::<f32>::all(seed)?
            .iter_mut()
            .zip(wide.iter_mut())
            .map(|(t, r)| Ok((t.name, cross_precision_gradcheck(t, r, &config)?)))
            .collect(),
    }
}

/// Checks the whole network built from `config` for one seed.
pub fn check_model(
    config: &ModelConfig,
    input_size: (usize, usize),
    precision: Precision,
    seed: u64,
) -> Result<GradCheckReport> {
    let check = precision.config(seed);
    let mut wide = ModelTarget::<f64>::new(config.clone(), input_size, seed)?;
    match precision {
        Precision::Wide => finite_diff_gradcheck(&mut wide, &check),
        Precision::Standard => {
            let mut narrow = ModelTarget::<f32>::new(config.clone(), input_size, seed)?;
            cross_precision_gradcheck(&mut narrow, &mut wide, &check)
        }
    }
}

fn conv_params<T: Scalar>(v: &[&Tensor<T>]) -> Result<ConvParams<T>> {
    ConvParams::from_tensors(v[1].clone(), v[2].clone())
}

fn conv2d_of<T: Scalar>(v: &[&Tensor<T>]) -> Result<Tensor<T>> {
    tensor::conv2d(v[0], &conv_params(v)?)
}

impl<T: Scalar> GradTarget<T> for OpTarget<T> {
    fn slot_count(&self) -> usize {
        self.slots.len()
    }

    fn slot_name(&self, index: usize) -> String {
        self.slots[index].0.clone()
    }

    fn slot_mut(&mut self, index: usize) -> &mut GradSlot<T> {
        &mut self.slots[index].1
    }

    fn evaluate(&self) -> Result<Evaluation> {
        let v = values(&self.slots);
        let signature = (self.branches)(&v)?
            .iter()
            .fold(SIGNATURE_SEED, |h, t| sign_signature(h, t.data()));
        Ok(Evaluation {
            terms: project(&(self.forward)(&v)?, &self.projection),
            signature,
        })
    }

    fn evaluate_with_grad(&mut self) -> Result<f64> {
        let grads = (self.backward)(&values(&self.slots), &self.projection)?;
        for ((_, slot), g) in self.slots.iter_mut().zip(grads) {
            slot.grad = g;
        }
        Ok(self.evaluate()?.value())
    }
}

/// The whole network on a fixed input under a random output projection.
pub struct ModelTarget<T: Scalar> {
    pub model: Model<T>,
    input: Tensor<T>,
    projection: Tensor<T>,
    names: Vec<String>,
}

impl<T: Scalar> ModelTarget<T> {
    /// Builds the model in f32 from `seed`, then casts it, so both precisions
    /// check the same network.
    pub fn new(config: ModelConfig, input_size: (usize, usize), seed: u64) -> Result<Self> {
        let mut model = Model::<f32>::new(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        // non-trivial biases and λ so every parameter carries signal
        for (name, slot) in model.params_mut() {
            if name.ends_with(".bias") {
                for b in slot.value.data_mut() {
                    *b = rng.random_range(-0.1..0.1);
                }
            } else if name.contains("lambda") {
                slot.value.data_mut()[0] = rng.random_range(0.5..1.5);
            }
        }
        let model = model.cast::<T>();
        let (h, w) = input_size;
        let input = random(Shape::new(1, 3, h, w), 0.0, 1.0, &mut rng);
        let p = model.config.scale;
        let projection = random(Shape::new(1, 3, h * p, w * p), -1.0, 1.0, &mut rng);
        let names = model.params().into_iter().map(|(n, _)| n).collect();
        Ok(ModelTarget {
            model,
            input,
            projection,
            names,
        })
    }
}

impl<T: Scalar> GradTarget<T> for ModelTarget<T> {
    fn slot_count(&self) -> usize {
        self.names.len()
    }

    fn slot_name(&self, index: usize) -> String {
        self.names[index].clone()
    }

    fn slot_mut(&mut self, index: usize) -> &mut GradSlot<T> {
        self.model
            .params_mut()
            .into_iter()
            .nth(index)
            .map(|(_, s)| s)
            .expect("slot index in range")
    }

    fn evaluate(&self) -> Result<Evaluation> {
        let (out, trace) = self.model.forward_train(&self.input)?;
        let signature = trace
            .blocks()
            .iter()
            .flat_map(|b| b.relu_inputs())
            .fold(SIGNATURE_SEED, |h, t| sign_signature(h, t.data()));
        Ok(Evaluation {
            terms: project(&out, &self.projection),
            signature,
        })
    }

    fn evaluate_with_grad(&mut self) -> Result<f64> {
        self.model.zero_grad();
        let (out, trace) = self.model.forward_train(&self.input)?;
        self.model.backward(&trace, &self.projection)?;
        Ok(project(&out, &self.projection).iter().sum())
    }
}
