//! Dense NCHW tensors and the fixed set of differentiable operations the
//! network is built from.
//!
//! Every operation comes as a forward function plus an explicit backward
//! function taking the upstream gradient. There is no tape: callers keep the
//! intermediate values they need and call the backward functions in reverse.

mod conv;
mod ops;
mod scalar;

use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

pub use conv::{conv2d, conv2d_backward, ConvGrads, ConvParams};
pub use ops::{
    add, add_assign, batch_concat, channel_concat, channel_scale, channel_scale_backward, channel_split,
    global_avg_pool, global_avg_pool_backward, pixel_shuffle, pixel_unshuffle, relu,
    relu_backward, scale, sigmoid, sigmoid_backward, weighted_sum3, weighted_sum3_backward,
    WeightedSumGrads,
};
pub use scalar::Scalar;

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enables or disables batch-level parallelism inside the kernels.
///
/// Results are identical either way; disabling it gives a strictly
/// single-threaded execution for reproducibility checks and timing.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::SeqCst);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::SeqCst)
}

/// Shape of a rank-4 tensor in (batch, channels, rows, cols) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Elements per batch item.
    pub const fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.c, self.h, self.w)
    }
}

/// Rank-4 dense tensor, row-major in (n, c, h, w) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Result<Self> {
        check_dims(shape)?;
        Ok(Tensor {
            shape,
            data: vec![value; shape.len()],
        })
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        check_dims(shape)?;
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "tensor {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Single-element tensor of shape [1, 1, 1, 1].
    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Shape::new(1, 1, 1, 1),
            data: vec![value],
        }
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Tensor {
            shape: other.shape,
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: T) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let s = self.shape;
        debug_assert!(n < s.n && c < s.c && h < s.h && w < s.w);
        ((n * s.c + c) * s.h + h) * s.w + w
    }

    /// Reinterprets the same buffer under a new shape with equal length.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    /// Contiguous slice for one batch item.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.shape.item();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    /// Inner product accumulated in f64.
    pub fn dot(&self, other: &Tensor<T>) -> Result<f64> {
        same_shape("dot", self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.to_f64().unwrap() * b.to_f64().unwrap())
            .sum())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        same_shape("max_abs_diff", self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64().unwrap())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise conversion into another precision.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| U::from(v).expect("finite cast"))
                .collect(),
        }
    }

    /// Debug dump: four little-endian u32 dims then the values as little-endian f32.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in self.shape.dims() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &self.data {
            out.write_all(&v.to_f32().unwrap().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut dims = [0usize; 4];
        for d in &mut dims {
            input
                .read_exact(&mut word)
                .map_err(|e| Error::Parse(format!("tensor dump header: {e}")))?;
            *d = u32::from_le_bytes(word) as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        check_dims(shape)?;
        let mut data = Vec::with_capacity(shape.len());
        for _ in 0..shape.len() {
            input
                .read_exact(&mut word)
                .map_err(|e| Error::Parse(format!("tensor dump payload: {e}")))?;
            data.push(T::from(f32::from_le_bytes(word)).unwrap());
        }
        Tensor::from_vec(shape, data)
    }
}

fn check_dims(shape: Shape) -> Result<()> {
    if shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0 {
        return Err(Error::shape(format!(
            "all tensor dimensions must be >= 1, got {shape}"
        )));
    }
    Ok(())
}

pub(crate) fn same_shape<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(format!(
            "{op}: operand shapes differ ({} vs {})",
            a.shape, b.shape
        )));
    }
    Ok(())
}

/// A trainable value paired with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSlot<T = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> GradSlot<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros_like(&value);
        GradSlot { value, grad }
    }

    pub fn scalar(value: T) -> Self {
        Self::new(Tensor::scalar(value))
    }

    /// Value of a single-element slot.
    pub fn get(&self) -> T {
        self.value.data()[0]
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Adds `delta` into the gradient accumulator.
    pub fn accumulate(&mut self, delta: &Tensor<T>) -> Result<()> {
        add_assign(&mut self.grad, delta)
    }

    pub fn accumulate_scalar(&mut self, delta: T) {
        let g = &mut self.grad.data_mut()[0];
        *g = *g + delta;
    }

    pub fn cast<U: Scalar>(&self) -> GradSlot<U> {
        GradSlot {
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}
