use rand::Rng;
use rayon::prelude::*;

use super::{parallel_enabled, GradSlot, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Weights and bias of a stride-1, size-preserving 2-D convolution.
///
/// Weights are laid out (out_ch, in_ch, k, k); the bias has shape (out_ch, 1, 1, 1).
/// Padding is always `k / 2` zeros on every side.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub weight: GradSlot<T>,
    pub bias: GradSlot<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize) -> Result<Self> {
        check_kernel(kernel)?;
        Ok(ConvParams {
            weight: GradSlot::new(Tensor::zeros(Shape::new(out_ch, in_ch, kernel, kernel))?),
            bias: GradSlot::new(Tensor::zeros(Shape::new(out_ch, 1, 1, 1))?),
        })
    }

    /// Fan-in scaled uniform weights in `±sqrt(1 / (in_ch * k * k))`, zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(in_ch, out_ch, kernel)?;
        let bound = (1.0 / (in_ch * kernel * kernel) as f64).sqrt();
        for w in p.weight.value.data_mut() {
            let u: f64 = rng.random_range(-bound..bound);
            *w = T::from(u).unwrap();
        }
        Ok(p)
    }

    pub fn from_tensors(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let ws = weight.shape();
        check_kernel(ws.h)?;
        if ws.h != ws.w {
            return Err(Error::shape(format!("conv kernel must be square, got {ws}")));
        }
        if bias.shape() != Shape::new(ws.n, 1, 1, 1) {
            return Err(Error::shape(format!(
                "conv bias {} does not match {} output channels",
                bias.shape(),
                ws.n
            )));
        }
        Ok(ConvParams {
            weight: GradSlot::new(weight),
            bias: GradSlot::new(bias),
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape().c
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape().n
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape().h
    }

    pub fn param_count(&self) -> usize {
        self.weight.value.len() + self.bias.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }

    pub fn accumulate(&mut self, grads: &ConvGrads<T>) -> Result<()> {
        self.weight.accumulate(&grads.weight)?;
        self.bias.accumulate(&grads.bias)
    }

    pub fn cast<U: Scalar>(&self) -> ConvParams<U> {
        ConvParams {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

fn check_kernel(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::config(format!("conv kernel must be odd, got {k}")));
    }
    Ok(())
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_input<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<()> {
    let cin = input.shape().c;
    if cin != params.in_channels() {
        return Err(Error::shape(format!(
            "conv2d: input has {cin} channels but weights {} expect {}",
            params.weight.value.shape(),
            params.in_channels()
        )));
    }
    Ok(())
}

/// Unrolls one (cin, h, w) item into a (cin*k*k, h*w) patch matrix.
fn im2col<T: Scalar>(src: &[T], cin: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    for c in 0..cin {
        let plane = &src[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * hw;
                let dst = &mut col[row..row + hw];
                // valid output columns x satisfy 0 <= x + kx - pad < w
                let x0 = pad.saturating_sub(kx);
                let x1 = (w + pad).saturating_sub(kx).min(w);
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let iy = y + ky;
                    if iy < pad || iy - pad >= h || x0 >= x1 {
                        out.fill(T::zero());
                        continue;
                    }
                    let iy = iy - pad;
                    out[..x0].fill(T::zero());
                    out[x1..].fill(T::zero());
                    let ix0 = x0 + kx - pad;
                    out[x0..x1].copy_from_slice(&plane[iy * w + ix0..iy * w + ix0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters a patch matrix back onto the image, accumulating.
fn col2im<T: Scalar>(col: &[T], cin: usize, h: usize, w: usize, k: usize, dst: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    for c in 0..cin {
        let plane = &mut dst[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * hw;
                let src = &col[row..row + hw];
                let x0 = pad.saturating_sub(kx);
                let x1 = (w + pad).saturating_sub(kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let iy = y + ky;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let iy = iy - pad;
                    let ix0 = x0 + kx - pad;
                    let target = &mut plane[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                    for (t, &s) in target.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *t = *t + s;
                    }
                }
            }
        }
    }
}

/// Stride-1 zero-padded cross-correlation plus per-channel bias.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    check_input(input, params)?;
    let s = input.shape();
    let (cin, cout, k) = (s.c, params.out_channels(), params.kernel());
    let hw = s.plane();
    let kk = cin * k * k;
    let weights = params.weight.value.data();
    let bias = params.bias.value.data();
    let mut out = Tensor::zeros(Shape::new(s.n, cout, s.h, s.w))?;

    let run = |(n, dst): (usize, &mut [T])| {
        let src = input.item(n);
        let mut buf;
        let col: &[T] = if k == 1 {
            src
        } else {
            buf = vec![T::zero(); kk * hw];
            im2col(src, cin, s.h, s.w, k, &mut buf);
            &buf
        };
        T::gemm(
            cout,
            kk,
            hw,
            T::one(),
            weights,
            (kk as isize, 1),
            col,
            (hw as isize, 1),
            T::zero(),
            dst,
            hw as isize,
        );
        for (o, row) in dst.chunks_mut(hw).enumerate() {
            let b = bias[o];
            row.iter_mut().for_each(|v| *v = *v + b);
        }
    };
    let chunk = cout * hw;
    if parallel_enabled() && s.n > 1 {
        out.data_mut().par_chunks_mut(chunk).enumerate().for_each(run);
    } else {
        out.data_mut().chunks_mut(chunk).enumerate().for_each(run);
    }
    Ok(out)
}

/// Analytic gradients of [`conv2d`] for upstream gradient `grad_out`.
///
/// Per-item weight and bias partials are summed in batch order, so the result
/// does not depend on whether the batch was processed in parallel.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    check_input(input, params)?;
    let s = input.shape();
    let (cin, cout, k) = (s.c, params.out_channels(), params.kernel());
    let expected = Shape::new(s.n, cout, s.h, s.w);
    if grad_out.shape() != expected {
        return Err(Error::shape(format!(
            "conv2d_backward: upstream gradient {} does not match output {expected}",
            grad_out.shape()
        )));
    }
    let hw = s.plane();
    let kk = cin * k * k;
    let weights = params.weight.value.data();

    let per_item = |n: usize| -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
        let src = input.item(n);
        let gout = grad_out.item(n);
        let mut buf;
        let col: &[T] = if k == 1 {
            src
        } else {
            buf = vec![T::zero(); kk * hw];
            im2col(src, cin, s.h, s.w, k, &mut buf);
            &buf
        };
        let mut dw = vec![T::zero(); cout * kk];
        T::gemm(
            cout,
            hw,
            kk,
            T::one(),
            gout,
            (hw as isize, 1),
            col,
            (1, hw as isize),
            T::zero(),
            &mut dw,
            kk as isize,
        );
        let db = gout
            .chunks(hw)
            .map(|row| row.iter().copied().fold(T::zero(), |a, b| a + b))
            .collect();
        let dx = need_input_grad.then(|| {
            let mut dcol = vec![T::zero(); kk * hw];
            T::gemm(
                kk,
                cout,
                hw,
                T::one(),
                weights,
                (1, kk as isize),
                gout,
                (hw as isize, 1),
                T::zero(),
                &mut dcol,
                hw as isize,
            );
            if k == 1 {
                dcol
            } else {
                let mut dx = vec![T::zero(); cin * hw];
                col2im(&dcol, cin, s.h, s.w, k, &mut dx);
                dx
            }
        });
        (dw, db, dx)
    };

    let parts: Vec<_> = if parallel_enabled() && s.n > 1 {
        (0..s.n).into_par_iter().map(per_item).collect()
    } else {
        (0..s.n).map(per_item).collect()
    };

    let mut weight = Tensor::zeros(params.weight.value.shape())?;
    let mut bias = Tensor::zeros(params.bias.value.shape())?;
    let mut input_grad = need_input_grad.then(|| Vec::with_capacity(s.len()));
    for (dw, db, dx) in parts {
        for (acc, v) in weight.data_mut().iter_mut().zip(dw) {
            *acc = *acc + v;
        }
        for (acc, v) in bias.data_mut().iter_mut().zip(db) {
            *acc = *acc + v;
        }
        if let (Some(all), Some(dx)) = (input_grad.as_mut(), dx) {
            all.extend(dx);
        }
    }
    let input = match input_grad {
        Some(v) => Some(Tensor::from_vec(s, v)?),
        None => None,
    };
    Ok(ConvGrads {
        input,
        weight,
        bias,
    })
}
