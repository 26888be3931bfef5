use super::{same_shape, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `grad` where the forward input was positive; the subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("relu_backward", input, grad)?;
    let data = input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Backward from the forward *output* `y`: `grad * y * (1 - y)`.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("sigmoid_backward", output, grad)?;
    let data = output
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor::from_vec(output.shape(), data)
}

/// Per-(n, c) spatial mean, producing an (n, c, 1, 1) tensor.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let area = s.plane() as f64;
    let data = input
        .data()
        .chunks(s.plane())
        .map(|plane| {
            let sum: f64 = plane.iter().map(|v| v.to_f64().unwrap()).sum();
            T::from(sum / area).unwrap()
        })
        .collect();
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), data).expect("pool shape")
}

/// Spreads each pooled gradient uniformly over the `input_shape` plane.
pub fn global_avg_pool_backward<T: Scalar>(
    grad: &Tensor<T>,
    input_shape: Shape,
) -> Result<Tensor<T>> {
    let gs = grad.shape();
    if gs != Shape::new(input_shape.n, input_shape.c, 1, 1) {
        return Err(Error::shape(format!(
            "global_avg_pool_backward: gradient {gs} does not pool {input_shape}"
        )));
    }
    let inv = T::one() / T::from(input_shape.plane()).unwrap();
    let mut data = Vec::with_capacity(input_shape.len());
    for &g in grad.data() {
        data.extend(std::iter::repeat_n(g * inv, input_shape.plane()));
    }
    Tensor::from_vec(input_shape, data)
}

/// Depth-to-space: (n, c·p², h, w) → (n, c, p·h, p·w) with
/// `out[n][c][h·p+i][w·p+j] = in[n][c·p²+i·p+j][h][w]`.
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if p == 0 || s.c % (p * p) != 0 {
        return Err(Error::config(format!(
            "pixel_shuffle: {} channels not divisible by {p}²",
            s.c
        )));
    }
    let c_out = s.c / (p * p);
    let out_shape = Shape::new(s.n, c_out, s.h * p, s.w * p);
    let mut out = vec![T::zero(); s.len()];
    let src = input.data();
    for n in 0..s.n {
        for c in 0..c_out {
            for i in 0..p {
                for j in 0..p {
                    let ci = c * p * p + i * p + j;
                    let base_in = (n * s.c + ci) * s.plane();
                    for y in 0..s.h {
                        let row_out = ((n * c_out + c) * out_shape.h + y * p + i) * out_shape.w;
                        for x in 0..s.w {
                            out[row_out + x * p + j] = src[base_in + y * s.w + x];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Space-to-depth, the exact inverse permutation of [`pixel_shuffle`]; also its backward.
pub fn pixel_unshuffle<T: Scalar>(input: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if p == 0 || s.h % p != 0 || s.w % p != 0 {
        return Err(Error::config(format!(
            "pixel_unshuffle: spatial size {}x{} not divisible by {p}",
            s.h, s.w
        )));
    }
    let (h, w) = (s.h / p, s.w / p);
    let c_out = s.c * p * p;
    let mut out = vec![T::zero(); s.len()];
    let src = input.data();
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..p {
                for j in 0..p {
                    let co = c * p * p + i * p + j;
                    let base_out = (n * c_out + co) * h * w;
                    for y in 0..h {
                        let row_in = ((n * s.c + c) * s.h + y * p + i) * s.w;
                        for x in 0..w {
                            out[base_out + y * w + x] = src[row_in + x * p + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(s.n, c_out, h, w), out)
}

/// Stacks items along the batch axis; all must share (c, h, w).
pub fn batch_concat<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::config("batch_concat: no inputs"))?
        .shape();
    let mut data = Vec::with_capacity(first.len() * parts.len());
    let mut n = 0;
    for t in parts {
        let s = t.shape();
        if (s.c, s.h, s.w) != (first.c, first.h, first.w) {
            return Err(Error::shape(format!("batch_concat: {s} does not stack with {first}")));
        }
        data.extend_from_slice(t.data());
        n += s.n;
    }
    Tensor::from_vec(Shape::new(n, first.c, first.h, first.w), data)
}

/// Concatenates along channels in argument order.
pub fn channel_concat<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::config("channel_concat: no inputs"))?
        .shape();
    let mut channels = 0;
    for (i, part) in parts.iter().enumerate() {
        let s = part.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::shape(format!(
                "channel_concat: part {i} is {s}, expected batch/spatial of {first}"
            )));
        }
        channels += s.c;
    }
    let shape = Shape::new(first.n, channels, first.h, first.w);
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..first.n {
        for part in parts {
            data.extend_from_slice(part.item(n));
        }
    }
    Tensor::from_vec(shape, data)
}

/// Splits along channels into consecutive pieces of the given widths.
pub fn channel_split<T: Scalar>(input: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = input.shape();
    let total: usize = widths.iter().sum();
    if total != s.c {
        return Err(Error::shape(format!(
            "channel_split: widths sum to {total} but tensor has {} channels",
            s.c
        )));
    }
    let plane = s.plane();
    let mut out: Vec<Vec<T>> = widths
        .iter()
        .map(|&c| Vec::with_capacity(s.n * c * plane))
        .collect();
    for n in 0..s.n {
        let item = input.item(n);
        let mut offset = 0;
        for (dst, &c) in out.iter_mut().zip(widths) {
            dst.extend_from_slice(&item[offset..offset + c * plane]);
            offset += c * plane;
        }
    }
    out.into_iter()
        .zip(widths)
        .map(|(data, &c)| Tensor::from_vec(Shape::new(s.n, c, s.h, s.w), data))
        .collect()
}

fn check_channel_factor<T: Scalar>(op: &str, x: &Tensor<T>, s: &Tensor<T>) -> Result<()> {
    let (xs, ss) = (x.shape(), s.shape());
    if ss != Shape::new(xs.n, xs.c, 1, 1) {
        return Err(Error::shape(format!(
            "{op}: factor {ss} does not match channels of {xs}"
        )));
    }
    Ok(())
}

/// Multiplies each (n, c) plane of `x` by `s[n][c]`.
pub fn channel_scale<T: Scalar>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    check_channel_factor("channel_scale", x, s)?;
    let plane = x.shape().plane();
    let mut out = x.clone();
    for (dst, &f) in out.data_mut().chunks_mut(plane).zip(s.data()) {
        dst.iter_mut().for_each(|v| *v = *v * f);
    }
    Ok(out)
}

/// Returns (d/dx, d/ds) of [`channel_scale`].
pub fn channel_scale_backward<T: Scalar>(
    x: &Tensor<T>,
    s: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_channel_factor("channel_scale_backward", x, s)?;
    same_shape("channel_scale_backward", x, grad)?;
    let grad_x = channel_scale(grad, s)?;
    let plane = x.shape().plane();
    let ds = x
        .data()
        .chunks(plane)
        .zip(grad.data().chunks(plane))
        .map(|(xp, gp)| {
            let acc: f64 = xp
                .iter()
                .zip(gp)
                .map(|(&a, &b)| a.to_f64().unwrap() * b.to_f64().unwrap())
                .sum();
            T::from(acc).unwrap()
        })
        .collect();
    Ok((grad_x, Tensor::from_vec(s.shape(), ds)?))
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}

pub fn add_assign<T: Scalar>(acc: &mut Tensor<T>, b: &Tensor<T>) -> Result<()> {
    same_shape("add_assign", acc, b)?;
    for (a, &v) in acc.data_mut().iter_mut().zip(b.data()) {
        *a = *a + v;
    }
    Ok(())
}

pub fn scale<T: Scalar>(x: &Tensor<T>, factor: T) -> Tensor<T> {
    x.map(|v| v * factor)
}

/// `la·a + lb·b + lc·c`.
pub fn weighted_sum3<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    la: T,
    lb: T,
    lc: T,
) -> Result<Tensor<T>> {
    same_shape("weighted_sum3", a, b)?;
    same_shape("weighted_sum3", a, c)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| la * x + lb * y + lc * z)
        .collect();
    Tensor::from_vec(a.shape(), data)
}

/// Gradients of [`weighted_sum3`] with respect to all six inputs.
#[derive(Debug, Clone)]
pub struct WeightedSumGrads<T = f32> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    pub la: T,
    pub lb: T,
    pub lc: T,
}

pub fn weighted_sum3_backward<T: Scalar>(
    (a, b, c): (&Tensor<T>, &Tensor<T>, &Tensor<T>),
    (la, lb, lc): (T, T, T),
    grad: &Tensor<T>,
) -> Result<WeightedSumGrads<T>> {
    same_shape("weighted_sum3_backward", a, grad)?;
    same_shape("weighted_sum3_backward", b, grad)?;
    same_shape("weighted_sum3_backward", c, grad)?;
    let cast = |v: f64| T::from(v).unwrap();
    Ok(WeightedSumGrads {
        a: scale(grad, la),
        b: scale(grad, lb),
        c: scale(grad, lc),
        la: cast(grad.dot(a)?),
        lb: cast(grad.dot(b)?),
        lc: cast(grad.dot(c)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: Shape, v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    fn random(shape: Shape, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-2.0..2.0)).collect())
            .unwrap()
    }

    #[test]
    fn relu_examples() {
        let x = t(Shape::new(1, 1, 1, 3), &[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = t(Shape::new(1, 1, 1, 3), &[5.0, 5.0, 5.0]);
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 5.0]);

        let neg = Tensor::full(Shape::new(2, 3, 2, 2), -0.5f32).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        let ones = Tensor::full(neg.shape(), 1.0).unwrap();
        assert!(relu_backward(&neg, &ones).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_matches_scalar_loop() {
        let x = random(Shape::new(2, 3, 4, 4), 9);
        let y = relu(&x);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert_eq!(*b, if *a > 0.0 { *a } else { 0.0 });
        }
    }

    #[test]
    fn sigmoid_values_and_saturation() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 30.0, -30.0]).unwrap();
        let y = sigmoid(&x);
        assert_eq!(y.data()[0], 0.5);
        assert!((y.data()[1] - 1.0).abs() < 1e-9);
        assert!(y.data()[2].abs() < 1e-9);
        assert!(y.data()[2] > 0.0 && y.data()[1] < 1.0);
        let g = Tensor::scalar(1.0);
        let d = sigmoid_backward(&sigmoid(&Tensor::scalar(0.0f64)), &g).unwrap();
        assert_eq!(d.data()[0], 0.25);
    }

    #[test]
    fn pool_examples() {
        let c7 = Tensor::full(Shape::new(2, 3, 5, 4), 7.0f32).unwrap();
        assert!(global_avg_pool(&c7).data().iter().all(|&v| (v - 7.0).abs() < 1e-6));
        let x = t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(global_avg_pool(&x).data(), &[2.5]);
        let g = t(Shape::new(1, 1, 1, 1), &[4.0]);
        assert_eq!(
            global_avg_pool_backward(&g, x.shape()).unwrap().data(),
            &[1.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn pool_matches_loop_sum() {
        let x = random(Shape::new(2, 3, 7, 5), 2);
        let p = global_avg_pool(&x);
        for n in 0..2 {
            for c in 0..3 {
                let mut s = 0.0f64;
                for h in 0..7 {
                    for w in 0..5 {
                        s += x.at(n, c, h, w) as f64;
                    }
                }
                assert!((p.at(n, c, 0, 0) as f64 - s / 35.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pixel_shuffle_index_formula() {
        let x = t(Shape::new(1, 4, 1, 1), &[1.0, 2.0, 3.0, 4.0]);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);

        let x = random(Shape::new(2, 18, 3, 4), 4);
        let y = pixel_shuffle(&x, 3).unwrap();
        for n in 0..2 {
            for c in 0..2 {
                for h in 0..3 {
                    for w in 0..4 {
                        for i in 0..3 {
                            for j in 0..3 {
                                assert_eq!(
                                    y.at(n, c, h * 3 + i, w * 3 + j),
                                    x.at(n, c * 9 + i * 3 + j, h, w)
                                );
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
        assert!(pixel_shuffle(&x, 4).is_err());
    }

    #[test]
    fn pixel_unshuffle_inverts_exactly() {
        for p in [2, 3, 4] {
            let x = random(Shape::new(2, 3 * p * p, 3, 5), p as u64);
            let back = pixel_unshuffle(&pixel_shuffle(&x, p).unwrap(), p).unwrap();
            assert_eq!(back, x);
        }
    }

    #[test]
    fn concat_examples_and_split() {
        let a = t(Shape::new(1, 2, 1, 1), &[1.0, 2.0]);
        let b = t(Shape::new(1, 2, 1, 1), &[3.0, 4.0]);
        let c = channel_concat(&[&a, &b]).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(channel_concat(&[&a]).unwrap(), a);
        let parts = channel_split(&c, &[2, 2]).unwrap();
        assert_eq!(parts, vec![a.clone(), b]);
        let wrong = t(Shape::new(1, 1, 1, 2), &[0.0, 0.0]);
        assert!(channel_concat(&[&a, &wrong]).is_err());
    }

    #[test]
    fn channel_scale_examples() {
        let x = random(Shape::new(2, 3, 4, 4), 6);
        let ones = Tensor::full(Shape::new(2, 3, 1, 1), 1.0).unwrap();
        assert_eq!(channel_scale(&x, &ones).unwrap(), x);
        let zeros = Tensor::zeros(Shape::new(2, 3, 1, 1)).unwrap();
        assert!(channel_scale(&x, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
        let (gx, _) = channel_scale_backward(&x, &zeros, &x).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));

        let s = random(Shape::new(2, 3, 1, 1), 7);
        let y = channel_scale(&x, &s).unwrap();
        for n in 0..2 {
            for c in 0..3 {
                for h in 0..4 {
                    for w in 0..4 {
                        let want = x.at(n, c, h, w) * s.at(n, c, 0, 0);
                        assert!((y.at(n, c, h, w) - want).abs() < 1e-6);
                    }
                }
            }
        }
        assert!(channel_scale(&x, &Tensor::zeros(Shape::new(2, 2, 1, 1)).unwrap()).is_err());
    }

    #[test]
    fn weighted_sum_examples() {
        let a = random(Shape::new(1, 2, 3, 3), 1);
        let z = Tensor::zeros_like(&a);
        assert_eq!(weighted_sum3(&a, &z, &z, 1.0, 1.0, 1.0).unwrap(), a);
        let b = random(a.shape(), 2);
        let out = weighted_sum3(&a, &b, &a, 0.0, 0.0, 0.0).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        let bad = Tensor::zeros(Shape::new(1, 1, 3, 3)).unwrap();
        assert!(weighted_sum3(&a, &bad, &a, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn add_examples() {
        let a = random(Shape::new(1, 2, 3, 3), 8);
        let z = Tensor::zeros_like(&a);
        assert_eq!(add(&a, &z).unwrap(), a);
        let neg = scale(&a, -1.0);
        assert!(add(&a, &neg).unwrap().data().iter().all(|&v| v == 0.0));
        let b = random(a.shape(), 9);
        assert_eq!(add(&a, &b).unwrap(), add(&b, &a).unwrap());
    }
}
