use crate::error::Result;
use crate::tensor::{same_shape, Scalar, Tensor};

/// Mean absolute error and its gradient `sign(pred - target) / N`, with sign(0) = 0.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    same_shape("l1_loss", pred, target)?;
    let n = pred.len() as f64;
    let inv = T::from(1.0 / n).unwrap();
    let mut sum = 0.0f64;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.abs().to_f64().unwrap();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((sum / n, Tensor::from_vec(pred.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_inputs_give_zero() {
        let a = Tensor::<f32>::full(Shape::new(1, 3, 2, 2), 0.3).unwrap();
        let (loss, grad) = l1_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_offset() {
        let t = Tensor::<f64>::full(Shape::new(2, 3, 2, 2), 0.25).unwrap();
        let p = t.map(|v| v + 0.5);
        let (loss, grad) = l1_loss(&p, &t).unwrap();
        assert!((loss - 0.5).abs() < 1e-12);
        assert!(grad.data().iter().all(|&g| (g - 1.0 / 24.0).abs() < 1e-15));
    }

    #[test]
    fn matches_elementwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shape = Shape::new(2, 3, 4, 4);
        let mut gen = || -> Tensor<f32> {
            Tensor::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(0.0..1.0)).collect())
                .unwrap()
        };
        let (p, t) = (gen(), gen());
        let (loss, _) = l1_loss(&p, &t).unwrap();
        let mut acc = 0.0f64;
        for (a, b) in p.data().iter().zip(t.data()) {
            acc += (*a as f64 - *b as f64).abs();
        }
        assert!((loss - acc / shape.len() as f64).abs() < 1e-6);
        assert!(l1_loss(&p, &Tensor::zeros(Shape::new(1, 1, 1, 1)).unwrap()).is_err());
    }
}
