use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// First and second moments per parameter, in `Model::params` order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// Completed optimizer steps.
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let zeros: Vec<Tensor> = model
            .params()
            .iter()
            .map(|(_, s)| Tensor::zeros_like(&s.value))
            .collect();
        AdamState {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Checks that moments line up with the model's parameters.
    pub fn check(&self, model: &Model) -> Result<()> {
        let params = model.params();
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer holds {} moments for {} parameters",
                self.m.len(),
                params.len()
            )));
        }
        for ((name, s), (m, v)) in params.iter().zip(self.m.iter().zip(&self.v)) {
            if m.shape() != s.value.shape() || v.shape() != s.value.shape() {
                return Err(Error::ShapeMismatch(format!("optimizer moments for {name}")));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update from the accumulated gradients, which are
/// zeroed afterwards. A non-finite gradient aborts before anything changes.
pub fn adam_step(model: &mut Model, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    state.check(model)?;
    for (name, slot) in model.params() {
        if let Some(i) = slot.grad.data().iter().position(|g| !g.is_finite()) {
            return Err(Error::numerical(
                format!("{name}[{i}]"),
                format!("non-finite gradient {}", slot.grad.data()[i]),
            ));
        }
    }
    let lr = config.learning_rate(state.t);
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (b1f, b2f, eps) = (b1 as f32, b2 as f32, config.adam_eps as f32);
    let (c1, c2, lr) = (c1 as f32, c2 as f32, lr as f32);
    for ((_, slot), (m, v)) in model
        .params_mut()
        .into_iter()
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let grads = slot.grad.data();
        let values = slot.value.data_mut();
        for (((p, &g), m), v) in values
            .iter_mut()
            .zip(grads)
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1f * *m + (1.0 - b1f) * g;
            *v = b2f * *v + (1.0 - b2f) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        slot.zero_grad();
    }
    Ok(())
}
