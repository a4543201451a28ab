use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unet::{ModelState, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::InvalidArgument(format!(
                "adam betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &ModelState<T>) -> Self {
        Self::with_sizes(model.params().values().map(|p| p.len()))
    }

    pub fn with_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        AdamState { m, v, t: 0 }
    }
}

/// Updates one parameter tensor in place with moment buffers `m` and `v`,
/// where `t` is the step number after incrementing (starting at 1).
pub fn adam_update<T: Real>(params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T], t: u64, lr: f64, cfg: &AdamConfig) {
    assert!(t >= 1);
    assert!(params.len() == grads.len() && m.len() == grads.len() && v.len() == grads.len());
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let bc1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(exp));
    let bc2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(exp));
    let lr = T::from_f64_lossy(lr);
    let eps = T::from_f64_lossy(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        let step = lr * m_hat / (v_hat.sqrt() + eps);
        if step != T::zero() {
            params[i] -= step;
        }
    }
}

/// Applies one Adam update to every parameter from its accumulated
/// gradient. Fails without touching anything if a gradient is not finite.
pub fn adam_step<T: Real>(model: &mut ModelState<T>, state: &mut AdamState<T>, lr: f64, cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != model.params().len() {
        return Err(Error::Shape(format!(
            "optimizer state has {} tensors, model has {}",
            state.m.len(),
            model.params().len()
        )));
    }
    for (name, g) in model.params().keys().zip(model.grads()) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { param: name.clone() });
        }
    }
    state.t += 1;
    let t = state.t;
    for ((_, p, g), (m, v)) in model
        .params_and_grads_mut()
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        adam_update(&mut p.data, g, m, v, t, lr, cfg);
    }
    Ok(())
}
