use super::ops::Tensor;
use super::real::Real;
use crate::error::{Error, Result};

/// A loss value together with its gradient w.r.t. each network output.
#[derive(Debug, Clone)]
pub struct LossRecord<T = f32> {
    value: f64,
    output_grads: Vec<Tensor<T>>,
}

impl<T: Real> LossRecord<T> {
    pub fn new(value: f64, output_grads: Vec<Tensor<T>>) -> Self {
        LossRecord { value, output_grads }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn output_grads(&self) -> &[Tensor<T>] {
        &self.output_grads
    }

    /// Multiplies the value and every gradient by `factor`.
    pub fn scale(mut self, factor: f64) -> Self {
        self.value *= factor;
        let f = T::from_f64_lossy(factor);
        for g in &mut self.output_grads {
            g.data.iter_mut().for_each(|v| *v *= f);
        }
        self
    }
}

/// Mean squared error over every element of every image in the batch.
pub fn mse_loss<T: Real>(outputs: &[Tensor<T>], targets: &[Tensor<T>]) -> Result<LossRecord<T>> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::Shape(format!(
            "loss needs equally many outputs and targets, got {} and {}",
            outputs.len(),
            targets.len()
        )));
    }
    for (o, t) in outputs.iter().zip(targets) {
        if o.shape() != t.shape() {
            return Err(Error::Shape(format!(
                "output {:?} does not match target {:?}",
                o.shape(),
                t.shape()
            )));
        }
    }
    let n: usize = outputs.iter().map(|o| o.data.len()).sum();
    let mut sum = 0.0f64;
    let scale = T::from_f64_lossy(2.0 / n as f64);
    let grads = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| {
            let data = o
                .data
                .iter()
                .zip(&t.data)
                .map(|(&y, &target)| {
                    let d = y - target;
                    sum += d.as_f64() * d.as_f64();
                    d * scale
                })
                .collect();
            Tensor { c: o.c, h: o.h, w: o.w, data }
        })
        .collect();
    Ok(LossRecord::new(sum / n as f64, grads))
}
