use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct AdamState<T: Real = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    /// Default hyperparameters: beta1 0.9, beta2 0.999, eps 1e-8.
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update using each parameter's accumulated gradient.
    ///
    /// The parameter list must keep the same order and shapes between calls.
    pub fn step(&mut self, params: &mut [Tensor<T>]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} moment buffers for {} parameters",
                    self.m.len(),
                    params.len()
                ),
            ));
        }
        for (i, p) in params.iter().enumerate() {
            match p.grad() {
                None => {
                    return Err(Error::invalid(format!(
                        "adam_step: parameter {i} has no gradient"
                    )))
                }
                Some(g) if g.len() != self.m[i].len() => {
                    return Err(Error::shape(
                        "adam_step",
                        format!(
                            "parameter {i}: {} grads for {} moments",
                            g.len(),
                            self.m[i].len()
                        ),
                    ))
                }
                Some(_) => {}
            }
        }

        self.t += 1;
        let t = self.t as i32;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - self.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - self.beta2.powi(t));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad().map(<[T]>::to_vec).unwrap_or_default();
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(&g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("adam_step"));
        }
        Ok(())
    }
}
