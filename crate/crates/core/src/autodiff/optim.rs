use super::{AutodiffError, ParamStore, Tensor};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam. Moments start at zero and are sized on the first
/// step.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn first_moments(&self) -> &[Vec<S>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<S>] {
        &self.v
    }

    /// One update with `grads[i]` belonging to parameter `i` of `store`.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &[Tensor<S>]) -> Result<(), AutodiffError> {
        if grads.len() != store.len() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            if store.tensor(id).shape() != g.shape() {
                return Err(AutodiffError::ShapeMismatch(format!(
                    "gradient {:?} for parameter {} of shape {:?}",
                    g.shape(),
                    store.name(id),
                    store.tensor(id).shape()
                )));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![S::zero(); g.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.numel()) {
            return Err(AutodiffError::ShapeMismatch("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let bc1 = S::of(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = S::of(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (S::of(c.lr), S::of(c.eps));
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = store.tensor_mut(id).data_mut();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((w, g), m), v) in p.iter_mut().zip(grads[k].data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (S::one() - b1) * *g;
                *v = b2 * *v + (S::one() - b2) * *g * *g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
