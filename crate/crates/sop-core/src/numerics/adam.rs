use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam hyper-parameters. Defaults are the standard ones.
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
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("adam lr must be > 0, got {}", self.lr)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!(
                    "adam {name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// One optimizer instance: first/second moment per parameter tensor plus the
/// shared step count. Each plug owns exactly one of these; they are never
/// shared or reset between epochs.
#[derive(Debug, Clone)]
pub struct Adam<F: Scalar> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Scalar> Adam<F> {
    /// Moments start at zero, shaped after the parameter list.
    pub fn new(config: AdamConfig, params: &[&Tensor<F>]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all parameter tensors. `params` and `grads` must
    /// line up with the list the optimizer was built from. Non-finite
    /// gradients are rejected before any state is touched, so a failed step
    /// leaves parameters and moments unchanged.
    pub fn step(&mut self, params: &mut [&mut Tensor<F>], grads: &[Tensor<F>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam built for {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::Shape(format!(
                    "adam tensor {i}: param {:?} / grad {:?} vs state {:?}",
                    p.shape(),
                    g.shape(),
                    self.m[i].shape()
                )));
            }
            g.ensure_finite("adam gradient")?;
        }

        self.step += 1;
        let b1 = F::from_f64_(self.config.beta1);
        let b2 = F::from_f64_(self.config.beta2);
        let one_m_b1 = F::from_f64_(1.0 - self.config.beta1);
        let one_m_b2 = F::from_f64_(1.0 - self.config.beta2);
        // Bias corrections in f64: beta^t underflows gracefully there.
        let bc1 = F::from_f64_(1.0 - self.config.beta1.powi(self.step as i32));
        let bc2 = F::from_f64_(1.0 - self.config.beta2.powi(self.step as i32));
        let lr = F::from_f64_(self.config.lr);
        let eps = F::from_f64_(self.config.eps);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for ((pe, &ge), (me, ve)) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *me = b1 * *me + one_m_b1 * ge;
                *ve = b2 * *ve + one_m_b2 * ge * ge;
                let mhat = *me / bc1;
                let vhat = *ve / bc2;
                *pe -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
