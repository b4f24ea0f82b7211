use serde::Serialize;

use crate::error::{arg_err, dim_err, Result};
use crate::layers::Param;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
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
        let finite = [self.lr, self.beta1, self.beta2, self.eps, self.weight_decay]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(arg_err!("invalid Adam hyperparameters {self:?}"));
        }
        Ok(())
    }
}

/// Moment buffers, created lazily on the first step.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    /// Applies one update to every parameter from its accumulated gradient.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param<T>>) -> Result<()> {
        let params: Vec<&mut Param<T>> = params.into_iter().collect();
        for p in params.iter() {
            if p.grad.shape() != p.value.shape() {
                return Err(dim_err!("gradient {:?} for parameter {:?}", p.grad.shape(), p.value.shape()));
            }
        }
        if self.step == 0 {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(&params).any(|(m, p)| m.len() != p.value.len()) {
            return Err(dim_err!("parameter set changed between Adam steps"));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps, decay) = (T::lit(c.lr), T::lit(c.eps), T::lit(c.lr * c.weight_decay));
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                if c.weight_decay > 0.0 {
                    value[i] -= decay * value[i];
                }
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                value[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One update over explicit value/gradient arrays.
pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(dim_err!("{} parameters but {} gradients", params.len(), grads.len()));
    }
    let mut wrapped: Vec<Param<T>> = params
        .iter()
        .zip(grads)
        .map(|(p, g)| Param {
            name: "param",
            value: p.clone(),
            grad: g.clone(),
        })
        .collect();
    state.step(wrapped.iter_mut())?;
    for (p, w) in params.iter_mut().zip(wrapped) {
        *p = w.value;
    }
    Ok(())
}
