use serde::{Deserialize, Serialize};

use super::{state_err, Layer, LayerSpec, Pass};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Silu,
    Identity,
    Sigmoid,
}

impl ActivationKind {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            ActivationKind::Relu => x.max(T::zero()),
            ActivationKind::Silu => x * sigmoid(x),
            ActivationKind::Identity => x,
            ActivationKind::Sigmoid => sigmoid(x),
        }
    }

    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            ActivationKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::Silu => {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            }
            ActivationKind::Identity => T::one(),
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Elementwise activation.
#[derive(Debug)]
pub struct Activation<T> {
    spec: LayerSpec,
    kind: ActivationKind,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(kind: ActivationKind) -> Self {
        Self {
            spec: LayerSpec::Activation(kind),
            kind,
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Activation<T> {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let kind = self.kind;
        let y = x.map(|v| kind.apply(v));
        self.input = pass.train.then(|| x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>, _pass: Pass) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| state_err("activation"))?;
        if dy.shape() != x.shape() {
            return Err(dim_err!("activation output gradient {:?}", dy.shape()));
        }
        let kind = self.kind;
        let dx = x.data().iter().zip(dy.data()).map(|(&v, &g)| g * kind.derivative(v)).collect();
        Tensor::new(x.shape().to_vec(), dx)
    }
}
