use super::{split_batch, state_err, Layer, LayerSpec, Pass};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `Flatten` or a fixed per-sample `Reshape`; the batch axis is kept.
#[derive(Debug)]
pub struct Reshape {
    spec: LayerSpec,
    input_shape: Option<Vec<usize>>,
}

impl Reshape {
    pub fn new(spec: LayerSpec) -> Result<Self> {
        match spec {
            LayerSpec::Flatten | LayerSpec::Reshape(_) => Ok(Self {
                spec,
                input_shape: None,
            }),
            _ => Err(dim_err!("Reshape built from {} spec", spec.kind())),
        }
    }
}

impl<T: Scalar> Layer<T> for Reshape {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (n, sample) = split_batch(x, self.spec.kind())?;
        let mut shape = vec![n];
        shape.extend(self.spec.output_shape(sample)?);
        self.input_shape = pass.train.then(|| x.shape().to_vec());
        x.clone().reshape(shape)
    }

    fn backward(&mut self, dy: &Tensor<T>, _pass: Pass) -> Result<Tensor<T>> {
        let shape = self.input_shape.as_ref().ok_or_else(|| state_err(self.spec.kind()))?;
        dy.clone().reshape(shape.clone())
    }
}
