use rand::Rng;

use super::conv::add_into;
use super::{split_batch, state_err, uniform, Layer, LayerSpec, Param, Pass};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{gemm, Op, Tensor};

/// Fully connected layer `y = x · Wᵀ + b` with `W` stored `[d_out, d_in]`.
#[derive(Debug)]
pub struct Linear<T> {
    spec: LayerSpec,
    d_in: usize,
    d_out: usize,
    params: Vec<Param<T>>,
    input: Option<Tensor<T>>,
    needs_input_grad: bool,
}

impl<T: Scalar> Linear<T> {
    pub fn init<R: Rng>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        let LayerSpec::Linear { d_in, d_out } = spec else {
            return Err(dim_err!("Linear built from {} spec", spec.kind()));
        };
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight = Tensor::from_fn([d_out, d_in], |_| uniform(rng, bound))?;
        let bias = Tensor::from_fn([d_out], |_| uniform(rng, bound))?;
        Ok(Self {
            spec,
            d_in,
            d_out,
            params: vec![Param::new("weight", weight), Param::new("bias", bias)],
            input: None,
            needs_input_grad: true,
        })
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.params[0].value
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.params[1].value
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (n, sample) = split_batch(x, "linear")?;
        self.spec.output_shape(sample)?;
        let mut y = vec![T::zero(); n * self.d_out];
        let w = self.params[0].value.data();
        gemm(Op::N, Op::T, n, self.d_in, self.d_out, T::one(), x.data(), w, T::zero(), &mut y);
        let bias = self.params[1].value.data();
        for row in y.chunks_mut(self.d_out) {
            row.iter_mut().zip(bias).for_each(|(v, &b)| *v += b);
        }
        self.input = pass.train.then(|| x.clone());
        Tensor::new([n, self.d_out], y)
    }

    fn backward(&mut self, dy: &Tensor<T>, _pass: Pass) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| state_err("linear"))?;
        let n = x.shape()[0];
        if dy.shape() != [n, self.d_out] {
            return Err(dim_err!("linear output gradient {:?}", dy.shape()));
        }
        let mut dw = vec![T::zero(); self.d_out * self.d_in];
        gemm(Op::T, Op::N, self.d_out, n, self.d_in, T::one(), dy.data(), x.data(), T::zero(), &mut dw);
        let mut db = vec![T::zero(); self.d_out];
        for row in dy.data().chunks(self.d_out) {
            db.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
        }
        let mut dx = vec![T::zero(); n * self.d_in];
        if self.needs_input_grad {
            let w = self.params[0].value.data();
            gemm(Op::N, Op::N, n, self.d_out, self.d_in, T::one(), dy.data(), w, T::zero(), &mut dx);
        }
        add_into(&mut self.params[0].grad, &dw);
        add_into(&mut self.params[1].grad, &db);
        Tensor::new([n, self.d_in], dx)
    }

    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    fn set_needs_input_grad(&mut self, needed: bool) {
        self.needs_input_grad = needed;
    }
}
