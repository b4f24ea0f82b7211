//! Sequential composition of layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, dim_err, Result};
use crate::layers::{build_layer, Layer, LayerSpec, Param, Pass};
use crate::par::Exec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// What the network's last layer emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Unnormalised class scores, trained with softmax cross-entropy.
    Logits(usize),
    /// Per-label probabilities (the last layer is a sigmoid), trained with BCE.
    Probabilities(usize),
}

impl Head {
    pub fn arity(self) -> usize {
        match self {
            Head::Logits(n) | Head::Probabilities(n) => n,
        }
    }
}

/// Shape-level description of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    /// Per-sample input shape.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub head: Head,
}

impl ModelSpec {
    /// Checks that adjacent shapes compose and the output matches the head.
    pub fn validate(&self) -> Result<()> {
        let shapes = self.layer_inputs()?;
        let out = match (self.layers.last(), shapes.last()) {
            (Some(last), Some(input)) => last.output_shape(input)?,
            _ => return Err(arg_err!("model {} has no layers", self.name)),
        };
        if out != [self.head.arity()] {
            return Err(dim_err!(
                "model {} emits {out:?}, head expects [{}]",
                self.name,
                self.head.arity()
            ));
        }
        Ok(())
    }

    /// Per-sample input shape of every layer.
    pub fn layer_inputs(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for layer in &self.layers {
            let next = layer.output_shape(&cur)?;
            shapes.push(std::mem::replace(&mut cur, next));
        }
        Ok(shapes)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn mac_count(&self, batch: usize) -> Result<usize> {
        let shapes = self.layer_inputs()?;
        self.layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| l.mac_count(s, batch))
            .sum()
    }

    /// Index of the last layer carrying weights: the classifier, which is
    /// never pruned.
    pub fn classifier_index(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| l.out_channels().is_some())
    }
}

/// An instantiated model.
pub struct Model<T: Scalar> {
    spec: ModelSpec,
    layers: Vec<Box<dyn Layer<T>>>,
    input_shapes: Vec<Vec<usize>>,
    exec: Exec,
}

impl<T: Scalar> std::fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.spec.name)
            .field("layers", &self.spec.layers.len())
            .field("params", &self.param_count())
            .finish()
    }
}

impl<T: Scalar> Model<T> {
    /// Builds the model; the same spec and seed give bit-identical parameters.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let input_shapes = spec.layer_inputs()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (l, shape) in spec.layers.iter().zip(&input_shapes) {
            layers.push(build_layer::<T, _>(l, shape, &mut rng)?);
        }
        if let Some(first) = layers.first_mut() {
            first.set_needs_input_grad(false);
        }
        Ok(Self {
            spec,
            layers,
            input_shapes,
            exec: Exec::default(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<T>>] {
        &mut self.layers
    }

    /// Input-gradient flag of the first layer, for gradient checks on inputs.
    pub fn set_needs_input_grad(&mut self, needed: bool) {
        if let Some(first) = self.layers.first_mut() {
            first.set_needs_input_grad(needed);
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        if x.shape().get(1..) != Some(&self.spec.input_shape[..]) {
            return Err(dim_err!(
                "model {} expects [N, {:?}], got {:?}",
                self.spec.name,
                self.spec.input_shape,
                x.shape()
            ));
        }
        let pass = Pass { exec: self.exec, train };
        let mut layers = self.layers.iter_mut();
        let mut cur = match layers.next() {
            Some(first) => first.forward(x, pass)?,
            None => x.clone(),
        };
        for layer in layers {
            cur = layer.forward(&cur, pass)?;
        }
        Ok(cur)
    }

    /// Back-propagates the output gradient, accumulating parameter gradients.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let pass = Pass::train(self.exec);
        let mut cur = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur, pass)?;
        }
        Ok(cur)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(|l| l.zero_grad());
    }

    pub fn params(&self) -> impl Iterator<Item = &Param<T>> {
        self.layers.iter().flat_map(|l| l.params().iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut().iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Parameters excluding pruned channels.
    pub fn effective_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.effective_param_count()).sum()
    }

    /// MACs for `batch` samples, excluding pruned channels.
    pub fn mac_count(&self, batch: usize) -> Result<usize> {
        self.layers
            .iter()
            .zip(&self.input_shapes)
            .map(|(l, shape)| {
                let spec = l.spec();
                let active = match l.channel_mask() {
                    Some(mask) => mask.iter().filter(|&&m| m).count(),
                    None => spec.out_channels().unwrap_or(0),
                };
                spec.mac_count_active(shape, batch, active)
            })
            .sum()
    }

    /// Copies of every parameter value, in model order.
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let count = self.params().count();
        if values.len() != count {
            return Err(arg_err!("snapshot has {} arrays, model has {count}", values.len()));
        }
        for (p, v) in self.params_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(dim_err!("snapshot array {:?} for parameter {:?}", v.shape(), p.value.shape()));
            }
            p.value = v.clone();
        }
        Ok(())
    }

    /// Channel masks of every prunable layer as `(layer index, mask)`.
    pub fn masks(&self) -> Vec<(usize, Vec<bool>)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.channel_mask().map(|m| (i, m.to_vec())))
            .collect()
    }

    /// Inference over a large input in batches of `batch`.
    pub fn predict(&mut self, x: &Tensor<T>, batch: usize) -> Result<Tensor<T>> {
        let n = x.shape()[0];
        let sample: usize = x.shape()[1..].iter().product();
        let arity = self.spec.head.arity();
        let mut out = Vec::with_capacity(n * arity);
        for start in (0..n).step_by(batch.max(1)) {
            let end = (start + batch.max(1)).min(n);
            let mut shape = x.shape().to_vec();
            shape[0] = end - start;
            let xb = Tensor::new(shape, x.data()[start * sample..end * sample].to_vec())?;
            out.extend_from_slice(self.forward(&xb, false)?.data());
        }
        Tensor::new([n, arity], out)
    }
}
