//! Trainable layers with forward, backward, parameter-count and MAC-count
//! contracts.
//!
//! Every layer consumes and produces batched tensors `[N, ...]`. The
//! shape-level description of a layer is a [`LayerSpec`]; parameter and MAC
//! counts are pure functions of the spec, so large architectures can be counted
//! without allocating weights.

mod activation;
mod conv;
mod kan;
mod linear;
mod pool;
mod reshape;

pub use activation::{Activation, ActivationKind};
pub use conv::Conv2d;
pub use kan::{kan_edge_eval, silu, BaseActivation, KanConv2d, KanEdgeParams, KanLinear};
pub use linear::Linear;
pub use pool::{GlobalAvgPool, MaxPool2d};
pub use reshape::Reshape;

use rand::Rng;

use crate::error::{dim_err, Error, Result};
use crate::par::Exec;
use crate::scalar::Scalar;
use crate::spline::SplineSpec;
use crate::tensor::{Tensor, Window};

/// One learnable array and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: &'static str,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: &'static str, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec()).expect("shape already valid");
        Self { name, value, grad }
    }
}

/// How a forward or backward pass runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pass {
    pub exec: Exec,
    /// Training passes cache what backward needs; inference passes do not.
    pub train: bool,
}

impl Pass {
    pub fn train(exec: Exec) -> Self {
        Self { exec, train: true }
    }

    pub fn infer(exec: Exec) -> Self {
        Self { exec, train: false }
    }
}

/// Shape-level description of a layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        window: Window,
    },
    KanConv2d {
        in_ch: usize,
        out_ch: usize,
        window: Window,
        basis: SplineSpec,
    },
    Linear {
        d_in: usize,
        d_out: usize,
    },
    KanLinear {
        d_in: usize,
        d_out: usize,
        basis: SplineSpec,
    },
    MaxPool2d {
        window: Window,
    },
    GlobalAvgPool,
    Activation(ActivationKind),
    Flatten,
    Reshape(Vec<usize>),
}

impl LayerSpec {
    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            window: Window::square(kernel, kernel, stride, pad),
        }
    }

    pub fn kan_conv(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        basis: SplineSpec,
    ) -> Self {
        LayerSpec::KanConv2d {
            in_ch,
            out_ch,
            window: Window::square(kernel, kernel, stride, pad),
            basis,
        }
    }

    /// 1-D convolution over `[C, 1, L]` inputs.
    pub fn conv1d(in_ch: usize, out_ch: usize, kernel: usize, pad: usize, basis: Option<SplineSpec>) -> Self {
        let window = Window {
            kh: 1,
            kw: kernel,
            sh: 1,
            sw: 1,
            ph: 0,
            pw: pad,
        };
        match basis {
            Some(basis) => LayerSpec::KanConv2d {
                in_ch,
                out_ch,
                window,
                basis,
            },
            None => LayerSpec::Conv2d {
                in_ch,
                out_ch,
                window,
            },
        }
    }

    pub fn max_pool(size: usize, stride: usize) -> Self {
        LayerSpec::MaxPool2d {
            window: Window::square(size, size, stride, 0),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::KanConv2d { .. } => "kan_conv2d",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::KanLinear { .. } => "kan_linear",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::GlobalAvgPool => "global_avg_pool",
            LayerSpec::Activation(_) => "activation",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Reshape(_) => "reshape",
        }
    }

    pub fn is_kan(&self) -> bool {
        matches!(self, LayerSpec::KanConv2d { .. } | LayerSpec::KanLinear { .. })
    }

    /// Output channels (conv) or units (linear) for layers with learnable
    /// weights.
    pub fn out_channels(&self) -> Option<usize> {
        match self {
            LayerSpec::Conv2d { out_ch, .. } | LayerSpec::KanConv2d { out_ch, .. } => Some(*out_ch),
            LayerSpec::Linear { d_out, .. } | LayerSpec::KanLinear { d_out, .. } => Some(*d_out),
            _ => None,
        }
    }

    /// Weight scalars per output channel in the classical (one scalar per
    /// tap) sense; the KAN layers multiply this by `B + 3`.
    fn taps_per_channel(&self) -> usize {
        match self {
            LayerSpec::Conv2d { in_ch, window, .. } | LayerSpec::KanConv2d { in_ch, window, .. } => {
                in_ch * window.kh * window.kw
            }
            LayerSpec::Linear { d_in, .. } | LayerSpec::KanLinear { d_in, .. } => *d_in,
            _ => 0,
        }
    }

    fn scalars_per_tap(&self) -> usize {
        match self {
            LayerSpec::KanConv2d { basis, .. } | LayerSpec::KanLinear { basis, .. } => {
                basis.basis_count() + 3
            }
            LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. } => 1,
            _ => 0,
        }
    }

    fn macs_per_tap(&self) -> usize {
        match self {
            LayerSpec::KanConv2d { basis, .. } | LayerSpec::KanLinear { basis, .. } => {
                basis.basis_count() + 2
            }
            LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. } => 1,
            _ => 0,
        }
    }

    /// Learnable scalars owned by one output channel, including its bias.
    pub fn scalars_per_channel(&self) -> usize {
        match self.out_channels() {
            Some(_) => self.taps_per_channel() * self.scalars_per_tap() + 1,
            None => 0,
        }
    }

    /// Weight count with `d_in · d_out` generalised to
    /// `out · in · kh · kw` for convolutions.
    pub fn weight_taps(&self) -> usize {
        self.out_channels().unwrap_or(0) * self.taps_per_channel()
    }

    pub fn param_count(&self) -> usize {
        match self.out_channels() {
            Some(out) => out * self.scalars_per_channel(),
            None => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerSpec::Conv2d { in_ch, out_ch, window } | LayerSpec::KanConv2d { in_ch, out_ch, window, .. } => {
                let [c, h, w] = expect_chw(input, self.kind())?;
                if c != *in_ch {
                    return Err(dim_err!("{} expects {in_ch} channels, input has {c}", self.kind()));
                }
                let (ho, wo) = window.output_hw(h, w)?;
                Ok(vec![*out_ch, ho, wo])
            }
            LayerSpec::Linear { d_in, d_out } | LayerSpec::KanLinear { d_in, d_out, .. } => {
                if input != [*d_in] {
                    return Err(dim_err!("{} expects input [{d_in}], got {input:?}", self.kind()));
                }
                Ok(vec![*d_out])
            }
            LayerSpec::MaxPool2d { window } => {
                let [c, h, w] = expect_chw(input, self.kind())?;
                let (ho, wo) = window.output_hw(h, w)?;
                Ok(vec![c, ho, wo])
            }
            LayerSpec::GlobalAvgPool => {
                let [c, _, _] = expect_chw(input, self.kind())?;
                Ok(vec![c])
            }
            LayerSpec::Activation(_) => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape(shape) => {
                let want: usize = shape.iter().product();
                let have: usize = input.iter().product();
                if want != have {
                    return Err(dim_err!("cannot reshape {input:?} into {shape:?}"));
                }
                Ok(shape.clone())
            }
        }
    }

    /// Multiply-accumulates for a batch of `batch` samples with the given
    /// per-sample input shape, counting only `active` of the output channels.
    pub fn mac_count_active(&self, input: &[usize], batch: usize, active: usize) -> Result<usize> {
        let out = self.output_shape(input)?;
        let per_tap = self.macs_per_tap();
        let positions = match self {
            LayerSpec::Conv2d { .. } | LayerSpec::KanConv2d { .. } => out[1] * out[2],
            LayerSpec::Linear { .. } | LayerSpec::KanLinear { .. } => 1,
            _ => return Ok(0),
        };
        Ok(batch * active * positions * self.taps_per_channel() * per_tap)
    }

    pub fn mac_count(&self, input: &[usize], batch: usize) -> Result<usize> {
        self.mac_count_active(input, batch, self.out_channels().unwrap_or(0))
    }
}

fn expect_chw(input: &[usize], kind: &str) -> Result<[usize; 3]> {
    match input {
        &[c, h, w] => Ok([c, h, w]),
        _ => Err(dim_err!("{kind} expects a [C,H,W] input, got {input:?}")),
    }
}

/// A trainable layer.
pub trait Layer<T: Scalar>: Send + Sync {
    fn spec(&self) -> &LayerSpec;

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>>;

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, dy: &Tensor<T>, pass: Pass) -> Result<Tensor<T>>;

    fn params(&self) -> &[Param<T>] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut []
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.data_mut().fill(T::zero());
        }
    }

    /// Skips the input-gradient computation when the layer is first in a model.
    fn set_needs_input_grad(&mut self, _needed: bool) {}

    fn channel_mask(&self) -> Option<&[bool]> {
        None
    }

    /// Freezes the `false` channels at zero. Only KAN layers are prunable.
    fn apply_channel_mask(&mut self, _mask: &[bool]) -> Result<()> {
        Err(Error::Argument(format!("{} layers cannot be pruned", self.spec().kind())))
    }

    /// L2 norm of each output channel's learnable edge scalars.
    fn channel_scores(&self) -> Option<Vec<f64>> {
        None
    }

    fn effective_param_count(&self) -> usize {
        let spec = self.spec();
        match self.channel_mask() {
            Some(mask) => {
                let masked = mask.iter().filter(|&&m| !m).count();
                spec.param_count() - masked * spec.scalars_per_channel()
            }
            None => spec.param_count(),
        }
    }
}

/// Instantiates a layer with initial parameters drawn from `rng`.
pub fn build_layer<T: Scalar, R: Rng>(
    spec: &LayerSpec,
    input_shape: &[usize],
    rng: &mut R,
) -> Result<Box<dyn Layer<T>>> {
    spec.output_shape(input_shape)?;
    Ok(match spec {
        LayerSpec::Conv2d { .. } => Box::new(Conv2d::init(spec.clone(), rng)?),
        LayerSpec::KanConv2d { .. } => Box::new(KanConv2d::init(spec.clone(), rng)?),
        LayerSpec::Linear { .. } => Box::new(Linear::init(spec.clone(), rng)?),
        LayerSpec::KanLinear { .. } => Box::new(KanLinear::init(spec.clone(), rng)?),
        LayerSpec::MaxPool2d { .. } => Box::new(MaxPool2d::new(spec.clone())?),
        LayerSpec::GlobalAvgPool => Box::new(GlobalAvgPool::new()),
        LayerSpec::Activation(kind) => Box::new(Activation::new(*kind)),
        LayerSpec::Flatten | LayerSpec::Reshape(_) => Box::new(Reshape::new(spec.clone())?),
    })
}

/// Splits a batched tensor shape into `(batch, per-sample shape)`.
pub(crate) fn split_batch<'a, T: Scalar>(x: &'a Tensor<T>, kind: &str) -> Result<(usize, &'a [usize])> {
    match x.shape().split_first() {
        Some((&n, rest)) if !rest.is_empty() => Ok((n, rest)),
        _ => Err(dim_err!("{kind} expects a batched input, got {:?}", x.shape())),
    }
}

pub(crate) fn uniform<T: Scalar, R: Rng>(rng: &mut R, bound: f64) -> T {
    T::lit(rng.gen_range(-bound..=bound))
}

pub(crate) fn state_err(kind: &str) -> Error {
    Error::State(format!("{kind} backward called before a training forward pass"))
}
