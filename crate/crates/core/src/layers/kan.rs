//! KAN convolution and KAN linear layers.
//!
//! Every edge applies its own learnable univariate function
//!
//! ```text
//! φ(x) = w_b · silu(x) + w_s · Σ_m c_m · B_m(x) + t
//! ```
//!
//! which carries `B + 3` scalars. Because `φ` is linear in its parameters, a
//! layer evaluates it by expanding each input value into the feature vector
//! `[silu(x), B_1(x), …, B_B(x), 1]` once, then contracting the features with
//! the effective weights `[w_b, w_s·c_1, …, w_s·c_B, t]` through the ordinary
//! convolution / matrix-product kernels. Zero padding pads the raw input, so
//! padded taps contribute `φ(0)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::conv::{add_into, conv_backward, conv_forward, ConvGeom, CHUNK};
use super::{split_batch, state_err, uniform, Layer, LayerSpec, Param, Pass};
use crate::error::{arg_err, dim_err, Result};
use crate::par;
use crate::scalar::Scalar;
use crate::spline::{basis_eval, Basis, SplineSpec};
use crate::tensor::{gemm, Op, Tensor, Window};

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Learnable scalars of one edge function.
#[derive(Debug, Clone, PartialEq)]
pub struct KanEdgeParams {
    pub coeffs: Vec<f64>,
    pub base_weight: f64,
    pub spline_scale: f64,
    pub shift: f64,
}

impl KanEdgeParams {
    pub fn constant(basis_count: usize, shift: f64) -> Self {
        Self {
            coeffs: vec![0.0; basis_count],
            base_weight: 0.0,
            spline_scale: 0.0,
            shift,
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.coeffs.len() + 3
    }
}

/// `φ(x)` for one edge.
pub fn kan_edge_eval(x: f64, e: &KanEdgeParams, spec: &SplineSpec) -> f64 {
    let spline: f64 = basis_eval(x, spec)
        .iter()
        .zip(&e.coeffs)
        .map(|(b, c)| b * c)
        .sum();
    e.base_weight * silu(x) + e.spline_scale * spline + e.shift
}

/// Residual path of the edge function. `Identity` exists for equivalence
/// tests against classical layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaseActivation {
    #[default]
    Silu,
    Identity,
}

#[derive(Debug, Clone)]
struct Features<T> {
    basis: Basis<T>,
    base: BaseActivation,
}

impl<T: Scalar> Features<T> {
    fn new(spec: SplineSpec) -> Self {
        Self {
            basis: Basis::new(spec),
            base: BaseActivation::Silu,
        }
    }

    fn b(&self) -> usize {
        self.basis.count()
    }

    /// Features per input value: base, `B` basis values, constant.
    fn width(&self) -> usize {
        self.b() + 2
    }

    fn base(&self, x: T) -> (T, T) {
        match self.base {
            BaseActivation::Identity => (x, T::one()),
            BaseActivation::Silu => {
                let s = T::one() / (T::one() + (-x).exp());
                (x * s, s * (T::one() + x * (T::one() - s)))
            }
        }
    }

    /// Writes the feature vector of `x` at `feat[f * stride]` and, when given,
    /// its derivative (base and basis entries only) at `deriv[f * stride]`.
    fn expand(&self, x: T, feat: &mut [T], deriv: Option<&mut [T]>, stride: usize, scratch: &mut [T]) {
        let b = self.b();
        let (val, dval) = self.base(x);
        feat[0] = val;
        feat[(b + 1) * stride] = T::one();
        let (vals, ders) = scratch.split_at_mut(b);
        match deriv {
            Some(d) => {
                self.basis.eval_with_deriv_into(x, vals, ders);
                d[0] = dval;
                for m in 0..b {
                    feat[(m + 1) * stride] = vals[m];
                    d[(m + 1) * stride] = ders[m];
                }
            }
            None => {
                self.basis.eval_into(x, vals);
                for m in 0..b {
                    feat[(m + 1) * stride] = vals[m];
                }
            }
        }
    }
}

/// Param order shared by both KAN layers.
const COEFFS: usize = 0;
const BASE_WEIGHT: usize = 1;
const SPLINE_SCALE: usize = 2;
const SHIFT: usize = 3;
const BIAS: usize = 4;

/// Spline coefficients start near zero so the base path dominates early.
const COEFF_INIT_STD: f64 = 0.01;

fn init_edge_params<T: Scalar, R: Rng>(
    edge_shape: &[usize],
    out: usize,
    b: usize,
    fan_in: usize,
    rng: &mut R,
) -> Result<Vec<Param<T>>> {
    // Base weights get unit-gain Kaiming bounds, so the silu path keeps
    // activation variance roughly constant through these narrow networks.
    let bound = (3.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, COEFF_INIT_STD).expect("positive std");
    let mut coeff_shape = edge_shape.to_vec();
    coeff_shape.push(b);
    let coeffs = Tensor::from_fn(coeff_shape, |_| T::lit(normal.sample(rng)))?;
    let base_weight = Tensor::from_fn(edge_shape.to_vec(), |_| uniform(rng, bound))?;
    let spline_scale = Tensor::full(edge_shape.to_vec(), T::one())?;
    let shift = Tensor::zeros(edge_shape.to_vec())?;
    let bias = Tensor::from_fn([out], |_| uniform(rng, bound))?;
    Ok(vec![
        Param::new("coeffs", coeffs),
        Param::new("base_weight", base_weight),
        Param::new("spline_scale", spline_scale),
        Param::new("shift", shift),
        Param::new("bias", bias),
    ])
}

/// Effective contraction weights, laid out `[out][edge-in][feature]` where
/// `edge-in` enumerates the `edges_per_out` edges of one output and features
/// are strided by `fstride` (1 for linear, `kh·kw` for conv).
fn effective_weights<T: Scalar>(params: &[Param<T>], out: usize, edges_per_out: usize, b: usize, taps: usize) -> Vec<T> {
    // Edges per output are grouped as (input channel, tap); features sit
    // between the channel and tap index: [o][c][f][tap].
    let f_width = b + 2;
    let chans = edges_per_out / taps;
    let coeffs = params[COEFFS].value.data();
    let wb = params[BASE_WEIGHT].value.data();
    let ws = params[SPLINE_SCALE].value.data();
    let t = params[SHIFT].value.data();
    let mut we = vec![T::zero(); out * edges_per_out * f_width];
    for o in 0..out {
        for c in 0..chans {
            for tap in 0..taps {
                let e = (o * chans + c) * taps + tap;
                let base = ((o * chans + c) * f_width) * taps + tap;
                we[base] = wb[e];
                for m in 0..b {
                    we[base + (m + 1) * taps] = ws[e] * coeffs[e * b + m];
                }
                we[base + (b + 1) * taps] = t[e];
            }
        }
    }
    we
}

/// Chains effective-weight gradients back to the edge parameters.
fn accumulate_edge_grads<T: Scalar>(
    params: &mut [Param<T>],
    dwe: &[T],
    mask: &[bool],
    edges_per_out: usize,
    b: usize,
    taps: usize,
) {
    let f_width = b + 2;
    let chans = edges_per_out / taps;
    let (head, _) = params.split_at_mut(BIAS);
    let coeffs = head[COEFFS].value.data().to_vec();
    let ws = head[SPLINE_SCALE].value.data().to_vec();
    for (o, &active) in mask.iter().enumerate() {
        if !active {
            continue;
        }
        for c in 0..chans {
            for tap in 0..taps {
                let e = (o * chans + c) * taps + tap;
                let base = ((o * chans + c) * f_width) * taps + tap;
                head[BASE_WEIGHT].grad.data_mut()[e] += dwe[base];
                let mut dscale = T::zero();
                for m in 0..b {
                    let g = dwe[base + (m + 1) * taps];
                    head[COEFFS].grad.data_mut()[e * b + m] += ws[e] * g;
                    dscale += coeffs[e * b + m] * g;
                }
                head[SPLINE_SCALE].grad.data_mut()[e] += dscale;
                head[SHIFT].grad.data_mut()[e] += dwe[base + (b + 1) * taps];
            }
        }
    }
}

fn channel_scores<T: Scalar>(params: &[Param<T>], out: usize, edges_per_out: usize, b: usize) -> Vec<f64> {
    let sq = |v: T| {
        let v = v.to_f64_lossy();
        v * v
    };
    (0..out)
        .map(|o| {
            let edges = o * edges_per_out..(o + 1) * edges_per_out;
            let mut s: f64 = params[COEFFS].value.data()[edges.start * b..edges.end * b]
                .iter()
                .map(|&v| sq(v))
                .sum();
            for p in [BASE_WEIGHT, SPLINE_SCALE, SHIFT] {
                s += params[p].value.data()[edges.clone()].iter().map(|&v| sq(v)).sum::<f64>();
            }
            s.sqrt()
        })
        .collect()
}

fn apply_mask<T: Scalar>(
    params: &mut [Param<T>],
    current: &mut [bool],
    mask: &[bool],
    edges_per_out: usize,
    b: usize,
) -> Result<()> {
    if mask.len() != current.len() {
        return Err(arg_err!(
            "mask has {} entries for a layer with {} channels",
            mask.len(),
            current.len()
        ));
    }
    if let Some(o) = (0..mask.len()).find(|&o| !current[o] && mask[o]) {
        return Err(arg_err!("channel {o} is already pruned and cannot be restored"));
    }
    for (o, &keep) in mask.iter().enumerate() {
        if keep {
            continue;
        }
        current[o] = false;
        let edges = o * edges_per_out..(o + 1) * edges_per_out;
        params[COEFFS].value.data_mut()[edges.start * b..edges.end * b].fill(T::zero());
        for p in [BASE_WEIGHT, SPLINE_SCALE, SHIFT] {
            params[p].value.data_mut()[edges.clone()].fill(T::zero());
        }
        params[BIAS].value.data_mut()[o] = T::zero();
    }
    Ok(())
}

fn edge_at<T: Scalar>(params: &[Param<T>], e: usize, b: usize) -> KanEdgeParams {
    KanEdgeParams {
        coeffs: params[COEFFS].value.data()[e * b..(e + 1) * b]
            .iter()
            .map(|v| v.to_f64_lossy())
            .collect(),
        base_weight: params[BASE_WEIGHT].value.data()[e].to_f64_lossy(),
        spline_scale: params[SPLINE_SCALE].value.data()[e].to_f64_lossy(),
        shift: params[SHIFT].value.data()[e].to_f64_lossy(),
    }
}

fn set_edge_at<T: Scalar>(params: &mut [Param<T>], e: usize, b: usize, edge: &KanEdgeParams) -> Result<()> {
    if edge.coeffs.len() != b {
        return Err(arg_err!("edge has {} coefficients, layer basis has {b}", edge.coeffs.len()));
    }
    for (m, &c) in edge.coeffs.iter().enumerate() {
        params[COEFFS].value.data_mut()[e * b + m] = T::lit(c);
    }
    params[BASE_WEIGHT].value.data_mut()[e] = T::lit(edge.base_weight);
    params[SPLINE_SCALE].value.data_mut()[e] = T::lit(edge.spline_scale);
    params[SHIFT].value.data_mut()[e] = T::lit(edge.shift);
    Ok(())
}

#[derive(Debug)]
struct ConvCache<T> {
    n: usize,
    h: usize,
    w: usize,
    feats: Vec<T>,
    derivs: Vec<T>,
}

/// Convolution whose kernel taps are KAN edge functions.
#[derive(Debug)]
pub struct KanConv2d<T> {
    spec: LayerSpec,
    in_ch: usize,
    out_ch: usize,
    window: Window,
    features: Features<T>,
    params: Vec<Param<T>>,
    mask: Vec<bool>,
    cache: Option<ConvCache<T>>,
    needs_input_grad: bool,
}

impl<T: Scalar> KanConv2d<T> {
    pub fn init<R: Rng>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        let LayerSpec::KanConv2d {
            in_ch,
            out_ch,
            window,
            basis,
        } = spec
        else {
            return Err(dim_err!("KanConv2d built from {} spec", spec.kind()));
        };
        let features = Features::new(basis);
        let params = init_edge_params(
            &[out_ch, in_ch, window.kh, window.kw],
            out_ch,
            features.b(),
            in_ch * window.kh * window.kw,
            rng,
        )?;
        Ok(Self {
            spec,
            in_ch,
            out_ch,
            window,
            features,
            params,
            mask: vec![true; out_ch],
            cache: None,
            needs_input_grad: true,
        })
    }

    fn taps(&self) -> usize {
        self.window.kh * self.window.kw
    }

    fn edges_per_out(&self) -> usize {
        self.in_ch * self.taps()
    }

    fn edge_index(&self, o: usize, c: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + c) * self.window.kh + ky) * self.window.kw + kx
    }

    pub fn edge(&self, o: usize, c: usize, ky: usize, kx: usize) -> KanEdgeParams {
        edge_at(&self.params, self.edge_index(o, c, ky, kx), self.features.b())
    }

    pub fn set_edge(&mut self, o: usize, c: usize, ky: usize, kx: usize, edge: &KanEdgeParams) -> Result<()> {
        let e = self.edge_index(o, c, ky, kx);
        set_edge_at(&mut self.params, e, self.features.b(), edge)
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.params[BIAS].value
    }

    pub fn set_base_activation(&mut self, base: BaseActivation) {
        self.features.base = base;
    }

    fn padded(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.window.ph, w + 2 * self.window.pw)
    }

    fn geom(&self, h: usize, w: usize) -> Result<ConvGeom> {
        let (hp, wp) = self.padded(h, w);
        let win = Window {
            ph: 0,
            pw: 0,
            ..self.window
        };
        ConvGeom::new(self.in_ch * self.features.width(), hp, wp, self.out_ch, win)
    }

    /// Padded feature planes `[C, F, Hp, Wp]` per sample and, for training,
    /// derivative planes `[C, B+1, Hp, Wp]`.
    fn expand(&self, x: &[T], n: usize, h: usize, w: usize, pass: Pass) -> (Vec<T>, Vec<T>) {
        let (hp, wp) = self.padded(h, w);
        let plane = hp * wp;
        let fw = self.features.width();
        let c = self.in_ch;
        let feat_len = c * fw * plane;
        let der_len = c * (fw - 1) * plane;
        let mut feats = vec![T::zero(); n * feat_len];
        let mut derivs = if pass.train { vec![T::zero(); n * der_len] } else { Vec::new() };
        let (ph, pw) = (self.window.ph, self.window.pw);
        let mut parts: Vec<(&mut [T], Option<&mut [T]>)> = if pass.train {
            feats
                .chunks_mut(CHUNK * feat_len)
                .zip(derivs.chunks_mut(CHUNK * der_len).map(Some))
                .collect()
        } else {
            feats.chunks_mut(CHUNK * feat_len).map(|f| (f, None)).collect()
        };
        par::for_each_mut(pass.exec, &mut parts, |ci, (fchunk, dchunk)| {
            let mut scratch = vec![T::zero(); 2 * self.features.b()];
            let samples = fchunk.len() / feat_len;
            for j in 0..samples {
                let s = ci * CHUNK + j;
                let xs = &x[s * c * h * w..][..c * h * w];
                let fs = &mut fchunk[j * feat_len..][..feat_len];
                let mut ds = dchunk.as_deref_mut().map(|d| &mut d[j * der_len..][..der_len]);
                for ch in 0..c {
                    for py in 0..hp {
                        for px in 0..wp {
                            let (iy, ix) = (py as isize - ph as isize, px as isize - pw as isize);
                            let v = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                xs[(ch * h + iy as usize) * w + ix as usize]
                            } else {
                                T::zero()
                            };
                            let pix = py * wp + px;
                            let f = &mut fs[ch * fw * plane + pix..];
                            let d = ds.as_deref_mut().map(|d| &mut d[ch * (fw - 1) * plane + pix..]);
                            self.features.expand(v, f, d, plane, &mut scratch);
                        }
                    }
                }
            }
        });
        (feats, derivs)
    }
}

impl<T: Scalar> Layer<T> for KanConv2d<T> {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (n, sample) = split_batch(x, "kan_conv2d")?;
        self.spec.output_shape(sample)?;
        let (h, w) = (sample[1], sample[2]);
        let g = self.geom(h, w)?;
        let (feats, derivs) = self.expand(x.data(), n, h, w, pass);
        let we = effective_weights(&self.params, self.out_ch, self.edges_per_out(), self.features.b(), self.taps());
        let y = conv_forward(
            pass.exec,
            &g,
            n,
            &feats,
            &we,
            self.params[BIAS].value.data(),
            Some(&self.mask),
        );
        self.cache = pass.train.then_some(ConvCache { n, h, w, feats, derivs });
        Tensor::new([n, self.out_ch, g.ho, g.wo], y)
    }

    fn backward(&mut self, dy: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| state_err("kan_conv2d"))?;
        let (n, h, w) = (cache.n, cache.h, cache.w);
        let g = self.geom(h, w)?;
        if dy.shape() != [n, self.out_ch, g.ho, g.wo] {
            return Err(dim_err!("kan_conv2d output gradient {:?}", dy.shape()));
        }
        let mut dy = dy.data().to_vec();
        for (i, row) in dy.chunks_mut(g.p()).enumerate() {
            if !self.mask[i % self.out_ch] {
                row.fill(T::zero());
            }
        }
        let b = self.features.b();
        let we = effective_weights(&self.params, self.out_ch, self.edges_per_out(), b, self.taps());
        let grads = conv_backward(pass.exec, &g, n, &cache.feats, &we, &dy, self.needs_input_grad);
        let (epo, taps) = (self.edges_per_out(), self.taps());
        let mask = self.mask.clone();
        accumulate_edge_grads(&mut self.params, &grads.dw, &mask, epo, b, taps);
        add_into(&mut self.params[BIAS].grad, &grads.db);

        let cache = self.cache.as_ref().expect("checked above");
        let c = self.in_ch;
        let mut dx = vec![T::zero(); n * c * h * w];
        if let Some(dfeat) = grads.dx {
            let (hp, wp) = self.padded(h, w);
            let plane = hp * wp;
            let fw = self.features.width();
            let (ph, pw) = (self.window.ph, self.window.pw);
            for s in 0..n {
                for ch in 0..c {
                    for iy in 0..h {
                        for ix in 0..w {
                            let pix = (iy + ph) * wp + ix + pw;
                            let fbase = (s * c + ch) * fw * plane + pix;
                            let dbase = (s * c + ch) * (fw - 1) * plane + pix;
                            let mut acc = T::zero();
                            for f in 0..fw - 1 {
                                acc += dfeat[fbase + f * plane] * cache.derivs[dbase + f * plane];
                            }
                            dx[((s * c + ch) * h + iy) * w + ix] = acc;
                        }
                    }
                }
            }
        }
        Tensor::new([n, c, h, w], dx)
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

    fn channel_mask(&self) -> Option<&[bool]> {
        Some(&self.mask)
    }

    fn apply_channel_mask(&mut self, mask: &[bool]) -> Result<()> {
        let epo = self.edges_per_out();
        let b = self.features.b();
        apply_mask(&mut self.params, &mut self.mask, mask, epo, b)
    }

    fn channel_scores(&self) -> Option<Vec<f64>> {
        Some(channel_scores(&self.params, self.out_ch, self.edges_per_out(), self.features.b()))
    }
}

#[derive(Debug)]
struct LinearCache<T> {
    n: usize,
    feats: Vec<T>,
    derivs: Vec<T>,
}

/// Fully connected layer whose edges are KAN edge functions.
#[derive(Debug)]
pub struct KanLinear<T> {
    spec: LayerSpec,
    d_in: usize,
    d_out: usize,
    features: Features<T>,
    params: Vec<Param<T>>,
    mask: Vec<bool>,
    cache: Option<LinearCache<T>>,
    needs_input_grad: bool,
}

impl<T: Scalar> KanLinear<T> {
    pub fn init<R: Rng>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        let LayerSpec::KanLinear { d_in, d_out, basis } = spec else {
            return Err(dim_err!("KanLinear built from {} spec", spec.kind()));
        };
        let features = Features::new(basis);
        let params = init_edge_params(&[d_out, d_in], d_out, features.b(), d_in, rng)?;
        Ok(Self {
            spec,
            d_in,
            d_out,
            features,
            params,
            mask: vec![true; d_out],
            cache: None,
            needs_input_grad: true,
        })
    }

    pub fn edge(&self, o: usize, i: usize) -> KanEdgeParams {
        edge_at(&self.params, o * self.d_in + i, self.features.b())
    }

    pub fn set_edge(&mut self, o: usize, i: usize, edge: &KanEdgeParams) -> Result<()> {
        let e = o * self.d_in + i;
        set_edge_at(&mut self.params, e, self.features.b(), edge)
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.params[BIAS].value
    }

    pub fn set_base_activation(&mut self, base: BaseActivation) {
        self.features.base = base;
    }

    fn expand(&self, x: &[T], n: usize, pass: Pass) -> (Vec<T>, Vec<T>) {
        let fw = self.features.width();
        let row = self.d_in * fw;
        let drow = self.d_in * (fw - 1);
        let mut feats = vec![T::zero(); n * row];
        let mut derivs = if pass.train { vec![T::zero(); n * drow] } else { Vec::new() };
        let mut parts: Vec<(&mut [T], Option<&mut [T]>)> = if pass.train {
            feats
                .chunks_mut(CHUNK * row)
                .zip(derivs.chunks_mut(CHUNK * drow).map(Some))
                .collect()
        } else {
            feats.chunks_mut(CHUNK * row).map(|f| (f, None)).collect()
        };
        par::for_each_mut(pass.exec, &mut parts, |ci, (fchunk, dchunk)| {
            let mut scratch = vec![T::zero(); 2 * self.features.b()];
            for j in 0..fchunk.len() / row {
                let s = ci * CHUNK + j;
                for i in 0..self.d_in {
                    let v = x[s * self.d_in + i];
                    let f = &mut fchunk[j * row + i * fw..];
                    let d = dchunk.as_deref_mut().map(|d| &mut d[j * drow + i * (fw - 1)..]);
                    self.features.expand(v, f, d, 1, &mut scratch);
                }
            }
        });
        (feats, derivs)
    }
}

impl<T: Scalar> Layer<T> for KanLinear<T> {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (n, sample) = split_batch(x, "kan_linear")?;
        self.spec.output_shape(sample)?;
        let (feats, derivs) = self.expand(x.data(), n, pass);
        let b = self.features.b();
        let we = effective_weights(&self.params, self.d_out, self.d_in, b, 1);
        let k = self.d_in * self.features.width();
        let mut y = vec![T::zero(); n * self.d_out];
        gemm(Op::N, Op::T, n, k, self.d_out, T::one(), &feats, &we, T::zero(), &mut y);
        let bias = self.params[BIAS].value.data();
        for row in y.chunks_mut(self.d_out) {
            for (o, v) in row.iter_mut().enumerate() {
                *v = if self.mask[o] { *v + bias[o] } else { T::zero() };
            }
        }
        self.cache = pass.train.then_some(LinearCache { n, feats, derivs });
        Tensor::new([n, self.d_out], y)
    }

    fn backward(&mut self, dy: &Tensor<T>, _pass: Pass) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| state_err("kan_linear"))?;
        let n = cache.n;
        if dy.shape() != [n, self.d_out] {
            return Err(dim_err!("kan_linear output gradient {:?}", dy.shape()));
        }
        let mut dy = dy.data().to_vec();
        for row in dy.chunks_mut(self.d_out) {
            for (o, v) in row.iter_mut().enumerate() {
                if !self.mask[o] {
                    *v = T::zero();
                }
            }
        }
        let b = self.features.b();
        let fw = self.features.width();
        let k = self.d_in * fw;
        let we = effective_weights(&self.params, self.d_out, self.d_in, b, 1);
        let mut dwe = vec![T::zero(); self.d_out * k];
        gemm(Op::T, Op::N, self.d_out, n, k, T::one(), &dy, &cache.feats, T::zero(), &mut dwe);
        let mut db = vec![T::zero(); self.d_out];
        for row in dy.chunks(self.d_out) {
            db.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
        }
        let mut dx = vec![T::zero(); n * self.d_in];
        if self.needs_input_grad {
            let mut dfeat = vec![T::zero(); n * k];
            gemm(Op::N, Op::N, n, self.d_out, k, T::one(), &dy, &we, T::zero(), &mut dfeat);
            for s in 0..n {
                for i in 0..self.d_in {
                    let f = &dfeat[s * k + i * fw..][..fw - 1];
                    let d = &cache.derivs[(s * self.d_in + i) * (fw - 1)..][..fw - 1];
                    dx[s * self.d_in + i] = f.iter().zip(d).map(|(&a, &b)| a * b).sum();
                }
            }
        }
        let mask = self.mask.clone();
        accumulate_edge_grads(&mut self.params, &dwe, &mask, self.d_in, b, 1);
        add_into(&mut self.params[BIAS].grad, &db);
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

    fn channel_mask(&self) -> Option<&[bool]> {
        Some(&self.mask)
    }

    fn apply_channel_mask(&mut self, mask: &[bool]) -> Result<()> {
        let b = self.features.b();
        apply_mask(&mut self.params, &mut self.mask, mask, self.d_in, b)
    }

    fn channel_scores(&self) -> Option<Vec<f64>> {
        Some(channel_scores(&self.params, self.d_out, self.d_in, self.features.b()))
    }
}
