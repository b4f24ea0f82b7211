use rand::Rng;

use super::{split_batch, state_err, uniform, Layer, LayerSpec, Param, Pass};
use crate::error::{dim_err, Result};
use crate::par::{self, Exec};
use crate::scalar::Scalar;
use crate::tensor::{col2im_add, gemm, im2col_into, Op, Tensor, Window};

/// Samples per work chunk. Fixed so gradient reductions are bit-stable for
/// any thread count.
pub(crate) const CHUNK: usize = 8;

/// One convolution over prepared input planes `[c, h, w]` per sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub out: usize,
    pub win: Window,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(c: usize, h: usize, w: usize, out: usize, win: Window) -> Result<Self> {
        let (ho, wo) = win.output_hw(h, w)?;
        Ok(Self {
            c,
            h,
            w,
            out,
            win,
            ho,
            wo,
        })
    }

    pub fn k(&self) -> usize {
        self.c * self.win.kh * self.win.kw
    }

    pub fn p(&self) -> usize {
        self.ho * self.wo
    }

    pub fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.out * self.p()
    }
}

/// `y[n] = weight · im2col(x[n]) + bias`; masked-out rows are exactly zero.
pub(crate) fn conv_forward<T: Scalar>(
    exec: Exec,
    g: &ConvGeom,
    n: usize,
    x: &[T],
    weight: &[T],
    bias: &[T],
    mask: Option<&[bool]>,
) -> Vec<T> {
    let (k, p) = (g.k(), g.p());
    let mut y = vec![T::zero(); n * g.out_len()];
    let mut parts: Vec<&mut [T]> = y.chunks_mut(CHUNK * g.out_len()).collect();
    par::for_each_mut(exec, &mut parts, |ci, part| {
        let mut cols = vec![T::zero(); k * p];
        for (j, yn) in part.chunks_mut(g.out_len()).enumerate() {
            let s = ci * CHUNK + j;
            let xn = &x[s * g.in_len()..][..g.in_len()];
            im2col_into(xn, g.c, g.h, g.w, &g.win, &mut cols).expect("geometry checked");
            gemm(Op::N, Op::N, g.out, k, p, T::one(), weight, &cols, T::zero(), yn);
            for (o, row) in yn.chunks_mut(p).enumerate() {
                if mask.is_some_and(|m| !m[o]) {
                    row.fill(T::zero());
                } else {
                    let b = bias[o];
                    row.iter_mut().for_each(|v| *v += b);
                }
            }
        }
    });
    y
}

pub(crate) struct ConvGrads<T> {
    pub dw: Vec<T>,
    pub db: Vec<T>,
    pub dx: Option<Vec<T>>,
}

struct Part<'a, T> {
    dx: Option<&'a mut [T]>,
    dw: Vec<T>,
    db: Vec<T>,
}

/// Weight, bias and (optionally) input gradients of [`conv_forward`].
pub(crate) fn conv_backward<T: Scalar>(
    exec: Exec,
    g: &ConvGeom,
    n: usize,
    x: &[T],
    weight: &[T],
    dy: &[T],
    need_dx: bool,
) -> ConvGrads<T> {
    let (k, p) = (g.k(), g.p());
    let mut dx = need_dx.then(|| vec![T::zero(); n * g.in_len()]);
    let chunks = par::chunks(n, CHUNK);
    let mut parts: Vec<Part<T>> = match dx.as_mut() {
        Some(buf) => buf
            .chunks_mut(CHUNK * g.in_len())
            .map(|d| Part {
                dx: Some(d),
                dw: Vec::new(),
                db: Vec::new(),
            })
            .collect(),
        None => chunks
            .iter()
            .map(|_| Part {
                dx: None,
                dw: Vec::new(),
                db: Vec::new(),
            })
            .collect(),
    };
    par::for_each_mut(exec, &mut parts, |ci, part| {
        let mut cols = vec![T::zero(); k * p];
        let mut dcols = if need_dx { vec![T::zero(); k * p] } else { Vec::new() };
        part.dw = vec![T::zero(); g.out * k];
        part.db = vec![T::zero(); g.out];
        for s in chunks[ci].clone() {
            let xn = &x[s * g.in_len()..][..g.in_len()];
            let dyn_ = &dy[s * g.out_len()..][..g.out_len()];
            im2col_into(xn, g.c, g.h, g.w, &g.win, &mut cols).expect("geometry checked");
            gemm(Op::N, Op::T, g.out, p, k, T::one(), dyn_, &cols, T::one(), &mut part.dw);
            for (o, row) in dyn_.chunks(p).enumerate() {
                part.db[o] += row.iter().copied().sum::<T>();
            }
            if let Some(dx) = part.dx.as_deref_mut() {
                gemm(Op::T, Op::N, k, g.out, p, T::one(), weight, dyn_, T::zero(), &mut dcols);
                let j = s - chunks[ci].start;
                let dxn = &mut dx[j * g.in_len()..][..g.in_len()];
                col2im_add(&dcols, g.c, g.h, g.w, &g.win, dxn).expect("geometry checked");
            }
        }
    });
    let mut dw = vec![T::zero(); g.out * k];
    let mut db = vec![T::zero(); g.out];
    for part in &parts {
        dw.iter_mut().zip(&part.dw).for_each(|(a, &b)| *a += b);
        db.iter_mut().zip(&part.db).for_each(|(a, &b)| *a += b);
    }
    ConvGrads { dw, db, dx }
}

/// Classical 2-D convolution (cross-correlation, zero padding).
#[derive(Debug)]
pub struct Conv2d<T> {
    spec: LayerSpec,
    in_ch: usize,
    out_ch: usize,
    window: Window,
    params: Vec<Param<T>>,
    input: Option<Tensor<T>>,
    needs_input_grad: bool,
}

impl<T: Scalar> Conv2d<T> {
    pub fn init<R: Rng>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        let LayerSpec::Conv2d {
            in_ch,
            out_ch,
            window,
        } = spec
        else {
            return Err(dim_err!("Conv2d built from {} spec", spec.kind()));
        };
        let fan_in = in_ch * window.kh * window.kw;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Tensor::from_fn([out_ch, in_ch, window.kh, window.kw], |_| uniform(rng, bound))?;
        let bias = Tensor::from_fn([out_ch], |_| uniform(rng, bound))?;
        Ok(Self {
            spec,
            in_ch,
            out_ch,
            window,
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

    fn geom(&self, x: &Tensor<T>) -> Result<(usize, ConvGeom)> {
        let (n, sample) = split_batch(x, "conv2d")?;
        let out = self.spec.output_shape(sample)?;
        debug_assert_eq!(out[0], self.out_ch);
        Ok((
            n,
            ConvGeom::new(self.in_ch, sample[1], sample[2], self.out_ch, self.window)?,
        ))
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (n, g) = self.geom(x)?;
        let y = conv_forward(
            pass.exec,
            &g,
            n,
            x.data(),
            self.params[0].value.data(),
            self.params[1].value.data(),
            None,
        );
        self.input = pass.train.then(|| x.clone());
        Tensor::new([n, g.out, g.ho, g.wo], y)
    }

    fn backward(&mut self, dy: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or_else(|| state_err("conv2d"))?;
        let (n, g) = self.geom(x)?;
        if dy.shape() != [n, g.out, g.ho, g.wo] {
            return Err(dim_err!("conv2d output gradient {:?}", dy.shape()));
        }
        let grads = conv_backward(
            pass.exec,
            &g,
            n,
            x.data(),
            self.params[0].value.data(),
            dy.data(),
            self.needs_input_grad,
        );
        add_into(&mut self.params[0].grad, &grads.dw);
        add_into(&mut self.params[1].grad, &grads.db);
        let dx = grads.dx.unwrap_or_else(|| vec![T::zero(); x.len()]);
        Tensor::new(x.shape().to_vec(), dx)
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

pub(crate) fn add_into<T: Scalar>(dst: &mut Tensor<T>, src: &[T]) {
    dst.data_mut().iter_mut().zip(src).for_each(|(a, &b)| *a += b);
}
