//! Independent oracles and input generators shared by the integration and
//! acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use ckan::eval::MetricBlock;
use ckan::layers::{build_layer, BaseActivation, Conv2d, KanConv2d, KanEdgeParams, Layer, LayerSpec, Pass};
use ckan::scalar::Scalar;
use ckan::spline::{BasisFamily, SplineSpec};
use ckan::tensor::{Tensor, Window};
use ckan::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.gen_range(lo..hi)).unwrap()
}

/// Values bounded away from zero so ReLU kinks are never straddled.
pub fn off_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let m: f64 = r.gen_range(0.05..1.5);
        if r.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
    .unwrap()
}

/// Distinct values at least 1e-2 apart, so no pooling window is a near-tie.
pub fn separated(shape: &[usize], seed: u64) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 1e-2 - 1.0).collect();
    v.shuffle(&mut rng(seed));
    Tensor::new(shape.to_vec(), v).unwrap()
}

pub fn layer(spec: &LayerSpec, sample: &[usize], seed: u64) -> Box<dyn Layer<f64>> {
    let mut l = build_layer::<f64, _>(spec, sample, &mut rng(seed)).unwrap();
    // Random values everywhere so the spline path carries real signal.
    let mut r = rng(seed + 1);
    for p in l.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-0.8..0.8));
    }
    l
}

/// Plain recursive Cox-de Boor and Gaussian bumps, written from the
/// definitions rather than shared with the library.
pub fn ref_basis(x: f64, spec: &SplineSpec) -> Vec<f64> {
    let x = x.clamp(spec.lo, spec.hi);
    match spec.family {
        BasisFamily::Rbf => {
            let g = spec.grid;
            let (centers, h): (Vec<f64>, f64) = if g == 1 {
                (vec![0.5 * (spec.lo + spec.hi)], spec.hi - spec.lo)
            } else {
                let h = (spec.hi - spec.lo) / (g - 1) as f64;
                ((0..g).map(|m| spec.lo + m as f64 * h).collect(), h)
            };
            centers.iter().map(|c| (-((x - c) / h).powi(2)).exp()).collect()
        }
        BasisFamily::BSpline => {
            let (g, k) = (spec.grid as i64, spec.degree as i64);
            let h = (spec.hi - spec.lo) / g as f64;
            let t: Vec<f64> = (-k..=g + k).map(|i| spec.lo + i as f64 * h).collect();
            // Half-open intervals, except that the last one is closed so a
            // degree-0 basis still covers `hi`.
            fn b(i: usize, p: usize, x: f64, t: &[f64]) -> f64 {
                if p == 0 {
                    let closed = i + 2 == t.len() && x == t[i + 1];
                    return if (t[i] <= x && x < t[i + 1]) || closed { 1.0 } else { 0.0 };
                }
                let left = (x - t[i]) / (t[i + p] - t[i]) * b(i, p - 1, x, t);
                let right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * b(i + 1, p - 1, x, t);
                left + right
            }
            (0..(g + k) as usize).map(|i| b(i, k as usize, x, &t)).collect()
        }
    }
}

pub fn ref_phi(x: f64, e: &KanEdgeParams, spec: &SplineSpec) -> f64 {
    let silu = x / (1.0 + (-x).exp());
    let s: f64 = ref_basis(x, spec).iter().zip(&e.coeffs).map(|(b, c)| b * c).sum();
    e.base_weight * silu + e.spline_scale * s + e.shift
}

pub struct Geometry {
    pub n: usize,
    pub c: usize,
    pub o: usize,
    pub h: usize,
    pub w: usize,
    pub win: Window,
}

impl Geometry {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let k = r.gen_range(1..=3);
        let pad = r.gen_range(0..=1);
        let stride = r.gen_range(1..=2);
        Self {
            n: r.gen_range(1..=2),
            c: r.gen_range(1..=3),
            o: r.gen_range(1..=3),
            h: r.gen_range(k..=7),
            w: r.gen_range(k..=7),
            win: Window::square(k, k, stride, pad),
        }
    }

    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.win.ph - self.win.kh) / self.win.sh + 1,
            (self.w + 2 * self.win.pw - self.win.kw) / self.win.sw + 1,
        )
    }

    /// Input value at padded coordinates, `None` outside the image.
    pub fn at(&self, x: &[f64], n: usize, c: usize, iy: i64, ix: i64) -> Option<f64> {
        let (y, xx) = (iy - self.win.ph as i64, ix - self.win.pw as i64);
        if y < 0 || xx < 0 || y >= self.h as i64 || xx >= self.w as i64 {
            return None;
        }
        Some(x[((n * self.c + c) * self.h + y as usize) * self.w + xx as usize])
    }

    /// Nested loops over `(n, o, i, j, c, ky, kx)`; `tap` maps an input value
    /// (zero when padded) to its contribution.
    pub fn oracle(&self, x: &[f64], bias: &[f64], tap: impl Fn(usize, usize, usize, usize, f64) -> f64) -> Vec<f64> {
        let (ho, wo) = self.out_hw();
        let mut out = Vec::new();
        for n in 0..self.n {
            for o in 0..self.o {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = bias[o];
                        for c in 0..self.c {
                            for ky in 0..self.win.kh {
                                for kx in 0..self.win.kw {
                                    let iy = (i * self.win.sh + ky) as i64;
                                    let ix = (j * self.win.sw + kx) as i64;
                                    let a = self.at(x, n, c, iy, ix).unwrap_or(0.0);
                                    acc += tap(o, c, ky, kx, a);
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }
}

pub fn randomize<T: Scalar>(l: &mut dyn Layer<T>, r: &mut ChaCha8Rng) {
    for p in l.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = T::lit(r.gen_range(-0.5..0.5)));
    }
}

pub fn max_diff<T: Scalar>(y: &Tensor<T>, want: &[f64]) -> f64 {
    assert_eq!(y.len(), want.len());
    y.data()
        .iter()
        .zip(want)
        .map(|(a, b)| (a.to_f64_lossy() - b).abs())
        .fold(0.0, f64::max)
}

pub fn conv_case<T: Scalar>(seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let g = Geometry::random(&mut r);
    let spec = LayerSpec::Conv2d {
        in_ch: g.c,
        out_ch: g.o,
        window: g.win,
    };
    let mut layer = Conv2d::<T>::init(spec, &mut r).unwrap();
    randomize(&mut layer, &mut r);
    let x = Tensor::<T>::from_fn([g.n, g.c, g.h, g.w], |_| T::lit(r.gen_range(-1.0..1.0))).unwrap();
    let y = layer.forward(&x, Pass::infer(Exec::Parallel)).unwrap();
    let f = |t: &Tensor<T>| t.data().iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>();
    let (wt, bias, xs) = (f(&layer.params()[0].value), f(&layer.params()[1].value), f(&x));
    let want = g.oracle(&xs, &bias, |o, c, ky, kx, a| {
        wt[((o * g.c + c) * g.win.kh + ky) * g.win.kw + kx] * a
    });
    max_diff(&y, &want)
}

pub fn kan_case<T: Scalar>(seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let g = Geometry::random(&mut r);
    let basis = if r.gen_bool(0.5) {
        SplineSpec::bspline(r.gen_range(2..=8), r.gen_range(0..=3)).unwrap()
    } else {
        SplineSpec::rbf(r.gen_range(1..=8)).unwrap()
    };
    let spec = LayerSpec::KanConv2d {
        in_ch: g.c,
        out_ch: g.o,
        window: g.win,
        basis,
    };
    let mut layer = KanConv2d::<T>::init(spec, &mut r).unwrap();
    randomize(&mut layer, &mut r);
    // Inputs reach past the domain so clamping is exercised too.
    let x = Tensor::<T>::from_fn([g.n, g.c, g.h, g.w], |_| T::lit(r.gen_range(-2.5..2.5))).unwrap();
    let y = layer.forward(&x, Pass::infer(Exec::Parallel)).unwrap();
    let xs: Vec<f64> = x.data().iter().map(|v| v.to_f64_lossy()).collect();
    let bias: Vec<f64> = layer.params()[4].value.data().iter().map(|v| v.to_f64_lossy()).collect();
    let want = g.oracle(&xs, &bias, |o, c, ky, kx, a| ref_phi(a, &layer.edge(o, c, ky, kx), &basis));
    max_diff(&y, &want)
}

pub fn degenerate_case<T: Scalar>(seed: u64) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let g = Geometry::random(&mut r);
    let mut conv = Conv2d::<T>::init(
        LayerSpec::Conv2d {
            in_ch: g.c,
            out_ch: g.o,
            window: g.win,
        },
        &mut r,
    )
    .unwrap();
    let basis = SplineSpec::bspline(5, 3).unwrap();
    let mut kan = KanConv2d::<T>::init(
        LayerSpec::KanConv2d {
            in_ch: g.c,
            out_ch: g.o,
            window: g.win,
            basis,
        },
        &mut r,
    )
    .unwrap();
    randomize(&mut kan, &mut r);
    kan.set_base_activation(BaseActivation::Identity);
    for o in 0..g.o {
        for c in 0..g.c {
            for ky in 0..g.win.kh {
                for kx in 0..g.win.kw {
                    let mut e = kan.edge(o, c, ky, kx);
                    let i = ((o * g.c + c) * g.win.kh + ky) * g.win.kw + kx;
                    e.base_weight = conv.params()[0].value.data()[i].to_f64_lossy();
                    e.spline_scale = 0.0;
                    e.shift = 0.0;
                    kan.set_edge(o, c, ky, kx, &e).unwrap();
                }
            }
        }
    }
    kan.bias_mut().data_mut().copy_from_slice(conv.params()[1].value.data());
    let x = Tensor::<T>::from_fn([g.n, g.c, g.h, g.w], |_| T::lit(r.gen_range(-2.0..2.0))).unwrap();
    let pass = Pass::infer(Exec::Parallel);
    let a = conv.forward(&x, pass).unwrap();
    let b = kan.forward(&x, pass).unwrap();
    a.max_abs_diff(&b).unwrap()
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

pub fn assert_block(got: &MetricBlock, want: &MetricBlock, ctx: &str) {
    assert!(
        close(got.accuracy, want.accuracy)
            && close(got.precision, want.precision)
            && close(got.recall, want.recall)
            && close(got.f1, want.f1),
        "{ctx}: {got:?} vs {want:?}"
    );
}

/// Full M×M confusion matrix of credited predictions, ranks from a complete
/// sort (value descending, index ascending).
pub fn topk_oracle(scores: &[f64], m: usize, labels: &[usize], k: usize) -> MetricBlock {
    let n = labels.len();
    let mut confusion = vec![vec![0usize; m]; m];
    for (row, &label) in scores.chunks(m).zip(labels) {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
        let pred = if order[..k].contains(&label) { label } else { order[0] };
        confusion[label][pred] += 1;
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p, mut r, mut f, mut correct) = (0.0, 0.0, 0.0, 0);
    for c in 0..m {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..m).map(|t| confusion[t][c]).sum();
        let (pc, rc) = (div(tp, predicted), div(tp, support));
        let fc = if pc + rc == 0.0 { 0.0 } else { 2.0 * pc * rc / (pc + rc) };
        let w = support as f64 / n as f64;
        p += w * pc;
        r += w * rc;
        f += w * fc;
        correct += tp;
    }
    MetricBlock {
        accuracy: correct as f64 / n as f64,
        precision: p,
        recall: r,
        f1: f,
    }
}

pub fn multilabel_oracle(probs: &[f64], targets: &[f64], m: usize) -> MetricBlock {
    // Per-label 2×2 tables, then pooled.
    let mut table = vec![[[0usize; 2]; 2]; m];
    for (i, (&p, &y)) in probs.iter().zip(targets).enumerate() {
        table[i % m][usize::from(y == 1.0)][usize::from(p >= 0.5)] += 1;
    }
    let sum = |t: usize, q: usize| table.iter().map(|c| c[t][q]).sum::<usize>();
    let (tn, fp, fneg, tp) = (sum(0, 0), sum(0, 1), sum(1, 0), sum(1, 1));
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (p, r) = (div(tp, tp + fp), div(tp, tp + fneg));
    MetricBlock {
        accuracy: div(tp + tn, probs.len()),
        precision: p,
        recall: r,
        f1: if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) },
    }
}

