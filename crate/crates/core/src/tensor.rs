//! Dense row-major tensors and the bulk kernels the layers are built on.
//!
//! A [`Tensor`] owns a contiguous buffer whose length is always the product
//! of its extents. Rank is at least one and every extent is at least one.
//! The slice-level kernels ([`gemm`], [`im2col_into`], [`col2im_add`]) work on
//! raw buffers so layers can run them per sample without reallocating.

use crate::error::{arg_err, dim_err, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(dim_err!("tensor rank must be at least 1"));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(dim_err!("extent {pos} of shape {shape:?} is zero"));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(dim_err!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![value; len],
        })
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: (0..len).map(&mut f).collect(),
        })
    }

    /// Square identity matrix.
    pub fn eye(n: usize) -> Result<Self> {
        Self::from_fn([n, n], |i| if i / n == i % n { T::one() } else { T::zero() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(dim_err!(
                "index of rank {} into shape {:?}",
                index.len(),
                self.shape
            ));
        }
        let mut flat = 0;
        for (axis, (&i, &extent)) in index.iter().zip(&self.shape).enumerate() {
            if i >= extent {
                return Err(dim_err!(
                    "index {i} out of range for axis {axis} of shape {:?}",
                    self.shape
                ));
            }
            flat = flat * extent + i;
        }
        Ok(flat)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let at = self.offset(index)?;
        self.data[at] = value;
        Ok(())
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sum over one axis; the axis is removed from the result (a rank-1 input
    /// reduces to shape `[1]`).
    pub fn reduce_sum(&self, axis: usize) -> Result<Self> {
        if axis >= self.rank() {
            return Err(arg_err!(
                "axis {axis} out of range for rank {}",
                self.rank()
            ));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let extent = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let src = &self.data[(o * extent + e) * inner..][..inner];
                let dst = &mut out[o * inner..][..inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Self::new(shape, out)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(dim_err!(
                "comparing shapes {:?} and {:?}",
                self.shape,
                other.shape
            ));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs())
            .fold(0.0, f64::max))
    }
}

pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Whether a gemm operand is used as stored or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// `c[m×n] = alpha·op(a)·op(b) + beta·c` on row-major buffers. `a` is stored
/// `m×k` for [`Op::N`] and `k×m` for [`Op::T`]; likewise `b` is `k×n` or `n×k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    ta: Op,
    tb: Op,
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k, "gemm: lhs buffer too short");
    assert!(b.len() >= k * n, "gemm: rhs buffer too short");
    assert!(c.len() >= m * n, "gemm: output buffer too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v = if beta == T::zero() { T::zero() } else { *v * beta };
        }
        return;
    }
    let (rsa, csa) = match ta {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    // SAFETY: the asserts above bound every address the strides can reach.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(dim_err!(
            "matmul of {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![T::zero(); m * n];
    gemm(Op::N, Op::N, m, k, n, T::one(), &a.data, &b.data, T::zero(), &mut out);
    Tensor::new([m, n], out)
}

/// Sliding-window geometry: kernel extents, strides and zero padding per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl Window {
    pub fn square(kh: usize, kw: usize, stride: usize, pad: usize) -> Self {
        Self {
            kh,
            kw,
            sh: stride,
            sw: stride,
            ph: pad,
            pw: pad,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kh == 0 || self.kw == 0 || self.sh == 0 || self.sw == 0 {
            return Err(arg_err!("window extents and strides must be positive: {self:?}"));
        }
        let (hp, wp) = (h + 2 * self.ph, w + 2 * self.pw);
        if hp < self.kh || wp < self.kw {
            return Err(dim_err!(
                "kernel {}x{} larger than padded input {hp}x{wp}",
                self.kh,
                self.kw
            ));
        }
        Ok(((hp - self.kh) / self.sh + 1, (wp - self.kw) / self.sw + 1))
    }
}

/// Writes the `[c·kh·kw, h_out·w_out]` column matrix of one `[c,h,w]` image.
pub fn im2col_into<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    win: &Window,
    out: &mut [T],
) -> Result<(usize, usize)> {
    let (ho, wo) = win.output_hw(h, w)?;
    let cols = ho * wo;
    debug_assert_eq!(x.len(), c * h * w);
    debug_assert!(out.len() >= c * win.kh * win.kw * cols);
    for ch in 0..c {
        let plane = &x[ch * h * w..][..h * w];
        for ky in 0..win.kh {
            for kx in 0..win.kw {
                let row = (ch * win.kh + ky) * win.kw + kx;
                let dst = &mut out[row * cols..][..cols];
                for oy in 0..ho {
                    let iy = (oy * win.sh + ky) as isize - win.ph as isize;
                    let line = &mut dst[oy * wo..][..wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * win.sw + kx) as isize - win.pw as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
    Ok((ho, wo))
}

/// Adjoint of [`im2col_into`]: scatters columns back, summing overlaps.
pub fn col2im_add<T: Scalar>(
    cols_buf: &[T],
    c: usize,
    h: usize,
    w: usize,
    win: &Window,
    dx: &mut [T],
) -> Result<()> {
    let (ho, wo) = win.output_hw(h, w)?;
    let cols = ho * wo;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..][..h * w];
        for ky in 0..win.kh {
            for kx in 0..win.kw {
                let row = (ch * win.kh + ky) * win.kw + kx;
                let src = &cols_buf[row * cols..][..cols];
                for oy in 0..ho {
                    let iy = (oy * win.sh + ky) as isize - win.ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * w..][..w];
                    for ox in 0..wo {
                        let ix = (ox * win.sw + kx) as isize - win.pw as isize;
                        if ix >= 0 && ix < w as isize {
                            line[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Column matrix of a `[C,H,W]` tensor: `[C·kh·kw, H_out·W_out]`.
pub fn im2col<T: Scalar>(
    x: &Tensor<T>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    if x.rank() != 3 {
        return Err(dim_err!("im2col expects [C,H,W], got {:?}", x.shape()));
    }
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let win = Window::square(kh, kw, stride, pad);
    let (ho, wo) = win.output_hw(h, w)?;
    let mut out = vec![T::zero(); c * kh * kw * ho * wo];
    im2col_into(&x.data, c, h, w, &win, &mut out)?;
    Tensor::new([c * kh * kw, ho * wo], out)
}

/// Adjoint of [`im2col`] for an image of shape `image_shape = [C,H,W]`.
pub fn col2im<T: Scalar>(
    cols: &Tensor<T>,
    image_shape: [usize; 3],
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let [c, h, w] = image_shape;
    let win = Window::square(kh, kw, stride, pad);
    let (ho, wo) = win.output_hw(h, w)?;
    if cols.shape() != [c * kh * kw, ho * wo] {
        return Err(dim_err!(
            "col2im of {:?} into image {:?} with {kh}x{kw} kernel",
            cols.shape(),
            image_shape
        ));
    }
    let mut dx = vec![T::zero(); c * h * w];
    col2im_add(&cols.data, c, h, w, &win, &mut dx)?;
    Tensor::new([c, h, w], dx)
}

/// Indices of the `k` largest values, descending by value, ties by index.
pub fn topk_indices<T: Scalar>(v: &[T], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > v.len() {
        return Err(arg_err!("top-k with k={k} over {} values", v.len()));
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| {
        v[b].partial_cmp(&v[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f32>::zeros(Vec::<usize>::new()).is_err());
        assert!(Tensor::<f32>::zeros([2, 0]).is_err());
        assert!(Tensor::<f32>::new([2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn row_major_offsets() {
        let t = Tensor::<f32>::zeros([2, 3, 4]).unwrap();
        assert_eq!(t.strides(), vec![12, 4, 1]);
        assert_eq!(t.offset(&[1, 2, 3]).unwrap(), 23);
        assert!(t.offset(&[2, 0, 0]).is_err());
    }

    #[test]
    fn matmul_small_cases() {
        let i = Tensor::<f64>::new([2, 2], vec![1., 0., 0., 1.]).unwrap();
        let b = Tensor::new([2, 2], vec![5., 6., 7., 8.]).unwrap();
        assert_eq!(matmul(&i, &b).unwrap().data(), &[5., 6., 7., 8.]);
        let r = Tensor::new([1, 2], vec![1., 2.]).unwrap();
        let c = Tensor::new([2, 1], vec![3., 4.]).unwrap();
        assert_eq!(matmul(&r, &c).unwrap().data(), &[11.]);
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let a = Tensor::<f32>::zeros([2, 3]).unwrap();
        let b = Tensor::<f32>::zeros([2, 3]).unwrap();
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&[4, 3], &mut rng);
        let b = random(&[3, 5], &mut rng);
        let got = matmul(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut s = 0.0;
                for t in 0..3 {
                    s += a.data()[i * 3 + t] * b.data()[t * 5 + j];
                }
                assert!((got.data()[i * 5 + j] - s).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gemm_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&[3, 4], &mut rng); // used as (4x3)^T
        let b = random(&[5, 3], &mut rng); // used as (3x5)^T
        let mut c = vec![0.0; 4 * 5];
        gemm(Op::T, Op::T, 4, 3, 5, 1.0, a.data(), b.data(), 0.0, &mut c);
        for i in 0..4 {
            for j in 0..5 {
                let s: f64 = (0..3).map(|t| a.data()[t * 4 + i] * b.data()[j * 3 + t]).sum();
                assert!((c[i * 5 + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn im2col_single_window_and_constant() {
        let x = Tensor::<f32>::new([1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let cols = im2col(&x, 2, 2, 1, 0).unwrap();
        assert_eq!(cols.shape(), &[4, 1]);
        assert_eq!(cols.data(), &[1., 2., 3., 4.]);

        let ones = Tensor::<f32>::full([1, 3, 3], 1.0).unwrap();
        let cols = im2col(&ones, 2, 2, 1, 0).unwrap();
        assert_eq!(cols.shape(), &[4, 4]);
        assert!(cols.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn im2col_kernel_too_large() {
        let x = Tensor::<f32>::zeros([1, 2, 2]).unwrap();
        assert!(im2col(&x, 3, 3, 1, 0).is_err());
        assert!(im2col(&x, 3, 3, 1, 1).is_ok());
    }

    #[test]
    fn im2col_matches_gather_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 5, 5], &mut rng);
        let (k, s, p) = (3usize, 2usize, 1usize);
        let cols = im2col(&x, k, k, s, p).unwrap();
        let ho = (5 + 2 * p - k) / s + 1;
        assert_eq!(cols.shape(), &[2 * k * k, ho * ho]);
        for c in 0..2 {
            for ky in 0..k {
                for kx in 0..k {
                    for oy in 0..ho {
                        for ox in 0..ho {
                            let iy = (oy * s + ky) as i64 - p as i64;
                            let ix = (ox * s + kx) as i64 - p as i64;
                            let want = if (0..5).contains(&iy) && (0..5).contains(&ix) {
                                x.get(&[c, iy as usize, ix as usize]).unwrap()
                            } else {
                                0.0
                            };
                            let row = (c * k + ky) * k + kx;
                            assert_eq!(cols.get(&[row, oy * ho + ox]).unwrap(), want);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(c, h, w, k, s, p) in &[(2, 5, 5, 3, 2, 1), (1, 6, 4, 2, 1, 0), (3, 4, 4, 3, 1, 2)] {
            let x = random(&[c, h, w], &mut rng);
            let cols = im2col(&x, k, k, s, p).unwrap();
            let y = random(cols.shape(), &mut rng);
            let back = col2im(&y, [c, h, w], k, k, s, p).unwrap();
            let lhs: f64 = cols.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-5, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk_indices(&[0.1f32, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
        assert_eq!(topk_indices(&[3.0f32, 3.0, 3.0], 2).unwrap(), vec![0, 1]);
        assert!(topk_indices(&[1.0f32], 2).is_err());
    }

    #[test]
    fn topk_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Coarse values so ties actually occur.
        let v: Vec<f64> = (0..1000).map(|_| rng.gen_range(0..200) as f64).collect();
        let mut pairs: Vec<(f64, usize)> = v.iter().copied().zip(0..).collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = pairs.iter().take(5).map(|p| p.1).collect();
        assert_eq!(topk_indices(&v, 5).unwrap(), want);
    }

    #[test]
    fn map_and_reduce() {
        let t = Tensor::<f32>::new([2], vec![1., -2.]).unwrap();
        assert_eq!(t.map(|v| -v).data(), &[-1., 2.]);
        let m = Tensor::<f32>::new([2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(m.reduce_sum(0).unwrap().data(), &[4., 6.]);
        assert_eq!(m.reduce_sum(1).unwrap().data(), &[3., 7.]);
        assert!(m.reduce_sum(2).is_err());
    }

    #[test]
    fn reduce_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random(&[3, 4, 5], &mut rng);
        let r = t.reduce_sum(1).unwrap();
        assert_eq!(r.shape(), &[3, 5]);
        for i in 0..3 {
            for k in 0..5 {
                let s: f64 = (0..4).map(|j| t.get(&[i, j, k]).unwrap()).sum();
                assert!((r.get(&[i, k]).unwrap() - s).abs() < 1e-12);
            }
        }
        let sq = t.map(|v| v * v);
        for (a, b) in sq.data().iter().zip(t.data()) {
            assert_eq!(*a, b * b);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn matmul_identity(m in 1usize..6, n in 1usize..6, seed in 0u64..1000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random(&[m, n], &mut rng);
                let out = matmul(&a, &Tensor::eye(n).unwrap()).unwrap();
                prop_assert_eq!(out.data(), a.data());
            }

            #[test]
            fn topk_full_is_sorting_permutation(v in proptest::collection::vec(0i32..20, 1..40)) {
                let vals: Vec<f64> = v.iter().map(|&x| x as f64).collect();
                let idx = topk_indices(&vals, vals.len()).unwrap();
                let mut seen = idx.clone();
                seen.sort();
                prop_assert_eq!(seen, (0..vals.len()).collect::<Vec<_>>());
                for w in idx.windows(2) {
                    prop_assert!(vals[w[0]] > vals[w[1]] || (vals[w[0]] == vals[w[1]] && w[0] < w[1]));
                }
            }
        }
    }
}
