use super::{split_batch, state_err, Layer, LayerSpec, Pass};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, Window};

/// Max pooling without padding. Gradients route to the first maximal input
/// of each window.
#[derive(Debug)]
pub struct MaxPool2d {
    spec: LayerSpec,
    window: Window,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(spec: LayerSpec) -> Result<Self> {
        let LayerSpec::MaxPool2d { window } = spec else {
            return Err(dim_err!("MaxPool2d built from {} spec", spec.kind()));
        };
        Ok(Self {
            spec,
            window,
            cache: None,
        })
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d {
    fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (n, sample) = split_batch(x, "maxpool2d")?;
        let out = self.spec.output_shape(sample)?;
        let (c, h, w) = (sample[0], sample[1], sample[2]);
        let (ho, wo) = (out[1], out[2]);
        let win = self.window;
        let xd = x.data();
        let mut y = Vec::with_capacity(n * c * ho * wo);
        let mut arg = Vec::with_capacity(if pass.train { y.capacity() } else { 0 });
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * win.sh * w + ox * win.sw;
                    for ky in 0..win.kh {
                        for kx in 0..win.kw {
                            let i = base + (oy * win.sh + ky) * w + ox * win.sw + kx;
                            if xd[i] > xd[best] {
                                best = i;
                            }
                        }
                    }
                    y.push(xd[best]);
                    if pass.train {
                        arg.push(best);
                    }
                }
            }
        }
        self.cache = pass.train.then(|| (x.shape().to_vec(), arg));
        Tensor::new([n, c, ho, wo], y)
    }

    fn backward(&mut self, dy: &Tensor<T>, _pass: Pass) -> Result<Tensor<T>> {
        let (shape, arg) = self.cache.as_ref().ok_or_else(|| state_err("maxpool2d"))?;
        if dy.len() != arg.len() {
            return Err(dim_err!("maxpool2d output gradient {:?}", dy.shape()));
        }
        let mut dx = vec![T::zero(); shape.iter().product()];
        for (&i, &g) in arg.iter().zip(dy.data()) {
            dx[i] += g;
        }
        Tensor::new(shape.clone(), dx)
    }
}

/// Mean over the spatial axes: `[N, C, H, W] -> [N, C]`.
#[derive(Debug, Default)]
pub struct GlobalAvgPool {
    spec: GapSpec,
    input_shape: Option<Vec<usize>>,
}

#[derive(Debug)]
struct GapSpec(LayerSpec);

impl Default for GapSpec {
    fn default() -> Self {
        GapSpec(LayerSpec::GlobalAvgPool)
    }
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool {
    fn spec(&self) -> &LayerSpec {
        &self.spec.0
    }

    fn forward(&mut self, x: &Tensor<T>, pass: Pass) -> Result<Tensor<T>> {
        let (n, sample) = split_batch(x, "global_avg_pool")?;
        let [c, ..] = self.spec.0.output_shape(sample)?[..] else {
            unreachable!("pooling keeps the channel axis")
        };
        let plane = sample[1] * sample[2];
        let scale = T::one() / T::lit(plane as f64);
        let y = x.data().chunks(plane).map(|p| p.iter().copied().sum::<T>() * scale).collect();
        self.input_shape = pass.train.then(|| x.shape().to_vec());
        Tensor::new([n, c], y)
    }

    fn backward(&mut self, dy: &Tensor<T>, _pass: Pass) -> Result<Tensor<T>> {
        let shape = self.input_shape.as_ref().ok_or_else(|| state_err("global_avg_pool"))?;
        if dy.shape() != &shape[..2] {
            return Err(dim_err!("global_avg_pool output gradient {:?}", dy.shape()));
        }
        let plane = shape[2] * shape[3];
        let scale = T::one() / T::lit(plane as f64);
        let dx = dy
            .data()
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * scale, plane))
            .collect();
        Tensor::new(shape.clone(), dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Exec;

    #[test]
    fn max_pool_routes_to_first_max() {
        let mut p = MaxPool2d::new(LayerSpec::max_pool(2, 2)).unwrap();
        let x = Tensor::new([1, 1, 2, 2], vec![1.0f64, 3.0, 3.0, 0.0]).unwrap();
        let y = p.forward(&x, Pass::train(Exec::Sequential)).unwrap();
        assert_eq!(y.data(), &[3.0]);
        let dx = p.backward(&Tensor::new([1, 1, 1, 1], vec![2.0]).unwrap(), Pass::train(Exec::Sequential)).unwrap();
        assert_eq!(dx.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn global_avg_pool_means() {
        let mut p = GlobalAvgPool::new();
        let x = Tensor::new([1, 2, 1, 2], vec![1.0f32, 3.0, -2.0, 4.0]).unwrap();
        let y = Layer::<f32>::forward(&mut p, &x, Pass::train(Exec::Sequential)).unwrap();
        assert_eq!(y.data(), &[2.0, 1.0]);
        let dx = p.backward(&Tensor::new([1, 2], vec![1.0, 2.0]).unwrap(), Pass::train(Exec::Sequential)).unwrap();
        assert_eq!(dx.data(), &[0.5, 0.5, 1.0, 1.0]);
    }
}
