//! Builders for the evaluated architectures.
//!
//! KAN variants scale every channel and hidden width to roughly a quarter of
//! the classical network's, rounding up.

use crate::error::{arg_err, Result};
use crate::layers::{ActivationKind, LayerSpec};
use crate::model::{Head, ModelSpec};
use crate::spline::SplineSpec;
use crate::tensor::Window;

fn check_width(width: f64) -> Result<()> {
    if !(width.is_finite() && width > 0.0) {
        return Err(arg_err!("width multiplier must be positive, got {width}"));
    }
    Ok(())
}

fn scaled(base: usize, width: f64) -> usize {
    // Guard against 6 * 1.5 = 9.000000000000002 style round-up.
    ((base as f64 * width) - 1e-9).ceil().max(1.0) as usize
}

fn quarter(base: usize, width: f64) -> usize {
    scaled(base, width / 4.0)
}

fn act(relu: bool) -> Option<LayerSpec> {
    relu.then_some(LayerSpec::Activation(ActivationKind::Relu))
}

fn conv(in_ch: usize, out_ch: usize, k: usize, s: usize, p: usize, basis: Option<SplineSpec>) -> LayerSpec {
    match basis {
        Some(b) => LayerSpec::kan_conv(in_ch, out_ch, k, s, p, b),
        None => LayerSpec::conv(in_ch, out_ch, k, s, p),
    }
}

fn dense(d_in: usize, d_out: usize, basis: Option<SplineSpec>) -> LayerSpec {
    match basis {
        Some(basis) => LayerSpec::KanLinear { d_in, d_out, basis },
        None => LayerSpec::Linear { d_in, d_out },
    }
}

/// LeNet-5 topology with the given filter and hidden widths.
fn lenet_topology(name: &str, filters: [usize; 2], hidden: [usize; 2], relu: bool, basis: Option<SplineSpec>) -> ModelSpec {
    let [f1, f2] = filters;
    let [h1, h2] = hidden;
    let mut layers = vec![conv(1, f1, 5, 1, 2, basis)];
    layers.extend(act(relu));
    layers.push(LayerSpec::max_pool(2, 2));
    layers.push(conv(f1, f2, 5, 1, 0, basis));
    layers.extend(act(relu));
    layers.push(LayerSpec::max_pool(2, 2));
    layers.push(LayerSpec::Flatten);
    layers.push(dense(f2 * 25, h1, basis));
    layers.extend(act(relu));
    layers.push(dense(h1, h2, basis));
    layers.extend(act(relu));
    layers.push(dense(h2, 10, basis));
    ModelSpec {
        name: name.into(),
        input_shape: vec![1, 28, 28],
        layers,
        head: Head::Logits(10),
    }
}

/// Classical LeNet-5 on 28×28 inputs (pad-2 first convolution).
pub fn build_lenet(width: f64, relu: bool) -> Result<ModelSpec> {
    check_width(width)?;
    Ok(lenet_topology(
        "lenet",
        [scaled(6, width), scaled(16, width)],
        [scaled(120, width), scaled(84, width)],
        relu,
        None,
    ))
}

/// LeNet with KAN layers at a quarter of the widths, at least 2 filters in
/// the first convolution.
pub fn build_lenet_kan(basis: SplineSpec, width: f64, relu: bool) -> Result<ModelSpec> {
    check_width(width)?;
    Ok(lenet_topology(
        "lenet-kan",
        [quarter(6, width).max(2), quarter(16, width)],
        [quarter(120, width), quarter(84, width)],
        relu,
        Some(basis),
    ))
}

/// Canonical single-tower AlexNet on 224×224×3 inputs with 1000 classes.
/// With `kan`, convolutions and hidden linear layers use KAN layers at a
/// quarter of the widths. Meant for analytic counting.
pub fn build_alexnet(kan: Option<SplineSpec>) -> ModelSpec {
    let w = |n: usize| if kan.is_some() { quarter(n, 1.0) } else { n };
    let [c1, c2, c3, c4, c5] = [64, 192, 384, 256, 256].map(w);
    let [h1, h2] = [4096, 4096].map(w);
    let relu = || LayerSpec::Activation(ActivationKind::Relu);
    let layers = vec![
        conv(3, c1, 11, 4, 2, kan),
        relu(),
        LayerSpec::max_pool(3, 2),
        conv(c1, c2, 5, 1, 2, kan),
        relu(),
        LayerSpec::max_pool(3, 2),
        conv(c2, c3, 3, 1, 1, kan),
        relu(),
        conv(c3, c4, 3, 1, 1, kan),
        relu(),
        conv(c4, c5, 3, 1, 1, kan),
        relu(),
        LayerSpec::max_pool(3, 2),
        LayerSpec::Flatten,
        dense(c5 * 36, h1, kan),
        relu(),
        dense(h1, h2, kan),
        relu(),
        dense(h2, 1000, kan),
    ];
    ModelSpec {
        name: if kan.is_some() { "alexnet-kan" } else { "alexnet" }.into(),
        input_shape: vec![3, 224, 224],
        layers,
        head: Head::Logits(1000),
    }
}

/// Geometry of the 1-D tabular network.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularConfig {
    pub n_features: usize,
    pub n_labels: usize,
    /// Spline basis of the KAN variant; `None` builds the classical network.
    pub kan: Option<SplineSpec>,
    /// Channels and length the projected row is reshaped into.
    pub channels: usize,
    pub length: usize,
    /// Output channels and kernel width of the three convolution stages.
    pub stages: [(usize, usize); 3],
}

impl TabularConfig {
    /// Full-size network: projection to 4096 = 256 × 16, then 512-channel
    /// stages with kernels 5, 3, 3. The KAN variant divides every width by 4.
    pub fn new(n_features: usize, n_labels: usize, kan: Option<SplineSpec>) -> Self {
        let div = if kan.is_some() { 4 } else { 1 };
        Self {
            n_features,
            n_labels,
            kan,
            channels: 256 / div,
            length: 16,
            stages: [(512 / div, 5), (512 / div, 3), (512 / div, 3)],
        }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        if self.n_features == 0 || self.n_labels == 0 || self.channels == 0 || self.length == 0 {
            return Err(arg_err!("tabular network dimensions must be positive"));
        }
        if self.stages.iter().any(|&(c, k)| c == 0 || k % 2 == 0) {
            return Err(arg_err!("tabular stages need positive channels and odd kernels"));
        }
        let pool = LayerSpec::MaxPool2d {
            window: Window {
                kh: 1,
                kw: 2,
                sh: 1,
                sw: 2,
                ph: 0,
                pw: 0,
            },
        };
        let relu = LayerSpec::Activation(ActivationKind::Relu);
        // The projection stays classical in both variants; it only lifts the
        // row into the convolutional layout.
        let mut layers = vec![
            LayerSpec::Linear {
                d_in: self.n_features,
                d_out: self.channels * self.length,
            },
            relu.clone(),
            LayerSpec::Reshape(vec![self.channels, 1, self.length]),
        ];
        let mut ch = self.channels;
        for (i, &(out, k)) in self.stages.iter().enumerate() {
            layers.push(LayerSpec::conv1d(ch, out, k, k / 2, self.kan));
            layers.push(relu.clone());
            if i < 2 {
                layers.push(pool.clone());
            }
            ch = out;
        }
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(dense(ch, self.n_labels, self.kan));
        layers.push(LayerSpec::Activation(ActivationKind::Sigmoid));
        let spec = ModelSpec {
            name: if self.kan.is_some() { "tabular-ckan" } else { "tabular-cnn" }.into(),
            input_shape: vec![self.n_features],
            layers,
            head: Head::Probabilities(self.n_labels),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn build_tabular_cnn(n_features: usize, n_labels: usize, kan: Option<SplineSpec>) -> Result<ModelSpec> {
    TabularConfig::new(n_features, n_labels, kan).build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn widths(spec: &ModelSpec) -> Vec<usize> {
        spec.layers.iter().filter_map(LayerSpec::out_channels).collect()
    }

    #[test]
    fn lenet_widths() {
        assert_eq!(widths(&build_lenet(1.0, true).unwrap()), vec![6, 16, 120, 84, 10]);
        assert_eq!(widths(&build_lenet(1.5, true).unwrap()), vec![9, 24, 180, 126, 10]);
        assert!(build_lenet(0.0, true).is_err());
        assert!(build_lenet(-1.0, true).is_err());
    }

    #[test]
    fn lenet_param_count() {
        assert_eq!(build_lenet(1.0, true).unwrap().param_count(), 61_706);
        // The activation flag does not change the weights.
        assert_eq!(build_lenet(1.0, false).unwrap().param_count(), 61_706);
    }

    #[test]
    fn lenet_kan_widths() {
        let b = SplineSpec::bspline(5, 3).unwrap();
        assert_eq!(widths(&build_lenet_kan(b, 1.0, true).unwrap()), vec![2, 4, 30, 21, 10]);
        assert_eq!(widths(&build_lenet_kan(b, 1.5, true).unwrap()), vec![3, 6, 45, 32, 10]);
    }

    #[test]
    fn alexnet_counts() {
        let spec = build_alexnet(None);
        spec.validate().unwrap();
        assert_eq!(spec.param_count(), 61_100_840);
        let kan = build_alexnet(Some(SplineSpec::bspline(5, 3).unwrap()));
        kan.validate().unwrap();
        assert!(kan.param_count() < spec.param_count());
    }

    #[test]
    fn tabular_shapes() {
        let cnn = build_tabular_cnn(100, 20, None).unwrap();
        let kan = build_tabular_cnn(100, 20, Some(SplineSpec::bspline(5, 3).unwrap())).unwrap();
        assert!(kan.param_count() <= cnn.param_count());
        assert!(build_tabular_cnn(0, 20, None).is_err());
    }
}
