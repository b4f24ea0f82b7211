//! Central finite-difference checks of layer and model gradients in 64-bit
//! mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::layers::{Layer, Pass};
use crate::model::Model;
use crate::par::Exec;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// `‖a − n‖ / (‖a‖ + ‖n‖)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Relative error of every checked array, by name.
#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub entries: Vec<(String, f64)>,
}

impl GradReport {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.entries.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn probe(shape: &[usize], seed: u64) -> Result<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.sample(StandardNormal))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn central(f: &mut dyn FnMut(f64) -> Result<f64>, v: f64, h: f64) -> Result<f64> {
    Ok((f(v + h)? - f(v - h)?) / (2.0 * h))
}

/// Checks every parameter and the input gradient of `layer` on `x`, using
/// the scalar objective `Σ r·y` for a seeded random `r`.
pub fn check_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, seed: u64, h: f64) -> Result<GradReport> {
    let (train, infer) = (Pass::train(Exec::Sequential), Pass::infer(Exec::Sequential));
    layer.set_needs_input_grad(true);
    layer.zero_grad();
    let y = layer.forward(x, train)?;
    let r = probe(y.shape(), seed)?;
    let dx = layer.backward(&r, train)?;
    let mut report = GradReport::default();

    for pi in 0..layer.params().len() {
        let name = layer.params()[pi].name;
        let analytic = layer.params()[pi].grad.data().to_vec();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let orig = layer.params()[pi].value.data()[i];
            let mut f = |v: f64| -> Result<f64> {
                layer.params_mut()[pi].value.data_mut()[i] = v;
                Ok(dot(&layer.forward(x, infer)?, &r))
            };
            numeric.push(central(&mut f, orig, h)?);
            layer.params_mut()[pi].value.data_mut()[i] = orig;
        }
        report.entries.push((name.to_string(), relative_error(&analytic, &numeric)));
    }

    let mut xp = x.clone();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp.data()[i];
        let mut f = |v: f64| -> Result<f64> {
            xp.data_mut()[i] = v;
            Ok(dot(&layer.forward(&xp, infer)?, &r))
        };
        numeric.push(central(&mut f, orig, h)?);
        xp.data_mut()[i] = orig;
    }
    report.entries.push(("input".into(), relative_error(dx.data(), &numeric)));
    Ok(report)
}

/// Checks every parameter of `model` (and the input gradient) on `x`.
pub fn check_model(model: &mut Model<f64>, x: &Tensor<f64>, seed: u64, h: f64) -> Result<GradReport> {
    model.set_exec(Exec::Sequential);
    model.set_needs_input_grad(true);
    model.zero_grad();
    let y = model.forward(x, true)?;
    let r = probe(y.shape(), seed)?;
    let dx = model.backward(&r)?;
    let mut report = GradReport::default();
    let n_layers = model.layers().len();
    for li in 0..n_layers {
        for pi in 0..model.layers()[li].params().len() {
            let name = format!("{li}.{}", model.layers()[li].params()[pi].name);
            let analytic = model.layers()[li].params()[pi].grad.data().to_vec();
            let mut numeric = Vec::with_capacity(analytic.len());
            for i in 0..analytic.len() {
                let orig = model.layers()[li].params()[pi].value.data()[i];
                let mut f = |v: f64| -> Result<f64> {
                    model.layers_mut()[li].params_mut()[pi].value.data_mut()[i] = v;
                    Ok(dot(&model.forward(x, false)?, &r))
                };
                numeric.push(central(&mut f, orig, h)?);
                model.layers_mut()[li].params_mut()[pi].value.data_mut()[i] = orig;
            }
            report.entries.push((name, relative_error(&analytic, &numeric)));
        }
    }
    let mut xp = x.clone();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp.data()[i];
        let mut f = |v: f64| -> Result<f64> {
            xp.data_mut()[i] = v;
            Ok(dot(&model.forward(&xp, false)?, &r))
        };
        numeric.push(central(&mut f, orig, h)?);
        xp.data_mut()[i] = orig;
    }
    report.entries.push(("input".into(), relative_error(dx.data(), &numeric)));
    Ok(report)
}

/// Finite-difference gradient of a scalar function of one tensor.
pub fn numeric_gradient(x: &Tensor<f64>, h: f64, mut f: impl FnMut(&Tensor<f64>) -> Result<f64>) -> Result<Vec<f64>> {
    let mut xp = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let up = f(&xp)?;
        xp.data_mut()[i] = orig - h;
        let down = f(&xp)?;
        xp.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}
