use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{Dataset, Targets};
use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// Gaussian blobs with unit variance. Class `c` sits at `separation · e_c`
/// when `classes <= dim`, otherwise at a random direction of that length.
/// Samples cycle through the classes.
pub fn synthetic_blobs(n: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || classes == 0 || dim == 0 {
        return Err(arg_err!("blobs need positive sizes, got n={n} classes={classes} dim={dim}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            if classes <= dim {
                (0..dim).map(|d| if d == c { separation } else { 0.0 }).collect()
            } else {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x * separation / norm).collect()
            }
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut data = Vec::with_capacity(n * dim);
    for &l in &labels {
        for &m in &means[l] {
            let z: f64 = rng.sample(StandardNormal);
            data.push((m + z) as f32);
        }
    }
    Dataset::new("blobs", Tensor::new([n, dim], data)?, Targets::Classes { labels, classes })
}

/// Standard-normal features and labels from thresholded random linear
/// projections. Each projection is scaled to unit variance and label `j`
/// fires above the `1 - prevalence[j]` normal quantile, so its marginal
/// rate is exactly `prevalence[j]`.
pub fn synthetic_multilabel(n: usize, features: usize, prevalence: &[f64], seed: u64) -> Result<Dataset> {
    let labels = prevalence.len();
    if n == 0 || features == 0 || labels == 0 {
        return Err(arg_err!("multi-label data needs positive sizes"));
    }
    if prevalence.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(arg_err!("prevalences must lie in (0, 1), got {prevalence:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let weights: Vec<Vec<f64>> = (0..labels)
        .map(|_| {
            let w: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            w.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let thresholds: Vec<f64> = prevalence.iter().map(|p| unit.inverse_cdf(1.0 - p)).collect();
    let mut x = Vec::with_capacity(n * features);
    let mut y = Vec::with_capacity(n * labels);
    for _ in 0..n {
        let row: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
        for (w, t) in weights.iter().zip(&thresholds) {
            let z: f64 = w.iter().zip(&row).map(|(a, b)| a * b).sum();
            y.push(if z > *t { 1.0 } else { 0.0 });
        }
        x.extend(row.iter().map(|&v| v as f32));
    }
    Dataset::new(
        "multilabel",
        Tensor::new([n, features], x)?,
        Targets::MultiLabel(Tensor::new([n, labels], y)?),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synthetic_blobs(50, 3, 4, 10.0, 9).unwrap();
        let b = synthetic_blobs(50, 3, 4, 10.0, 9).unwrap();
        assert_eq!(a.inputs.data(), b.inputs.data());
        let c = synthetic_multilabel(20, 5, &[0.2, 0.5], 1).unwrap();
        let d = synthetic_multilabel(20, 5, &[0.2, 0.5], 1).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn prevalences_within_binomial_bounds() {
        let prev = [0.05, 0.2, 0.5];
        let n = 4000;
        let ds = synthetic_multilabel(n, 12, &prev, 3).unwrap();
        let Targets::MultiLabel(y) = &ds.targets else { unreachable!() };
        for (j, &p) in prev.iter().enumerate() {
            let hits: f64 = y.data().iter().skip(j).step_by(prev.len()).map(|&v| v as f64).sum();
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((hits - n as f64 * p).abs() <= 3.0 * sigma, "label {j}: {hits}");
        }
    }
}
