use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyProfile {
    pub batch: usize,
    pub warmup: usize,
    pub iters: usize,
    /// Timed iterations only, in run order.
    pub samples_ms: Vec<f64>,
    pub median_ms: f64,
    pub p90_ms: f64,
}

impl LatencyProfile {
    /// Order statistics of timed samples: the median (mean of the two middle
    /// values for even counts) and the nearest-rank 90th percentile.
    pub fn from_samples(batch: usize, warmup: usize, samples_ms: Vec<f64>) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(arg_err!("latency profile needs at least one timed iteration"));
        }
        let mut sorted = samples_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
        Ok(Self {
            batch,
            warmup,
            iters: n,
            samples_ms,
            median_ms: median,
            p90_ms: sorted[rank - 1],
        })
    }
}

/// Times inference forward passes on a seeded standard-normal batch. Warmup
/// passes run untimed first.
pub fn latency_profile<T: Scalar>(
    model: &mut Model<T>,
    batch: usize,
    warmup: usize,
    iters: usize,
    seed: u64,
) -> Result<LatencyProfile> {
    if batch == 0 || iters == 0 {
        return Err(arg_err!("latency profile needs batch >= 1 and iters >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = vec![batch];
    shape.extend_from_slice(&model.spec().input_shape);
    let x = Tensor::from_fn(shape, |_| T::lit(rng.sample(StandardNormal)))?;
    for _ in 0..warmup {
        model.forward(&x, false)?;
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t0 = Instant::now();
        std::hint::black_box(model.forward(&x, false)?);
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    LatencyProfile::from_samples(batch, warmup, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        let p = LatencyProfile::from_samples(32, 10, vec![5.0, 1.0, 3.0]).unwrap();
        assert_eq!(p.median_ms, 3.0);
        assert_eq!(p.p90_ms, 5.0);
        let p = LatencyProfile::from_samples(32, 0, (1..=10).map(f64::from).collect()).unwrap();
        assert_eq!((p.median_ms, p.p90_ms), (5.5, 9.0));
        assert!(LatencyProfile::from_samples(1, 0, vec![]).is_err());
    }
}
