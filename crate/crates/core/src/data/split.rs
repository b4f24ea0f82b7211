use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Targets};
use crate::error::{arg_err, Result};

/// Splits `counts` into parts that sum to `total`, proportionally, by the
/// largest-remainder rule (ties go to the lower index).
fn apportion(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let quotas: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - alloc[a] as f64, quotas[b] - alloc[b] as f64);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - alloc.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        if alloc[i] < counts[i] {
            alloc[i] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Picks `take` indices into a first group, stratified by class for class
/// targets; both groups come back sorted.
fn partition(ds: &Dataset, take: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match &ds.targets {
        Targets::Classes { labels, classes } => {
            let mut g = vec![Vec::new(); *classes];
            labels.iter().enumerate().for_each(|(i, &l)| g[l].push(i));
            g
        }
        Targets::MultiLabel(_) => vec![(0..ds.len()).collect()],
    };
    let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    let alloc = apportion(&counts, take);
    let (mut first, mut second) = (Vec::with_capacity(take), Vec::with_capacity(ds.len() - take));
    for (mut g, a) in groups.into_iter().zip(alloc) {
        g.shuffle(&mut rng);
        first.extend_from_slice(&g[..a]);
        second.extend_from_slice(&g[a..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

/// Seeded `(train, val)` split by `fractions`, class-stratified for class
/// targets. The first part gets `round(fractions.0 · N)` samples.
pub fn split(ds: &Dataset, fractions: (f64, f64), seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = fractions;
    if !(a > 0.0 && b > 0.0 && (a + b - 1.0).abs() < 1e-9) {
        return Err(arg_err!("split fractions {fractions:?} must be positive and sum to 1"));
    }
    let take = (a * ds.len() as f64).round() as usize;
    if take == 0 || take == ds.len() {
        return Err(arg_err!("split {fractions:?} of {} samples leaves an empty part", ds.len()));
    }
    let (first, second) = partition(ds, take, seed);
    Ok((ds.select(&first)?, ds.select(&second)?))
}

/// Seeded class-stratified subset of `n` samples.
pub fn subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > ds.len() {
        return Err(arg_err!("subset of {n} from {} samples", ds.len()));
    }
    if n == ds.len() {
        return Ok(ds.clone());
    }
    ds.select(&partition(ds, n, seed).0)
}
