use crate::error::{arg_err, dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probability clip applied before taking logarithms in the BCE loss.
pub const BCE_CLIP: f64 = 1e-7;

fn rows<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [n, m] if n > 0 => Ok((n, m)),
        _ => Err(dim_err!("{what} must be [N, M], got {:?}", t.shape())),
    }
}

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let (n, m) = rows(logits, "logits")?;
    if labels.len() != n {
        return Err(dim_err!("{} labels for {n} logit rows", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
        return Err(arg_err!("label {bad} out of range for {m} classes"));
    }
    let mut grad = vec![T::zero(); n * m];
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, (row, g)) in logits.data().chunks(m).zip(grad.chunks_mut(m)).enumerate() {
        let max = row.iter().map(|v| v.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64_lossy() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let label = labels[i];
        total += sum.ln() - (row[label].to_f64_lossy() - max);
        for (j, (gj, e)) in g.iter_mut().zip(&exps).enumerate() {
            let onehot = if j == label { 1.0 } else { 0.0 };
            *gj = T::lit((e / sum - onehot) * inv_n);
        }
    }
    Ok((total * inv_n, Tensor::new([n, m], grad)?))
}

/// Multi-label binary cross-entropy, averaged over samples then labels.
/// `pos_weight[j]` scales the positive term of label `j` (uniform when
/// `None`). Gradients are zero where the probability was clipped.
pub fn bce_multilabel<T: Scalar>(
    probs: &Tensor<T>,
    targets: &Tensor<T>,
    pos_weight: Option<&[f64]>,
) -> Result<(f64, Tensor<T>)> {
    let (n, m) = rows(probs, "probabilities")?;
    if targets.shape() != probs.shape() {
        return Err(dim_err!("targets {:?} vs probabilities {:?}", targets.shape(), probs.shape()));
    }
    if let Some(w) = pos_weight {
        if w.len() != m {
            return Err(dim_err!("{} positive weights for {m} labels", w.len()));
        }
    }
    let scale = 1.0 / (n * m) as f64;
    let mut total = 0.0;
    let mut grad = vec![T::zero(); n * m];
    for (idx, (&p, &y)) in probs.data().iter().zip(targets.data()).enumerate() {
        let y = y.to_f64_lossy();
        if y != 0.0 && y != 1.0 {
            return Err(arg_err!("target {y} at flat index {idx} is not binary"));
        }
        let raw = p.to_f64_lossy();
        let pc = raw.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        let w = pos_weight.map_or(1.0, |w| w[idx % m]);
        total -= w * y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        if raw == pc {
            grad[idx] = T::lit(scale * (-w * y / pc + (1.0 - y) / (1.0 - pc)));
        }
    }
    Ok((total * scale, Tensor::new([n, m], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let (l, _) = softmax_cross_entropy(&Tensor::<f64>::zeros([3, 10]).unwrap(), &[0, 4, 9]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        let p = Tensor::<f64>::full([2, 3], 0.5).unwrap();
        let y = Tensor::new([2, 3], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let (l, _) = bce_multilabel(&p, &y, None).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let (l, _) = bce_multilabel(&y, &y, None).unwrap();
        assert!(l <= 1e-6);
    }

    #[test]
    fn wide_margin_loss_vanishes() {
        let logits = Tensor::new([1, 3], vec![0.0f64, 200.0, -50.0]).unwrap();
        let (l, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn argument_errors() {
        let z = Tensor::<f32>::zeros([2, 3]).unwrap();
        assert!(softmax_cross_entropy(&z, &[0, 3]).is_err());
        assert!(softmax_cross_entropy(&z, &[0]).is_err());
        let half = Tensor::<f32>::full([2, 3], 0.5).unwrap();
        let bad = Tensor::<f32>::full([2, 3], 0.3).unwrap();
        assert!(bce_multilabel(&half, &bad, None).is_err());
    }
}
