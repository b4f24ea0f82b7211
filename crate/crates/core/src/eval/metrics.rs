use serde::Serialize;

use crate::error::{arg_err, dim_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{topk_indices, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricBlock {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricBlock {
    fn perfect() -> Self {
        Self {
            accuracy: 1.0,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub top1: MetricBlock,
    pub top5: MetricBlock,
    pub loss: f64,
    /// True-label count per class.
    pub support: Vec<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn shape2<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [n, m] => Ok((n, m)),
        _ => Err(dim_err!("expected [N, M] scores, got {:?}", t.shape())),
    }
}

/// Top-k metrics. Each sample is credited with its true label when that label
/// is among the `k` highest scores and with its top-1 class otherwise; the
/// accuracy is the credited-correct fraction and precision, recall and F1 are
/// one-vs-rest per class on the credited predictions, averaged with weights
/// proportional to class support.
pub fn topk_metrics<T: Scalar>(logits: &Tensor<T>, labels: &[usize], k: usize) -> Result<MetricBlock> {
    let (n, m) = shape2(logits)?;
    if !(1..=m).contains(&k) {
        return Err(arg_err!("k = {k} outside 1..={m}"));
    }
    if labels.len() != n {
        return Err(dim_err!("{} labels for {n} rows", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
        return Err(arg_err!("label {bad} out of range for {m} classes"));
    }
    let mut tp = vec![0usize; m];
    let mut predicted = vec![0usize; m];
    let mut support = vec![0usize; m];
    for (row, &label) in logits.data().chunks(m).zip(labels) {
        let top = topk_indices(row, k)?;
        let credited = if top.contains(&label) { label } else { top[0] };
        predicted[credited] += 1;
        support[label] += 1;
        if credited == label {
            tp[label] += 1;
        }
    }
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for c in 0..m {
        let w = support[c] as f64 / n as f64;
        let (pc, rc) = (ratio(tp[c], predicted[c]), ratio(tp[c], support[c]));
        p += w * pc;
        r += w * rc;
        f += w * f1(pc, rc);
    }
    Ok(MetricBlock {
        accuracy: ratio(tp.iter().sum(), n),
        precision: p,
        recall: r,
        f1: f,
    })
}

/// Top-1 and top-5 blocks (top-`M` when there are fewer than 5 classes).
pub fn classification_report<T: Scalar>(logits: &Tensor<T>, labels: &[usize], loss: f64) -> Result<MetricsReport> {
    let (_, m) = shape2(logits)?;
    let top1 = topk_metrics(logits, labels, 1)?;
    let top5 = topk_metrics(logits, labels, m.min(5))?;
    let mut support = vec![0; m];
    labels.iter().for_each(|&l| support[l] += 1);
    Ok(MetricsReport {
        top1,
        top5,
        loss,
        support,
    })
}

/// Micro-averaged metrics of predictions binarized at `threshold`.
pub fn multilabel_metrics<T: Scalar>(probs: &Tensor<T>, targets: &Tensor<T>, threshold: f64) -> Result<MetricBlock> {
    shape2(probs)?;
    if probs.shape() != targets.shape() {
        return Err(dim_err!("targets {:?} vs probabilities {:?}", targets.shape(), probs.shape()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(arg_err!("threshold {threshold} outside (0, 1)"));
    }
    if probs.is_empty() {
        return Ok(MetricBlock::perfect());
    }
    let (mut tp, mut fp, mut fneg, mut agree) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in probs.data().iter().zip(targets.data()) {
        let pred = p.to_f64_lossy() >= threshold;
        let truth = y.to_f64_lossy() >= 0.5;
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
        agree += usize::from(pred == truth);
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    Ok(MetricBlock {
        accuracy: ratio(agree, probs.len()),
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_five_label() {
        // True label 0 has the fifth-highest score.
        let logits = Tensor::new([1, 6], vec![0.2f64, 0.9, 0.8, 0.7, 0.6, 0.1]).unwrap();
        assert_eq!(topk_metrics(&logits, &[0], 5).unwrap().accuracy, 1.0);
        assert_eq!(topk_metrics(&logits, &[0], 1).unwrap().accuracy, 0.0);
        assert!(topk_metrics(&logits, &[0], 7).is_err());
        assert!(topk_metrics(&logits, &[6], 1).is_err());
    }

    #[test]
    fn perfect_predictions() {
        let logits = Tensor::new([3, 3], vec![5.0f32, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 5.0]).unwrap();
        let r = classification_report(&logits, &[0, 1, 2], 0.0).unwrap();
        assert_eq!(r.top1, MetricBlock::perfect());
        assert_eq!(r.top5, MetricBlock::perfect());
    }

    #[test]
    fn multilabel_degenerate_cases() {
        let y = Tensor::new([2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(multilabel_metrics(&y, &y, 0.5).unwrap(), MetricBlock::perfect());
        let zero = Tensor::<f64>::zeros([2, 2]).unwrap();
        let m = multilabel_metrics(&zero, &y, 0.5).unwrap();
        assert_eq!((m.recall, m.precision, m.f1, m.accuracy), (0.0, 0.0, 0.0, 0.5));
    }
}
