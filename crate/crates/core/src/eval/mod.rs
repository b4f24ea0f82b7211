//! Metrics, evaluation passes, latency profiling and structured pruning.

mod latency;
mod metrics;
mod prune;

pub use latency::{latency_profile, LatencyProfile};
pub use metrics::{classification_report, multilabel_metrics, topk_metrics, MetricBlock, MetricsReport};
pub use prune::{apply_prune_mask, finetune_pruned, mask_lowest, prune_channels_l2, PruneMask};

use serde::Serialize;

use crate::data::{select_rows, Dataset, Targets};
use crate::error::{arg_err, Result};
use crate::model::{Head, Model};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::{bce_multilabel, softmax_cross_entropy};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EvalMetrics {
    Classification(MetricsReport),
    MultiLabel(MetricBlock),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Top-1 accuracy, or elementwise agreement for multi-label data.
    pub accuracy: f64,
    pub metrics: EvalMetrics,
}

fn check_head(head: Head, targets: &Targets) -> Result<()> {
    match (head, targets) {
        (Head::Logits(m), Targets::Classes { classes, .. }) if m >= *classes => Ok(()),
        (Head::Probabilities(m), Targets::MultiLabel(t)) if t.shape()[1] == m => Ok(()),
        _ => Err(arg_err!("model head {head:?} does not fit {} targets", targets.arity())),
    }
}

/// Loss and output gradient for the rows `idx` of `data`.
pub(crate) fn batch_loss<T: Scalar>(
    model: &Model<T>,
    out: &Tensor<T>,
    data: &Dataset,
    idx: &[usize],
    pos_weight: Option<&[f64]>,
) -> Result<(f64, Tensor<T>)> {
    check_head(model.spec().head, &data.targets)?;
    match &data.targets {
        Targets::Classes { labels, .. } => {
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            softmax_cross_entropy(out, &y)
        }
        Targets::MultiLabel(t) => bce_multilabel(out, &select_rows(t, idx)?.cast(), pos_weight),
    }
}

/// Inference over a whole dataset.
pub fn evaluate<T: Scalar>(
    model: &mut Model<T>,
    data: &Dataset,
    batch: usize,
    pos_weight: Option<&[f64]>,
) -> Result<Evaluation> {
    check_head(model.spec().head, &data.targets)?;
    let out = model.predict(&data.inputs.cast::<T>(), batch)?;
    match &data.targets {
        Targets::Classes { labels, .. } => {
            let (loss, _) = softmax_cross_entropy(&out, labels)?;
            let report = classification_report(&out, labels, loss)?;
            Ok(Evaluation {
                loss,
                accuracy: report.top1.accuracy,
                metrics: EvalMetrics::Classification(report),
            })
        }
        Targets::MultiLabel(t) => {
            let (loss, _) = bce_multilabel(&out, &t.cast(), pos_weight)?;
            let block = multilabel_metrics(&out, &t.cast(), 0.5)?;
            Ok(Evaluation {
                loss,
                accuracy: block.accuracy,
                metrics: EvalMetrics::MultiLabel(block),
            })
        }
    }
}
