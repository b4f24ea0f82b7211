//! Channel-wise L2 structured pruning.
//!
//! Every KAN layer except the final classifier is prunable: KAN convolutions
//! lose output channels and hidden KAN linear layers lose units.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::train::{fit_with_hook, FitConfig, RunReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneMask {
    pub ratio: f64,
    /// `(layer index, keep flags)` per prunable layer.
    pub layers: Vec<(usize, Vec<bool>)>,
}

impl PruneMask {
    pub fn masked_count(&self) -> usize {
        self.layers.iter().map(|(_, m)| m.iter().filter(|&&k| !k).count()).sum()
    }
}

/// Masks the `⌈ratio · C⌉` lowest scores; ties mask the lower index first.
pub fn mask_lowest(scores: &[f64], ratio: f64) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(arg_err!("prune ratio {ratio} outside [0, 1)"));
    }
    let drop = ((ratio * scores.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut keep = vec![true; scores.len()];
    order.iter().take(drop).for_each(|&i| keep[i] = false);
    Ok(keep)
}

/// Computes (does not apply) the mask for `ratio`.
pub fn prune_channels_l2<T: Scalar>(model: &Model<T>, ratio: f64) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(arg_err!("prune ratio {ratio} outside [0, 1)"));
    }
    let classifier = model.spec().classifier_index();
    let mut layers = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        if Some(i) == classifier || !layer.spec().is_kan() {
            continue;
        }
        if let Some(scores) = layer.channel_scores() {
            layers.push((i, mask_lowest(&scores, ratio)?));
        }
    }
    Ok(PruneMask { ratio, layers })
}

pub fn apply_prune_mask<T: Scalar>(model: &mut Model<T>, mask: &PruneMask) -> Result<()> {
    let classifier = model.spec().classifier_index();
    for (i, keep) in &mask.layers {
        let layer = model
            .layers_mut()
            .get_mut(*i)
            .ok_or_else(|| arg_err!("mask names layer {i}, model has fewer layers"))?;
        if Some(*i) == classifier {
            return Err(arg_err!("the final classifier (layer {i}) cannot be pruned"));
        }
        match layer.channel_mask() {
            Some(m) if m.len() == keep.len() => {}
            Some(m) => return Err(arg_err!("mask for layer {i} has {} entries, layer has {}", keep.len(), m.len())),
            None => return Err(arg_err!("layer {i} ({}) is not prunable", layer.spec().kind())),
        }
        layer.apply_channel_mask(keep)?;
    }
    Ok(())
}

/// Applies `mask` and trains with the pruned channels frozen at zero,
/// checking after every epoch that the mask is unchanged.
pub fn finetune_pruned<T: Scalar>(
    model: &mut Model<T>,
    mask: &PruneMask,
    train: &Dataset,
    val: &Dataset,
    cfg: &FitConfig,
) -> Result<RunReport> {
    apply_prune_mask(model, mask)?;
    let applied = model.masks();
    let report = fit_with_hook(model, train, val, cfg, |m, e| {
        if m.masks() != applied {
            return Err(Error::State(format!("prune mask changed during fine-tuning epoch {}", e.epoch)));
        }
        Ok(())
    })?;
    Ok(report.with_config([("prune_ratio", mask.ratio)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_scores_masked() {
        assert_eq!(mask_lowest(&[3.0, 1.0, 2.0, 4.0], 0.25).unwrap(), vec![true, false, true, true]);
        assert_eq!(mask_lowest(&[3.0, 1.0], 0.0).unwrap(), vec![true, true]);
        assert_eq!(mask_lowest(&[1.0, 1.0, 1.0], 0.3).unwrap(), vec![false, true, true]);
        assert!(mask_lowest(&[1.0], 1.0).is_err());
    }
}
