use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{AdamConfig, AdamState};
use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::eval::{batch_loss, evaluate, EvalMetrics};
use crate::model::Model;
use crate::scalar::Scalar;

/// Stops after `tolerance` consecutive epochs without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub tolerance: usize,
    best: f64,
    since: usize,
}

impl EarlyStopper {
    pub fn new(tolerance: usize) -> Self {
        Self {
            tolerance,
            best: f64::INFINITY,
            since: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records one validation loss; true means stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.since >= self.tolerance
    }
}

impl Default for EarlyStopper {
    fn default() -> Self {
        Self::new(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Early-stopping tolerance; `None` always runs every epoch.
    pub patience: Option<usize>,
    /// Positive-class weights of the multi-label loss.
    pub pos_weight: Option<Vec<f64>>,
    /// Batch size of validation passes.
    pub eval_batch: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            patience: Some(3),
            pos_weight: None,
            eval_batch: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub wall_s: f64,
}

/// One training or profiling run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: BTreeMap<String, String>,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub val_loss: f64,
    pub val_acc: f64,
    pub metrics: Option<EvalMetrics>,
    pub params: usize,
    pub macs: usize,
    pub latency_ms: Option<f64>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn with_config<K: Into<String>, V: ToString>(mut self, pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        for (k, v) in pairs {
            self.config.insert(k.into(), v.to_string());
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn fit<T: Scalar>(model: &mut Model<T>, train: &Dataset, val: &Dataset, cfg: &FitConfig) -> Result<RunReport> {
    fit_with_hook(model, train, val, cfg, |_, _| Ok(()))
}

/// [`fit`] with a callback after every epoch's validation pass.
pub fn fit_with_hook<T: Scalar>(
    model: &mut Model<T>,
    train: &Dataset,
    val: &Dataset,
    cfg: &FitConfig,
    mut on_epoch: impl FnMut(&Model<T>, &EpochMetrics) -> Result<()>,
) -> Result<RunReport> {
    if train.is_empty() || val.is_empty() {
        return Err(arg_err!("training and validation data must be nonempty"));
    }
    if cfg.batch_size == 0 || cfg.eval_batch == 0 {
        return Err(arg_err!("batch size must be at least 1"));
    }
    let start = Instant::now();
    let mut adam = AdamState::<T>::new(cfg.adam)?;
    let mut stopper = EarlyStopper::new(cfg.patience.unwrap_or(usize::MAX));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, f64, EvalMetrics, Vec<_>)> = None;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let x = train.batch_inputs::<T>(idx)?;
            let out = model.forward(&x, true)?;
            let (loss, grad) = batch_loss(model, &out, train, idx, cfg.pos_weight.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite training loss in epoch {epoch}")));
            }
            total += loss * idx.len() as f64;
            model.zero_grad();
            model.backward(&grad)?;
            adam.step(model.params_mut())?;
        }
        let ev = evaluate(model, val, cfg.eval_batch, cfg.pos_weight.as_deref())?;
        if !ev.loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite validation loss in epoch {epoch}")));
        }
        let m = EpochMetrics {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: ev.loss,
            val_acc: ev.accuracy,
            wall_s: t0.elapsed().as_secs_f64(),
        };
        on_epoch(model, &m)?;
        if best.as_ref().is_none_or(|b| ev.loss < b.1) {
            best = Some((epoch, ev.loss, ev.accuracy, ev.metrics, model.snapshot()));
        }
        epochs.push(m);
        if stopper.observe(ev.loss) {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    let (best_epoch, val_loss, val_acc, metrics) = match best {
        Some((e, l, a, metrics, snap)) => {
            model.restore(&snap)?;
            (e, l, a, Some(metrics))
        }
        None => {
            let ev = evaluate(model, val, cfg.eval_batch, cfg.pos_weight.as_deref())?;
            (0, ev.loss, ev.accuracy, Some(ev.metrics))
        }
    };
    let report = RunReport {
        config: BTreeMap::new(),
        epochs,
        best_epoch,
        stopped_early,
        val_loss,
        val_acc,
        metrics,
        params: model.effective_param_count(),
        macs: model.mac_count(1)?,
        latency_ms: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(report.with_config([
        ("epochs", cfg.epochs.to_string()),
        ("batch", cfg.batch_size.to_string()),
        ("lr", cfg.adam.lr.to_string()),
        ("seed", cfg.seed.to_string()),
    ]))
}
