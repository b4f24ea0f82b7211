use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use super::config::{enumerate_grid, SweepCell, SweepConfig};
use crate::arch::build_lenet_kan;
use crate::data::Dataset;
use crate::error::Result;
use crate::eval::{evaluate, finetune_pruned, latency_profile, prune_channels_l2};
use crate::model::Model;
use crate::par::{self, Exec};
use crate::spline::SplineSpec;
use crate::train::{fit, AdamConfig, FitConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "error", rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed(String),
}

/// Outcome of one cell. Failed cells keep their analytic counts and carry
/// NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub cell: SweepCell,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Effective parameter count (pruned channels excluded).
    pub params: usize,
    /// Per-sample MACs, pruned channels excluded.
    pub macs: usize,
    pub latency_ms: f64,
    pub wall_s: f64,
    pub status: CellStatus,
}

impl CellReport {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }
}

fn cell_spec(cell: &SweepCell, cfg: &SweepConfig) -> Result<SplineSpec> {
    SplineSpec::with_family(cfg.basis, cell.g, cfg.degree)
}

fn fit_config(cfg: &SweepConfig, epochs: usize) -> FitConfig {
    FitConfig {
        epochs,
        batch_size: cfg.batch,
        adam: AdamConfig::with_lr(cfg.lr),
        seed: cfg.seed,
        patience: None,
        pos_weight: None,
        eval_batch: 1000,
    }
}

fn failed(cell: SweepCell, model: Option<&Model<f32>>, wall_s: f64, err: String) -> CellReport {
    let (params, macs) = model.map_or((0, 0), |m| (m.effective_param_count(), m.mac_count(1).unwrap_or(0)));
    CellReport {
        cell,
        val_loss: f64::NAN,
        val_acc: f64::NAN,
        params,
        macs,
        latency_ms: f64::NAN,
        wall_s,
        status: CellStatus::Failed(err),
    }
}

fn profile(model: &mut Model<f32>, cfg: &SweepConfig, lock: &Mutex<()>) -> Result<f64> {
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    Ok(latency_profile(model, cfg.latency_batch, cfg.latency_warmup, cfg.latency_iters, cfg.seed)?.median_ms)
}

/// Runs every cell of one `(g, w, relu)` group. The unpruned model is trained
/// once; each prune ratio then starts from a copy of it, so a pruned cell's
/// wall time is the shared training time plus its own fine-tuning.
fn run_group(cells: &[SweepCell], cfg: &SweepConfig, train: &Dataset, val: &Dataset, exec: Exec, lock: &Mutex<()>) -> Vec<CellReport> {
    let first = cells[0];
    let t0 = Instant::now();
    let base = (|| -> Result<Model<f32>> {
        let spec = build_lenet_kan(cell_spec(&first, cfg)?, first.w, first.relu)?;
        let mut model = Model::<f32>::init(spec, cfg.seed)?;
        model.set_exec(exec);
        fit(&mut model, train, val, &fit_config(cfg, cfg.epochs))?;
        Ok(model)
    })();
    let base_wall = t0.elapsed().as_secs_f64();
    let base = match base {
        Ok(m) => m,
        Err(e) => {
            let msg = e.to_string();
            let shape = build_lenet_kan_model(&first, cfg).ok();
            return cells.iter().map(|&c| failed(c, shape.as_ref(), base_wall, msg.clone())).collect();
        }
    };
    cells
        .iter()
        .map(|&cell| {
            let t1 = Instant::now();
            let mut model = match copy_model(&base, &cell, cfg) {
                Ok(m) => m,
                Err(e) => return failed(cell, None, base_wall, e.to_string()),
            };
            let result = (|| -> Result<(f64, f64)> {
                if cell.p > 0.0 {
                    let mask = prune_channels_l2(&model, cell.p)?;
                    let r = finetune_pruned(&mut model, &mask, train, val, &fit_config(cfg, cfg.finetune_epochs))?;
                    Ok((r.val_loss, r.val_acc))
                } else {
                    let ev = evaluate(&mut model, val, 1000, None)?;
                    Ok((ev.loss, ev.accuracy))
                }
            })();
            let wall = base_wall + t1.elapsed().as_secs_f64();
            match result.and_then(|(loss, acc)| Ok((loss, acc, profile(&mut model, cfg, lock)?))) {
                Ok((val_loss, val_acc, latency_ms)) => CellReport {
                    cell,
                    val_loss,
                    val_acc,
                    params: model.effective_param_count(),
                    macs: model.mac_count(1).unwrap_or(0),
                    latency_ms,
                    wall_s: wall,
                    status: CellStatus::Ok,
                },
                Err(e) => failed(cell, Some(&model), wall, e.to_string()),
            }
        })
        .collect()
}

fn build_lenet_kan_model(cell: &SweepCell, cfg: &SweepConfig) -> Result<Model<f32>> {
    Model::init(build_lenet_kan(cell_spec(cell, cfg)?, cell.w, cell.relu)?, cfg.seed)
}

fn copy_model(base: &Model<f32>, cell: &SweepCell, cfg: &SweepConfig) -> Result<Model<f32>> {
    let mut m = build_lenet_kan_model(cell, cfg)?;
    m.restore(&base.snapshot())?;
    m.set_exec(base.exec());
    Ok(m)
}

/// Runs a single cell on its own.
pub fn run_cell(cell: &SweepCell, cfg: &SweepConfig, train: &Dataset, val: &Dataset) -> CellReport {
    let lock = Mutex::new(());
    run_group(std::slice::from_ref(cell), cfg, train, val, Exec::Parallel, &lock).remove(0)
}

/// Runs the whole grid, `cfg.workers` groups at a time, and returns reports
/// in grid order. Latency profiles never overlap.
pub fn run_sweep(cfg: &SweepConfig, train: &Dataset, val: &Dataset) -> Result<Vec<CellReport>> {
    cfg.validate()?;
    let cells = enumerate_grid(cfg)?;
    let mut groups: Vec<Vec<SweepCell>> = Vec::new();
    for cell in cells {
        match groups.last_mut() {
            Some(g) if g[0].same_base(&cell) => g.push(cell),
            _ => groups.push(vec![cell]),
        }
    }
    let lock = Mutex::new(());
    // With several workers each cell runs sequentially inside; a single
    // worker parallelizes within the cell instead.
    let (outer, inner) = if cfg.workers > 1 {
        (Exec::Parallel, Exec::Sequential)
    } else {
        (Exec::Sequential, Exec::Parallel)
    };
    let reports = par::with_workers(cfg.workers, || {
        par::map_vec(outer, groups, |g| run_group(&g, cfg, train, val, inner, &lock))
    });
    let mut all: Vec<CellReport> = reports.into_iter().flatten().collect();
    all.sort_by_key(|r| r.cell.index);
    Ok(all)
}
