use serde::Serialize;

use crate::config::{parse_bool, parse_kv, parse_list, parse_value};
use crate::error::{Error, Result};
use crate::spline::BasisFamily;

/// Factor levels and the training recipe of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grids: Vec<usize>,
    pub widths: Vec<f64>,
    pub relus: Vec<bool>,
    pub prunes: Vec<f64>,
    pub basis: BasisFamily,
    /// B-spline degree when `basis` is B-spline.
    pub degree: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub finetune_epochs: usize,
    pub seed: u64,
    /// Stratified training subset size; `None` uses all training data.
    pub subset: Option<usize>,
    pub workers: usize,
    pub latency_batch: usize,
    pub latency_warmup: usize,
    pub latency_iters: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grids: vec![4, 8, 16],
            widths: vec![1.0, 1.5],
            relus: vec![true, false],
            prunes: vec![0.0, 0.25],
            basis: BasisFamily::Rbf,
            degree: 3,
            epochs: 5,
            batch: 512,
            lr: 1e-3,
            finetune_epochs: 1,
            seed: 0,
            subset: None,
            workers: 1,
            latency_batch: 32,
            latency_warmup: 10,
            latency_iters: 100,
        }
    }
}

impl SweepConfig {
    /// Parses a key/value sweep file; `"default"` or an empty text gives the
    /// defaults. Lists use commas: `g = 4,8,16`.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        if text.trim() == "default" {
            return Ok(cfg);
        }
        for (k, v) in parse_kv(text)? {
            match k.as_str() {
                "g" | "grid" => cfg.grids = parse_list(&k, &v)?,
                "w" | "width" | "width_mult" => cfg.widths = parse_list(&k, &v)?,
                "relu" => {
                    cfg.relus = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_bool(&k, s))
                        .collect::<Result<_>>()?
                }
                "p" | "prune" => cfg.prunes = parse_list(&k, &v)?,
                "basis" => cfg.basis = v.parse()?,
                "degree" => cfg.degree = parse_value(&k, &v)?,
                "epochs" => cfg.epochs = parse_value(&k, &v)?,
                "batch" => cfg.batch = parse_value(&k, &v)?,
                "lr" => cfg.lr = parse_value(&k, &v)?,
                "finetune_epochs" => cfg.finetune_epochs = parse_value(&k, &v)?,
                "seed" => cfg.seed = parse_value(&k, &v)?,
                "subset" => cfg.subset = Some(parse_value(&k, &v)?),
                "workers" => cfg.workers = parse_value(&k, &v)?,
                "latency_batch" => cfg.latency_batch = parse_value(&k, &v)?,
                "latency_warmup" => cfg.latency_warmup = parse_value(&k, &v)?,
                "latency_iters" => cfg.latency_iters = parse_value(&k, &v)?,
                other => return Err(Error::Config(format!("unknown sweep key '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.grids.is_empty() || self.widths.is_empty() || self.relus.is_empty() || self.prunes.is_empty() {
            return bad("every factor needs at least one level");
        }
        if self.grids.contains(&0) || self.widths.iter().any(|w| !(*w > 0.0)) {
            return bad("grid sizes and widths must be positive");
        }
        if self.prunes.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("prune ratios must lie in [0, 1)");
        }
        if self.epochs == 0 || self.batch == 0 || self.latency_batch == 0 || self.latency_iters == 0 {
            return bad("epochs, batch sizes and latency iterations must be positive");
        }
        if self.latency_iters < 30 {
            return bad("latency profiles need at least 30 timed iterations");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.subset == Some(0) {
            return bad("subset size must be positive");
        }
        Ok(())
    }
}

/// One factor assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub g: usize,
    pub w: f64,
    pub relu: bool,
    pub p: f64,
}

impl SweepCell {
    /// Cells sharing everything but the prune ratio.
    pub fn same_base(&self, other: &SweepCell) -> bool {
        self.g == other.g && self.w == other.w && self.relu == other.relu
    }
}

/// Cartesian product in factor order `(g, w, relu, p)`, last factor fastest.
pub fn enumerate_grid(cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    if cfg.grids.is_empty() || cfg.widths.is_empty() || cfg.relus.is_empty() || cfg.prunes.is_empty() {
        return Err(Error::Config("every factor needs at least one level".into()));
    }
    let mut cells = Vec::new();
    for &g in &cfg.grids {
        for &w in &cfg.widths {
            for &relu in &cfg.relus {
                for &p in &cfg.prunes {
                    cells.push(SweepCell {
                        index: cells.len(),
                        g,
                        w,
                        relu,
                        p,
                    });
                }
            }
        }
    }
    Ok(cells)
}
