use std::fs;
use std::path::{Path, PathBuf};

use ckan::checkpoint::{load_checkpoint, save_checkpoint};
use ckan::config::{parse_bool, Arch, ModelConfig};
use ckan::data::{load_mnist_dir, load_tabular_csv, split, subset, synthetic_multilabel, Dataset};
use ckan::eval::{evaluate, finetune_pruned, latency_profile, prune_channels_l2};
use ckan::model::Model;
use ckan::sweep::{emit_reports, run_sweep, SweepConfig};
use ckan::train::{fit, AdamConfig, FitConfig};
use ckan::{Error, Result};

use crate::args::{CountArgs, ModelArgs, ProfileArgs, PruneArgs, SweepArgs, TrainArgs};

/// Environment override for the default MNIST directory.
pub const MNIST_ENV: &str = "CKAN_MNIST_DIR";
const SYNTHETIC_ROWS: usize = 2000;

/// Exit status for a finished command.
pub enum Outcome {
    Ok,
    FailedRuns(usize),
}

fn model_config(a: &ModelArgs) -> Result<ModelConfig> {
    Ok(ModelConfig {
        arch: a.model.parse()?,
        basis: a.basis.parse()?,
        grid: a.grid,
        degree: a.degree,
        width_mult: a.width_mult,
        relu: parse_bool("relu", &a.relu)?,
        seed: a.seed,
        n_features: a.features,
        n_labels: a.labels,
    })
}

fn mnist_dir(data: Option<&Path>) -> PathBuf {
    data.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(MNIST_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

/// Loads `(train, val)` for `cfg`, updating tabular feature and label counts
/// from the data.
fn load_data(cfg: &mut ModelConfig, data: Option<&Path>, n: Option<usize>) -> Result<(Dataset, Dataset)> {
    let (train, val) = match cfg.arch {
        Arch::Lenet | Arch::LenetKan => load_mnist_dir(&mnist_dir(data))?,
        Arch::TabularCnn | Arch::TabularCkan => {
            let dir = data.ok_or_else(|| Error::Config("tabular models need --data".into()))?;
            let ds = if dir == Path::new("synthetic") {
                synthetic_multilabel(SYNTHETIC_ROWS, cfg.n_features, &vec![0.1; cfg.n_labels], cfg.seed)?
            } else {
                load_tabular_csv(&dir.join("features.csv"), &dir.join("targets.csv"))?
            };
            cfg.n_features = ds.sample_shape()[0];
            cfg.n_labels = ds.targets.arity();
            split(&ds, (0.8, 0.2), cfg.seed)?
        }
        Arch::Alexnet | Arch::AlexnetKan => {
            return Err(Error::Config(format!("{} has no desk-scale dataset; use count or profile", cfg.arch)))
        }
    };
    let train = match n {
        Some(n) => subset(&train, n, cfg.seed)?,
        None => train,
    };
    Ok((train, val))
}

fn fit_config(epochs: usize, batch: usize, lr: f64, seed: u64, patience: Option<usize>) -> FitConfig {
    FitConfig {
        epochs,
        batch_size: batch,
        adam: AdamConfig::with_lr(lr),
        seed,
        patience,
        ..FitConfig::default()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn count(a: &CountArgs) -> Result<Outcome> {
    let cfg = model_config(&a.model)?;
    let spec = cfg.build()?;
    println!("model {}", spec.name);
    println!("params {}", spec.param_count());
    println!("macs {}", spec.mac_count(1)?);
    Ok(Outcome::Ok)
}

pub fn train(a: &TrainArgs) -> Result<Outcome> {
    let mut cfg = model_config(&a.model)?;
    let (train, val) = load_data(&mut cfg, a.data.as_deref(), a.subset)?;
    let mut model = Model::<f32>::init(cfg.build()?, cfg.seed)?;
    let patience = (a.patience > 0).then_some(a.patience);
    let fc = fit_config(a.epochs, a.batch, a.lr, cfg.seed, patience);
    let report = fit(&mut model, &train, &val, &fc)?.with_config(cfg.to_pairs());
    for e in &report.epochs {
        eprintln!(
            "epoch {} train_loss {:.5} val_loss {:.5} val_acc {:.4}",
            e.epoch, e.train_loss, e.val_loss, e.val_acc
        );
    }
    println!("val_loss {}", report.val_loss);
    println!("val_acc {}", report.val_acc);
    println!("params {}", report.params);
    println!("macs {}", report.macs);
    println!("wall_s {:.3}", report.wall_time_s);
    if let Some(out) = &a.out {
        save_checkpoint(out, &model, &cfg)?;
        write(&out.join("report.json"), &report.to_json())?;
    }
    Ok(Outcome::Ok)
}

pub fn profile(a: &ProfileArgs) -> Result<Outcome> {
    let mut model = match &a.checkpoint {
        Some(dir) => load_checkpoint::<f32>(dir)?.1,
        None => {
            let cfg = model_config(&a.model)?;
            Model::<f32>::init(cfg.build()?, cfg.seed)?
        }
    };
    let p = latency_profile(&mut model, a.batch, a.warmup, a.iters, 0)?;
    println!("model {}", model.spec().name);
    println!("batch {}", p.batch);
    println!("median_ms {:.4}", p.median_ms);
    println!("p90_ms {:.4}", p.p90_ms);
    println!("params {}", model.effective_param_count());
    println!("macs {}", model.mac_count(1)?);
    Ok(Outcome::Ok)
}

pub fn prune(a: &PruneArgs) -> Result<Outcome> {
    let (mut cfg, mut model) = load_checkpoint::<f32>(&a.checkpoint)?;
    let (train, val) = load_data(&mut cfg, a.data.as_deref(), a.subset)?;
    let before = evaluate(&mut model, &val, 1000, None)?;
    let (params0, macs0) = (model.effective_param_count(), model.mac_count(1)?);
    let mask = prune_channels_l2(&model, a.ratio)?;
    let acc = if a.finetune_epochs > 0 {
        let fc = fit_config(a.finetune_epochs, a.batch, a.lr, cfg.seed, None);
        finetune_pruned(&mut model, &mask, &train, &val, &fc)?.val_acc
    } else {
        ckan::eval::apply_prune_mask(&mut model, &mask)?;
        evaluate(&mut model, &val, 1000, None)?.accuracy
    };
    println!("masked_channels {}", mask.masked_count());
    println!("params {params0} -> {}", model.effective_param_count());
    println!("macs {macs0} -> {}", model.mac_count(1)?);
    println!("val_acc {} -> {acc}", before.accuracy);
    let out = a.out.clone().unwrap_or_else(|| {
        let mut name = a.checkpoint.file_name().unwrap_or_default().to_os_string();
        name.push("-pruned");
        a.checkpoint.with_file_name(name)
    });
    save_checkpoint(&out, &model, &cfg)?;
    Ok(Outcome::Ok)
}

pub fn sweep(a: &SweepArgs) -> Result<Outcome> {
    let mut cfg = if a.config == "default" {
        SweepConfig::default()
    } else {
        let text = fs::read_to_string(&a.config)
            .map_err(|e| Error::Config(format!("cannot read sweep config {}: {e}", a.config)))?;
        SweepConfig::from_kv(&text)?
    };
    if let Some(n) = a.subset {
        cfg.subset = Some(n);
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let (train, val) = load_mnist_dir(&mnist_dir(a.data.as_deref()))?;
    let train = match cfg.subset {
        Some(n) => subset(&train, n, cfg.seed)?,
        None => train,
    };
    let reports = run_sweep(&cfg, &train, &val)?;
    for r in &reports {
        eprintln!(
            "cell {} g={} w={} relu={} p={} val_acc {:.4} params {} macs {} {}",
            r.cell.index,
            r.cell.g,
            r.cell.w,
            if r.cell.relu { "on" } else { "off" },
            r.cell.p,
            r.val_acc,
            r.params,
            r.macs,
            if r.is_ok() { "ok" } else { "failed" }
        );
    }
    let summary = emit_reports(&reports, &a.out_dir)?;
    println!("cells {}", summary.cells);
    println!("failed {}", summary.failed);
    println!("out_dir {}", a.out_dir.display());
    Ok(if summary.failed > 0 {
        Outcome::FailedRuns(summary.failed)
    } else {
        Outcome::Ok
    })
}
