//! Report files: `runs.csv`, `frontier.csv`, `radar.csv` and `summary.json`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::run::{CellReport, CellStatus};
use crate::error::{arg_err, Error, Result};

pub const RUNS_HEADER: [&str; 11] = [
    "g", "w", "relu", "p", "val_loss", "val_acc", "params", "macs", "latency_ms", "wall_s", "status",
];

/// Min-max normalization to `[0, 1]`, inverted (`x -> 1 - x`) unless the axis
/// is accuracy, so larger is better on every axis. An axis with fewer than
/// two distinct values maps to 0.5.
pub fn normalize_radar(values: &[f64], is_accuracy: bool) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values
        .iter()
        .map(|v| {
            let x = (v - lo) / (hi - lo);
            if is_accuracy {
                x
            } else {
                1.0 - x
            }
        })
        .collect()
}

/// Area of the polygon with radii `r` on equally spaced axes.
pub fn radar_area(r: &[f64]) -> f64 {
    let k = r.len();
    if k < 3 {
        return 0.0;
    }
    let wedge = 0.5 * (2.0 * std::f64::consts::PI / k as f64).sin();
    (0..k).map(|i| wedge * r[i] * r[(i + 1) % k]).sum()
}

/// Indices of successful reports on the accuracy/MAC Pareto frontier: no
/// other report has at most the MACs and at least the accuracy with one of
/// the two strict.
pub fn frontier(reports: &[CellReport]) -> Vec<usize> {
    let ok: Vec<usize> = (0..reports.len()).filter(|&i| reports[i].is_ok()).collect();
    ok.iter()
        .copied()
        .filter(|&i| {
            let a = &reports[i];
            !ok.iter().any(|&j| {
                let b = &reports[j];
                b.macs <= a.macs && b.val_acc >= a.val_acc && (b.macs < a.macs || b.val_acc > a.val_acc)
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub g: usize,
    pub w: f64,
    pub relu: bool,
    pub p: f64,
    pub val_acc: f64,
    pub val_loss: f64,
    pub params: usize,
    pub macs: usize,
    pub latency_ms: f64,
}

impl From<&CellReport> for CellSummary {
    fn from(r: &CellReport) -> Self {
        Self {
            g: r.cell.g,
            w: r.cell.w,
            relu: r.cell.relu,
            p: r.cell.p,
            val_acc: r.val_acc,
            val_loss: r.val_loss,
            params: r.params,
            macs: r.macs,
            latency_ms: r.latency_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Ratios {
    /// Best-cell MACs over baseline MACs.
    pub macs: f64,
    pub params: f64,
    pub latency: f64,
    pub accuracy_delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub cells: usize,
    pub failed: usize,
    /// Highest validation accuracy (first in grid order on ties).
    pub best: Option<CellSummary>,
    /// First successful cell with the smallest prune ratio.
    pub baseline: Option<CellSummary>,
    pub ratios: Option<Ratios>,
    pub failures: Vec<Failure>,
}

impl Summary {
    pub fn from_reports(reports: &[CellReport]) -> Self {
        let ok: Vec<&CellReport> = reports.iter().filter(|r| r.is_ok()).collect();
        let best = ok
            .iter()
            .copied()
            .reduce(|a, b| if b.val_acc > a.val_acc { b } else { a });
        let min_p = ok.iter().map(|r| r.cell.p).fold(f64::INFINITY, f64::min);
        let baseline = ok.iter().copied().find(|r| r.cell.p == min_p);
        let ratios = best.zip(baseline).map(|(b, base)| Ratios {
            macs: b.macs as f64 / base.macs as f64,
            params: b.params as f64 / base.params as f64,
            latency: b.latency_ms / base.latency_ms,
            accuracy_delta: b.val_acc - base.val_acc,
        });
        let failures = reports
            .iter()
            .filter_map(|r| match &r.status {
                CellStatus::Failed(e) => Some(Failure {
                    index: r.cell.index,
                    error: e.clone(),
                }),
                CellStatus::Ok => None,
            })
            .collect::<Vec<_>>();
        Self {
            cells: reports.len(),
            failed: failures.len(),
            best: best.map(CellSummary::from),
            baseline: baseline.map(CellSummary::from),
            ratios,
            failures,
        }
    }
}

fn relu_str(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn emit_reports(reports: &[CellReport], out_dir: &Path) -> Result<Summary> {
    if reports.is_empty() {
        return Err(arg_err!("no reports to emit"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cell_cols = |r: &CellReport| {
        vec![
            r.cell.g.to_string(),
            r.cell.w.to_string(),
            relu_str(r.cell.relu).to_string(),
            r.cell.p.to_string(),
        ]
    };

    write_rows(
        &out_dir.join("runs.csv"),
        &RUNS_HEADER,
        reports.iter().map(|r| {
            let mut row = cell_cols(r);
            row.extend([
                r.val_loss.to_string(),
                r.val_acc.to_string(),
                r.params.to_string(),
                r.macs.to_string(),
                r.latency_ms.to_string(),
                r.wall_s.to_string(),
                if r.is_ok() { "ok" } else { "failed" }.to_string(),
            ]);
            row
        }),
    )?;

    let on_frontier = frontier(reports);
    let mut by_macs: Vec<usize> = (0..reports.len()).filter(|&i| reports[i].is_ok()).collect();
    by_macs.sort_by_key(|&i| (reports[i].macs, i));
    write_rows(
        &out_dir.join("frontier.csv"),
        &["g", "w", "relu", "p", "macs", "val_acc", "pareto"],
        by_macs.iter().map(|&i| {
            let r = &reports[i];
            let mut row = cell_cols(r);
            let pareto = on_frontier.contains(&i);
            row.extend([r.macs.to_string(), r.val_acc.to_string(), u8::from(pareto).to_string()]);
            row
        }),
    )?;

    let ok: Vec<&CellReport> = reports.iter().filter(|r| r.is_ok()).collect();
    let axis = |f: fn(&CellReport) -> f64, acc: bool| normalize_radar(&ok.iter().map(|r| f(r)).collect::<Vec<_>>(), acc);
    let acc = axis(|r| r.val_acc, true);
    let loss = axis(|r| r.val_loss, false);
    let params = axis(|r| r.params as f64, false);
    let macs = axis(|r| r.macs as f64, false);
    let lat = axis(|r| r.latency_ms, false);
    write_rows(
        &out_dir.join("radar.csv"),
        &["g", "w", "relu", "p", "accuracy", "loss", "params", "macs", "latency", "area", "compute_area"],
        ok.iter().enumerate().map(|(i, r)| {
            let mut row = cell_cols(r);
            let radii = [acc[i], loss[i], params[i], macs[i], lat[i]];
            row.extend(radii.iter().map(f64::to_string));
            row.push(radar_area(&radii).to_string());
            row.push(radar_area(&[params[i], macs[i], lat[i]]).to_string());
            row
        }),
    )?;

    let summary = Summary::from_reports(reports);
    let path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
