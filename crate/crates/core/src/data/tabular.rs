//! Tabular feature/target CSV pairs.
//!
//! Both files are comma separated with a header row and the row id in the
//! first column. Quoted fields are not supported. A feature column whose
//! first value parses as a number is numeric and is standardized (constant
//! columns become 0); any other column is categorical and one-hot encoded
//! with categories in sorted order. Target cells must be 0 or 1.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::{Dataset, Normalization, Targets};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

struct Table {
    header: Vec<String>,
    ids: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().quoting(false).has_headers(true).from_reader(file);
    let fmt = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| fmt(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 2 {
        return Err(fmt("expected an id column and at least one data column".into()));
    }
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| fmt(format!("row {}: {e}", r + 1)))?;
        if let Some(c) = rec.iter().position(|f| f.contains('"')) {
            return Err(fmt(format!("row {}, column '{}': quoted fields are not supported", r + 1, header[c])));
        }
        ids.push(rec[0].trim().to_string());
        rows.push(rec.iter().skip(1).map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(fmt("no data rows".into()));
    }
    Ok(Table { header, ids, rows })
}

fn index_ids(t: &Table, path: &Path) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(t.ids.len());
    for (i, id) in t.ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::Consistency(format!("{}: duplicate id '{id}'", path.display())));
        }
    }
    Ok(map)
}

/// Joins features and targets on the id column, in feature-file row order.
pub fn load_tabular_csv(features: &Path, targets: &Path) -> Result<Dataset> {
    let ft = read_table(features)?;
    let tt = read_table(targets)?;
    index_ids(&ft, features)?;
    let tindex = index_ids(&tt, targets)?;
    if ft.ids.len() != tt.ids.len() || ft.ids.iter().any(|id| !tindex.contains_key(id)) {
        let missing = ft.ids.iter().find(|id| !tindex.contains_key(*id));
        return Err(Error::Consistency(format!(
            "feature ids and target ids differ ({} vs {} rows{})",
            ft.ids.len(),
            tt.ids.len(),
            missing.map_or(String::new(), |m| format!(", '{m}' has no targets"))
        )));
    }
    let n = ft.rows.len();
    let cell_err = |path: &Path, r: usize, col: &str, v: &str, what: &str| {
        Error::Format(format!("{}: row {}, column '{col}': {what} '{v}'", path.display(), r + 1))
    };

    let mut columns: Vec<Vec<f32>> = Vec::new();
    for c in 0..ft.header.len() - 1 {
        let name = &ft.header[c + 1];
        let cells: Vec<&str> = ft.rows.iter().map(|r| r.get(c).map_or("", String::as_str)).collect();
        if cells[0].parse::<f64>().is_ok() {
            let vals = cells
                .iter()
                .enumerate()
                .map(|(r, v)| v.parse::<f64>().map_err(|_| cell_err(features, r, name, v, "unparseable number")))
                .collect::<Result<Vec<_>>>()?;
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            columns.push(
                vals.iter()
                    .map(|v| if std > 0.0 { ((v - mean) / std) as f32 } else { 0.0 })
                    .collect(),
            );
        } else {
            let cats: BTreeSet<&str> = cells.iter().copied().collect();
            for cat in cats {
                columns.push(cells.iter().map(|v| if *v == cat { 1.0 } else { 0.0 }).collect());
            }
        }
    }
    let width = columns.len();
    let mut x = Vec::with_capacity(n * width);
    for r in 0..n {
        x.extend(columns.iter().map(|col| col[r]));
    }

    let m = tt.header.len() - 1;
    let mut y = Vec::with_capacity(n * m);
    for id in &ft.ids {
        let r = tindex[id];
        for c in 0..m {
            let v = tt.rows[r].get(c).map_or("", String::as_str);
            y.push(match v {
                "0" => 0.0,
                "1" => 1.0,
                _ => return Err(cell_err(targets, r, &tt.header[c + 1], v, "non-binary target")),
            });
        }
    }
    let name = features
        .file_stem()
        .map_or_else(|| "tabular".to_string(), |s| s.to_string_lossy().into_owned());
    let mut ds = Dataset::new(name, Tensor::new([n, width], x)?, Targets::MultiLabel(Tensor::new([n, m], y)?))?;
    ds.mark_normalized(Normalization::PerColumn)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn standardizes_and_one_hot_encodes() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "id,a,k,c\nr1,1,x,5\nr2,3,y,5\n");
        let t = write(dir.path(), "t.csv", "id,l1\nr2,1\nr1,0\n");
        let ds = load_tabular_csv(&f, &t).unwrap();
        assert_eq!(ds.inputs.shape(), &[2, 4]);
        assert_eq!(ds.inputs.data(), &[-1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let Targets::MultiLabel(y) = &ds.targets else { unreachable!() };
        assert_eq!(y.data(), &[0.0, 1.0]);
    }

    #[test]
    fn addressed_errors() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.csv", "id,a\nr1,1\nr2,oops\n");
        let t = write(dir.path(), "t.csv", "id,l\nr1,0\nr2,1\n");
        let msg = load_tabular_csv(&f, &t).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("'a'"), "{msg}");
        let f = write(dir.path(), "g.csv", "id,a\nr1,1\nr3,2\n");
        assert!(matches!(load_tabular_csv(&f, &t), Err(Error::Consistency(_))));
        let f = write(dir.path(), "q.csv", "id,a\nr1,\"1\"\nr2,2\n");
        assert!(matches!(load_tabular_csv(&f, &t), Err(Error::Format(_))));
        let bad = write(dir.path(), "b.csv", "id,l\nr1,2\nr2,1\n");
        let f = write(dir.path(), "h.csv", "id,a\nr1,1\nr2,2\n");
        assert!(matches!(load_tabular_csv(&f, &bad), Err(Error::Format(_))));
    }
}
