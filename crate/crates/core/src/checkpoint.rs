//! Checkpoint directories: `manifest.txt` (key/value text) and `params.bin`
//! (every parameter array, little-endian, in manifest order).
//!
//! The manifest records the scalar width, the model config, one
//! `param.<i> = <layer>.<name> <shape>` entry per array and one
//! `mask.<layer> = 1011…` entry per prunable layer.

use std::fs;
use std::path::Path;

use crate::config::{parse_kv, ModelConfig};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const FORMAT: &str = "ckan-checkpoint-1";
const MANIFEST: &str = "manifest.txt";
const BLOB: &str = "params.bin";

pub fn save_checkpoint<T: Scalar>(dir: &Path, model: &Model<T>, config: &ModelConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!("format = {FORMAT}\nwidth = {}\n", T::WIDTH.as_str());
    for (k, v) in config.to_pairs() {
        manifest.push_str(&format!("config.{k} = {v}\n"));
    }
    let mut blob = Vec::new();
    let mut i = 0;
    for (li, layer) in model.layers().iter().enumerate() {
        for p in layer.params() {
            let shape: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
            manifest.push_str(&format!("param.{i} = {li}.{} {}\n", p.name, shape.join("x")));
            p.value.data().iter().for_each(|&v| v.write_le(&mut blob));
            i += 1;
        }
    }
    manifest.push_str(&format!("param.count = {i}\n"));
    for (li, mask) in model.masks() {
        let bits: String = mask.iter().map(|&m| if m { '1' } else { '0' }).collect();
        manifest.push_str(&format!("mask.{li} = {bits}\n"));
    }
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let bpath = dir.join(BLOB);
    fs::write(&bpath, blob).map_err(|e| Error::io(&bpath, e))
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

/// Rebuilds the model from the stored config, then loads parameters and masks.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(ModelConfig, Model<T>)> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let kv = parse_kv(&text).map_err(|e| format_err(e.to_string()))?;
    let get = |k: &str| kv.get(k).ok_or_else(|| format_err(format!("missing key '{k}'")));
    if get("format")? != FORMAT {
        return Err(format_err(format!("expected format {FORMAT}, found {}", get("format")?)));
    }
    if get("width")? != T::WIDTH.as_str() {
        return Err(format_err(format!(
            "stored width {} cannot load as {}",
            get("width")?,
            T::WIDTH.as_str()
        )));
    }
    let config_map = kv
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
        .collect();
    let config = ModelConfig::from_map(&config_map)?;
    let mut model = Model::<T>::init(config.build()?, config.seed)?;

    let bpath = dir.join(BLOB);
    let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    let count: usize = get("param.count")?.parse().map_err(|_| format_err("bad param.count"))?;
    let expected: Vec<(String, Vec<usize>)> = model
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(li, l)| l.params().iter().map(move |p| (format!("{li}.{}", p.name), p.value.shape().to_vec())))
        .collect();
    if count != expected.len() {
        return Err(format_err(format!("{count} arrays stored, model has {}", expected.len())));
    }
    let mut values = Vec::with_capacity(count);
    let mut offset = 0;
    for (i, (name, shape)) in expected.iter().enumerate() {
        let entry = get(&format!("param.{i}"))?;
        let want_shape: Vec<String> = shape.iter().map(usize::to_string).collect();
        let want = format!("{name} {}", want_shape.join("x"));
        if *entry != want {
            return Err(format_err(format!("param.{i} is '{entry}', model expects '{want}'")));
        }
        let len: usize = shape.iter().product();
        let bytes = blob
            .get(offset..offset + len * T::BYTES)
            .ok_or_else(|| format_err("params.bin is truncated"))?;
        let data = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
        values.push(Tensor::new(shape.clone(), data)?);
        offset += len * T::BYTES;
    }
    if offset != blob.len() {
        return Err(format_err(format!("params.bin has {} trailing bytes", blob.len() - offset)));
    }
    model.restore(&values)?;
    for (k, v) in &kv {
        let Some(li) = k.strip_prefix("mask.") else { continue };
        let li: usize = li.parse().map_err(|_| format_err(format!("bad mask key '{k}'")))?;
        let mask = v
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(format_err(format!("bad mask '{v}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let layer = model
            .layers_mut()
            .get_mut(li)
            .ok_or_else(|| format_err(format!("mask for missing layer {li}")))?;
        layer.apply_channel_mask(&mask)?;
    }
    Ok((config, model))
}
