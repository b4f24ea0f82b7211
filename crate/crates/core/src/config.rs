//! Plain-text `key = value` configuration files and the model config.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.
//! List values are comma separated (`g = 4,8,16`).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::arch::{build_alexnet, build_lenet, build_lenet_kan, TabularConfig};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::spline::{BasisFamily, SplineSpec};

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key = value, got '{line}'", no + 1)));
        };
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", no + 1)));
        }
    }
    Ok(map)
}

pub fn parse_value<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

pub fn parse_list<V: FromStr>(key: &str, v: &str) -> Result<Vec<V>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

pub fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" | "relu" => Ok(true),
        "off" | "false" | "no" | "0" | "none" => Ok(false),
        _ => Err(Error::Config(format!("invalid flag '{v}' for '{key}'"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Lenet,
    LenetKan,
    Alexnet,
    AlexnetKan,
    TabularCnn,
    TabularCkan,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Lenet => "lenet",
            Arch::LenetKan => "lenet-kan",
            Arch::Alexnet => "alexnet",
            Arch::AlexnetKan => "alexnet-kan",
            Arch::TabularCnn => "tabular-cnn",
            Arch::TabularCkan => "tabular-ckan",
        }
    }

    pub fn is_kan(self) -> bool {
        matches!(self, Arch::LenetKan | Arch::AlexnetKan | Arch::TabularCkan)
    }

    pub fn is_tabular(self) -> bool {
        matches!(self, Arch::TabularCnn | Arch::TabularCkan)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "lenet" => Arch::Lenet,
            "lenet-kan" | "lenetkan" => Arch::LenetKan,
            "alexnet" => Arch::Alexnet,
            "alexnet-kan" | "alexnetkan" => Arch::AlexnetKan,
            "tabular-cnn" | "tabular" => Arch::TabularCnn,
            "tabular-ckan" | "tabular-kan" => Arch::TabularCkan,
            other => return Err(Error::Config(format!("unknown model '{other}'"))),
        })
    }
}

/// Everything needed to rebuild a model bit-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arch: Arch,
    pub basis: BasisFamily,
    pub grid: usize,
    pub degree: usize,
    pub width_mult: f64,
    pub relu: bool,
    pub seed: u64,
    /// Tabular input and label counts; ignored by the image models.
    pub n_features: usize,
    pub n_labels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::LenetKan,
            basis: BasisFamily::BSpline,
            grid: 5,
            degree: 3,
            width_mult: 1.0,
            relu: true,
            seed: 0,
            n_features: 100,
            n_labels: 20,
        }
    }
}

impl ModelConfig {
    pub fn new(arch: Arch) -> Self {
        Self {
            arch,
            ..Self::default()
        }
    }

    pub fn spline(&self) -> Result<SplineSpec> {
        SplineSpec::with_family(self.basis, self.grid, self.degree)
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let kan = if self.arch.is_kan() { Some(self.spline()?) } else { None };
        match self.arch {
            Arch::Lenet => build_lenet(self.width_mult, self.relu),
            Arch::LenetKan => build_lenet_kan(self.spline()?, self.width_mult, self.relu),
            Arch::Alexnet | Arch::AlexnetKan => Ok(build_alexnet(kan)),
            Arch::TabularCnn | Arch::TabularCkan => TabularConfig::new(self.n_features, self.n_labels, kan).build(),
        }
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("model", self.arch.to_string()),
            ("basis", self.basis.as_str().into()),
            ("grid", self.grid.to_string()),
            ("degree", self.degree.to_string()),
            ("width_mult", self.width_mult.to_string()),
            ("relu", if self.relu { "on" } else { "off" }.into()),
            ("seed", self.seed.to_string()),
            ("features", self.n_features.to_string()),
            ("labels", self.n_labels.to_string()),
        ]
    }

    pub fn to_kv(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Reads a config from key/value pairs; unknown keys are errors, missing
    /// keys take defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in map {
            match k.as_str() {
                "model" => cfg.arch = v.parse()?,
                "basis" => cfg.basis = v.parse()?,
                "grid" => cfg.grid = parse_value(k, v)?,
                "degree" => cfg.degree = parse_value(k, v)?,
                "width_mult" => cfg.width_mult = parse_value(k, v)?,
                "relu" => cfg.relu = parse_bool(k, v)?,
                "seed" => cfg.seed = parse_value(k, v)?,
                "features" => cfg.n_features = parse_value(k, v)?,
                "labels" => cfg.n_labels = parse_value(k, v)?,
                other => return Err(Error::Config(format!("unknown model config key '{other}'"))),
            }
        }
        Ok(cfg)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        Self::from_map(&parse_kv(text)?)
    }
}
