//! Datasets: MNIST IDX files, tabular CSV pairs, seeded splits and synthetic
//! generators.

mod idx;
mod split;
mod synthetic;
mod tabular;

pub use idx::{load_mnist_dir, load_mnist_idx, MNIST_FILES, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, MNIST_MEAN, MNIST_STD};
pub use split::{split, subset};
pub use synthetic::{synthetic_blobs, synthetic_multilabel};
pub use tabular::load_tabular_csv;

use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Supervision targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, classes: usize },
    /// Binary label matrix `[N, M]`.
    MultiLabel(Tensor<f32>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::MultiLabel(t) => t.shape()[0],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class count or label count.
    pub fn arity(&self) -> usize {
        match self {
            Targets::Classes { classes, .. } => *classes,
            Targets::MultiLabel(t) => t.shape()[1],
        }
    }

    fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(match self {
            Targets::Classes { labels, classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Targets::MultiLabel(t) => Targets::MultiLabel(select_rows(t, idx)?),
        })
    }
}

/// Affine normalization applied to every input value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// `(x - mean) / std` with one pair for all values.
    Global { mean: f64, std: f64 },
    /// Per-column standardization of tabular features.
    PerColumn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `[N, ...]`.
    pub inputs: Tensor<f32>,
    pub targets: Targets,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Tensor<f32>, targets: Targets) -> Result<Self> {
        if inputs.rank() < 2 {
            return Err(dim_err!("dataset inputs must be batched, got {:?}", inputs.shape()));
        }
        if inputs.shape()[0] != targets.len() {
            return Err(Error::Consistency(format!(
                "{} inputs but {} targets",
                inputs.shape()[0],
                targets.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            inputs,
            targets,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn normalization(&self) -> Option<Normalization> {
        self.normalization
    }

    /// Applies `(x - mean) / std` once; a second normalization is an error.
    pub fn normalize(&mut self, mean: f64, std: f64) -> Result<()> {
        self.mark_normalized(Normalization::Global { mean, std })?;
        let (mean, inv) = (mean as f32, 1.0 / std as f32);
        self.inputs.data_mut().iter_mut().for_each(|v| *v = (*v - mean) * inv);
        Ok(())
    }

    /// Records a normalization applied by a loader.
    pub(crate) fn mark_normalized(&mut self, n: Normalization) -> Result<()> {
        if let Some(prev) = self.normalization {
            return Err(Error::State(format!("dataset {} is already normalized ({prev:?})", self.name)));
        }
        self.normalization = Some(n);
        Ok(())
    }

    /// Rows `idx`, in that order; the normalization record is kept.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            name: self.name.clone(),
            inputs: select_rows(&self.inputs, idx)?,
            targets: self.targets.select(idx)?,
            normalization: self.normalization,
        })
    }

    /// Inputs of rows `idx` converted to the training scalar type.
    pub fn batch_inputs<T: Scalar>(&self, idx: &[usize]) -> Result<Tensor<T>> {
        let rows = select_rows(&self.inputs, idx)?;
        Ok(rows.cast())
    }
}

pub(crate) fn select_rows<T: Scalar>(t: &Tensor<T>, idx: &[usize]) -> Result<Tensor<T>> {
    let n = t.shape()[0];
    let row: usize = t.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(idx.len() * row);
    for &i in idx {
        if i >= n {
            return Err(dim_err!("row {i} out of range for {n} rows"));
        }
        data.extend_from_slice(&t.data()[i * row..(i + 1) * row]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(shape, data)
}
