//! IDX files: big-endian `u32` magic, big-endian `u32` dimensions, then
//! unsigned bytes. Images use magic 2051 with dims `N, rows, cols`; labels use
//! 2049 with dim `N`.

use std::fs;
use std::path::Path;

use super::{Dataset, Normalization, Targets};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format(format!("{}: truncated header", path.display())))
}

fn parse(bytes: &[u8], magic: u32, ndim: usize, path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::Format(format!(
            "{}: expected IDX magic {magic}, found {found}",
            path.display()
        )));
    }
    let dims = (0..ndim)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    if bytes.len() != header + len {
        return Err(Error::Format(format!(
            "{}: header promises {len} bytes of data, file holds {}",
            path.display(),
            bytes.len().saturating_sub(header)
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Format(format!("{}: zero dimension in {dims:?}", path.display())));
    }
    Ok((dims, bytes[header..].to_vec()))
}

/// Raw image bytes as `(n, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let (dims, data) = parse(&read(path)?, IMAGE_MAGIC, 3, path)?;
    Ok((dims[0], dims[1], dims[2], data))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    Ok(parse(&read(path)?, LABEL_MAGIC, 1, path)?.1)
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let n = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Images `[N, 1, rows, cols]` scaled to `[0, 1]` and normalized with the
/// standard MNIST mean and std; 10 classes.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let (n, rows, cols, pixels) = read_idx_images(images)?;
    let label_bytes = read_idx_labels(labels)?;
    if label_bytes.len() != n {
        return Err(Error::Consistency(format!(
            "{} holds {n} images but {} holds {} labels",
            images.display(),
            labels.display(),
            label_bytes.len()
        )));
    }
    let labels: Vec<usize> = label_bytes.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1).max(10);
    let (mean, inv) = (MNIST_MEAN as f32, 1.0 / MNIST_STD as f32);
    let data = pixels.iter().map(|&p| (p as f32 / 255.0 - mean) * inv).collect();
    let inputs = Tensor::new([n, 1, rows, cols], data)?;
    let name = images
        .file_name()
        .map_or_else(|| "mnist".to_string(), |f| f.to_string_lossy().into_owned());
    let mut ds = Dataset::new(name, inputs, Targets::Classes { labels, classes })?;
    ds.mark_normalized(Normalization::Global {
        mean: MNIST_MEAN,
        std: MNIST_STD,
    })?;
    Ok(ds)
}

/// File names of the standard MNIST distribution.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads `(train, test)` from a directory holding the four MNIST files.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let f = |i: usize| dir.join(MNIST_FILES[i]);
    Ok((load_mnist_idx(&f(0), &f(1))?, load_mnist_idx(&f(2), &f(3))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_constant_images() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx_images(&img, 28, 28, &[0u8; 2 * 784]).unwrap();
        write_idx_labels(&lab, &[3, 7]).unwrap();
        let raw = fs::read(&img).unwrap();
        assert_eq!(&raw[..4], &[0, 0, 8, 3]);
        let ds = load_mnist_idx(&img, &lab).unwrap();
        assert_eq!(ds.inputs.shape(), &[2, 1, 28, 28]);
        let want = (0.0 - 0.1307) / 0.3081;
        assert!(ds.inputs.data().iter().all(|&v| (v as f64 - want).abs() < 1e-6));
        assert!((want + 0.4242).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx_images(&img, 2, 2, &[0u8; 12]).unwrap();
        write_idx_labels(&lab, &[1, 2]).unwrap();
        assert!(matches!(load_mnist_idx(&img, &lab), Err(Error::Consistency(_))));
        let err = load_mnist_idx(&lab, &lab).unwrap_err();
        assert!(err.to_string().contains("2051") && err.to_string().contains("2049"), "{err}");
        assert!(matches!(load_mnist_idx(&dir.path().join("missing"), &lab), Err(Error::Io { .. })));
    }
}
