//! Labelled datasets: MNIST IDX loading, synthetic Gaussian blobs, and the
//! train/validation/test protocol.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::Batch;
use crate::tensor::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Samples (rows) with features in `[0, 1]` and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", inputs.rows(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Config(format!("label {bad} out of range for {num_classes} classes")));
        }
        if !inputs.as_slice().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::Config("dataset features must lie in [0, 1]".into()));
        }
        Ok(Self { inputs, labels, num_classes })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn as_batch(&self) -> Batch<'_> {
        Batch { inputs: &self.inputs, labels: &self.labels, num_classes: self.num_classes }
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Rows `start..end`.
    pub fn range(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            inputs: self.inputs.slice_rows(start, end),
            labels: self.labels[start..end].to_vec(),
            num_classes: self.num_classes,
        }
    }

    pub fn shuffled(&self, seed: u64) -> Dataset {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.select(&order)
    }

    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.num_classes != other.num_classes {
            return Err(Error::Config("cannot join datasets with different class counts".into()));
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset { inputs: self.inputs.vstack(&other.inputs)?, labels, num_classes: self.num_classes })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// CSV with header `f0,...,f{I-1},label`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.features()).map(|i| format!("f{i}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for (r, label) in self.labels.iter().enumerate() {
            let row: Vec<String> = self.inputs.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{label}", row.join(","))?;
        }
        Ok(())
    }
}

/// Raw IDX image file contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let header = read_header(bytes, path, IDX_IMAGES_MAGIC, 4)?;
        let (count, rows, cols) = (header[0], header[1], header[2]);
        let body = &bytes[16..];
        let need = count * rows * cols;
        if body.len() < need {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                detail: format!("{} pixel bytes for {count} images of {rows}x{cols}", body.len()),
            });
        }
        Ok(Self { rows, cols, pixels: body[..need].to_vec() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [IDX_IMAGES_MAGIC, self.count() as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Pixels divided by 255, one image per row.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.count(),
            self.rows * self.cols,
            self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
        )
        .expect("pixel count is a multiple of the image size")
    }

    /// Inverse of [`IdxImages::to_matrix`] for values on the 1/255 grid.
    pub fn from_matrix(m: &Matrix, rows: usize, cols: usize) -> Result<Self> {
        if m.cols() != rows * cols {
            return Err(Error::Shape(format!("{} features cannot form {rows}x{cols} images", m.cols())));
        }
        let pixels = m.as_slice().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        Ok(Self { rows, cols, pixels })
    }
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let header = read_header(bytes, path, IDX_LABELS_MAGIC, 2)?;
    let count = header[0];
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("{} label bytes for {count} labels", body.len()),
        });
    }
    Ok(body[..count].to_vec())
}

pub fn idx_labels_to_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Checks the magic and returns the header fields after it.
fn read_header(bytes: &[u8], path: &Path, magic: u32, words: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 * words {
        return Err(Error::Truncated { path: path.to_path_buf(), detail: "incomplete header".into() });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(Error::WrongMagic { path: path.to_path_buf(), found, expected: magic });
    }
    Ok((1..words).map(|i| word(i) as usize).collect())
}

/// Reads a file, transparently inflating gzip content.
fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = IdxImages::parse(&read_file(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_file(labels_path)?, labels_path)?;
    if images.count() != labels.len() {
        return Err(Error::CountMismatch(images_path.to_path_buf(), images.count(), labels.len()));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    Dataset::new(images.to_matrix(), labels, classes)
}

fn find_idx(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(candidate);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{stem}[.gz] not found in {}", dir.display()),
    )))
}

/// Loads the standard training and test files from a directory.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_mnist_idx(&find_idx(dir, "train-images-idx3-ubyte")?, &find_idx(dir, "train-labels-idx1-ubyte")?)?;
    let test = load_mnist_idx(&find_idx(dir, "t10k-images-idx3-ubyte")?, &find_idx(dir, "t10k-labels-idx1-ubyte")?)?;
    Ok((train, test))
}

/// Gaussian clusters around distinct random centers, clamped to `[0, 1]`.
pub fn make_blobs(classes: usize, dims: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Config("blobs need at least two classes".into()));
    }
    if dims == 0 || !(spread >= 0.0) {
        return Err(Error::Config(format!("invalid blobs dims={dims} spread={spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> =
        (0..classes).map(|_| (0..dims).map(|_| rng.gen_range(0.15..0.85)).collect()).collect();
    let mut data = Vec::with_capacity(classes * per_class * dims);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for c in center {
                let noise: f64 = rng.sample(StandardNormal);
                data.push((c + spread * noise).clamp(0.0, 1.0));
            }
            labels.push(k);
        }
    }
    let ds = Dataset::new(Matrix::from_vec(labels.len(), dims, data)?, labels, classes)?;
    Ok(ds.shuffled(seed ^ 0x5eed))
}

/// Train/validation/test partition of a dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl Splits {
    /// Training set for final runs; with `merge`, validation rows rejoin it.
    pub fn final_training(&self, merge: bool) -> Result<Dataset> {
        if merge {
            self.train.concat(&self.validation)
        } else {
            Ok(self.train.clone())
        }
    }
}

/// Holds out the last `val_n` rows of `full_train` for validation. With
/// `train_n`, training is restricted to the first `train_n` rows of the
/// remainder after a seeded shuffle.
pub fn split(full_train: &Dataset, test: Dataset, val_n: usize, train_n: Option<usize>, seed: u64) -> Result<Splits> {
    if val_n > full_train.len() {
        return Err(Error::Config(format!("validation size {val_n} exceeds {} samples", full_train.len())));
    }
    let cut = full_train.len() - val_n;
    let validation = full_train.range(cut, full_train.len());
    let mut train = full_train.range(0, cut);
    if let Some(n) = train_n {
        if n > train.len() {
            return Err(Error::Config(format!("training size {n} exceeds {} available samples", train.len())));
        }
        train = train.shuffled(seed).range(0, n);
    }
    Ok(Splits { train, validation, test })
}
