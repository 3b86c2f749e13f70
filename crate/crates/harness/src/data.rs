//! Datasets: big-endian IDX files (MNIST) and seeded synthetic blobs.
//!
//! Inputs are always scaled to `[0, 1]` and flattened row-major.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use layerspin_core::tensor::{Dense, SeededRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: bad magic 0x{found:08x} at byte 0, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated at byte {offset}, needed {needed} more bytes")]
    Truncated {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at byte {offset} is not below {classes}")]
    LabelRange {
        label: u8,
        offset: usize,
        classes: usize,
    },
    #[error("invalid dataset spec: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Inputs as an `[n x features]` matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Dense,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// `(rows, cols)` when samples are images.
    pub image_dims: Option<(usize, usize)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Raw IDX image tensor: `count` images of `rows x cols` bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(DataError::Truncated {
                path: self.path.to_path_buf(),
                offset: self.bytes.len(),
                needed: n - (self.bytes.len() - self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(DataError::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    let mut r = Reader {
        path,
        bytes,
        pos: 0,
    };
    r.magic(IDX_IMAGES_MAGIC)?;
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = r.take(count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader {
        path,
        bytes,
        pos: 0,
    };
    r.magic(IDX_LABELS_MAGIC)?;
    let count = r.u32()? as usize;
    Ok(r.take(count)?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_idx(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads an IDX image/label pair with 10 classes. With a per-class cap,
/// samples are kept in file order until their class has `cap` members.
pub fn load_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    per_class_cap: Option<usize>,
) -> Result<Dataset> {
    const CLASSES: usize = 10;
    let images = parse_idx_images(images_path, &read(images_path)?)?;
    let labels = parse_idx_labels(labels_path, &read(labels_path)?)?;
    if images.count != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let features = images.rows * images.cols;
    let mut counts = [0usize; CLASSES];
    let mut data = Vec::new();
    let mut kept = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let class = label as usize;
        if class >= CLASSES {
            return Err(DataError::LabelRange {
                label,
                offset: 8 + i,
                classes: CLASSES,
            });
        }
        if per_class_cap.is_some_and(|cap| counts[class] >= cap) {
            continue;
        }
        counts[class] += 1;
        kept.push(class);
        data.extend(
            images.pixels[i * features..(i + 1) * features]
                .iter()
                .map(|&p| f64::from(p) / 255.0),
        );
    }
    let inputs =
        Dense::matrix(kept.len(), features, data).map_err(|e| DataError::Spec(e.to_string()))?;
    Ok(Dataset {
        inputs,
        labels: kept,
        classes: CLASSES,
        image_dims: Some((images.rows, images.cols)),
    })
}

/// Gaussian clusters in `[0, 1]^dimension`: class centers uniform in
/// `[0.2, 0.8]`, samples `center + spread * N(0, 1)` clipped to `[0, 1]`.
/// Samples cycle through the classes (`label = i % classes`).
pub fn synthetic_blobs(params: &BlobParams) -> Result<DataSplit> {
    params.validate()?;
    let mut center_rng = SeededRng::stream(params.seed, 2);
    let centers: Vec<Vec<f64>> = (0..params.classes)
        .map(|_| {
            (0..params.dimension)
                .map(|_| center_rng.uniform(0.2, 0.8))
                .collect()
        })
        .collect();
    let sample = |per_class: usize, stream: u64| -> Result<Dataset> {
        let mut rng = SeededRng::stream(params.seed, stream);
        let n = per_class * params.classes;
        let mut data = Vec::with_capacity(n * params.dimension);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % params.classes;
            labels.push(class);
            for c in &centers[class] {
                data.push((c + params.spread * rng.normal()).clamp(0.0, 1.0));
            }
        }
        Ok(Dataset {
            inputs: Dense::matrix(n, params.dimension, data)
                .map_err(|e| DataError::Spec(e.to_string()))?,
            labels,
            classes: params.classes,
            image_dims: square_dims(params.dimension),
        })
    };
    Ok(DataSplit {
        train: sample(params.per_class, 3)?,
        test: sample(params.test_per_class, 4)?,
    })
}

fn square_dims(n: usize) -> Option<(usize, usize)> {
    let side = (n as f64).sqrt().round() as usize;
    (side * side == n).then_some((side, side))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobParams {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dimension: usize,
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
}

impl BlobParams {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dimension == 0 || self.per_class == 0 {
            return Err(DataError::Spec(
                "synthetic blobs need >= 2 classes, a positive dimension and per_class".into(),
            ));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(DataError::Spec(format!(
                "spread {} must be >= 0",
                self.spread
            )));
        }
        Ok(())
    }
}

fn default_cap() -> Option<usize> {
    Some(1000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Directory with the four standard MNIST IDX files. The training set is
    /// the first `per_class_cap` samples of each class of the training file;
    /// the test set is the whole test file.
    MnistIdx {
        dir: PathBuf,
        #[serde(default = "default_cap")]
        per_class_cap: Option<usize>,
    },
    SyntheticBlobs(BlobParams),
}

impl DatasetSpec {
    pub fn load(&self) -> Result<DataSplit> {
        match self {
            DatasetSpec::MnistIdx { dir, per_class_cap } => Ok(DataSplit {
                train: load_mnist_idx(
                    &dir.join(MNIST_TRAIN_IMAGES),
                    &dir.join(MNIST_TRAIN_LABELS),
                    *per_class_cap,
                )?,
                test: load_mnist_idx(
                    &dir.join(MNIST_TEST_IMAGES),
                    &dir.join(MNIST_TEST_LABELS),
                    None,
                )?,
            }),
            DatasetSpec::SyntheticBlobs(p) => synthetic_blobs(p),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::MnistIdx { .. } => 10,
            DatasetSpec::SyntheticBlobs(p) => p.classes,
        }
    }

    /// Resolves a relative MNIST directory against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSpec::MnistIdx { dir, .. } = self {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
    }
}
