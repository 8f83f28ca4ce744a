//! Dataset ingestion (IDX, CSV, packed embeddings) and synthetic generators.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magic prefix of the packed embedding format.
pub const EMBEDDING_MAGIC: &[u8; 8] = b"PRCEMB1\0";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("IDX magic mismatch in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagicMismatch {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path} is truncated: needed {needed} bytes, found {found}")]
    Truncated {
        path: String,
        needed: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("CSV row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("CSV row {row}: cannot parse {cell:?} as a number")]
    BadCell { row: usize, cell: String },
    #[error("CSV row {row}: label {value} is not a nonnegative integer")]
    BadLabel { row: usize, value: f64 },
    #[error("{path}: bad embedding magic")]
    BadEmbeddingMagic { path: String },
    #[error("{path}: file length {found} matches neither {plain} (features) nor {labeled} (features + labels)")]
    BadEmbeddingSize {
        path: String,
        found: usize,
        plain: usize,
        labeled: usize,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("synthetic datasets need n >= 10, got {0}")]
    SyntheticTooSmall(usize),
    #[error("non-finite feature at row {0}")]
    NonFiniteFeature(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// In-memory dataset: dense 64-bit features and optional integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub source: String,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of distinct labels, when labels are present.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    fn validate(self) -> Result<Self, DataError> {
        if self.n() == 0 {
            return Err(DataError::Empty);
        }
        for (row, r) in self.features.rows().into_iter().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFiniteFeature(row));
            }
        }
        Ok(self)
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            needed: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Load an uncompressed IDX image/label pair (the MNIST container format).
/// Pixels scale to [0, 1] by division with 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let image_bytes = read_all(images_path)?;
    let magic = be_u32(&image_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::IdxMagicMismatch {
            path: images_path.display().to_string(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(&image_bytes, 4, images_path)? as usize;
    let rows = be_u32(&image_bytes, 8, images_path)? as usize;
    let cols = be_u32(&image_bytes, 12, images_path)? as usize;
    let pixel_count = count * rows * cols;
    if image_bytes.len() < 16 + pixel_count {
        return Err(DataError::Truncated {
            path: images_path.display().to_string(),
            needed: 16 + pixel_count,
            found: image_bytes.len(),
        });
    }

    let label_bytes = read_all(labels_path)?;
    let magic = be_u32(&label_bytes, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::IdxMagicMismatch {
            path: labels_path.display().to_string(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let label_count = be_u32(&label_bytes, 4, labels_path)? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    if label_bytes.len() < 8 + label_count {
        return Err(DataError::Truncated {
            path: labels_path.display().to_string(),
            needed: 8 + label_count,
            found: label_bytes.len(),
        });
    }

    let dim = rows * cols;
    let mut features = Array2::zeros((count, dim));
    for i in 0..count {
        for j in 0..dim {
            features[[i, j]] = image_bytes[16 + i * dim + j] as f64 / 255.0;
        }
    }
    let labels = label_bytes[8..8 + label_count]
        .iter()
        .map(|&b| b as usize)
        .collect();
    Dataset {
        name: images_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "idx".into()),
        features,
        labels: Some(labels),
        source: format!("idx:{}", images_path.display()),
    }
    .validate()
}

/// Load a rectangular numeric CSV; with `has_labels` the last column holds
/// nonnegative integer class ids.
pub fn load_csv(path: &Path, has_labels: bool) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, has_labels, path)
}

fn parse_csv(text: &str, has_labels: bool, path: &Path) -> Result<Dataset, DataError> {
    let mut width = None;
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut rows = 0usize;
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(DataError::RaggedRow {
                row,
                expected,
                found: cells.len(),
            });
        }
        let mut parsed = Vec::with_capacity(cells.len());
        for cell in &cells {
            let v: f64 = cell.trim().parse().map_err(|_| DataError::BadCell {
                row,
                cell: cell.trim().to_string(),
            })?;
            parsed.push(v);
        }
        if has_labels {
            let raw = parsed.pop().unwrap();
            if raw < 0.0 || raw.fract() != 0.0 || !raw.is_finite() {
                return Err(DataError::BadLabel { row, value: raw });
            }
            labels.push(raw as usize);
        }
        values.extend(parsed);
        rows += 1;
    }
    if rows == 0 {
        return Err(DataError::Empty);
    }
    let dim = width.unwrap() - usize::from(has_labels);
    let features = Array2::from_shape_vec((rows, dim), values).expect("rectangular by check");
    Dataset {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".into()),
        features,
        labels: if has_labels { Some(labels) } else { None },
        source: format!("csv:{}", path.display()),
    }
    .validate()
}

/// Load a packed embedding file: 8-byte magic, u32 LE n, u32 LE p, then
/// n*p little-endian f32 features row-major, optionally followed by n u32
/// labels. Features widen to f64.
pub fn load_embeddings(path: &Path) -> Result<Dataset, DataError> {
    let bytes = read_all(path)?;
    if bytes.len() < 16 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(DataError::BadEmbeddingMagic {
            path: path.display().to_string(),
        });
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let p = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let plain = 16 + 4 * n * p;
    let labeled = plain + 4 * n;
    let has_labels = if bytes.len() == plain {
        false
    } else if bytes.len() == labeled {
        true
    } else {
        return Err(DataError::BadEmbeddingSize {
            path: path.display().to_string(),
            found: bytes.len(),
            plain,
            labeled,
        });
    };

    let mut features = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            let off = 16 + 4 * (i * p + j);
            features[[i, j]] =
                f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
        }
    }
    let labels = has_labels.then(|| {
        (0..n)
            .map(|i| {
                let off = plain + 4 * i;
                u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
            })
            .collect()
    });
    Dataset {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "emb".into()),
        features,
        labels,
        source: format!("emb:{}", path.display()),
    }
    .validate()
}

/// Write a dataset in the packed embedding format (features narrow to f32).
pub fn write_embeddings<W: Write>(out: &mut W, dataset: &Dataset) -> Result<(), DataError> {
    out.write_all(EMBEDDING_MAGIC)?;
    out.write_all(&(dataset.n() as u32).to_le_bytes())?;
    out.write_all(&(dataset.dim() as u32).to_le_bytes())?;
    for &v in dataset.features.iter() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    if let Some(labels) = &dataset.labels {
        for &l in labels {
            out.write_all(&(l as u32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_embeddings_file(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let mut file = std::fs::File::create(path)?;
    write_embeddings(&mut file, dataset)
}

/// Which synthetic generator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Gaussian blobs around centers spread on a circle.
    Blobs,
    /// The interleaved half-circles benchmark.
    TwoMoons,
    /// Two concentric rings.
    Rings,
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blobs" => Ok(SyntheticKind::Blobs),
            "two-moons" => Ok(SyntheticKind::TwoMoons),
            "rings" => Ok(SyntheticKind::Rings),
            other => Err(format!("unknown synthetic kind {other:?}")),
        }
    }
}

/// Deterministic synthetic 2-d datasets with ground-truth labels.
///
/// `classes` only applies to blobs (moons and rings are two-class). Blob
/// centers sit on a circle sized so adjacent centers are 10 noise standard
/// deviations apart.
pub fn make_synthetic(
    kind: SyntheticKind,
    n: usize,
    noise: f64,
    classes: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n < 10 {
        return Err(DataError::SyntheticTooSmall(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = move |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    match kind {
        SyntheticKind::Blobs => {
            let classes = classes.max(1);
            let separation = 10.0 * noise.max(0.1);
            let radius = if classes == 1 {
                0.0
            } else {
                // Chord between adjacent centers equals the separation.
                separation / (2.0 * (std::f64::consts::PI / classes as f64).sin())
            };
            for i in 0..n {
                let c = i % classes;
                let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
                features[[i, 0]] = radius * angle.cos() + noise * normal(&mut rng);
                features[[i, 1]] = radius * angle.sin() + noise * normal(&mut rng);
                labels.push(c);
            }
        }
        SyntheticKind::TwoMoons => {
            let outer = n / 2;
            for i in 0..n {
                let (class, x, y) = if i < outer {
                    let t = std::f64::consts::PI * i as f64 / (outer.max(2) - 1) as f64;
                    (0, t.cos(), t.sin())
                } else {
                    let m = n - outer;
                    let j = i - outer;
                    let t = std::f64::consts::PI * j as f64 / (m.max(2) - 1) as f64;
                    (1, 1.0 - t.cos(), 0.5 - t.sin())
                };
                features[[i, 0]] = x + noise * normal(&mut rng);
                features[[i, 1]] = y + noise * normal(&mut rng);
                labels.push(class);
            }
        }
        SyntheticKind::Rings => {
            let outer = n / 2;
            for i in 0..n {
                let (class, radius, count, j) = if i < outer {
                    (0, 1.0, outer, i)
                } else {
                    (1, 0.5, n - outer, i - outer)
                };
                let t = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                features[[i, 0]] = radius * t.cos() + noise * normal(&mut rng);
                features[[i, 1]] = radius * t.sin() + noise * normal(&mut rng);
                labels.push(class);
            }
        }
    }
    Dataset {
        name: format!("{kind:?}").to_lowercase(),
        features,
        labels: Some(labels),
        source: format!("synth:{kind:?}:n={n}:noise={noise}:classes={classes}:seed={seed}"),
    }
    .validate()
}
