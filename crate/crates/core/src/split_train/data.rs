//! Labelled datasets: synthetic Gaussian blobs, IDX archives and CSV files.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::SeedStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, classes: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", x.nrows()),
                got: format!("{}", y.len()),
            });
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label: bad, classes });
        }
        Ok(Self { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
        }
    }

    /// Rows of all `parts`, concatenated in order.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let views: Vec<_> = parts.iter().map(|d| d.x.view()).collect();
        let x = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::invalid(format!("concatenate: {e}")))?;
        let y = parts.iter().flat_map(|d| d.y.iter().copied()).collect();
        Dataset::new(x, y, first.classes)
    }
}

/// Where training and test data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// Isotropic Gaussian clusters around random class centres.
    Synthetic {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        /// Scale of the class centres relative to the unit within-class spread.
        separation: f64,
    },
    /// The 28×28 handwritten-digit archive layout (big-endian IDX files).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// Comma-separated rows of `label,feature,feature,...` without a header.
    Csv { train: PathBuf, test: PathBuf, classes: usize },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            classes: 10,
            dim: 20,
            train_per_class: 200,
            test_per_class: 100,
            separation: 1.0,
        }
    }
}

impl DatasetSource {
    /// Load `(train, test)`. Synthetic data is drawn from `seed`.
    pub fn load(&self, seed: &SeedStream) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSource::Synthetic {
                classes,
                dim,
                train_per_class,
                test_per_class,
                separation,
            } => {
                if *classes == 0 || *dim == 0 {
                    return Err(Error::invalid("synthetic data needs classes and dim > 0"));
                }
                let mut rng = seed.child("centres").rng();
                let centres = Array2::from_shape_fn((*classes, *dim), |_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    separation * z
                });
                let train = blobs(&centres, *train_per_class, &mut seed.child("train").rng())?;
                let test = blobs(&centres, *test_per_class, &mut seed.child("test").rng())?;
                Ok((train, test))
            }
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => Ok((load_idx(train_images, train_labels)?, load_idx(test_images, test_labels)?)),
            DatasetSource::Csv { train, test, classes } => {
                Ok((load_csv(train, *classes)?, load_csv(test, *classes)?))
            }
        }
    }
}

/// `per_class` points around each row of `centres`, with unit spread,
/// interleaved by class.
pub fn blobs<R: Rng + ?Sized>(centres: &Array2<f64>, per_class: usize, rng: &mut R) -> Result<Dataset> {
    let (classes, dim) = centres.dim();
    let n = classes * per_class;
    let mut x = Array2::zeros((n, dim));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            x[[i, j]] = centres[[c, j]] + z;
        }
        y.push(c);
    }
    Dataset::new(x, y, classes)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse(format!("{}: truncated header", path.display())))
}

/// Images scaled to `[0, 1]`; labels 0 to 9.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read(images)?;
    let lab = read(labels)?;
    if be_u32(&img, 0, images)? != 0x0803 {
        return Err(Error::Parse(format!("{}: not an IDX image file", images.display())));
    }
    if be_u32(&lab, 0, labels)? != 0x0801 {
        return Err(Error::Parse(format!("{}: not an IDX label file", labels.display())));
    }
    let n = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    let m = be_u32(&lab, 4, labels)? as usize;
    if n != m {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels"),
            got: format!("{m}"),
        });
    }
    let pixels = &img[16..];
    if pixels.len() < n * rows * cols || lab.len() < 8 + n {
        return Err(Error::Parse("IDX payload shorter than its header says".into()));
    }
    let x = Array2::from_shape_fn((n, rows * cols), |(i, j)| pixels[i * rows * cols + j] as f64 / 255.0);
    let y = lab[8..8 + n].iter().map(|&b| b as usize).collect();
    Dataset::new(x, y, 10)
}

pub fn load_csv(path: &Path, classes: usize) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record?;
        let mut fields = record.iter();
        let label: usize = fields
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("{}: bad label in row {}", path.display(), y.len() + 1)))?;
        let start = rows.len();
        for f in fields {
            rows.push(
                f.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("{}: bad value `{f}`", path.display())))?,
            );
        }
        let w = rows.len() - start;
        if *width.get_or_insert(w) != w {
            return Err(Error::Parse(format!("{}: ragged row {}", path.display(), y.len() + 1)));
        }
        y.push(label);
    }
    let w = width.unwrap_or(0);
    let x = Array2::from_shape_vec((y.len(), w), rows).map_err(|e| Error::Parse(e.to_string()))?;
    Dataset::new(x, y, classes)
}
