//! Datasets for the autoencoder benchmarks.

use std::fmt;
use std::str::FromStr;

use esgd_core::linalg::DenseMatrix;
use esgd_core::model::Batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    IdxFile,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: DenseMatrix,
    pub targets: DenseMatrix,
    pub source: DataSource,
    /// `(rows, cols)` of one example when it is an image.
    pub image_shape: (usize, usize),
}

impl Dataset {
    /// An autoencoding dataset: targets are the inputs.
    pub fn autoencoder(name: impl Into<String>, inputs: DenseMatrix, source: DataSource, image_shape: (usize, usize)) -> Self {
        Self {
            name: name.into(),
            targets: inputs.clone(),
            inputs,
            source,
            image_shape,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn batch(&self) -> Batch {
        Batch::new(self.inputs.clone(), self.targets.clone()).expect("dataset rows agree")
    }

    /// The first `n` examples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let take = |m: &DenseMatrix| {
            DenseMatrix::new(n, m.cols(), m.as_slice()[..n * m.cols()].to_vec()).expect("prefix of valid matrix")
        };
        Dataset {
            name: self.name.clone(),
            inputs: take(&self.inputs),
            targets: take(&self.targets),
            source: self.source,
            image_shape: self.image_shape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    CurvesLike,
    PixelBlobs,
}

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CurvesLike => "curves-like",
            Self::PixelBlobs => "pixel-blobs",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curves-like" => Ok(Self::CurvesLike),
            "pixel-blobs" => Ok(Self::PixelBlobs),
            _ => Err(BenchError::Config(format!("unknown synthetic dataset kind {s:?}"))),
        }
    }
}

fn bernstein3(s: f64) -> [f64; 4] {
    let t = 1.0 - s;
    [t * t * t, 3.0 * s * t * t, 3.0 * s * s * t, s * s * s]
}

/// Points sampled along each rendered curve.
const CURVE_SAMPLES: usize = 64;
/// Stroke half-width in pixels (Gaussian standard deviation).
const STROKE_SIGMA: f64 = 0.5;

fn grid_shape(dim: usize) -> (usize, usize) {
    let side = (dim as f64).sqrt().ceil() as usize;
    (dim.div_ceil(side), side)
}

/// Deterministic synthetic images with values in `[0, 1]`, row-major on a
/// `⌈√dim⌉`-wide grid truncated to `dim` pixels; targets equal inputs.
///
/// - `curves-like`: one random cubic Bézier stroke whose four control points
///   are uniform over the image, drawn with a Gaussian pen.
/// - `pixel-blobs`: one to three Gaussian blobs.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || dim == 0 {
        return Err(BenchError::Invalid("synthetic dataset needs n >= 1 and dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = grid_shape(dim);
    let side = shape.1 as f64;
    let pixel = |p: usize| ((p / shape.1) as f64 + 0.5, (p % shape.1) as f64 + 0.5);
    let mut data = Vec::with_capacity(n * dim);
    match kind {
        SyntheticKind::CurvesLike => {
            let basis: Vec<[f64; 4]> = (0..CURVE_SAMPLES)
                .map(|i| bernstein3(i as f64 / (CURVE_SAMPLES - 1) as f64))
                .collect();
            let inv = 1.0 / (2.0 * STROKE_SIGMA * STROKE_SIGMA);
            for _ in 0..n {
                let ctrl: [(f64, f64); 4] =
                    std::array::from_fn(|_| (rng.random_range(0.0..side), rng.random_range(0.0..side)));
                let points: Vec<(f64, f64)> = basis
                    .iter()
                    .map(|b| {
                        b.iter()
                            .zip(&ctrl)
                            .fold((0.0, 0.0), |(r, c), (w, p)| (r + w * p.0, c + w * p.1))
                    })
                    .collect();
                for p in 0..dim {
                    let (r, c) = pixel(p);
                    let d2 = points
                        .iter()
                        .map(|&(pr, pc)| (r - pr).powi(2) + (c - pc).powi(2))
                        .fold(f64::INFINITY, f64::min);
                    data.push((-d2 * inv).exp());
                }
            }
        }
        SyntheticKind::PixelBlobs => {
            for _ in 0..n {
                let blobs = rng.random_range(1..=3);
                let params: Vec<(f64, f64, f64, f64)> = (0..blobs)
                    .map(|_| {
                        (
                            rng.random_range(0.0..side),
                            rng.random_range(0.0..side),
                            rng.random_range(0.5..1.5),
                            rng.random_range(0.5..1.0),
                        )
                    })
                    .collect();
                for p in 0..dim {
                    let (r, c) = pixel(p);
                    let v: f64 = params
                        .iter()
                        .map(|&(br, bc, s, a)| a * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp())
                        .sum();
                    data.push(v.min(1.0));
                }
            }
        }
    }
    let inputs = DenseMatrix::new(n, dim, data)?;
    Ok(Dataset::autoencoder(
        format!("{kind}-{n}x{dim}-seed{seed}"),
        inputs,
        DataSource::Synthetic,
        shape,
    ))
}

/// Box-filter downsampling of image rows to `out_rows × out_cols`.
pub fn downsample(dataset: &Dataset, out_rows: usize, out_cols: usize) -> Result<Dataset> {
    let (rows, cols) = dataset.image_shape;
    if rows * cols != dataset.dim() || out_rows == 0 || out_cols == 0 || out_rows > rows || out_cols > cols {
        return Err(BenchError::Invalid(format!(
            "cannot downsample {rows}x{cols} images to {out_rows}x{out_cols}"
        )));
    }
    let span = |o: usize, out: usize, src: usize| {
        let lo = o * src / out;
        let hi = ((o + 1) * src).div_ceil(out).max(lo + 1);
        lo..hi
    };
    let mut data = Vec::with_capacity(dataset.len() * out_rows * out_cols);
    for n in 0..dataset.len() {
        let img = dataset.inputs.row(n);
        for a in 0..out_rows {
            for b in 0..out_cols {
                let (ra, cb) = (span(a, out_rows, rows), span(b, out_cols, cols));
                let count = (ra.len() * cb.len()) as f64;
                let sum: f64 = ra.flat_map(|r| cb.clone().map(move |c| (r, c))).map(|(r, c)| img[r * cols + c]).sum();
                data.push(sum / count);
            }
        }
    }
    let inputs = DenseMatrix::new(dataset.len(), out_rows * out_cols, data)?;
    Ok(Dataset::autoencoder(
        format!("{}-{out_rows}x{out_cols}", dataset.name),
        inputs,
        dataset.source,
        (out_rows, out_cols),
    ))
}
