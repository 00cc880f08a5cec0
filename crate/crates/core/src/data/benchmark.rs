//! Seeded synthetic classification benchmarks small enough to train on a desk.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::rng::{RngStreams, Stream};
use crate::tensor::Matrix;

/// Share of the training pool held out for validation.
pub const VAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Isotropic unit-variance clusters whose centres are `separation` apart.
    GaussianBlobs,
    /// Rings of radius `(y + 1) * separation` in the first two coordinates.
    ConcentricRings,
    /// Per-class random patterns on a square grid, jittered by one-cell
    /// circular shifts and pixel noise, then flattened.
    ImagePatchSubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBenchmarkSpec {
    pub generator: Generator,
    /// Training pool size, validation included.
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub classes: usize,
    /// Distance between class structures in units of the noise scale.
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticBenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Range(format!("classes = {} must be at least 2", self.classes)));
        }
        if !(self.separation > 0.0) {
            return Err(Error::Range(format!(
                "separation = {} must be positive",
                self.separation
            )));
        }
        if self.dim == 0 {
            return Err(Error::Range("dim must be positive".into()));
        }
        if self.generator == Generator::ConcentricRings && self.dim < 2 {
            return Err(Error::Range("concentric rings need dim >= 2".into()));
        }
        if self.generator == Generator::ImagePatchSubset {
            let side = (self.dim as f64).sqrt().round() as usize;
            if side * side != self.dim || side < 2 {
                return Err(Error::Range(format!(
                    "image patches need a square dim, got {}",
                    self.dim
                )));
            }
        }
        let val = (VAL_FRACTION * self.n_train as f64).floor() as usize;
        if self.n_train - val < self.classes || self.n_test == 0 {
            return Err(Error::Range("benchmark splits are too small".into()));
        }
        Ok(())
    }
}

/// Labels `0..classes` repeated, so class counts differ by at most one.
fn balanced_labels(n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|i| i % classes).collect()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

struct Sampler {
    spec: SyntheticBenchmarkSpec,
    blob_centres: Vec<Vec<f64>>,
    patterns: Vec<Vec<f64>>,
}

impl Sampler {
    fn new<R: Rng + ?Sized>(spec: &SyntheticBenchmarkSpec, rng: &mut R) -> Self {
        let (c, d, s) = (spec.classes, spec.dim, spec.separation);
        let blob_centres = if d >= c {
            // scaled basis vectors: every pair is exactly `s` apart
            (0..c)
                .map(|j| {
                    let mut v = vec![0.0; d];
                    v[j] = s / 2f64.sqrt();
                    v
                })
                .collect()
        } else if d >= 2 {
            // regular polygon with adjacent centres `s` apart
            let radius = s / (2.0 * (PI / c as f64).sin());
            (0..c)
                .map(|j| {
                    let a = 2.0 * PI * j as f64 / c as f64;
                    let mut v = vec![0.0; d];
                    v[0] = radius * a.cos();
                    v[1] = radius * a.sin();
                    v
                })
                .collect()
        } else {
            (0..c).map(|j| vec![s * j as f64]).collect()
        };
        let patterns = if spec.generator == Generator::ImagePatchSubset {
            let amp = s / (2.0 * d as f64).sqrt();
            (0..c)
                .map(|_| (0..d).map(|_| if rng.random::<bool>() { amp } else { -amp }).collect())
                .collect()
        } else {
            Vec::new()
        };
        Self {
            spec: spec.clone(),
            blob_centres,
            patterns,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, y: usize, rng: &mut R) -> Vec<f64> {
        let d = self.spec.dim;
        match self.spec.generator {
            Generator::GaussianBlobs => self.blob_centres[y].iter().map(|&m| m + normal(rng)).collect(),
            Generator::ConcentricRings => {
                let radius = (y + 1) as f64 * self.spec.separation + normal(rng);
                let angle = rng.random::<f64>() * 2.0 * PI;
                let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
                v[0] = radius * angle.cos();
                v[1] = radius * angle.sin();
                v
            }
            Generator::ImagePatchSubset => {
                let side = (d as f64).sqrt().round() as usize;
                let dr = rng.random_range(0..3) + side - 1;
                let dc = rng.random_range(0..3) + side - 1;
                let pat = &self.patterns[y];
                (0..d)
                    .map(|p| {
                        let (r, c) = (p / side, p % side);
                        let src = ((r + dr) % side) * side + (c + dc) % side;
                        pat[src] + normal(rng)
                    })
                    .collect()
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, first_id: u64, split: SplitTag, rng: &mut R) -> Result<Dataset> {
        let labels = balanced_labels(n, self.spec.classes);
        let mut values = Vec::with_capacity(n * self.spec.dim);
        for &y in &labels {
            values.extend(self.sample(y, rng));
        }
        let features = Matrix::from_vec(n, self.spec.dim, values)?;
        let ids = (first_id..first_id + n as u64).collect();
        Dataset::new(features, labels, self.spec.classes, ids, split)
    }
}

/// Build `(train, val, test)`; validation is the first `floor(0.1 * n_train)`
/// samples of the shuffled training pool. A pure function of `spec`.
pub fn make_synthetic_benchmark(spec: &SyntheticBenchmarkSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let streams = RngStreams::new(spec.seed);
    let mut rng = streams.stream(Stream::Benchmark, 0);
    let sampler = Sampler::new(spec, &mut rng);
    let pool = sampler.draw(spec.n_train, 0, SplitTag::Train, &mut rng)?;
    let test = sampler.draw(spec.n_test, spec.n_train as u64, SplitTag::Test, &mut rng)?;

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut streams.stream(Stream::Split, 0));
    let n_val = (VAL_FRACTION * pool.len() as f64).floor() as usize;
    let val = pool.subset(&order[..n_val]).with_split(SplitTag::Val);
    let train = pool.subset(&order[n_val..]);
    Ok((train, val, test))
}
