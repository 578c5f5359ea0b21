//! Matrix-free estimates of the equilibration and Jacobi diagonals.
//!
//! Both estimators only need products `H v`:
//!
//! - equilibration: `E[(Hv)²] = diag(H²)` for any zero-mean, unit-variance `v`;
//! - Jacobi: `E[v ⊙ Hv] = diag(H)` for Rademacher `v`, with per-element
//!   variance `Σ_j H_ji² − H_ii²`.
//!
//! Accumulators keep a plain sum and a sample count rather than a moving
//! average.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::DenseMatrix;

/// Something that can multiply its Hessian with a vector.
pub trait HvpOracle {
    fn dim(&self) -> usize;
    fn hvp(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl HvpOracle for DenseMatrix {
    fn dim(&self) -> usize {
        self.cols()
    }

    fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.matvec(v)
    }
}

impl<T: HvpOracle + ?Sized> HvpOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        (**self).hvp(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeDistribution {
    #[default]
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeVector {
    pub v: Vec<f64>,
    pub distribution: ProbeDistribution,
}

/// Draws probe `draw` of the stream identified by `seed`.
pub fn sample_probe_at(n: usize, seed: u64, draw: u64, distribution: ProbeDistribution) -> ProbeVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let v = match distribution {
        ProbeDistribution::Gaussian => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        ProbeDistribution::Rademacher => (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect(),
    };
    ProbeVector { v, distribution }
}

pub fn sample_probe(n: usize, seed: u64, distribution: ProbeDistribution) -> ProbeVector {
    sample_probe_at(n, seed, 0, distribution)
}

/// Sequential probe stream; draw `i` is `sample_probe_at(n, seed, i, ..)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSampler {
    pub seed: u64,
    pub distribution: ProbeDistribution,
    pub draws: u64,
}

impl ProbeSampler {
    pub fn new(seed: u64, distribution: ProbeDistribution) -> Self {
        Self {
            seed,
            distribution,
            draws: 0,
        }
    }

    pub fn next_probe(&mut self, n: usize) -> ProbeVector {
        let p = sample_probe_at(n, self.seed, self.draws, self.distribution);
        self.draws += 1;
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureKind {
    Equilibration,
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureAccumulator {
    kind: CurvatureKind,
    sum: Vec<f64>,
    count: u64,
}

impl CurvatureAccumulator {
    pub fn new(kind: CurvatureKind, n: usize) -> Self {
        Self {
            kind,
            sum: vec![0.0; n],
            count: 0,
        }
    }

    /// Rebuilds an accumulator from a stored sum and count.
    pub fn from_parts(kind: CurvatureKind, sum: Vec<f64>, count: u64) -> Result<Self> {
        if kind == CurvatureKind::Equilibration && sum.iter().any(|&s| s < 0.0) {
            return Err(Error::Precondition("equilibration sums must be nonnegative".into()));
        }
        Ok(Self { kind, sum, count })
    }

    pub fn kind(&self) -> CurvatureKind {
        self.kind
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    fn product(&self, oracle: &dyn HvpOracle, probe: &ProbeVector) -> Result<Vec<f64>> {
        check_dim(self.sum.len(), oracle.dim())?;
        check_dim(self.sum.len(), probe.v.len())?;
        let hv = oracle.hvp(&probe.v)?;
        check_dim(self.sum.len(), hv.len())?;
        Ok(hv)
    }

    /// `sum += (Hv)²`, `k += 1`.
    pub fn accumulate_equilibration(&mut self, oracle: &dyn HvpOracle, probe: &ProbeVector) -> Result<()> {
        if self.kind != CurvatureKind::Equilibration {
            return Err(Error::Precondition("accumulator is not an equilibration accumulator".into()));
        }
        let hv = self.product(oracle, probe)?;
        for (s, x) in self.sum.iter_mut().zip(&hv) {
            *s += x * x;
        }
        self.count += 1;
        Ok(())
    }

    /// `sum += v ⊙ Hv`, `k += 1`. Needs a Rademacher probe.
    pub fn accumulate_jacobi(&mut self, oracle: &dyn HvpOracle, probe: &ProbeVector) -> Result<()> {
        if self.kind != CurvatureKind::Jacobi {
            return Err(Error::Precondition("accumulator is not a Jacobi accumulator".into()));
        }
        if probe.distribution != ProbeDistribution::Rademacher {
            return Err(Error::Precondition("the Jacobi estimator needs Rademacher probes".into()));
        }
        let hv = self.product(oracle, probe)?;
        for ((s, x), v) in self.sum.iter_mut().zip(&hv).zip(&probe.v) {
            *s += v * x;
        }
        self.count += 1;
        Ok(())
    }

    pub fn accumulate(&mut self, oracle: &dyn HvpOracle, probe: &ProbeVector) -> Result<()> {
        match self.kind {
            CurvatureKind::Equilibration => self.accumulate_equilibration(oracle, probe),
            CurvatureKind::Jacobi => self.accumulate_jacobi(oracle, probe),
        }
    }

    /// `sum / k`: the estimate of `diag(H²)` or `diag(H)`.
    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let k = self.count as f64;
        Ok(self.sum.iter().map(|s| s / k).collect())
    }

    /// `√(sum/k)` for equilibration, signed `sum/k` for Jacobi.
    pub fn estimate(&self) -> Result<Vec<f64>> {
        let mean = self.mean()?;
        Ok(match self.kind {
            CurvatureKind::Equilibration => mean.into_iter().map(f64::sqrt).collect(),
            CurvatureKind::Jacobi => mean,
        })
    }

    /// Adds another accumulator's samples into this one.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.kind != other.kind {
            return Err(Error::Precondition("cannot merge accumulators of different kinds".into()));
        }
        check_dim(self.sum.len(), other.sum.len())?;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }
}

/// Runs `samples` probes from `sampler` into a fresh accumulator.
pub fn estimate_diagonal(
    kind: CurvatureKind,
    oracle: &dyn HvpOracle,
    sampler: &mut ProbeSampler,
    samples: usize,
) -> Result<CurvatureAccumulator> {
    let mut acc = CurvatureAccumulator::new(kind, oracle.dim());
    for _ in 0..samples {
        let probe = sampler.next_probe(oracle.dim());
        acc.accumulate(oracle, &probe)?;
    }
    Ok(acc)
}
