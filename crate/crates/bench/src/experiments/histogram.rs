//! Condition-number reduction of diagonal preconditioners on random networks.
//!
//! Each trial samples one multinomial logistic regression (convex) and one
//! single-hidden-layer sigmoid network (nonconvex), both with softmax
//! outputs and Gaussian inputs, weights and biases, and random one-hot
//! targets. The exact Hessian over a fixed batch is preconditioned by each
//! diagonal and the ratio `κ(D^{-1/2} H D^{-1/2}) / κ(H)` recorded.
//!
//! Softmax is invariant under adding the same vector to every output unit's
//! weights, so its Hessian is exactly singular. The Hessian is therefore
//! taken with respect to the identifiable parameters: those of the last
//! output unit are fixed at their sampled values.

use std::fmt;
use std::str::FromStr;

use esgd_core::linalg::{condition_number, sym_eigenvalues, DenseMatrix};
use esgd_core::model::{exact_hessian, gauss_newton_diag, gaussian_init, Batch, LossKind, MlpSpec};
use esgd_core::precond::{equilibration_diag, jacobi_diag, transform_hessian, DiagPreconditioner, PreconditionerKind};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{derive_seed, json_float, stream_rng};
use crate::error::{BenchError, Result};
use crate::metrics::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    ConvexLogreg,
    NonconvexMlp,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 2] = [Self::ConvexLogreg, Self::NonconvexMlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ConvexLogreg => "convex-logreg",
            Self::NonconvexMlp => "nonconvex-mlp",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown problem kind {s:?}")))
    }
}

/// Preconditioners compared in every trial, in CSV order.
pub const KINDS: [PreconditionerKind; 3] = [
    PreconditionerKind::Jacobi,
    PreconditionerKind::Equilibration,
    PreconditionerKind::GaussNewton,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramConfig {
    pub trials: usize,
    pub seed: u64,
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub batch: usize,
    /// Jacobi and Gauss-Newton entries below `floor_rel · max` are raised to it.
    pub floor_rel: f64,
    pub problems: Vec<ProblemKind>,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            inputs: 10,
            hidden: 20,
            outputs: 5,
            batch: 256,
            floor_rel: 1e-8,
            problems: ProblemKind::ALL.to_vec(),
        }
    }
}

impl HistogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.inputs == 0 || self.hidden == 0 || self.batch == 0 {
            return Err(BenchError::Config("trials, inputs, hidden and batch must be positive".into()));
        }
        if self.outputs < 2 {
            return Err(BenchError::Config("softmax problems need at least 2 outputs".into()));
        }
        if !(self.floor_rel > 0.0 && self.floor_rel < 1.0) {
            return Err(BenchError::Config(format!("floor_rel must lie in (0, 1), got {}", self.floor_rel)));
        }
        if self.problems.is_empty() {
            return Err(BenchError::Config("no problem kinds selected".into()));
        }
        for p in ProblemKind::ALL {
            self.spec(p)?;
        }
        Ok(())
    }

    pub fn spec(&self, problem: ProblemKind) -> Result<MlpSpec> {
        let sizes = match problem {
            ProblemKind::ConvexLogreg => vec![self.inputs, self.outputs],
            ProblemKind::NonconvexMlp => vec![self.inputs, self.hidden, self.outputs],
        };
        Ok(MlpSpec::new(sizes, LossKind::SoftmaxCrossEntropy)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRecord {
    pub trial: usize,
    pub problem: ProblemKind,
    pub preconditioner: String,
    pub kappa_before: f64,
    pub kappa_after: f64,
    /// `+∞` when either condition number is the singular sentinel.
    pub ratio: f64,
    /// Diagonal entries raised to the floor.
    pub floored: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindSummary {
    pub problem: ProblemKind,
    pub preconditioner: String,
    #[serde(with = "json_float")]
    pub median_ratio: f64,
    pub infinite_ratios: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramSummary {
    pub kinds: Vec<KindSummary>,
    /// Convex trials whose Hessian passed `λ_min ≥ −1e-8 ‖H‖`.
    pub convex_psd: usize,
    pub convex_trials: usize,
    /// Nonconvex trials with eigenvalues of both signs.
    pub nonconvex_indefinite: usize,
    pub nonconvex_trials: usize,
}

impl HistogramSummary {
    pub fn median(&self, problem: ProblemKind, kind: PreconditionerKind) -> Option<f64> {
        self.kinds
            .iter()
            .find(|k| k.problem == problem && k.preconditioner == kind.as_str())
            .map(|k| k.median_ratio)
    }

    pub fn indefinite_fraction(&self) -> f64 {
        self.nonconvex_indefinite as f64 / self.nonconvex_trials.max(1) as f64
    }
}

/// Indices of all parameters except the last output unit's weights and bias.
pub fn identifiable_params(spec: &MlpSpec) -> Vec<usize> {
    let layout = spec.layout();
    let last = layout.last().expect("at least one layer");
    let w_lo = last.weights + (last.fan_out - 1) * last.fan_in;
    let w_hi = w_lo + last.fan_in;
    let b = last.bias + last.fan_out - 1;
    (0..spec.num_params()).filter(|&i| !(w_lo..w_hi).contains(&i) && i != b).collect()
}

fn sample_batch(seed: u64, rows: usize, inputs: usize, classes: usize) -> Result<Batch> {
    let mut rng = stream_rng(seed, 1);
    let x: Vec<f64> = (0..rows * inputs).map(|_| rng.sample(StandardNormal)).collect();
    let mut t = vec![0.0; rows * classes];
    for r in 0..rows {
        t[r * classes + rng.random_range(0..classes)] = 1.0;
    }
    Ok(Batch::new(
        DenseMatrix::new(rows, inputs, x)?,
        DenseMatrix::new(rows, classes, t)?,
    )?)
}

fn ratio_of(before: f64, after: f64) -> f64 {
    if before.is_finite() && after.is_finite() {
        after / before
    } else {
        f64::INFINITY
    }
}

/// One trial's Hessian and diagonals, restricted to identifiable parameters.
pub struct TrialProblem {
    pub hessian: DenseMatrix,
    pub gauss_newton: Vec<f64>,
}

pub fn sample_problem(config: &HistogramConfig, trial: usize, problem: ProblemKind) -> Result<TrialProblem> {
    let spec = config.spec(problem)?;
    let tag = (trial as u64) << 1 | (problem == ProblemKind::NonconvexMlp) as u64;
    let seed = derive_seed(config.seed, tag);
    let params = gaussian_init(&spec, seed, 1.0);
    let batch = sample_batch(seed, config.batch, config.inputs, config.outputs)?;
    let keep = identifiable_params(&spec);
    let hessian = exact_hessian(&spec, &params, &batch)?.principal_submatrix(&keep)?;
    let gn = gauss_newton_diag(&spec, &params, &batch)?;
    Ok(TrialProblem {
        hessian,
        gauss_newton: keep.iter().map(|&i| gn[i]).collect(),
    })
}

pub fn run_condition_histogram(config: &HistogramConfig) -> Result<Vec<HistogramRecord>> {
    config.validate()?;
    let mut problems = config.problems.clone();
    problems.sort();
    problems.dedup();
    let mut records = Vec::with_capacity(config.trials * problems.len() * KINDS.len());
    for trial in 0..config.trials {
        for &problem in &problems {
            let TrialProblem { hessian: h, gauss_newton } = sample_problem(config, trial, problem)?;
            let eig = sym_eigenvalues(&h)?;
            let (max_eig, min_eig) = (eig[0], eig[eig.len() - 1]);
            let kappa_before = condition_number(&h)?;
            for kind in KINDS {
                let (d, floored) = match kind {
                    PreconditionerKind::Equilibration => (equilibration_diag(&h)?, 0),
                    PreconditionerKind::Jacobi | PreconditionerKind::GaussNewton => {
                        let raw = match kind {
                            PreconditionerKind::Jacobi => jacobi_diag(&h)?,
                            _ => DiagPreconditioner::gauss_newton(gauss_newton.clone())?,
                        };
                        if raw.scales.iter().all(|&x| x == 0.0) {
                            return Err(BenchError::Invalid(format!(
                                "trial {trial} {problem}: {} diagonal is identically zero",
                                kind.as_str()
                            )));
                        }
                        let (d, floor, lifted) = raw.floored(config.floor_rel);
                        if lifted > 0 {
                            log::info!(
                                "trial {trial} {problem} {}: {lifted} entries floored at {floor:.3e}",
                                kind.as_str()
                            );
                        }
                        (d, lifted)
                    }
                    PreconditionerKind::AbsHessianDiag => unreachable!("not compared"),
                };
                let kappa_after = condition_number(&transform_hessian(&h, &d.scales)?)?;
                records.push(HistogramRecord {
                    trial,
                    problem,
                    preconditioner: kind.as_str().to_string(),
                    kappa_before,
                    kappa_after,
                    ratio: ratio_of(kappa_before, kappa_after),
                    floored,
                    min_eigenvalue: min_eig,
                    max_eigenvalue: max_eig,
                });
            }
        }
    }
    Ok(records)
}

pub fn summarize(records: &[HistogramRecord]) -> HistogramSummary {
    let mut kinds = Vec::new();
    for problem in ProblemKind::ALL {
        for kind in KINDS {
            let ratios: Vec<f64> = records
                .iter()
                .filter(|r| r.problem == problem && r.preconditioner == kind.as_str())
                .map(|r| r.ratio)
                .collect();
            if ratios.is_empty() {
                continue;
            }
            kinds.push(KindSummary {
                problem,
                preconditioner: kind.as_str().to_string(),
                median_ratio: median(&ratios).unwrap_or(f64::NAN),
                infinite_ratios: ratios.iter().filter(|r| r.is_infinite()).count(),
                trials: ratios.len(),
            });
        }
    }
    let per_trial = |p: ProblemKind| {
        records
            .iter()
            .filter(move |r| r.problem == p && r.preconditioner == KINDS[0].as_str())
    };
    let convex_trials = per_trial(ProblemKind::ConvexLogreg).count();
    let convex_psd = per_trial(ProblemKind::ConvexLogreg)
        .filter(|r| r.min_eigenvalue >= -1e-8 * r.max_eigenvalue.abs().max(r.min_eigenvalue.abs()))
        .count();
    let nonconvex_trials = per_trial(ProblemKind::NonconvexMlp).count();
    let nonconvex_indefinite = per_trial(ProblemKind::NonconvexMlp)
        .filter(|r| r.min_eigenvalue < 0.0 && r.max_eigenvalue > 0.0)
        .count();
    HistogramSummary {
        kinds,
        convex_psd,
        convex_trials,
        nonconvex_indefinite,
        nonconvex_trials,
    }
}
