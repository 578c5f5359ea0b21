//! Diagonally preconditioned SGD variants behind one step interface.
//!
//! Every method updates `θ ← θ − ε · g / (d + λ)` elementwise, differing only
//! in the curvature vector `d`:
//!
//! | method       | `d`                                   |
//! |--------------|---------------------------------------|
//! | `sgd`        | none (plain `θ − ε g`)                |
//! | `esgd`       | `√(D/k)`, `D = Σ (Hv)²`, Gaussian `v` |
//! | `jacobi-sgd` | `|S/k|`, `S = Σ v ⊙ Hv`, Rademacher `v` |
//! | `rmsprop`    | `√M`, `M ← ρM + (1−ρ) g²`             |
//! | `adagrad`    | `√S`, `S ← S + g²`                    |
//!
//! ESGD and Jacobi SGD refresh their accumulator every
//! `curvature_update_interval` iterations, starting at iteration 0. Before
//! the first refresh the denominator is `λ` alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimators::{CurvatureAccumulator, CurvatureKind, HvpOracle, ProbeDistribution, ProbeSampler};
use crate::linalg::DenseMatrix;
use crate::model::MlpObjective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Sgd,
    Esgd,
    JacobiSgd,
    Rmsprop,
    Adagrad,
}

impl Method {
    pub const ALL: [Method; 5] = [Self::Sgd, Self::Esgd, Self::JacobiSgd, Self::Rmsprop, Self::Adagrad];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Esgd => "esgd",
            Self::JacobiSgd => "jacobi-sgd",
            Self::Rmsprop => "rmsprop",
            Self::Adagrad => "adagrad",
        }
    }

    pub fn needs_hvp(self) -> bool {
        matches!(self, Self::Esgd | Self::JacobiSgd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub damping: f64,
    pub curvature_update_interval: u64,
    pub ema_decay: f64,
    /// Seeds the probe stream; independent of any data shuffling.
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(method: Method, learning_rate: f64) -> Self {
        Self {
            method,
            learning_rate,
            damping: 1e-4,
            curvature_update_interval: 20,
            ema_decay: 0.9,
            seed: 0,
        }
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_interval(mut self, interval: u64) -> Self {
        self.curvature_update_interval = interval;
        self
    }

    pub fn with_ema_decay(mut self, rho: f64) -> Self {
        self.ema_decay = rho;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Precondition(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.damping > 0.0 && self.damping.is_finite()) {
            return Err(Error::Precondition(format!("damping must be positive, got {}", self.damping)));
        }
        if self.curvature_update_interval == 0 {
            return Err(Error::Precondition("curvature update interval must be at least 1".into()));
        }
        if self.method == Method::Rmsprop && !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::Precondition(format!("ema decay must lie in (0, 1), got {}", self.ema_decay)));
        }
        Ok(())
    }
}

/// A twice differentiable objective that can report `H(θ) v`.
pub trait Objective {
    fn dim(&self) -> usize;
    fn hvp_at(&self, params: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

/// The quadratic `½ θᵀ H θ`; its Hessian is `H` everywhere.
impl Objective for DenseMatrix {
    fn dim(&self) -> usize {
        self.cols()
    }

    fn hvp_at(&self, _params: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.matvec(v)
    }
}

impl Objective for MlpObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn hvp_at(&self, params: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        crate::model::hvp(self.spec, params, self.batch, v)
    }
}

struct AtParams<'a> {
    objective: &'a dyn Objective,
    params: &'a [f64],
}

impl HvpOracle for AtParams<'_> {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn hvp(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.objective.hvp_at(self.params, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Accumulator {
    None,
    Curvature {
        acc: CurvatureAccumulator,
        probes: ProbeSampler,
    },
    Ema {
        mean_square: Vec<f64>,
        steps: u64,
    },
    SquaredSum {
        sum: Vec<f64>,
        steps: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    config: OptimizerConfig,
    pub params: Vec<f64>,
    accumulator: Accumulator,
    iteration: u64,
}

/// `θ ← θ − ε g / (d + λ)`, or `θ ← θ − ε g / λ` when `d` is absent.
pub fn preconditioned_update(params: &mut [f64], grad: &[f64], lr: f64, curvature: Option<&[f64]>, damping: f64) {
    match curvature {
        Some(d) => {
            for ((p, g), d) in params.iter_mut().zip(grad).zip(d) {
                *p -= lr * g / (d + damping);
            }
        }
        None => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g / damping;
            }
        }
    }
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let n = params.len();
        let accumulator = match config.method {
            Method::Sgd => Accumulator::None,
            Method::Esgd => Accumulator::Curvature {
                acc: CurvatureAccumulator::new(CurvatureKind::Equilibration, n),
                probes: ProbeSampler::new(config.seed, ProbeDistribution::Gaussian),
            },
            Method::JacobiSgd => Accumulator::Curvature {
                acc: CurvatureAccumulator::new(CurvatureKind::Jacobi, n),
                probes: ProbeSampler::new(config.seed, ProbeDistribution::Rademacher),
            },
            Method::Rmsprop => Accumulator::Ema {
                mean_square: vec![0.0; n],
                steps: 0,
            },
            Method::Adagrad => Accumulator::SquaredSum {
                sum: vec![0.0; n],
                steps: 0,
            },
        };
        Ok(Self {
            config,
            params,
            accumulator,
            iteration: 0,
        })
    }

    /// Replaces the accumulator, e.g. to resume or to pin a known curvature.
    pub fn with_accumulator(mut self, accumulator: Accumulator) -> Self {
        self.accumulator = accumulator;
        self
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn accumulator(&self) -> &Accumulator {
        &self.accumulator
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    fn expect_method(&self, method: Method) -> Result<()> {
        if self.config.method == method {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{} step called on a {} optimizer",
                method, self.config.method
            )))
        }
    }

    /// Dispatches to the configured method. `objective` is required by ESGD
    /// and Jacobi SGD and ignored by the others.
    pub fn step(&mut self, grad: &[f64], objective: Option<&dyn Objective>) -> Result<()> {
        let needs = || {
            objective.ok_or_else(|| {
                Error::Precondition(format!("{} needs Hessian-vector products", self.config.method))
            })
        };
        match self.config.method {
            Method::Sgd => self.sgd_step(grad),
            Method::Esgd => {
                let o = needs()?;
                self.esgd_step(grad, o)
            }
            Method::JacobiSgd => {
                let o = needs()?;
                self.jacobi_sgd_step(grad, o)
            }
            Method::Rmsprop => self.rmsprop_step(grad),
            Method::Adagrad => self.adagrad_step(grad),
        }
    }

    pub fn sgd_step(&mut self, grad: &[f64]) -> Result<()> {
        self.expect_method(Method::Sgd)?;
        check_dim(self.params.len(), grad.len())?;
        let lr = self.config.learning_rate;
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
        self.iteration += 1;
        Ok(())
    }

    fn curvature_step(&mut self, grad: &[f64], objective: &dyn Objective) -> Result<()> {
        check_dim(self.params.len(), grad.len())?;
        check_dim(self.params.len(), objective.dim())?;
        let Accumulator::Curvature { acc, probes } = &mut self.accumulator else {
            return Err(Error::Precondition("optimizer has no curvature accumulator".into()));
        };
        if self.iteration.is_multiple_of(self.config.curvature_update_interval) {
            let oracle = AtParams {
                objective,
                params: &self.params,
            };
            let probe = probes.next_probe(self.params.len());
            acc.accumulate(&oracle, &probe)?;
        }
        let curvature = match acc.count() {
            0 => None,
            _ => Some(match acc.kind() {
                CurvatureKind::Equilibration => acc.estimate()?,
                CurvatureKind::Jacobi => acc.estimate()?.into_iter().map(f64::abs).collect(),
            }),
        };
        preconditioned_update(
            &mut self.params,
            grad,
            self.config.learning_rate,
            curvature.as_deref(),
            self.config.damping,
        );
        self.iteration += 1;
        Ok(())
    }

    /// Equilibrated SGD.
    pub fn esgd_step(&mut self, grad: &[f64], objective: &dyn Objective) -> Result<()> {
        self.expect_method(Method::Esgd)?;
        self.curvature_step(grad, objective)
    }

    /// SGD preconditioned by the absolute running mean of the Jacobi estimator.
    pub fn jacobi_sgd_step(&mut self, grad: &[f64], objective: &dyn Objective) -> Result<()> {
        self.expect_method(Method::JacobiSgd)?;
        self.curvature_step(grad, objective)
    }

    pub fn rmsprop_step(&mut self, grad: &[f64]) -> Result<()> {
        self.expect_method(Method::Rmsprop)?;
        check_dim(self.params.len(), grad.len())?;
        let rho = self.config.ema_decay;
        let Accumulator::Ema { mean_square, steps } = &mut self.accumulator else {
            return Err(Error::Precondition("rmsprop state lost its accumulator".into()));
        };
        for (m, g) in mean_square.iter_mut().zip(grad) {
            *m = rho * *m + (1.0 - rho) * g * g;
        }
        *steps += 1;
        let lr = self.config.learning_rate;
        let damping = self.config.damping;
        for ((p, g), m) in self.params.iter_mut().zip(grad).zip(mean_square.iter()) {
            *p -= lr * g / (m.sqrt() + damping);
        }
        self.iteration += 1;
        Ok(())
    }

    pub fn adagrad_step(&mut self, grad: &[f64]) -> Result<()> {
        self.expect_method(Method::Adagrad)?;
        check_dim(self.params.len(), grad.len())?;
        let Accumulator::SquaredSum { sum, steps } = &mut self.accumulator else {
            return Err(Error::Precondition("adagrad state lost its accumulator".into()));
        };
        for (s, g) in sum.iter_mut().zip(grad) {
            *s += g * g;
        }
        *steps += 1;
        let lr = self.config.learning_rate;
        let damping = self.config.damping;
        for ((p, g), s) in self.params.iter_mut().zip(grad).zip(sum.iter()) {
            *p -= lr * g / (s.sqrt() + damping);
        }
        self.iteration += 1;
        Ok(())
    }

    /// The undamped denominator currently applied: `√(D/k)`, `|S/k|`, `√M`
    /// or `√S`.
    pub fn preconditioner_direction(&self) -> Result<Vec<f64>> {
        match &self.accumulator {
            Accumulator::None => Err(Error::Precondition(format!("{} keeps no preconditioner", self.config.method))),
            Accumulator::Curvature { acc, .. } => match acc.count() {
                0 => Err(Error::ColdStart),
                _ => Ok(match acc.kind() {
                    CurvatureKind::Equilibration => acc.estimate()?,
                    CurvatureKind::Jacobi => acc.estimate()?.into_iter().map(f64::abs).collect(),
                }),
            },
            Accumulator::Ema { mean_square, steps } => match steps {
                0 => Err(Error::ColdStart),
                _ => Ok(mean_square.iter().map(|m| m.sqrt()).collect()),
            },
            Accumulator::SquaredSum { sum, steps } => match steps {
                0 => Err(Error::ColdStart),
                _ => Ok(sum.iter().map(|s| s.sqrt()).collect()),
            },
        }
    }
}
