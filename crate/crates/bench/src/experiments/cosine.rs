//! Cosine distances between the diagonals seen by ESGD, Jacobi SGD and
//! RMSProp along an RMSProp trajectory.

use std::collections::BTreeMap;

use esgd_core::estimators::{estimate_diagonal, CurvatureKind, ProbeDistribution, ProbeSampler};
use esgd_core::model::MlpObjective;
use esgd_core::optim::{Method, OptimizerState};
use esgd_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::training::{ExperimentRecord, RunSummary, Trainer, TrainingConfig};
use crate::data::Dataset;
use crate::error::{BenchError, Result};
use crate::metrics::cosine_distance;

/// Pairs in CSV order. `esgd-repeat` compares two independent estimates of
/// the equilibration diagonal and measures the estimator's own noise.
pub const PAIRS: [&str; 4] = ["esgd-rmsprop", "esgd-jacobi", "jacobi-rmsprop", "esgd-repeat"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineConfig {
    pub training: TrainingConfig,
    pub measure_interval: usize,
    pub probes: usize,
    /// Measurements use the first `measure_batch` training examples.
    pub measure_batch: usize,
}

impl Default for CosineConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig {
                methods: vec![Method::Rmsprop],
                trials: 1,
                epochs: 100,
                lr: Some(1e-3),
                damping: Some(1e-4),
                ema_decay: Some(0.9),
                ..TrainingConfig::default()
            },
            measure_interval: 10,
            probes: 100,
            measure_batch: 200,
        }
    }
}

impl CosineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training.methods != [Method::Rmsprop] || self.training.trials != 1 {
            return Err(BenchError::Config("the cosine trace follows a single rmsprop run".into()));
        }
        if self.measure_interval == 0 || self.probes == 0 || self.measure_batch == 0 {
            return Err(BenchError::Config("measure interval, probes and batch must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub epoch: usize,
    /// `[esgd-rmsprop, esgd-jacobi, jacobi-rmsprop, esgd-repeat]`.
    pub distances: [f64; 4],
    /// Share of coordinates whose signed Jacobi estimate is negative; a
    /// crude indicator of negative curvature.
    pub jacobi_negative_fraction: f64,
}

impl Measurement {
    pub fn distance(&self, pair: &str) -> Option<f64> {
        PAIRS.iter().position(|p| *p == pair).map(|i| self.distances[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineResult {
    pub records: Vec<ExperimentRecord>,
    pub measurements: Vec<Measurement>,
    pub run: RunSummary,
}

fn measure(trainer: &Trainer<'_>, config: &CosineConfig, epoch: usize, opt: &OptimizerState) -> Result<Option<Measurement>> {
    let rmsprop = match opt.preconditioner_direction() {
        Ok(d) => d,
        Err(CoreError::ColdStart) => {
            log::warn!("epoch {epoch}: rmsprop has taken no steps yet, measurement skipped");
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    let batch = trainer.data.select(&(0..config.measure_batch.min(trainer.data.len())).collect::<Vec<_>>());
    let objective = MlpObjective::new(&trainer.spec, &batch);
    let oracle = objective.at(&opt.params);
    let seed = derive_seed(trainer.config.seed, 0xC051_0000 + epoch as u64);
    let sampler = |stream: u64, dist| ProbeSampler::new(derive_seed(seed, stream), dist);

    let eq = estimate_diagonal(CurvatureKind::Equilibration, &oracle, &mut sampler(0, ProbeDistribution::Gaussian), config.probes)?
        .estimate()?;
    let jac_signed = estimate_diagonal(CurvatureKind::Jacobi, &oracle, &mut sampler(1, ProbeDistribution::Rademacher), config.probes)?
        .estimate()?;
    let eq_repeat = estimate_diagonal(CurvatureKind::Equilibration, &oracle, &mut sampler(2, ProbeDistribution::Gaussian), config.probes)?
        .estimate()?;
    let jac: Vec<f64> = jac_signed.iter().map(|x| x.abs()).collect();
    let negative = jac_signed.iter().filter(|x| **x < 0.0).count() as f64 / jac_signed.len() as f64;

    let distances = [
        cosine_distance(&eq, &rmsprop)?,
        cosine_distance(&eq, &jac)?,
        cosine_distance(&jac, &rmsprop)?,
        cosine_distance(&eq, &eq_repeat)?,
    ];
    log::info!(
        "epoch {epoch}: esgd-rmsprop {:.4} esgd-jacobi {:.4} jacobi-rmsprop {:.4} esgd-repeat {:.4}",
        distances[0],
        distances[1],
        distances[2],
        distances[3]
    );
    Ok(Some(Measurement {
        epoch,
        distances,
        jacobi_negative_fraction: negative,
    }))
}

pub fn run_cosine_trace(config: &CosineConfig, dataset: &Dataset) -> Result<CosineResult> {
    config.validate()?;
    let trainer = Trainer::new(&config.training, dataset)?;
    let run = config.training.runs().remove(0);
    let mut measurements = Vec::new();
    let (epoch_rows, summary) = trainer.train(&run, &mut |epoch, opt| {
        if epoch % config.measure_interval == 0 {
            if let Some(m) = measure(&trainer, config, epoch, opt)? {
                measurements.push(m);
            }
        }
        Ok(())
    })?;
    let by_epoch: BTreeMap<usize, &ExperimentRecord> = epoch_rows.iter().map(|r| (r.epoch, r)).collect();
    let mut records = Vec::with_capacity(measurements.len() * PAIRS.len());
    for m in &measurements {
        let base = by_epoch[&m.epoch];
        for (pair, d) in PAIRS.iter().zip(m.distances) {
            records.push(ExperimentRecord {
                pair: Some((*pair).to_string()),
                cosine_distance: Some(d),
                ..base.clone()
            });
        }
    }
    Ok(CosineResult {
        records,
        measurements,
        run: summary,
    })
}
