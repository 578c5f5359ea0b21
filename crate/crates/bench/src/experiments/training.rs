//! Autoencoder training benchmark with per-method random search.

use std::time::Instant;

use esgd_core::model::{loss, loss_and_gradient, sparse_init, Batch, LossKind, MlpObjective, MlpSpec};
use esgd_core::optim::{Method, OptimizerConfig, OptimizerState};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, stream_rng};
use crate::data::Dataset;
use crate::error::{BenchError, Result};

const DATA_ORDER_TAG: u64 = 0xDA7A;
const SEARCH_TAG: u64 = 0x5EA3C4;
const PROBE_TAG: u64 = 0x9B0BE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub layer_sizes: Vec<usize>,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub methods: Vec<Method>,
    /// Random-search configurations per method.
    pub trials: usize,
    pub seed: u64,
    pub interval: u64,
    /// Incoming connections per unit in the sparse initialization.
    pub connections: usize,
    /// A run stops once its loss exceeds this multiple of the initial loss.
    pub divergence_factor: f64,
    /// Fixed values replacing the random search for every run.
    pub lr: Option<f64>,
    pub damping: Option<f64>,
    pub ema_decay: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![64, 32, 16, 8, 16, 32, 64],
            loss: LossKind::SigmoidBinaryCrossEntropy,
            epochs: 200,
            batch_size: 200,
            methods: vec![Method::Sgd, Method::Esgd, Method::JacobiSgd, Method::Rmsprop],
            trials: 6,
            seed: 0,
            interval: 20,
            connections: 15,
            divergence_factor: 10.0,
            lr: None,
            damping: None,
            ema_decay: None,
        }
    }
}

pub const DAMPING_CHOICES: [f64; 3] = [1e-4, 1e-5, 1e-6];
pub const EMA_CHOICES: [f64; 2] = [0.9, 0.95];

/// Log-uniform learning-rate range searched for `method`.
pub fn lr_range(method: Method) -> (f64, f64) {
    match method {
        Method::Sgd | Method::Esgd => (1e-2, 1e-1),
        Method::Rmsprop | Method::JacobiSgd | Method::Adagrad => (1e-4, 1e-3),
    }
}

impl TrainingConfig {
    pub fn spec(&self) -> Result<MlpSpec> {
        Ok(MlpSpec::new(self.layer_sizes.clone(), self.loss)?)
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let spec = self.spec()?;
        if spec.input_dim() != dataset.dim() || spec.output_dim() != dataset.targets.cols() {
            return Err(BenchError::Config(format!(
                "network {:?} does not fit data of dimension {} -> {}",
                self.layer_sizes,
                dataset.dim(),
                dataset.targets.cols()
            )));
        }
        if dataset.is_empty() || self.batch_size == 0 || self.trials == 0 || self.methods.is_empty() {
            return Err(BenchError::Config("need data, a positive batch size, trials and methods".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(BenchError::Config("divergence factor must exceed 1".into()));
        }
        for run in self.runs() {
            run.optimizer_config().validate()?;
        }
        Ok(())
    }

    /// Every run in id order: methods in configured order, `trials` each.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut runs = Vec::with_capacity(self.methods.len() * self.trials);
        for &method in &self.methods {
            let mut rng = stream_rng(derive_seed(self.seed, SEARCH_TAG), method as u64);
            let (lo, hi) = lr_range(method);
            for _ in 0..self.trials {
                let lr = (rng.random_range(lo.ln()..=hi.ln())).exp();
                let damping = DAMPING_CHOICES[rng.random_range(0..DAMPING_CHOICES.len())];
                let ema = EMA_CHOICES[rng.random_range(0..EMA_CHOICES.len())];
                let run_id = runs.len();
                runs.push(RunSpec {
                    run_id,
                    method,
                    lr: self.lr.unwrap_or(lr),
                    damping: self.damping.unwrap_or(damping),
                    ema_decay: self.ema_decay.unwrap_or(ema),
                    interval: self.interval,
                    probe_seed: derive_seed(derive_seed(self.seed, PROBE_TAG), run_id as u64),
                });
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: usize,
    pub method: Method,
    pub lr: f64,
    pub damping: f64,
    pub ema_decay: f64,
    pub interval: u64,
    pub probe_seed: u64,
}

impl RunSpec {
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig::new(self.method, self.lr)
            .with_damping(self.damping)
            .with_ema_decay(self.ema_decay)
            .with_interval(self.interval)
            .with_seed(self.probe_seed)
    }

    fn uses_damping(&self) -> bool {
        self.method != Method::Sgd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Diverged,
}

/// One long-format CSV row. Training rows leave `pair` and
/// `cosine_distance` empty; cosine-trace rows carry one pair each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: usize,
    pub method: Method,
    pub lr: f64,
    pub damping: Option<f64>,
    pub ema_decay: Option<f64>,
    pub interval: Option<u64>,
    pub epoch: usize,
    /// Full-training-set loss after `epoch` epochs; empty when non-finite.
    pub train_loss: Option<f64>,
    pub status: RunStatus,
    pub pair: Option<String>,
    pub cosine_distance: Option<f64>,
    /// Seconds since the run started; varies between runs, so kept out of CSV.
    #[serde(skip)]
    pub wall_time: f64,
}

impl ExperimentRecord {
    pub fn new(run: &RunSpec, epoch: usize, train_loss: f64, status: RunStatus, wall_time: f64) -> Self {
        Self {
            run_id: run.run_id,
            method: run.method,
            lr: run.lr,
            damping: run.uses_damping().then_some(run.damping),
            ema_decay: (run.method == Method::Rmsprop).then_some(run.ema_decay),
            interval: run.method.needs_hvp().then_some(run.interval),
            epoch,
            train_loss: train_loss.is_finite().then_some(train_loss),
            status,
            pair: None,
            cosine_distance: None,
            wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(flatten)]
    pub run: RunSpec,
    pub status: RunStatus,
    pub epochs_completed: usize,
    pub initial_loss: f64,
    /// `None` for diverged runs.
    pub final_loss: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingResult {
    pub records: Vec<ExperimentRecord>,
    pub runs: Vec<RunSummary>,
}

impl TrainingResult {
    /// Lowest final loss among converged runs of `method`.
    pub fn best(&self, method: Method) -> Option<&RunSummary> {
        self.runs
            .iter()
            .filter(|r| r.run.method == method && r.final_loss.is_some())
            .min_by(|a, b| a.final_loss.unwrap().total_cmp(&b.final_loss.unwrap()))
    }
}

/// The minibatch order of `epoch` (1-based), shared by every run.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(derive_seed(seed, DATA_ORDER_TAG), epoch as u64));
    order
}

/// Shared state for training every run on one dataset.
pub struct Trainer<'a> {
    pub config: &'a TrainingConfig,
    pub spec: MlpSpec,
    pub data: Batch,
    pub init: Vec<f64>,
    pub initial_loss: f64,
}

/// Called after every completed epoch with the epoch number and optimizer.
pub type EpochHook<'h> = dyn FnMut(usize, &OptimizerState) -> Result<()> + 'h;

impl<'a> Trainer<'a> {
    pub fn new(config: &'a TrainingConfig, dataset: &Dataset) -> Result<Self> {
        config.validate(dataset)?;
        let spec = config.spec()?;
        let data = dataset.batch();
        let init = sparse_init(&spec, config.seed, config.connections);
        let initial_loss = loss(&spec, &init, &data)?;
        Ok(Self {
            config,
            spec,
            data,
            init,
            initial_loss,
        })
    }

    pub fn train(&self, run: &RunSpec, hook: &mut EpochHook<'_>) -> Result<(Vec<ExperimentRecord>, RunSummary)> {
        let start = Instant::now();
        let mut opt = OptimizerState::new(run.optimizer_config(), self.init.clone())?;
        let limit = self.config.divergence_factor * self.initial_loss;
        let mut records = vec![ExperimentRecord::new(run, 0, self.initial_loss, RunStatus::Ok, 0.0)];
        let mut status = RunStatus::Ok;
        let mut epochs_completed = 0;
        let mut last = self.initial_loss;
        hook(0, &opt)?;
        'epochs: for epoch in 1..=self.config.epochs {
            let order = epoch_order(self.config.seed, epoch, self.data.len());
            for idx in order.chunks(self.config.batch_size) {
                let mb = self.data.select(idx);
                let (l, g) = loss_and_gradient(&self.spec, &opt.params, &mb)?;
                if !l.is_finite() || g.iter().any(|x| !x.is_finite()) {
                    status = RunStatus::Diverged;
                    last = f64::NAN;
                    break;
                }
                let objective = MlpObjective::new(&self.spec, &mb);
                opt.step(&g, Some(&objective))?;
            }
            if status == RunStatus::Ok {
                last = loss(&self.spec, &opt.params, &self.data)?;
                if !last.is_finite() || last > limit {
                    status = RunStatus::Diverged;
                }
            }
            let elapsed = start.elapsed().as_secs_f64();
            records.push(ExperimentRecord::new(run, epoch, last, status, elapsed));
            if status == RunStatus::Diverged {
                log::info!("run {} ({}) diverged at epoch {epoch}", run.run_id, run.method);
                break 'epochs;
            }
            epochs_completed = epoch;
            hook(epoch, &opt)?;
        }
        let summary = RunSummary {
            run: run.clone(),
            status,
            epochs_completed,
            initial_loss: self.initial_loss,
            final_loss: (status == RunStatus::Ok).then_some(last),
            wall_time: start.elapsed().as_secs_f64(),
        };
        Ok((records, summary))
    }
}

pub fn run_training_benchmark(config: &TrainingConfig, dataset: &Dataset) -> Result<TrainingResult> {
    let trainer = Trainer::new(config, dataset)?;
    let mut records = Vec::new();
    let mut runs = Vec::new();
    for run in config.runs() {
        let (r, s) = trainer.train(&run, &mut |_, _| Ok(()))?;
        log::info!(
            "run {} {} lr={:.3e}: {:?} final loss {:?} in {:.1}s",
            run.run_id,
            run.method,
            run.lr,
            s.status,
            s.final_loss,
            s.wall_time
        );
        records.extend(r);
        runs.push(s);
    }
    Ok(TrainingResult { records, runs })
}
