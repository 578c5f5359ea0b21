use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use esgd_bench::config::ConfigFile;
use esgd_bench::data::{downsample, gen_synthetic, Dataset, SyntheticKind};
use esgd_bench::experiments::cosine::{run_cosine_trace, CosineConfig};
use esgd_bench::experiments::histogram::{run_condition_histogram, summarize, HistogramConfig, ProblemKind};
use esgd_bench::experiments::training::{run_training_benchmark, TrainingConfig};
use esgd_bench::experiments::{write_csv, write_json};
use esgd_bench::idx::{load_idx, write_idx_images, PixelFormat};
use esgd_core::optim::Method;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "esgd-bench", version, about = "Diagonal preconditioner experiments")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for CSV and JSON files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Condition-number reduction histogram on random networks.
    ConditionHist(HistArgs),
    /// Train autoencoders with each method's random search.
    Train(TrainArgs),
    /// Cosine distances between estimated diagonals along an RMSProp run.
    CosineTrace(CosineArgs),
    /// Write a synthetic dataset as an IDX image file.
    GenData(GenArgs),
}

#[derive(Debug, Args)]
struct HistArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    inputs: Option<usize>,
    /// Hidden units of the nonconvex network.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    outputs: Option<usize>,
    /// Examples in the batch the Hessian is taken over.
    #[arg(long)]
    batch: Option<usize>,
    /// Comma-separated subset of convex-logreg, nonconvex-mlp.
    #[arg(long, value_delimiter = ',')]
    problems: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// IDX image file; a synthetic dataset is generated when absent.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Downsample images to SIDE x SIDE.
    #[arg(long, value_name = "SIDE")]
    downsample: Option<usize>,
    /// Synthetic dataset kind.
    #[arg(long)]
    kind: Option<String>,
    /// Synthetic examples.
    #[arg(long)]
    n: Option<usize>,
    /// Synthetic dimension.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Debug, Args)]
struct OptArgs {
    #[arg(long)]
    epochs: Option<usize>,
    /// Fixed learning rate instead of the random search.
    #[arg(long)]
    lr: Option<f64>,
    /// Fixed damping instead of the random search.
    #[arg(long)]
    damping: Option<f64>,
    /// Iterations between curvature estimates.
    #[arg(long)]
    interval: Option<u64>,
    #[arg(long)]
    ema_decay: Option<f64>,
    /// Comma-separated layer sizes.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Comma-separated methods: sgd, esgd, jacobi-sgd, rmsprop, adagrad.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Random-search configurations per method.
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    opt: OptArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct CosineArgs {
    /// Must be rmsprop; accepted for symmetry with `train`.
    #[arg(long)]
    method: Option<String>,
    /// Epochs between measurements.
    #[arg(long)]
    measure_interval: Option<usize>,
    /// Probes per diagonal estimate.
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    measure_batch: Option<usize>,
    #[command(flatten)]
    opt: OptArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    U8,
    F64,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// Flag, then config file, then default.
struct Resolver {
    file: ConfigFile,
}

impl Resolver {
    fn value<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.file.get(key)?.unwrap_or(default),
        })
    }

    fn optional<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.file.get(key)?,
        })
    }

    fn list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str, default: Vec<T>) -> anyhow::Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.file.get_list(key)?.unwrap_or(default),
        })
    }
}

const COMMON_KEYS: &[&str] = &["seed", "out"];
const DATA_KEYS: &[&str] = &["data", "downsample", "kind", "n", "dim"];
const OPT_KEYS: &[&str] = &["epochs", "lr", "damping", "interval", "ema_decay", "layers", "batch_size"];

fn allowed(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

fn parse_each<T: FromStr>(items: Vec<String>) -> anyhow::Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    items.iter().map(|s| Ok(s.trim().parse::<T>()?)).collect()
}

fn load_dataset(r: &Resolver, args: DataArgs, seed: u64) -> anyhow::Result<Dataset> {
    let path: Option<PathBuf> = r.optional(args.data, "data")?;
    let side: Option<usize> = r.optional(args.downsample, "downsample")?;
    let dataset = match path {
        Some(p) => load_idx(&p)?,
        None => {
            let kind: SyntheticKind = r.value(args.kind, "kind", "curves-like".to_string())?.parse()?;
            let n = r.value(args.n, "n", 1000)?;
            let dim = r.value(args.dim, "dim", 64)?;
            gen_synthetic(kind, n, dim, seed)?
        }
    };
    Ok(match side {
        Some(s) => downsample(&dataset, s, s)?,
        None => dataset,
    })
}

fn training_config(r: &Resolver, opt: OptArgs, mut base: TrainingConfig, seed: u64) -> anyhow::Result<TrainingConfig> {
    base.seed = seed;
    base.epochs = r.value(opt.epochs, "epochs", base.epochs)?;
    base.lr = r.optional(opt.lr, "lr")?.or(base.lr);
    base.damping = r.optional(opt.damping, "damping")?.or(base.damping);
    base.ema_decay = r.optional(opt.ema_decay, "ema_decay")?.or(base.ema_decay);
    base.interval = r.value(opt.interval, "interval", base.interval)?;
    base.layer_sizes = r.list(opt.layers, "layers", base.layer_sizes)?;
    base.batch_size = r.value(opt.batch_size, "batch_size", base.batch_size)?;
    Ok(base)
}

fn dataset_manifest(d: &Dataset) -> serde_json::Value {
    json!({
        "name": d.name,
        "source": d.source,
        "examples": d.len(),
        "dim": d.dim(),
        "image_shape": [d.image_shape.0, d.image_shape.1],
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let r = Resolver { file };
    let seed = r.value(cli.seed, "seed", 0)?;
    let out: PathBuf = r.value(cli.out, "out", PathBuf::from("results"))?;
    let started = Instant::now();

    match cli.command {
        Command::ConditionHist(a) => {
            r.file.check_keys(&allowed(&[
                COMMON_KEYS,
                &["trials", "inputs", "hidden", "outputs", "batch", "problems"],
            ]))?;
            let d = HistogramConfig::default();
            let problems = r.list(a.problems, "problems", vec![])?;
            let config = HistogramConfig {
                trials: r.value(a.trials, "trials", d.trials)?,
                seed,
                inputs: r.value(a.inputs, "inputs", d.inputs)?,
                hidden: r.value(a.hidden, "hidden", d.hidden)?,
                outputs: r.value(a.outputs, "outputs", d.outputs)?,
                batch: r.value(a.batch, "batch", d.batch)?,
                problems: if problems.is_empty() {
                    d.problems.clone()
                } else {
                    parse_each::<ProblemKind>(problems)?
                },
                ..d
            };
            let records = run_condition_histogram(&config)?;
            let summary = summarize(&records);
            let csv = out.join("condition_hist.csv");
            write_csv(&csv, &records)?;
            write_json(
                &out.join("condition_hist.json"),
                &json!({
                    "command": "condition-hist",
                    "config": config,
                    "summary": summary,
                    "wall_time_seconds": started.elapsed().as_secs_f64(),
                }),
            )?;
            for k in &summary.kinds {
                println!("{:<14} {:<14} median ratio {:.4}", k.problem, k.preconditioner, k.median_ratio);
            }
            println!("wrote {}", csv.display());
        }
        Command::Train(a) => {
            r.file
                .check_keys(&allowed(&[COMMON_KEYS, DATA_KEYS, OPT_KEYS, &["method", "trials"]]))?;
            let d = TrainingConfig::default();
            let methods = r.list(a.method, "method", d.methods.iter().map(|m| m.to_string()).collect())?;
            let mut config = training_config(&r, a.opt, d, seed)?;
            config.methods = parse_each::<Method>(methods)?;
            config.trials = r.value(a.trials, "trials", config.trials)?;
            let dataset = load_dataset(&r, a.data, seed)?;
            let result = run_training_benchmark(&config, &dataset)?;
            let csv = out.join("train.csv");
            write_csv(&csv, &result.records)?;
            let best: Vec<_> = config
                .methods
                .iter()
                .filter_map(|&m| result.best(m).map(|b| json!({"method": m, "run_id": b.run.run_id, "final_loss": b.final_loss})))
                .collect();
            write_json(
                &out.join("train.json"),
                &json!({
                    "command": "train",
                    "config": config,
                    "dataset": dataset_manifest(&dataset),
                    "runs": result.runs,
                    "best": best,
                    "wall_time_seconds": started.elapsed().as_secs_f64(),
                }),
            )?;
            for m in &config.methods {
                match result.best(*m) {
                    Some(b) => println!("{m:<10} best final loss {:.6} (run {})", b.final_loss.unwrap(), b.run.run_id),
                    None => println!("{m:<10} every run diverged"),
                }
            }
            println!("wrote {}", csv.display());
        }
        Command::CosineTrace(a) => {
            r.file.check_keys(&allowed(&[
                COMMON_KEYS,
                DATA_KEYS,
                OPT_KEYS,
                &["method", "measure_interval", "probes", "measure_batch"],
            ]))?;
            let method = r.value(a.method, "method", "rmsprop".to_string())?;
            if method.parse::<Method>()? != Method::Rmsprop {
                bail!("cosine-trace follows rmsprop; got method {method}");
            }
            let d = CosineConfig::default();
            let config = CosineConfig {
                training: training_config(&r, a.opt, d.training.clone(), seed)?,
                measure_interval: r.value(a.measure_interval, "measure_interval", d.measure_interval)?,
                probes: r.value(a.probes, "probes", d.probes)?,
                measure_batch: r.value(a.measure_batch, "measure_batch", d.measure_batch)?,
            };
            let dataset = load_dataset(&r, a.data, seed)?;
            let result = run_cosine_trace(&config, &dataset)?;
            let csv = out.join("cosine_trace.csv");
            write_csv(&csv, &result.records)?;
            write_json(
                &out.join("cosine_trace.json"),
                &json!({
                    "command": "cosine-trace",
                    "config": config,
                    "dataset": dataset_manifest(&dataset),
                    "run": result.run,
                    "measurements": result.measurements,
                    "wall_time_seconds": started.elapsed().as_secs_f64(),
                }),
            )?;
            println!("{} measurements; wrote {}", result.measurements.len(), csv.display());
        }
        Command::GenData(a) => {
            r.file.check_keys(&allowed(&[COMMON_KEYS, &["kind", "n", "dim", "format"]]))?;
            let kind: SyntheticKind = r.value(a.kind, "kind", "curves-like".to_string())?.parse()?;
            let n = r.value(a.n, "n", 1000)?;
            let dim = r.value(a.dim, "dim", 64)?;
            let format = match a.format {
                Some(f) => f,
                None => match r.file.get_str("format") {
                    None => Format::F64,
                    Some(s) => Format::from_str(s, true).map_err(|e| anyhow::anyhow!("config format: {e}"))?,
                },
            };
            let dataset = gen_synthetic(kind, n, dim, seed)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join(format!("{kind}.idx"));
            let pixels = match format {
                Format::U8 => PixelFormat::U8,
                Format::F64 => PixelFormat::F64,
            };
            write_idx_images(&path, &dataset, pixels)?;
            write_json(
                &out.join(format!("{kind}.json")),
                &json!({"command": "gen-data", "seed": seed, "format": format!("{format:?}").to_lowercase(), "dataset": dataset_manifest(&dataset)}),
            )?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("esgd-bench: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
