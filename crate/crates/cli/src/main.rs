use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use prior_forge::experiments::{self, ExperimentSpec, EXPERIMENT_NAMES};
use prior_forge::likelihood::sample_judgements;
use prior_forge::models::ModelSpec;
use prior_forge::{fit, CovariateSet, HyperParams, JudgementSet, Method, MonteCarlo, OptimizerConfig, Partition};
use prior_forge_service::session::parse_model;
use prior_forge_service::{resolve_data_dir, DATA_DIR_ENV};
use serde::Deserialize;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "prior-forge", version, about = "Fit priors to expert judgements about observable data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit hyperparameters to a judgement file.
    Fit {
        /// Registry name, or a JSON model object such as '{"name":"probit-glm","dim":3}'.
        #[arg(long)]
        model: String,
        #[arg(long)]
        judgements: PathBuf,
        /// natgrad, stoch-natgrad or nelder-mead.
        #[arg(long)]
        optimizer: Option<Method>,
        #[arg(long)]
        seed: Option<u64>,
        /// Optimizer settings as JSON; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw synthetic judgements from known hyperparameters.
    Simulate {
        #[arg(long)]
        model: String,
        /// JSON object with `unconstrained` or `constrained` values.
        #[arg(long)]
        params: PathBuf,
        /// JSON list of `{covariate, partition}` entries.
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte Carlo draws per covariate set for simulation-based models.
        #[arg(long, default_value_t = 4096)]
        draws: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulation experiments.
    Experiments {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Falls back to $PRIOR_FORGE_DATA_DIR, then ./prior-forge-data.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// List the built-in models and their hyperparameters.
    Models,
}

#[derive(Subcommand)]
enum ExperimentAction {
    /// Run one experiment and write `<stem>.json` and `<stem>.csv`.
    Run {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output stem; defaults to the config's `output`, then the name.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    List,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn model_arg(raw: &str) -> Result<ModelSpec> {
    let value = if raw.trim_start().starts_with('{') {
        serde_json::from_str(raw).context("parsing --model")?
    } else {
        Value::String(raw.to_string())
    };
    Ok(parse_model(&value)?)
}

fn run_fit(
    model: &str,
    judgements: &Path,
    optimizer: Option<Method>,
    seed: Option<u64>,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let spec = model_arg(model)?;
    let built = spec.build()?;
    let set: JudgementSet = serde_json::from_value(read_json(judgements)?).context("reading judgements")?;
    let mut cfg: OptimizerConfig = match config {
        Some(p) => serde_json::from_value(read_json(p)?).context("reading optimizer config")?,
        None => OptimizerConfig::default(),
    };
    if let Some(m) = optimizer {
        cfg.method = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let result = fit(&set, built.as_ref(), &cfg)?;
    eprintln!(
        "{}: loglik {:.6}, alpha_hat {:.4}, {} iterations, stop {:?}",
        result.model, result.loglik, result.alpha_hat.alpha_hat, result.iterations, result.stop_reason
    );
    write_out(out, &result.to_json())
}

#[derive(Deserialize)]
struct ParamsFile {
    #[serde(default)]
    unconstrained: Option<Vec<f64>>,
    #[serde(default)]
    constrained: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct DesignRow {
    covariate: CovariateSet,
    partition: Partition,
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(model: &str, params: &Path, design: &Path, alpha: f64, seed: u64, draws: usize, out: Option<&Path>) -> Result<()> {
    let built = model_arg(model)?.build()?;
    let file: ParamsFile = serde_json::from_value(read_json(params)?).context("reading params")?;
    let lambda = match (file.unconstrained, file.constrained) {
        (Some(u), None) => HyperParams::from_unconstrained(built.layout(), u)?,
        (None, Some(c)) => HyperParams::from_constrained(built.layout(), c)?,
        _ => bail!("params file needs exactly one of `unconstrained` or `constrained`"),
    };
    let rows: Vec<DesignRow> = serde_json::from_value(read_json(design)?).context("reading design")?;
    let design: Vec<(CovariateSet, Partition)> = rows.into_iter().map(|r| (r.covariate, r.partition)).collect();
    let set = sample_judgements(alpha, &lambda, built.as_ref(), &design, seed, &MonteCarlo::new(draws, seed))?;
    write_out(out, &serde_json::to_string_pretty(&set)?)
}

fn experiment_spec(name: &str, config: Option<&Path>) -> Result<ExperimentSpec> {
    if !EXPERIMENT_NAMES.contains(&name) {
        bail!("unknown experiment `{name}`; expected one of {}", EXPERIMENT_NAMES.join(", "));
    }
    let Some(path) = config else {
        return Ok(ExperimentSpec::from_name(name)?);
    };
    let mut value = read_json(path)?;
    let obj = value.as_object_mut().context("experiment config must be a JSON object")?;
    match obj.get("name").and_then(Value::as_str) {
        Some(n) if n != name => bail!("config names experiment `{n}` but `{name}` was requested"),
        _ => {
            obj.insert("name".into(), Value::String(name.into()));
        }
    }
    serde_json::from_value(value).context("reading experiment config")
}

fn run_experiment(name: &str, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let spec = experiment_spec(name, config)?;
    let stem = out.map(Path::to_path_buf).or_else(|| spec.output.clone()).unwrap_or_else(|| PathBuf::from(name));
    let result = experiments::run(&spec)?;
    let json_path = stem.with_extension("json");
    let csv_path = stem.with_extension("csv");
    std::fs::write(&json_path, result.to_json()).with_context(|| format!("writing {}", json_path.display()))?;
    std::fs::write(&csv_path, result.to_csv()?).with_context(|| format!("writing {}", csv_path.display()))?;
    for (k, v) in &result.summary {
        eprintln!("{k} = {v}");
    }
    eprintln!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Fit { model, judgements, optimizer, seed, config, out } => {
            run_fit(&model, &judgements, optimizer, seed, config.as_deref(), out.as_deref())
        }
        Command::Simulate { model, params, design, alpha, seed, draws, out } => {
            run_simulate(&model, &params, &design, alpha, seed, draws, out.as_deref())
        }
        Command::Experiments { action: ExperimentAction::Run { name, config, out } } => {
            run_experiment(&name, config.as_deref(), out.as_deref())
        }
        Command::Experiments { action: ExperimentAction::List } => {
            EXPERIMENT_NAMES.iter().for_each(|n| println!("{n}"));
            Ok(())
        }
        Command::Models => {
            println!("{}", serde_json::to_string_pretty(&prior_forge::models::registry())?);
            Ok(())
        }
        Command::Serve { port, host, data_dir } => {
            let dir = resolve_data_dir(data_dir);
            let addr: SocketAddr = format!("{host}:{port}").parse().context("parsing --host/--port")?;
            eprintln!("data directory {} (override with --data-dir or {DATA_DIR_ENV})", dir.display());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(prior_forge_service::serve(addr, dir))?;
            Ok(())
        }
    }
}
