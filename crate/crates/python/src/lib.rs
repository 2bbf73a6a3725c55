//! Python bindings. Structured arguments and results cross the boundary as
//! plain Python objects through JSON.

use prior_forge::experiments::{self, ExperimentSpec};
use prior_forge::judgement::QUANTILE_LEVELS;
use prior_forge::likelihood::{self, kl_divergence, ConcentrationEstimate};
use prior_forge::models::{registry, ModelSpec};
use prior_forge::{CovariateSet, HyperParams, Judgement, JudgementSet, Method, MonteCarlo, OptimizerConfig, Partition};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::Value;

create_exception!(prior_forge, PriorForgeError, PyValueError);

fn err(e: impl std::fmt::Display) -> PyErr {
    PriorForgeError::new_err(e.to_string())
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn from_json<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    serde_json::from_value(to_json(obj)?).map_err(err)
}

fn to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// A registry name, or a dict such as `{"name": "probit-glm", "dim": 3}`.
fn model_spec(model: &Bound<'_, PyAny>) -> PyResult<ModelSpec> {
    if let Ok(name) = model.extract::<String>() {
        return ModelSpec::from_name(&name).map_err(err);
    }
    from_json(model)
}

/// Built-in models with their hyperparameter names.
#[pyfunction]
fn models(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &serde_json::to_string(&registry()).map_err(err)?)
}

/// Fits hyperparameters; returns the fit result as a dict.
#[pyfunction]
#[pyo3(signature = (model, judgements, optimizer = "natgrad", seed = 0, config = None))]
fn fit<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    judgements: &Bound<'py, PyAny>,
    optimizer: &str,
    seed: u64,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let built = model_spec(model)?.build().map_err(err)?;
    let set: JudgementSet = from_json(judgements)?;
    let mut cfg: OptimizerConfig = match config {
        Some(c) => from_json(c)?,
        None => OptimizerConfig::default(),
    };
    cfg.method = optimizer.parse::<Method>().map_err(err)?;
    cfg.seed = seed;
    let result = py.detach(|| prior_forge::fit(&set, built.as_ref(), &cfg)).map_err(err)?;
    to_py(py, &result.to_json())
}

/// Synthetic judgements drawn around known hyperparameters. `params` holds
/// either `unconstrained` or `constrained` values; `design` is a list of
/// `{covariate, partition}` dicts.
#[pyfunction]
#[pyo3(signature = (model, params, design, alpha, seed = 0, draws = 4096))]
fn simulate<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    params: &Bound<'py, PyAny>,
    design: &Bound<'py, PyAny>,
    alpha: f64,
    seed: u64,
    draws: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let built = model_spec(model)?.build().map_err(err)?;
    let p = to_json(params)?;
    let lambda = match (p.get("unconstrained"), p.get("constrained")) {
        (Some(u), None) => HyperParams::from_unconstrained(built.layout(), serde_json::from_value(u.clone()).map_err(err)?),
        (None, Some(c)) => HyperParams::from_constrained(built.layout(), serde_json::from_value(c.clone()).map_err(err)?),
        _ => return Err(err("params needs exactly one of `unconstrained` or `constrained`")),
    }
    .map_err(err)?;
    let rows: Vec<Value> = from_json(design)?;
    let design = rows
        .into_iter()
        .map(|r| -> PyResult<(CovariateSet, Partition)> {
            Ok((
                serde_json::from_value(r["covariate"].clone()).map_err(err)?,
                serde_json::from_value(r["partition"].clone()).map_err(err)?,
            ))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let mc = MonteCarlo::new(draws, seed);
    let set = py.detach(|| likelihood::sample_judgements(alpha, &lambda, built.as_ref(), &design, seed, &mc)).map_err(err)?;
    to_py(py, &serde_json::to_string(&set).map_err(err)?)
}

/// Log-density of `p` under a Dirichlet with mean `probs` and concentration `alpha`.
#[pyfunction]
fn dirichlet_logpdf(p: Vec<f64>, alpha: f64, probs: Vec<f64>) -> PyResult<f64> {
    likelihood::dirichlet_logpdf(&p, alpha, &probs).map_err(err)
}

/// Closed-form concentration estimate from judged and fitted probability
/// vectors, one pair per covariate set.
#[pyfunction]
fn alpha_hat(judged: Vec<Vec<f64>>, fitted: Vec<Vec<f64>>) -> PyResult<f64> {
    if judged.len() != fitted.len() {
        return Err(err(format!("{} judged vectors but {} fitted", judged.len(), fitted.len())));
    }
    let sizes: Vec<usize> = judged.iter().map(Vec::len).collect();
    let kls = judged.iter().zip(&fitted).map(|(p, q)| kl_divergence(q, p)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    Ok(ConcentrationEstimate::from_divergences(&sizes, &kls).map_err(err)?.alpha_hat)
}

/// Roulette chips to probabilities.
#[pyfunction]
fn chips_to_simplex(chips: Vec<u64>) -> PyResult<Vec<f64>> {
    let edges: Vec<f64> = (0..=chips.len()).map(|i| i as f64).collect();
    Ok(Judgement::from_chips(CovariateSet::empty(), Partition::from_edges(&edges), &chips).map_err(err)?.p)
}

/// Quantile thresholds to `(edges, p)`.
#[pyfunction]
#[pyo3(signature = (thresholds, levels = None, lower = f64::NEG_INFINITY, upper = f64::INFINITY))]
fn quantiles_to_simplex(thresholds: Vec<f64>, levels: Option<Vec<f64>>, lower: f64, upper: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let levels = levels.unwrap_or_else(|| QUANTILE_LEVELS.to_vec());
    let j = Judgement::from_quantiles(CovariateSet::empty(), &thresholds, &levels, lower, upper).map_err(err)?;
    let edges = match j.partition.intervals() {
        Some(iv) => std::iter::once(iv[0].0).chain(iv.iter().map(|b| b.1)).collect(),
        None => Vec::new(),
    };
    Ok((edges, j.p))
}

/// Runs a simulation experiment. `config` overrides the defaults.
#[pyfunction]
#[pyo3(signature = (name, config = None))]
fn run_experiment<'py>(py: Python<'py>, name: &str, config: Option<&Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let spec: ExperimentSpec = match config {
        None => ExperimentSpec::from_name(name).map_err(err)?,
        Some(c) => {
            let mut v = to_json(c)?;
            let obj = v.as_object_mut().ok_or_else(|| err("config must be a dict"))?;
            obj.insert("name".into(), Value::String(name.into()));
            serde_json::from_value(v).map_err(err)?
        }
    };
    let result = py.detach(|| experiments::run(&spec)).map_err(err)?;
    to_py(py, &result.to_json())
}

#[pymodule]
#[pyo3(name = "prior_forge")]
fn prior_forge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PriorForgeError", m.py().get_type::<PriorForgeError>())?;
    m.add_function(wrap_pyfunction!(models, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_logpdf, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_hat, m)?)?;
    m.add_function(wrap_pyfunction!(chips_to_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(quantiles_to_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
