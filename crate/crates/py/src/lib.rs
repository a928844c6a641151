//! Python bindings: the system loader, exact solver, cost/violation scoring,
//! prompt rendering, response parsing, and the GA baseline.
//!
//! Build with `cargo build -p edbench-py --release --features extension-module`
//! and import the resulting cdylib as `edbench` (see python/smoke_test.py).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use edbench_core::ga::{CrossoverMode, GaConfig};
use edbench_core::prompt::{self, Strategy};
use edbench_core::{solver, system, Dispatch};

fn to_py_err(e: edbench_core::Error) -> PyErr {
    match e {
        edbench_core::Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// An ordered set of generation units.
#[pyclass(name = "PowerSystem", frozen)]
struct PyPowerSystem {
    inner: system::PowerSystem,
}

#[pymethods]
impl PyPowerSystem {
    /// The bundled IEEE 118-bus generator set (19 units).
    #[staticmethod]
    fn bundled() -> Self {
        Self {
            inner: system::PowerSystem::bundled_ieee118(),
        }
    }

    /// Load a system file (CSV or JSON mirror) from a path.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Self {
            inner: system::load_system(file).map_err(to_py_err)?,
        })
    }

    /// Parse a system from file contents.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: system::load_system(text.as_bytes()).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.inner.n_units()
    }

    #[getter]
    fn pd_min(&self) -> f64 {
        self.inner.pd_min()
    }

    #[getter]
    fn pd_max(&self) -> f64 {
        self.inner.pd_max()
    }

    #[getter]
    fn buses(&self) -> Vec<u32> {
        self.inner.units().iter().map(|u| u.bus).collect()
    }

    /// Per-unit (p_min, p_max) limits in canonical order.
    #[getter]
    fn limits(&self) -> Vec<(f64, f64)> {
        self.inner
            .units()
            .iter()
            .map(|u| (u.p_min, u.p_max))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n_units()
    }

    fn __repr__(&self) -> String {
        format!(
            "PowerSystem(n_units={}, pd_min={}, pd_max={})",
            self.inner.n_units(),
            self.inner.pd_min(),
            self.inner.pd_max()
        )
    }
}

/// An exact dispatch solution.
#[pyclass(name = "EdSolution", frozen)]
struct PyEdSolution {
    #[pyo3(get)]
    pg: Vec<f64>,
    #[pyo3(get)]
    pd: f64,
    #[pyo3(get)]
    cost: f64,
    #[pyo3(get)]
    lambda_mwh: f64,
}

#[pymethods]
impl PyEdSolution {
    fn __repr__(&self) -> String {
        format!(
            "EdSolution(pd={}, cost={}, lambda={})",
            self.pd, self.cost, self.lambda_mwh
        )
    }
}

/// Solve the dispatch problem exactly for one demand.
#[pyfunction]
fn solve_ed(sys: &PyPowerSystem, pd: f64) -> PyResult<PyEdSolution> {
    let sol = solver::solve_ed(&sys.inner, pd).map_err(to_py_err)?;
    Ok(PyEdSolution {
        pg: sol.dispatch.pg,
        pd: sol.dispatch.pd,
        cost: sol.cost,
        lambda_mwh: sol.lambda,
    })
}

/// Total generation cost of a dispatch vector in $/h.
#[pyfunction]
#[pyo3(signature = (sys, pg, include_constants = false))]
fn total_cost(sys: &PyPowerSystem, pg: Vec<f64>, include_constants: bool) -> PyResult<f64> {
    let d = Dispatch::new(pg, 0.0).map_err(to_py_err)?;
    solver::total_cost(&d, &sys.inner, include_constants).map_err(to_py_err)
}

/// (generation_violation, balance_violation) of a dispatch, in MW.
#[pyfunction]
fn violations(sys: &PyPowerSystem, pg: Vec<f64>, pd: f64) -> PyResult<(f64, f64)> {
    let d = Dispatch::new(pg, pd).map_err(to_py_err)?;
    solver::violations(&d, &sys.inner).map_err(to_py_err)
}

/// Rebalance a dispatch to exact power balance inside the box limits.
#[pyfunction]
fn repair_balance(sys: &PyPowerSystem, pg: Vec<f64>, pd: f64) -> PyResult<Vec<f64>> {
    let d = Dispatch::new(pg, pd).map_err(to_py_err)?;
    Ok(edbench_core::repair_balance(&d, &sys.inner)
        .map_err(to_py_err)?
        .pg)
}

fn parse_strategy(tag: &str) -> PyResult<Strategy> {
    tag.parse().map_err(to_py_err)
}

/// A rendered prompt.
#[pyclass(name = "PromptBundle", frozen)]
struct PyPromptBundle {
    #[pyo3(get)]
    strategy: String,
    #[pyo3(get)]
    target_pd: f64,
    #[pyo3(get)]
    text: String,
    #[pyo3(get)]
    fingerprint: String,
}

/// Render the prompt for one target demand.
///
/// `strategy` is "non-evolutionary" or "evolutionary"; `few_shot_pds`
/// defaults to the five evenly spaced demands.
#[pyfunction]
#[pyo3(signature = (sys, pd, strategy, few_shot_pds = None))]
fn render_prompt(
    sys: &PyPowerSystem,
    pd: f64,
    strategy: &str,
    few_shot_pds: Option<Vec<f64>>,
) -> PyResult<PyPromptBundle> {
    let strategy = parse_strategy(strategy)?;
    let pds = few_shot_pds.unwrap_or_else(prompt::default_few_shot_pds);
    let set = prompt::build_few_shot_set(&sys.inner, &pds).map_err(to_py_err)?;
    let bundle = prompt::render_prompt(&sys.inner, &set, pd, strategy).map_err(to_py_err)?;
    Ok(PyPromptBundle {
        strategy: bundle.strategy.tag().to_string(),
        target_pd: bundle.target_pd,
        text: bundle.text,
        fingerprint: bundle.fingerprint,
    })
}

/// What was salvaged from a model reply.
#[pyclass(name = "ParsedResponse", frozen)]
struct PyParsedResponse {
    #[pyo3(get)]
    dispatch: Option<Vec<f64>>,
    #[pyo3(get)]
    claimed_cost: Option<f64>,
    #[pyo3(get)]
    diagnostics: Vec<String>,
}

#[pymethods]
impl PyParsedResponse {
    #[getter]
    fn parse_ok(&self) -> bool {
        self.dispatch.is_some()
    }
}

/// Extract a dispatch vector and claimed cost from free-form response text.
#[pyfunction]
fn parse_response(text: &str, n_units: usize) -> PyParsedResponse {
    let parsed = prompt::parse_response(text, n_units);
    PyParsedResponse {
        dispatch: parsed.dispatch,
        claimed_cost: parsed.claimed_cost,
        diagnostics: parsed.diagnostics,
    }
}

/// Outcome of a GA run.
#[pyclass(name = "GaResult", frozen)]
struct PyGaResult {
    #[pyo3(get)]
    best: Vec<f64>,
    #[pyo3(get)]
    best_cost: f64,
    #[pyo3(get)]
    history: Vec<f64>,
    #[pyo3(get)]
    evaluations: u64,
}

/// Run the GA baseline for one demand.
///
/// `parents` defaults to the exact solutions of the five default few-shot
/// demands. `prompt_literal` switches to the prompt-literal preset
/// (one pass of 10 candidates from the provided data).
#[pyfunction]
#[pyo3(signature = (sys, pd, parents = None, seed = 42, generations = 200,
                    population = 10, sigma = 0.1, repair = true,
                    prompt_literal = false, single_point_crossover = false))]
#[allow(clippy::too_many_arguments)]
fn run_ga(
    sys: &PyPowerSystem,
    pd: f64,
    parents: Option<Vec<Vec<f64>>>,
    seed: u64,
    generations: usize,
    population: usize,
    sigma: f64,
    repair: bool,
    prompt_literal: bool,
    single_point_crossover: bool,
) -> PyResult<PyGaResult> {
    let parents: Vec<Dispatch> = match parents {
        Some(rows) => rows
            .into_iter()
            .map(|pg| Dispatch::new(pg, pd))
            .collect::<edbench_core::Result<_>>()
            .map_err(to_py_err)?,
        None => prompt::default_few_shot_pds()
            .iter()
            .map(|&p| solver::solve_ed(&sys.inner, p).map(|s| s.dispatch))
            .collect::<edbench_core::Result<_>>()
            .map_err(to_py_err)?,
    };
    let cfg = if prompt_literal {
        GaConfig {
            mutation_sigma: sigma,
            ..GaConfig::prompt_literal(seed)
        }
    } else {
        GaConfig {
            population_target: population,
            generations,
            mutation_sigma: sigma,
            crossover_mode: if single_point_crossover {
                CrossoverMode::SinglePoint
            } else {
                CrossoverMode::UniformPerGene
            },
            seed,
            repair,
            ..GaConfig::default()
        }
    };
    let result = edbench_core::evolve(&sys.inner, pd, &parents, &cfg).map_err(to_py_err)?;
    Ok(PyGaResult {
        best: result.best.pg,
        best_cost: result.best_cost,
        history: result.history,
        evaluations: result.evaluations,
    })
}

#[pymodule]
fn edbench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPowerSystem>()?;
    m.add_class::<PyEdSolution>()?;
    m.add_class::<PyPromptBundle>()?;
    m.add_class::<PyParsedResponse>()?;
    m.add_class::<PyGaResult>()?;
    m.add_function(wrap_pyfunction!(solve_ed, m)?)?;
    m.add_function(wrap_pyfunction!(total_cost, m)?)?;
    m.add_function(wrap_pyfunction!(violations, m)?)?;
    m.add_function(wrap_pyfunction!(repair_balance, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_response, m)?)?;
    m.add_function(wrap_pyfunction!(run_ga, m)?)?;
    m.add("BALANCE_TOL", solver::BALANCE_TOL)?;
    m.add("KKT_TOL", solver::KKT_TOL)?;
    m.add("TEMPLATE_VERSION", prompt::TEMPLATE_VERSION)?;
    Ok(())
}
