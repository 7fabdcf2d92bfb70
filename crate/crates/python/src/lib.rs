use std::path::PathBuf;

use ::devograph as core;
use core::env::{CartPole as CoreCartPole, EnvKind, Environment};
use core::evolution::{evolve, GaConfig};
use core::experiment::{gen_targets as core_gen_targets, run_battery, ExperimentConfig};
use core::fitness::{
    EnvFitnessConfig, Evaluation, GenomeObjective, Objective, PenaltyConfig, TargetFitnessConfig,
    TargetSpec,
};
use core::genome::random_genome;
use core::graph::ExportFormat;
use core::rnn::{Controller, RnnConfig};
use core::{grow_traced, GenomeBounds, GraphMetrics};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(err: core::Error) -> PyErr {
    if err.is_config() {
        PyValueError::new_err(err.to_string())
    } else {
        PyRuntimeError::new_err(err.to_string())
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &GraphMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("nodes", m.n_nodes)?;
    d.set_item("edges", m.n_edges)?;
    d.set_item("sources", m.n_sources)?;
    d.set_item("weakly_connected", m.weakly_connected)?;
    d.set_item("diameter", m.diameter)?;
    Ok(d)
}

fn evaluation_dict<'py>(py: Python<'py>, e: &Evaluation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("fitness", e.fitness)?;
    d.set_item("metrics", metrics_dict(py, &e.metrics)?)?;
    d.set_item("mean_reward", e.mean_reward)?;
    Ok(d)
}

/// Developmental genome.
#[pyclass(name = "Genome", module = "devograph", frozen)]
struct PyGenome {
    inner: core::Genome,
}

#[pymethods]
impl PyGenome {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        core::Genome::from_json(text)
            .map(|inner| PyGenome { inner })
            .map_err(to_py)
    }

    /// Random genome from the default initialisation bounds.
    #[staticmethod]
    #[pyo3(signature = (seed, field_width=None, field_height=None))]
    fn random(seed: u64, field_width: Option<usize>, field_height: Option<usize>) -> PyResult<Self> {
        let mut bounds = GenomeBounds::default();
        if let (Some(w), Some(h)) = (field_width, field_height) {
            bounds = GenomeBounds::with_field(w, h);
        } else if field_width.is_some() || field_height.is_some() {
            return Err(PyValueError::new_err("give both field_width and field_height"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_genome(&bounds, &mut rng)
            .map(|inner| PyGenome { inner })
            .map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn field_width(&self) -> usize {
        self.inner.field_width
    }

    #[getter]
    fn field_height(&self) -> usize {
        self.inner.field_height
    }

    #[getter]
    fn morphogen_count(&self) -> usize {
        self.inner.morphogen_count()
    }

    #[getter]
    fn growth_iterations(&self) -> u32 {
        self.inner.growth_iterations
    }

    /// Run development and return the grown graph.
    fn grow(&self, py: Python<'_>) -> PyGraph {
        let genome = self.inner.clone();
        let graph = py.detach(move || core::grow(&genome));
        PyGraph { inner: graph }
    }

    /// Grow and return the graph plus text dumps of the field at `steps`.
    fn grow_traced(&self, steps: Vec<u32>) -> (PyGraph, Vec<String>) {
        let (graph, snaps) = grow_traced(&self.inner, &steps);
        (
            PyGraph { inner: graph },
            snaps.iter().map(|s| s.dump_string()).collect(),
        )
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Genome(field={}x{}, morphogens={}, iterations={})",
            self.inner.field_width,
            self.inner.field_height,
            self.inner.morphogen_count(),
            self.inner.growth_iterations
        )
    }
}

/// Directed weighted graph grown from a genome.
#[pyclass(name = "Graph", module = "devograph", frozen)]
struct PyGraph {
    inner: core::GrownGraph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_edge_json(text: &str) -> PyResult<Self> {
        core::GrownGraph::from_edge_json(text)
            .map(|inner| PyGraph { inner })
            .map_err(to_py)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    /// `(source, target, weight)` triples in insertion order.
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner
            .edges()
            .iter()
            .map(|e| (e.source, e.target, e.weight))
            .collect()
    }

    /// `(x, y)` grid position of every node.
    fn positions(&self) -> Vec<(usize, usize)> {
        self.inner.positions().iter().map(|p| (p.x, p.y)).collect()
    }

    fn in_degrees(&self) -> Vec<usize> {
        self.inner.in_degrees()
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        metrics_dict(py, &self.inner.metrics())
    }

    fn to_edge_json(&self) -> String {
        self.inner.to_edge_json()
    }

    fn to_dot(&self) -> String {
        self.inner.export(ExportFormat::Dot)
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={})",
            self.inner.node_count(),
            self.inner.edge_count()
        )
    }
}

/// Pole-balancing environment with seeded resets.
#[pyclass(name = "CartPole", module = "devograph")]
struct PyCartPole {
    inner: CoreCartPole,
}

#[pymethods]
impl PyCartPole {
    #[new]
    fn new() -> Self {
        PyCartPole {
            inner: CoreCartPole::new(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed)
    }

    /// Apply an action; returns `(observation, reward, terminated, truncated)`.
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, bool, bool)> {
        let out = self.inner.step(action).map_err(to_py)?;
        Ok((
            self.inner.observation(),
            out.reward,
            out.terminated,
            out.truncated,
        ))
    }

    #[getter]
    fn observation(&self) -> Vec<f64> {
        self.inner.observation()
    }
}

/// Recurrent controller built from a grown graph.
#[pyclass(name = "Controller", module = "devograph", frozen)]
struct PyController {
    inner: Controller,
}

#[pymethods]
impl PyController {
    #[new]
    #[pyo3(signature = (graph, inputs=4, outputs=2, mode="accumulation", extra_steps=0))]
    fn new(
        graph: &PyGraph,
        inputs: usize,
        outputs: usize,
        mode: &str,
        extra_steps: usize,
    ) -> PyResult<Self> {
        let cfg = RnnConfig {
            mode: mode.parse().map_err(to_py)?,
            extra_steps,
            ..RnnConfig::default()
        };
        Controller::new(&graph.inner, inputs, outputs, &cfg)
            .map(|inner| PyController { inner })
            .map_err(to_py)
    }

    /// Output activations for one observation.
    fn act(&self, observation: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.act(&observation).map_err(to_py)
    }

    #[getter]
    fn inputs(&self) -> Vec<usize> {
        self.inner.io().inputs.clone()
    }

    #[getter]
    fn outputs(&self) -> Vec<usize> {
        self.inner.io().outputs.clone()
    }
}

fn target_objective(nodes: usize, edges: usize, sources: usize) -> PyResult<GenomeObjective> {
    let target = TargetSpec::new(nodes, edges, sources);
    target.validate().map_err(to_py)?;
    Ok(GenomeObjective::Target {
        target,
        config: TargetFitnessConfig::default(),
    })
}

fn env_objective(seed: u64, penalty: bool) -> GenomeObjective {
    GenomeObjective::Env(EnvFitnessConfig {
        env: EnvKind::Cartpole,
        seed,
        penalty: penalty.then(PenaltyConfig::default),
        ..EnvFitnessConfig::default()
    })
}

/// Fitness of a genome against a (nodes, edges, sources) target.
#[pyfunction]
fn evaluate_target<'py>(
    py: Python<'py>,
    genome: &PyGenome,
    nodes: usize,
    edges: usize,
    sources: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let objective = target_objective(nodes, edges, sources)?;
    evaluation_dict(py, &objective.evaluate(&genome.inner))
}

/// Fitness of a genome as a cart-pole controller.
#[pyfunction]
#[pyo3(signature = (genome, seed=0, penalty=false))]
fn evaluate_cartpole<'py>(
    py: Python<'py>,
    genome: &PyGenome,
    seed: u64,
    penalty: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let objective = env_objective(seed, penalty);
    let genome = genome.inner.clone();
    let e = py.detach(move || objective.evaluate(&genome));
    evaluation_dict(py, &e)
}

/// Random (nodes, edges, sources) targets.
#[pyfunction]
#[pyo3(signature = (count=20, seed=54210))]
fn gen_targets(count: usize, seed: u64) -> PyResult<Vec<(usize, usize, usize)>> {
    let mut cfg = ExperimentConfig::default().target_generation;
    cfg.count = count;
    cfg.seed = seed;
    let targets = core_gen_targets(&cfg).map_err(to_py)?;
    Ok(targets
        .iter()
        .map(|t| (t.nodes, t.edges, t.sources))
        .collect())
}

fn run_ga<'py>(
    py: Python<'py>,
    ga: GaConfig,
    bounds: GenomeBounds,
    objective: GenomeObjective,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let result = py
        .detach(move || evolve(&ga, &bounds, &objective, seed))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item(
        "best_genome",
        PyGenome {
            inner: result.best_genome.clone(),
        },
    )?;
    d.set_item("best", evaluation_dict(py, &result.best)?)?;
    d.set_item("generations", result.generations)?;
    d.set_item("termination", result.termination.as_str())?;
    d.set_item(
        "best_per_generation",
        result.stats.iter().map(|s| s.best).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Evolve a genome towards a graph target.
#[pyfunction]
#[pyo3(signature = (nodes, edges, sources, seed, max_generations=None))]
fn evolve_target<'py>(
    py: Python<'py>,
    nodes: usize,
    edges: usize,
    sources: usize,
    seed: u64,
    max_generations: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::default();
    let mut ga = cfg.ga;
    if let Some(g) = max_generations {
        ga.max_generations = g;
    }
    let objective = target_objective(nodes, edges, sources)?;
    run_ga(py, ga, cfg.bounds, objective, seed)
}

/// Evolve a cart-pole controller.
#[pyfunction]
#[pyo3(signature = (seed, penalty=false, max_generations=None))]
fn evolve_cartpole<'py>(
    py: Python<'py>,
    seed: u64,
    penalty: bool,
    max_generations: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::control();
    let mut ga = cfg.ga;
    if let Some(g) = max_generations {
        ga.max_generations = g;
    }
    run_ga(py, ga, cfg.bounds, env_objective(seed, penalty), seed)
}

/// Run a full battery from a JSON experiment config; returns records.csv's path.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str, out_dir: PathBuf) -> PyResult<PathBuf> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let out = out_dir.clone();
    py.detach(move || run_battery(&cfg, &out)).map_err(to_py)?;
    Ok(out_dir.join("records.csv"))
}

#[pymodule]
fn devograph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGenome>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyCartPole>()?;
    m.add_class::<PyController>()?;
    m.add_function(wrap_pyfunction!(evaluate_target, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_cartpole, m)?)?;
    m.add_function(wrap_pyfunction!(gen_targets, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_target, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_cartpole, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
