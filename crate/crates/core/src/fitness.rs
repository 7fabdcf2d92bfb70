//! Fitness functions and the cached genome evaluator.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{rollout, EnvKind};
use crate::error::{Error, Result};
use crate::genome::Genome;
use crate::graph::GraphMetrics;
use crate::morphogenesis::grow;
use crate::rnn::{Controller, RnnConfig};

/// Desired node, edge and source counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetSpec {
    pub nodes: usize,
    pub edges: usize,
    pub sources: usize,
}

impl TargetSpec {
    pub fn new(nodes: usize, edges: usize, sources: usize) -> Self {
        TargetSpec {
            nodes,
            edges,
            sources,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources > self.nodes {
            return Err(Error::Config(format!(
                "target has {} sources but only {} nodes",
                self.sources, self.nodes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetFitnessConfig {
    pub node_weight: f64,
    pub edge_weight: f64,
    pub source_weight: f64,
    pub node_tolerance: f64,
    pub edge_tolerance: f64,
    pub source_tolerance: f64,
    /// Multiplier applied when the graph is not weakly connected.
    pub disconnected_factor: f64,
}

impl Default for TargetFitnessConfig {
    fn default() -> Self {
        TargetFitnessConfig {
            node_weight: 1.0,
            edge_weight: 1.0,
            source_weight: 1.0,
            node_tolerance: 1.0,
            edge_tolerance: 2.0,
            source_tolerance: 1.0,
            disconnected_factor: 0.5,
        }
    }
}

impl TargetFitnessConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.node_weight, self.edge_weight, self.source_weight];
        let tolerances = [self.node_tolerance, self.edge_tolerance, self.source_tolerance];
        if weights.iter().chain(&tolerances).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "target fitness weights and tolerances must be positive".into(),
            ));
        }
        if !(self.disconnected_factor > 0.0 && self.disconnected_factor <= 1.0) {
            return Err(Error::Config(format!(
                "disconnected_factor {} outside (0, 1]",
                self.disconnected_factor
            )));
        }
        Ok(())
    }
}

/// Product of exponential penalties on each count deviation, times the
/// connectivity factor.
pub fn target_fitness(m: &GraphMetrics, t: &TargetSpec, c: &TargetFitnessConfig) -> f64 {
    let term = |actual: usize, wanted: usize, weight: f64, tol: f64| {
        (-weight * actual.abs_diff(wanted) as f64 / tol).exp()
    };
    let connectivity = if m.weakly_connected {
        1.0
    } else {
        c.disconnected_factor
    };
    term(m.n_nodes, t.nodes, c.node_weight, c.node_tolerance)
        * term(m.n_edges, t.edges, c.edge_weight, c.edge_tolerance)
        * term(m.n_sources, t.sources, c.source_weight, c.source_tolerance)
        * connectivity
}

/// Soft penalty on the number of connections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Asymptotic factor for very large networks.
    pub floor: f64,
    /// Connections allowed without penalty.
    pub free_connections: u32,
    /// Connection count at which the factor is halfway between 1 and `floor`.
    pub half_decay_connections: u32,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            floor: 0.8,
            free_connections: 50,
            half_decay_connections: 1000,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(Error::Config(format!("penalty floor {} outside (0, 1)", self.floor)));
        }
        if self.half_decay_connections <= self.free_connections {
            return Err(Error::Config(
                "half_decay_connections must exceed free_connections".into(),
            ));
        }
        Ok(())
    }

    pub fn decay_rate(&self) -> f64 {
        std::f64::consts::LN_2 / (self.half_decay_connections - self.free_connections) as f64
    }
}

pub fn connection_penalty(connections: usize, p: &PenaltyConfig) -> f64 {
    let excess = connections.saturating_sub(p.free_connections as usize) as f64;
    p.floor + (1.0 - p.floor) * (-p.decay_rate() * excess).exp()
}

/// Logistic squashing of a mean return around the passing score.
pub fn sigmoid_fitness(mean_reward: f64, passing_score: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-slope * (mean_reward - passing_score)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvFitnessConfig {
    pub env: EnvKind,
    pub passing_score: f64,
    pub slope: f64,
    pub episodes: usize,
    /// Seed from which the episode seeds are derived.
    pub seed: u64,
    pub rnn: RnnConfig,
    pub penalty: Option<PenaltyConfig>,
}

impl Default for EnvFitnessConfig {
    fn default() -> Self {
        EnvFitnessConfig {
            env: EnvKind::Cartpole,
            passing_score: 475.0,
            slope: 0.05,
            episodes: 5,
            seed: 0,
            rnn: RnnConfig::default(),
            penalty: None,
        }
    }
}

impl EnvFitnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(Error::Config(format!("slope {} must be positive", self.slope)));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if let Some(p) = &self.penalty {
            p.validate()?;
        }
        Ok(())
    }

    /// Fitness of a controller that earns the maximum return with no
    /// connection penalty.
    pub fn ideal_fitness(&self) -> f64 {
        sigmoid_fitness(self.env.max_return(), self.passing_score, self.slope)
    }
}

/// Fitness for a mean return, with the connection penalty if configured.
pub fn env_fitness(mean_reward: f64, cfg: &EnvFitnessConfig, connections: usize) -> f64 {
    let base = sigmoid_fitness(mean_reward, cfg.passing_score, cfg.slope);
    match &cfg.penalty {
        Some(p) => base * connection_penalty(connections, p),
        None => base,
    }
}

/// Result of evaluating one genome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub metrics: GraphMetrics,
    /// Mean episode return for control objectives.
    pub mean_reward: Option<f64>,
}

/// Anything the search can maximise.
pub trait Objective: Sync {
    fn evaluate(&self, genome: &Genome) -> Evaluation;

    /// Fitness at which a run counts as solved and stops.
    fn success_threshold(&self) -> f64;
}

/// The two built-in objective families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenomeObjective {
    Target {
        target: TargetSpec,
        #[serde(default)]
        config: TargetFitnessConfig,
    },
    Env(EnvFitnessConfig),
}

impl GenomeObjective {
    pub fn validate(&self) -> Result<()> {
        match self {
            GenomeObjective::Target { target, config } => {
                target.validate()?;
                config.validate()
            }
            GenomeObjective::Env(cfg) => cfg.validate(),
        }
    }
}

impl Objective for GenomeObjective {
    fn evaluate(&self, genome: &Genome) -> Evaluation {
        let graph = grow(genome);
        let metrics = graph.metrics();
        match self {
            GenomeObjective::Target { target, config } => Evaluation {
                fitness: target_fitness(&metrics, target, config),
                metrics,
                mean_reward: None,
            },
            GenomeObjective::Env(cfg) => {
                let kind = cfg.env;
                let controller =
                    Controller::new(&graph, kind.observation_dim(), kind.action_count(), &cfg.rnn);
                match controller {
                    Ok(controller) => {
                        let reward = rollout(&controller, kind, cfg.episodes, cfg.seed)
                            .expect("controller matches the environment dimensions");
                        Evaluation {
                            fitness: env_fitness(reward, cfg, metrics.n_edges),
                            metrics,
                            mean_reward: Some(reward),
                        }
                    }
                    Err(_) => Evaluation {
                        fitness: 0.0,
                        metrics,
                        mean_reward: None,
                    },
                }
            }
        }
    }

    fn success_threshold(&self) -> f64 {
        match self {
            GenomeObjective::Target { .. } => 1.0,
            GenomeObjective::Env(cfg) => cfg.ideal_fitness(),
        }
    }
}

/// Objective wrapper with a shared, thread-safe fitness cache keyed by the
/// genome's structure.
pub struct Evaluator<'o, O: Objective + ?Sized> {
    objective: &'o O,
    cache: RwLock<HashMap<Genome, Evaluation>>,
    evaluations: AtomicU64,
    hits: AtomicU64,
}

impl<'o, O: Objective + ?Sized> Evaluator<'o, O> {
    pub fn new(objective: &'o O) -> Self {
        Evaluator {
            objective,
            cache: RwLock::new(HashMap::new()),
            evaluations: AtomicU64::new(0),
            hits: AtomicU64::new(0),
        }
    }

    pub fn objective(&self) -> &O {
        self.objective
    }

    pub fn evaluate(&self, genome: &Genome) -> Evaluation {
        if let Some(e) = self.cached(genome) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return e;
        }
        let e = self.objective.evaluate(genome);
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.cache
            .write()
            .expect("cache lock poisoned")
            .insert(genome.clone(), e);
        e
    }

    /// Evaluate many genomes, growing each distinct uncached genome once and
    /// in parallel. Counters do not depend on the thread count.
    pub fn evaluate_batch(&self, genomes: &[Genome]) -> Vec<Evaluation> {
        let mut seen = HashSet::new();
        let pending: Vec<&Genome> = {
            let cache = self.cache.read().expect("cache lock poisoned");
            genomes
                .iter()
                .filter(|g| !cache.contains_key(*g) && seen.insert(*g))
                .collect()
        };
        let fresh: Vec<Evaluation> = pending
            .par_iter()
            .map(|g| self.objective.evaluate(g))
            .collect();
        self.evaluations
            .fetch_add(pending.len() as u64, Ordering::Relaxed);
        self.hits
            .fetch_add((genomes.len() - pending.len()) as u64, Ordering::Relaxed);
        let mut cache = self.cache.write().expect("cache lock poisoned");
        for (g, e) in pending.into_iter().zip(fresh) {
            cache.insert(g.clone(), e);
        }
        genomes.iter().map(|g| cache[g]).collect()
    }

    pub fn cached(&self, genome: &Genome) -> Option<Evaluation> {
        self.cache
            .read()
            .expect("cache lock poisoned")
            .get(genome)
            .copied()
    }

    /// Number of genomes actually grown and scored.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().expect("cache lock poisoned").len()
    }
}
