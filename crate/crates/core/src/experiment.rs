//! Seeded experiment batteries: target generation, repeated evolutionary
//! runs, on-disk records and summaries.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve, EvolutionResult, GaConfig, Termination};
use crate::fitness::{
    EnvFitnessConfig, GenomeObjective, Objective, PenaltyConfig, TargetFitnessConfig, TargetSpec,
};
use crate::genome::{GenomeBounds, Span};
use crate::morphogenesis::grow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    GraphTarget,
    EnvControl,
}

/// Random target generation from directed G(n, m) graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetGenConfig {
    pub count: usize,
    pub seed: u64,
    /// Minimum average out-degree m / n.
    pub min_out_degree: f64,
    /// Maximum density m / (n (n - 1)).
    pub max_density: f64,
    /// Range for n; inferred, not prescribed.
    pub nodes: Span<usize>,
    pub max_attempts: usize,
}

impl Default for TargetGenConfig {
    fn default() -> Self {
        TargetGenConfig {
            count: 20,
            seed: 54210,
            min_out_degree: 1.5,
            max_density: 0.3,
            nodes: Span::new(8, 31),
            max_attempts: 10_000,
        }
    }
}

/// Sample `count` (nodes, edges, sources) triples from random digraphs
/// satisfying the degree and density limits.
pub fn gen_targets(cfg: &TargetGenConfig) -> Result<Vec<TargetSpec>> {
    if cfg.count == 0 {
        return Err(Error::Config("target count must be at least 1".into()));
    }
    if !(cfg.min_out_degree > 0.0) || !(cfg.max_density > 0.0 && cfg.max_density <= 1.0) {
        return Err(Error::Config(
            "min_out_degree must be positive and max_density in (0, 1]".into(),
        ));
    }
    if cfg.nodes.min < 2 || cfg.nodes.min > cfg.nodes.max {
        return Err(Error::Config("target node range must satisfy 2 <= min <= max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut targets = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let mut attempts = 0;
        let (n, m) = loop {
            attempts += 1;
            if attempts > cfg.max_attempts {
                return Err(Error::Config(format!(
                    "no (n, m) satisfies the target constraints after {} attempts",
                    cfg.max_attempts
                )));
            }
            let n = rng.random_range(cfg.nodes.min..=cfg.nodes.max);
            let pairs = n * (n - 1);
            let lo = (cfg.min_out_degree * n as f64).ceil() as usize;
            let hi = ((cfg.max_density * pairs as f64).floor() as usize).min(pairs);
            if lo <= hi {
                break (n, rng.random_range(lo..=hi));
            }
        };
        let mut has_input = vec![false; n];
        for k in sample(&mut rng, n * (n - 1), m) {
            // index k enumerates ordered pairs (s, t) with s != t
            let (s, mut t) = (k / (n - 1), k % (n - 1));
            if t >= s {
                t += 1;
            }
            has_input[t] = true;
        }
        let sources = has_input.iter().filter(|h| !**h).count();
        targets.push(TargetSpec::new(n, m, sources));
    }
    Ok(targets)
}

/// `count` run seeds: successive outputs of a ChaCha stream seeded with
/// `seed`.
pub fn run_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub bounds: GenomeBounds,
    pub ga: GaConfig,
    /// Independent runs per target (or in total for control experiments).
    pub runs: usize,
    pub seed_runs: u64,
    /// Explicit targets; generated from `target_generation` when absent.
    pub targets: Option<Vec<TargetSpec>>,
    pub target_generation: TargetGenConfig,
    pub target_fitness: TargetFitnessConfig,
    /// Control objective; `seed` is replaced by each run's seed.
    pub env: EnvFitnessConfig,
    /// Worker threads; all cores when unset.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: Family::GraphTarget,
            bounds: GenomeBounds::default(),
            ga: GaConfig::default(),
            runs: 20,
            seed_runs: 65420,
            targets: None,
            target_generation: TargetGenConfig::default(),
            target_fitness: TargetFitnessConfig::default(),
            env: EnvFitnessConfig::default(),
            threads: None,
        }
    }
}

impl ExperimentConfig {
    /// Pole-balancing controller search on a 10x10 field.
    pub fn control() -> Self {
        ExperimentConfig {
            family: Family::EnvControl,
            bounds: GenomeBounds::with_field(10, 10),
            ga: GaConfig::control(),
            runs: 100,
            ..Default::default()
        }
    }

    /// [`ExperimentConfig::control`] with the connection-count penalty.
    pub fn control_min() -> Self {
        let mut cfg = Self::control();
        cfg.env.penalty = Some(PenaltyConfig::default());
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialisation cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.bounds.validate()?;
        self.ga.validate()?;
        match self.family {
            Family::GraphTarget => {
                self.target_fitness.validate()?;
                if let Some(targets) = &self.targets {
                    if targets.is_empty() {
                        return Err(Error::Config("target list is empty".into()));
                    }
                    for t in targets {
                        t.validate()?;
                    }
                }
            }
            Family::EnvControl => self.env.validate()?,
        }
        Ok(())
    }

    /// The targets this experiment runs against.
    pub fn resolve_targets(&self) -> Result<Vec<TargetSpec>> {
        match &self.targets {
            Some(t) => Ok(t.clone()),
            None => gen_targets(&self.target_generation),
        }
    }

    /// Objective for one run.
    pub fn objective(&self, target: Option<TargetSpec>, run_seed: u64) -> GenomeObjective {
        match (self.family, target) {
            (Family::GraphTarget, Some(target)) => GenomeObjective::Target {
                target,
                config: self.target_fitness,
            },
            _ => GenomeObjective::Env(EnvFitnessConfig {
                seed: run_seed,
                ..self.env
            }),
        }
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
    }
}

/// Outcome of one evolutionary run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub target_id: Option<usize>,
    pub run: usize,
    pub seed: u64,
    pub best_fitness: f64,
    pub success: bool,
    pub generations: usize,
    pub termination: Termination,
    pub best_genome: String,
    pub nodes: usize,
    pub edges: usize,
    pub sources: usize,
    pub weakly_connected: bool,
    pub diameter: usize,
    pub mean_reward: Option<f64>,
}

/// Aggregate over the runs of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub target_id: Option<usize>,
    #[serde(rename = "N")]
    pub nodes: Option<usize>,
    #[serde(rename = "E")]
    pub edges: Option<usize>,
    #[serde(rename = "S")]
    pub sources: Option<usize>,
    pub success_rate: f64,
    pub mean_best: f64,
    pub std_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryReport {
    pub targets: Vec<TargetSpec>,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

struct Job {
    index: usize,
    target_id: Option<usize>,
    target: Option<TargetSpec>,
    run: usize,
    seed: u64,
}

/// Run every (target, run) pair and write the run directory.
///
/// Each run's files are written as soon as it finishes, so an I/O failure
/// later on leaves completed runs on disk.
pub fn run_battery(cfg: &ExperimentConfig, out: &Path) -> Result<BatteryReport> {
    cfg.validate()?;
    let targets = match cfg.family {
        Family::GraphTarget => cfg.resolve_targets()?,
        Family::EnvControl => Vec::new(),
    };
    let seeds = run_seeds(cfg.seed_runs, cfg.runs);
    fs::create_dir_all(out.join("runs"))?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    if cfg.family == Family::GraphTarget {
        fs::write(
            out.join("targets.json"),
            serde_json::to_string_pretty(&targets)?,
        )?;
    }

    let jobs: Vec<Job> = match cfg.family {
        Family::GraphTarget => targets
            .iter()
            .enumerate()
            .flat_map(|(t, target)| {
                seeds.iter().enumerate().map(move |(r, &seed)| Job {
                    index: t * cfg.runs + r,
                    target_id: Some(t),
                    target: Some(*target),
                    run: r,
                    seed,
                })
            })
            .collect(),
        Family::EnvControl => seeds
            .iter()
            .enumerate()
            .map(|(r, &seed)| Job {
                index: r,
                target_id: None,
                target: None,
                run: r,
                seed,
            })
            .collect(),
    };

    let pool = cfg.thread_pool()?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|job| execute_job(cfg, job, out))
            .collect::<Result<Vec<_>>>()
    })?;
    write_records(&out.join("records.csv"), &records)?;
    let summary = summarize(&records, &targets);
    write_summary(&out.join("summary.csv"), &summary)?;
    Ok(BatteryReport {
        targets,
        records,
        summary,
    })
}

fn execute_job(cfg: &ExperimentConfig, job: &Job, out: &Path) -> Result<RunRecord> {
    let objective = cfg.objective(job.target, job.seed);
    let result = evolve(&cfg.ga, &cfg.bounds, &objective, job.seed)?;
    let threshold = cfg
        .ga
        .success_threshold
        .unwrap_or_else(|| objective.success_threshold());
    let rel = format!("runs/{}", job.index);
    let dir = out.join(&rel);
    fs::create_dir_all(&dir)?;
    write_stats(&dir.join("stats.csv"), &result)?;
    fs::write(dir.join("best_genome.json"), result.best_genome.to_json())?;
    fs::write(
        dir.join("best_graph.json"),
        grow(&result.best_genome).to_edge_json(),
    )?;
    let record = make_record(job, &result, threshold, format!("{rel}/best_genome.json"));
    fs::write(dir.join("record.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

fn make_record(job: &Job, r: &EvolutionResult, threshold: f64, path: String) -> RunRecord {
    let m = r.best.metrics;
    RunRecord {
        index: job.index,
        target_id: job.target_id,
        run: job.run,
        seed: job.seed,
        best_fitness: r.best.fitness,
        success: r.best.fitness >= threshold,
        generations: r.generations,
        termination: r.termination,
        best_genome: path,
        nodes: m.n_nodes,
        edges: m.n_edges,
        sources: m.n_sources,
        weakly_connected: m.weakly_connected,
        diameter: m.diameter,
        mean_reward: r.best.mean_reward,
    }
}

fn write_stats(path: &Path, r: &EvolutionResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in &r.stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Success rate and best-fitness mean and (population) standard deviation
/// per target, in target order.
pub fn summarize(records: &[RunRecord], targets: &[TargetSpec]) -> Vec<SummaryRow> {
    let mut ids: Vec<Option<usize>> = records.iter().map(|r| r.target_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let best: Vec<f64> = records
                .iter()
                .filter(|r| r.target_id == id)
                .map(|r| r.best_fitness)
                .collect();
            let successes = records
                .iter()
                .filter(|r| r.target_id == id && r.success)
                .count();
            let n = best.len() as f64;
            let mean = best.iter().sum::<f64>() / n;
            let var = best.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n;
            let target = id.and_then(|t| targets.get(t));
            SummaryRow {
                target_id: id,
                nodes: target.map(|t| t.nodes),
                edges: target.map(|t| t.edges),
                sources: target.map(|t| t.sources),
                success_rate: successes as f64 / n,
                mean_best: mean,
                std_best: var.sqrt(),
            }
        })
        .collect()
}

/// Recompute `summary.csv` of a finished run directory from its records.
pub fn report(run_dir: &Path) -> Result<Vec<SummaryRow>> {
    let records = read_records(&run_dir.join("records.csv"))?;
    let targets_path = run_dir.join("targets.json");
    let targets: Vec<TargetSpec> = if targets_path.exists() {
        serde_json::from_str(&fs::read_to_string(&targets_path)?)?
    } else {
        Vec::new()
    };
    let summary = summarize(&records, &targets);
    write_summary(&run_dir.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// Default output directory name for a family.
pub fn default_out_dir(family: Family) -> PathBuf {
    PathBuf::from(match family {
        Family::GraphTarget => "runs-target",
        Family::EnvControl => "runs-env",
    })
}
