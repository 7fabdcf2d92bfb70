//! Steady-state genetic algorithm over genomes.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitness::{Evaluation, Evaluator, Objective};
use crate::genome::{crossover, mutate, random_genome, Genome, GenomeBounds, MutationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub tournament_size: usize,
    pub parents_per_generation: usize,
    pub replace_per_generation: usize,
    pub elites: usize,
    pub max_generations: usize,
    pub base_mutation_rate: f64,
    pub min_multiplier: f64,
    pub max_multiplier: f64,
    pub mutation: MutationConfig,
    /// Stop once the best fitness reaches this value; the objective's own
    /// threshold is used when unset.
    pub success_threshold: Option<f64>,
    /// Stop when mean fitness reaches this fraction of the best.
    pub convergence_ratio: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 2000,
            tournament_size: 7,
            parents_per_generation: 300,
            replace_per_generation: 200,
            elites: 10,
            max_generations: 1000,
            base_mutation_rate: 0.4,
            min_multiplier: 1.0,
            max_multiplier: 2.5,
            mutation: MutationConfig::default(),
            success_threshold: None,
            convergence_ratio: 0.95,
        }
    }
}

impl GaConfig {
    /// Settings used for the pole-balancing controller experiments.
    pub fn control() -> Self {
        GaConfig {
            population: 500,
            parents_per_generation: 100,
            replace_per_generation: 50,
            base_mutation_rate: 0.3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.population == 0 {
            return fail("population must be positive".into());
        }
        if self.elites + self.replace_per_generation > self.population {
            return fail(format!(
                "elites ({}) + replaced ({}) exceed population ({})",
                self.elites, self.replace_per_generation, self.population
            ));
        }
        if self.tournament_size == 0 || self.tournament_size > self.population {
            return fail(format!(
                "tournament size {} outside [1, {}]",
                self.tournament_size, self.population
            ));
        }
        if self.replace_per_generation > 0 && self.parents_per_generation < 2 {
            return fail("at least two parents per generation are needed".into());
        }
        if !(0.0..=1.0).contains(&self.base_mutation_rate) {
            return fail(format!(
                "base mutation rate {} outside [0, 1]",
                self.base_mutation_rate
            ));
        }
        if !(self.min_multiplier >= 0.0 && self.min_multiplier <= self.max_multiplier) {
            return fail("mutation multiplier range must satisfy 0 <= min <= max".into());
        }
        if !(self.convergence_ratio > 0.0 && self.convergence_ratio <= 1.0) {
            return fail(format!(
                "convergence ratio {} outside (0, 1]",
                self.convergence_ratio
            ));
        }
        self.mutation.validate()
    }
}

/// Mutation multiplier interpolated by how close the mean fitness is to
/// the best.
pub fn adaptive_multiplier(mean: f64, best: f64, min: f64, max: f64) -> f64 {
    let ratio = if best > 0.0 {
        (mean / best).clamp(0.0, 1.0)
    } else {
        0.0
    };
    min + (max - min) * ratio
}

/// Index of the fittest of `size` uniformly drawn entrants (with
/// replacement); the lowest index wins ties.
pub fn tournament_select<R: Rng + ?Sized>(fitness: &[f64], size: usize, rng: &mut R) -> usize {
    assert!(!fitness.is_empty(), "tournament over an empty population");
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let i = rng.random_range(0..fitness.len());
        if fitness[i] > fitness[best] || (fitness[i] == fitness[best] && i < best) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Threshold,
    Converged,
    Budget,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Threshold => "threshold",
            Termination::Converged => "converged",
            Termination::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub multiplier: f64,
    /// Cumulative genomes grown.
    pub evaluations: u64,
    /// Cumulative cache hits.
    pub cache_hits: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub best_genome: Genome,
    pub best: Evaluation,
    /// Index of the last generation evaluated.
    pub generations: usize,
    pub stats: Vec<GenerationStats>,
    pub termination: Termination,
}

/// Population view handed to observers once per generation, sorted by
/// descending fitness.
pub struct GenerationView<'a> {
    pub generation: usize,
    pub genomes: &'a [Genome],
    pub evaluations: &'a [Evaluation],
}

pub fn evolve<O: Objective + ?Sized>(
    ga: &GaConfig,
    bounds: &GenomeBounds,
    objective: &O,
    seed: u64,
) -> Result<EvolutionResult> {
    evolve_observed(ga, bounds, objective, seed, |_| {})
}

/// [`evolve`] with a callback invoked on every generation's population.
///
/// All random decisions come from one ChaCha stream seeded with `seed` and
/// are taken in a fixed order on the calling thread; only fitness evaluation
/// runs in parallel, so the result does not depend on the thread count.
pub fn evolve_observed<O, F>(
    ga: &GaConfig,
    bounds: &GenomeBounds,
    objective: &O,
    seed: u64,
    mut observer: F,
) -> Result<EvolutionResult>
where
    O: Objective + ?Sized,
    F: FnMut(&GenerationView),
{
    ga.validate()?;
    bounds.validate()?;
    let threshold = ga
        .success_threshold
        .unwrap_or_else(|| objective.success_threshold());
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let evaluator = Evaluator::new(objective);

    let mut genomes = (0..ga.population)
        .map(|_| random_genome(bounds, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut evals = evaluator.evaluate_batch(&genomes);
    let mut stats = Vec::new();
    let mut generation = 0;

    loop {
        sort_descending(&mut genomes, &mut evals);
        let fitness: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
        let best = fitness[0];
        let mean = fitness.iter().sum::<f64>() / fitness.len() as f64;
        let multiplier = adaptive_multiplier(mean, best, ga.min_multiplier, ga.max_multiplier);
        stats.push(GenerationStats {
            generation,
            best,
            mean,
            multiplier,
            evaluations: evaluator.evaluations(),
            cache_hits: evaluator.cache_hits(),
            elapsed_ms: started.elapsed().as_millis() as u64,
        });
        observer(&GenerationView {
            generation,
            genomes: &genomes,
            evaluations: &evals,
        });

        let termination = if best >= threshold {
            Some(Termination::Threshold)
        } else if generation >= 1 && best > 0.0 && mean >= ga.convergence_ratio * best {
            Some(Termination::Converged)
        } else if generation >= ga.max_generations {
            Some(Termination::Budget)
        } else {
            None
        };
        if let Some(termination) = termination {
            return Ok(EvolutionResult {
                best_genome: genomes[0].clone(),
                best: evals[0],
                generations: generation,
                stats,
                termination,
            });
        }

        let pool: Vec<usize> = (0..ga.parents_per_generation)
            .map(|_| tournament_select(&fitness, ga.tournament_size, &mut rng))
            .collect();
        let offspring: Vec<Genome> = (0..ga.replace_per_generation)
            .map(|_| {
                let i = rng.random_range(0..pool.len());
                let mut j = rng.random_range(0..pool.len() - 1);
                if j >= i {
                    j += 1;
                }
                let child = crossover(&genomes[pool[i]], &genomes[pool[j]], bounds, &mut rng);
                mutate(
                    &child,
                    multiplier,
                    ga.base_mutation_rate,
                    &ga.mutation,
                    bounds,
                    &mut rng,
                )
                .genome
            })
            .collect();

        let survivors = ga.population - offspring.len();
        genomes.truncate(survivors);
        evals.truncate(survivors);
        evals.extend(evaluator.evaluate_batch(&offspring));
        genomes.extend(offspring);
        generation += 1;
    }
}

/// Stable sort by descending fitness, keeping the genome and evaluation
/// vectors aligned.
fn sort_descending(genomes: &mut Vec<Genome>, evals: &mut Vec<Evaluation>) {
    let mut order: Vec<usize> = (0..genomes.len()).collect();
    order.sort_by(|&a, &b| evals[b].fitness.total_cmp(&evals[a].fitness));
    let mut g: Vec<Option<Genome>> = std::mem::take(genomes).into_iter().map(Some).collect();
    *genomes = order.iter().map(|&i| g[i].take().expect("index used once")).collect();
    *evals = order.iter().map(|&i| evals[i]).collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphMetrics;

    struct Constant(f64);

    impl Objective for Constant {
        fn evaluate(&self, _: &Genome) -> Evaluation {
            Evaluation {
                fitness: self.0,
                metrics: GraphMetrics {
                    n_nodes: 0,
                    n_edges: 0,
                    n_sources: 0,
                    weakly_connected: false,
                    diameter: 0,
                },
                mean_reward: None,
            }
        }

        fn success_threshold(&self) -> f64 {
            1.0
        }
    }

    fn small() -> GaConfig {
        GaConfig {
            population: 20,
            tournament_size: 3,
            parents_per_generation: 8,
            replace_per_generation: 6,
            elites: 2,
            max_generations: 4,
            ..Default::default()
        }
    }

    #[test]
    fn multiplier_endpoints() {
        assert_eq!(adaptive_multiplier(1.0, 1.0, 1.0, 2.5), 2.5);
        assert_eq!(adaptive_multiplier(0.0, 1.0, 1.0, 2.5), 1.0);
        assert_eq!(adaptive_multiplier(0.0, 0.0, 1.0, 2.5), 1.0);
        assert_eq!(adaptive_multiplier(0.25, 0.5, 1.0, 2.5), 1.75);
    }

    #[test]
    fn tournament_of_one_is_uniform_and_full_cover_finds_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fitness = [0.1, 0.9, 0.3, 0.9];
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            counts[tournament_select(&fitness, 1, &mut rng)] += 1;
        }
        assert!(counts.iter().all(|c| (800..1200).contains(c)), "{counts:?}");
        for _ in 0..100 {
            let w = tournament_select(&fitness, 64, &mut rng);
            assert_eq!(w, 1);
        }
    }

    #[test]
    fn constant_success_stops_at_generation_zero() {
        let r = evolve(&small(), &GenomeBounds::default(), &Constant(1.0), 3).unwrap();
        assert_eq!(r.termination, Termination::Threshold);
        assert_eq!(r.generations, 0);
        assert_eq!(r.stats.len(), 1);
    }

    #[test]
    fn constant_partial_fitness_converges_at_generation_one() {
        let r = evolve(&small(), &GenomeBounds::default(), &Constant(0.5), 3).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert_eq!(r.generations, 1);
        assert_eq!(r.stats.len(), 2);
    }

    #[test]
    fn zero_fitness_runs_to_budget() {
        let r = evolve(&small(), &GenomeBounds::default(), &Constant(0.0), 3).unwrap();
        assert_eq!(r.termination, Termination::Budget);
        assert_eq!(r.generations, 4);
        assert_eq!(r.stats.len(), 5);
    }

    #[test]
    fn invalid_config_is_rejected_up_front() {
        let mut ga = small();
        ga.elites = 15;
        let err = evolve(&ga, &GenomeBounds::default(), &Constant(1.0), 0).unwrap_err();
        assert!(err.is_config());
        let mut ga = small();
        ga.parents_per_generation = 1;
        assert!(ga.validate().is_err());
        let mut ga = small();
        ga.tournament_size = 21;
        assert!(ga.validate().is_err());
    }

    #[test]
    fn control_preset() {
        let ga = GaConfig::control();
        assert_eq!(
            (
                ga.population,
                ga.parents_per_generation,
                ga.replace_per_generation,
                ga.base_mutation_rate
            ),
            (500, 100, 50, 0.3)
        );
        assert_eq!(ga.elites, 10);
        ga.validate().unwrap();
        GaConfig::default().validate().unwrap();
    }
}
