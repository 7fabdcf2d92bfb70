use devograph::evolution::{adaptive_multiplier, evolve_observed, GaConfig};
use devograph::fitness::{
    connection_penalty, GenomeObjective, PenaltyConfig, TargetFitnessConfig, TargetSpec,
};
use devograph::genome::{
    apply_mutation, crossover, mutate, random_genome, MutationConfig, MutationKind, Span,
};
use devograph::graph::{MAX_WEIGHT, MIN_WEIGHT};
use devograph::morphogenesis::{diffuse, Grid};
use devograph::{Development, Genome, GenomeBounds, Kernel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_bounds() -> GenomeBounds {
    GenomeBounds {
        growth_iterations: Span::new(5, 60),
        ..GenomeBounds::with_field(8, 8)
    }
}

fn genome_from_seed(seed: u64) -> Genome {
    random_genome(&small_bounds(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn assert_non_negative(dev: &Development, phase: &str) {
    for (m, grid) in dev.concentrations().iter().enumerate() {
        for &c in grid.data() {
            assert!(
                c >= 0.0 && c.is_finite(),
                "morphogen {m} has concentration {c} after {phase}"
            );
        }
    }
}

fn assert_weights(dev: &Development) {
    for e in dev.graph().edges() {
        assert!(
            (MIN_WEIGHT..=MAX_WEIGHT).contains(&e.weight),
            "edge {}->{} weight {}",
            e.source,
            e.target,
            e.weight
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn concentrations_stay_non_negative_through_every_phase(seed in any::<u64>()) {
        let genome = genome_from_seed(seed);
        let mut dev = Development::new(&genome);
        while !dev.is_finished() {
            dev.step_observed(|phase, d| {
                assert_non_negative(d, &format!("{phase:?}"));
                assert_weights(d);
            });
        }
    }

    #[test]
    fn weights_bounded_after_every_growth_step(seed in any::<u64>()) {
        let genome = genome_from_seed(seed);
        let mut dev = Development::new(&genome);
        while !dev.is_finished() {
            dev.step();
            assert_weights(&dev);
        }
    }

    #[test]
    fn diffusion_preserves_mass_times_kernel_sum(
        values in prop::collection::vec(0.0f64..5.0, 25),
        kernel in prop::collection::vec(0.0f64..1.0, 9),
    ) {
        let grid = Grid::from_vec(5, 5, values).unwrap();
        let kernel = Kernel::new(3, 3, kernel).unwrap();
        let out = diffuse(&grid, &kernel).unwrap();
        let expected = grid.total() * kernel.sum();
        prop_assert!((out.total() - expected).abs() <= 1e-9 * expected.max(1.0));
        prop_assert!(out.data().iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn genome_json_round_trips(seed in any::<u64>()) {
        let genome = genome_from_seed(seed);
        let back = Genome::from_json(&genome.to_json()).unwrap();
        prop_assert_eq!(&back, &genome);
        prop_assert_eq!(back.to_json(), genome.to_json());
    }

    #[test]
    fn variation_operators_keep_genomes_valid(seed in any::<u64>(), multiplier in 1.0f64..2.5) {
        let bounds = small_bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_genome(&bounds, &mut rng).unwrap();
        let b = random_genome(&bounds, &mut rng).unwrap();
        let child = crossover(&a, &b, &bounds, &mut rng);
        prop_assert!(child.validate().is_ok());
        let cfg = MutationConfig::default();
        let mutated = mutate(&child, multiplier, 0.3, &cfg, &bounds, &mut rng);
        prop_assert!(mutated.genome.validate().is_ok());
        for kind in MutationKind::ALL {
            let g = apply_mutation(&child, kind, &cfg, &bounds, &mut rng);
            prop_assert!(g.validate().is_ok(), "{kind:?} produced an invalid genome");
        }
    }

    #[test]
    fn penalty_is_monotone_and_bounded(
        connections in 0usize..20_000,
        extra in 0usize..5_000,
        floor in 0.01f64..0.99,
        free in 0u32..200,
        span in 1u32..5_000,
    ) {
        let p = PenaltyConfig {
            floor,
            free_connections: free,
            half_decay_connections: free + span,
        };
        prop_assert!(p.validate().is_ok());
        let a = connection_penalty(connections, &p);
        let b = connection_penalty(connections + extra, &p);
        prop_assert!(b <= a + 1e-15);
        prop_assert!(a <= 1.0 && b >= floor - 1e-15);
        if connections <= free as usize {
            prop_assert_eq!(a, 1.0);
        }
    }

    #[test]
    fn multiplier_stays_in_range(best in 0.0f64..10.0, ratio in 0.0f64..=1.0) {
        let mu = adaptive_multiplier(best * ratio, best, 1.0, 2.5);
        prop_assert!((1.0..=2.5).contains(&mu));
    }
}

#[test]
fn mutation_kind_frequencies_match_configuration() {
    let probs = MutationConfig::default().type_probs;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 100_000;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        let kind = MutationKind::sample(&probs, &mut rng);
        let slot = MutationKind::ALL.iter().position(|k| *k == kind).unwrap();
        counts[slot] += 1;
    }
    for (count, p) in counts.iter().zip(probs) {
        let freq = *count as f64 / draws as f64;
        assert!((freq - p).abs() <= 0.02, "frequency {freq} vs {p}");
    }
}

#[test]
fn best_fitness_never_decreases_and_elites_survive() {
    let bounds = small_bounds();
    let objective = GenomeObjective::Target {
        target: TargetSpec::new(6, 8, 1),
        config: TargetFitnessConfig::default(),
    };
    let ga = GaConfig {
        population: 40,
        tournament_size: 3,
        parents_per_generation: 10,
        replace_per_generation: 15,
        elites: 4,
        max_generations: 12,
        convergence_ratio: 1.0,
        ..GaConfig::default()
    };
    for seed in [1u64, 2, 3] {
        let mut previous: Option<Vec<(Genome, f64)>> = None;
        let mut best_so_far = f64::NEG_INFINITY;
        let result = evolve_observed(&ga, &bounds, &objective, seed, |view| {
            assert_eq!(view.genomes.len(), ga.population);
            let best = view.evaluations[0].fitness;
            assert!(best >= best_so_far, "best fell from {best_so_far} to {best}");
            best_so_far = best;
            if let Some(elites) = &previous {
                for (genome, fitness) in elites {
                    let found = view
                        .genomes
                        .iter()
                        .zip(view.evaluations)
                        .any(|(g, e)| g == genome && e.fitness == *fitness);
                    assert!(found, "elite lost at generation {}", view.generation);
                }
            }
            previous = Some(
                view.genomes
                    .iter()
                    .zip(view.evaluations)
                    .take(ga.elites)
                    .map(|(g, e)| (g.clone(), e.fitness))
                    .collect(),
            );
        })
        .unwrap();
        assert_eq!(result.stats.len(), result.generations + 1);
        for pair in result.stats.windows(2) {
            assert!(pair[1].best >= pair[0].best);
        }
    }
}
