use serde::{Deserialize, Serialize};

use super::operators::{crossover, mutate, random_individual, select};
use super::{check_k, Algorithm, GenerationStats, SearchResult};
use crate::criteria::{FitnessReport, Objective};
use crate::error::{Error, Result};
use crate::model::{rng_from_seed, Assessment};

/// Genetic algorithm settings. Defaults are the Simulated-5 settings: 1000
/// individuals, 5 generations, `p_c = 0.75`, `p_m1 = 0.5`, `p_m2 = 0.25`,
/// K = 10, tournaments over 10% of the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub k: usize,
    pub population_size: usize,
    pub generations: usize,
    pub p_c: f64,
    pub p_m1: f64,
    pub p_m2: f64,
    pub tournament_fraction: f64,
    pub seed: u64,
    /// Return the best individual ever evaluated instead of the best of the
    /// final population.
    pub track_best_ever: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            k: 10,
            population_size: 1000,
            generations: 5,
            p_c: 0.75,
            p_m1: 0.5,
            p_m2: 0.25,
            tournament_fraction: 0.10,
            seed: 0,
            track_best_ever: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.population_size < 2 {
            return Err(Error::param("population_size", "must be at least 2"));
        }
        if self.generations == 0 {
            return Err(Error::param("generations", "must be at least 1"));
        }
        for (name, p) in [("p_c", self.p_c), ("p_m1", self.p_m1), ("p_m2", self.p_m2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} is not a probability")));
            }
        }
        if !(self.tournament_fraction > 0.0 && self.tournament_fraction <= 1.0) {
            return Err(Error::param("tournament_fraction", "must be in (0, 1]"));
        }
        Ok(())
    }
}

fn stats(generation: usize, fitness: &[FitnessReport]) -> GenerationStats {
    GenerationStats {
        generation,
        best: fitness.iter().map(|f| f.fitness).fold(f64::NEG_INFINITY, f64::max),
        mean: fitness.iter().map(|f| f.fitness).sum::<f64>() / fitness.len() as f64,
    }
}

fn argmax(fitness: &[FitnessReport]) -> usize {
    let mut best = 0;
    for (i, f) in fitness.iter().enumerate().skip(1) {
        if f.fitness > fitness[best].fitness {
            best = i;
        }
    }
    best
}

/// Production, then `generations` rounds of selection, crossover and mutation.
///
/// Random draws come from one ChaCha8 stream seeded with `cfg.seed`, in this
/// order: production (one K-subset per individual), then per generation the
/// selection tournaments, crossover pair by pair (individuals `2i`, `2i + 1`;
/// an odd last individual stays unpaired) and mutation individual by
/// individual. Only individuals changed by crossover or mutation are
/// re-evaluated. History holds the initial population as generation 0.
pub fn ga_search(objective: &Objective, cfg: &GaConfig) -> Result<SearchResult> {
    cfg.validate()?;
    check_k(objective, cfg.k)?;
    let n = objective.n_questions();
    let mut rng = rng_from_seed(cfg.seed);

    let mut population: Vec<Vec<usize>> = (0..cfg.population_size)
        .map(|_| random_individual(n, cfg.k, &mut rng))
        .collect();
    let mut fitness = objective.evaluate_batch(&population);
    let mut evaluations = fitness.len() as u64;
    let mut history = vec![stats(0, &fitness)];

    let mut best_ever = {
        let i = argmax(&fitness);
        (population[i].clone(), fitness[i])
    };

    for generation in 1..=cfg.generations {
        (population, fitness) = select(&population, &fitness, cfg.tournament_fraction, &mut rng);

        let mut dirty = vec![false; population.len()];
        for pair in 0..population.len() / 2 {
            let (head, tail) = population.split_at_mut(2 * pair + 1);
            if crossover(&mut head[2 * pair], &mut tail[0], cfg.p_c, n, &mut rng) {
                dirty[2 * pair] = true;
                dirty[2 * pair + 1] = true;
            }
        }
        for (genes, d) in population.iter_mut().zip(dirty.iter_mut()) {
            if mutate(genes, cfg.p_m1, cfg.p_m2, n, &mut rng) {
                *d = true;
            }
        }

        let changed: Vec<usize> = (0..population.len()).filter(|&i| dirty[i]).collect();
        let batch: Vec<Vec<usize>> = changed.iter().map(|&i| population[i].clone()).collect();
        for (i, r) in changed.into_iter().zip(objective.evaluate_batch(&batch)) {
            fitness[i] = r;
            if r.fitness > best_ever.1.fitness {
                best_ever = (population[i].clone(), r);
            }
        }
        evaluations += batch.len() as u64;
        history.push(stats(generation, &fitness));
    }

    let (genes, report) = if cfg.track_best_ever {
        best_ever
    } else {
        let i = argmax(&fitness);
        (population[i].clone(), fitness[i])
    };
    Ok(SearchResult {
        algorithm: Algorithm::Ga,
        best: Assessment::from_genes_unchecked(genes),
        report,
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::criteria::CriteriaContext;
    use crate::par::Execution;
    use crate::search::brute_force;
    use crate::search::tests::toy_objective;

    #[test]
    fn defaults_are_simulated5_settings() {
        let c = GaConfig::default();
        assert_eq!((c.p_c, c.p_m1, c.p_m2), (0.75, 0.5, 0.25));
        assert_eq!((c.k, c.population_size, c.generations), (10, 1000, 5));
        assert_eq!(c.tournament_fraction, 0.1);
    }

    #[test]
    fn toy_instance_reaches_optimum() {
        let obj = toy_objective();
        let cfg = GaConfig {
            k: 2,
            population_size: 20,
            generations: 10,
            seed: 1,
            ..GaConfig::default()
        };
        let r = ga_search(&obj, &cfg).unwrap();
        assert_eq!(r.best.sorted(), vec![1, 3]);
        assert_abs_diff_eq!(r.report.fitness, 0.0, epsilon = 1e-12);
        assert_eq!(r.history.len(), 11);
    }

    #[test]
    fn full_pool_degenerates() {
        let obj = toy_objective();
        let cfg = GaConfig {
            k: 4,
            population_size: 7,
            generations: 3,
            ..GaConfig::default()
        };
        let r = ga_search(&obj, &cfg).unwrap();
        assert_eq!(r.best.sorted(), vec![0, 1, 2, 3]);
        assert_abs_diff_eq!(r.report.fitness, obj.fitness(&[0, 1, 2, 3]).fitness, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let s = crate::testutil::random_snapshot(30, 40, 2);
        let seq = CriteriaContext::all_learners(&s)
            .unwrap()
            .with_execution(Execution::Sequential)
            .with_lambda(0.25)
            .unwrap();
        let par = CriteriaContext::all_learners(&s)
            .unwrap()
            .with_execution(Execution::Parallel)
            .with_lambda(0.25)
            .unwrap();
        let cfg = GaConfig {
            k: 5,
            population_size: 51,
            generations: 8,
            seed: 99,
            ..GaConfig::default()
        };
        let a = ga_search(&seq, &cfg).unwrap();
        assert_eq!(a, ga_search(&seq, &cfg).unwrap());
        assert_eq!(a, ga_search(&par, &cfg).unwrap());
    }

    #[test]
    fn best_ever_is_monotone_in_generations() {
        let s = crate::testutil::random_snapshot(25, 30, 4);
        let obj = CriteriaContext::all_learners(&s).unwrap().with_lambda(0.3).unwrap();
        let mut last = f64::NEG_INFINITY;
        for generations in 1..8 {
            let cfg = GaConfig {
                k: 4,
                population_size: 30,
                generations,
                seed: 3,
                track_best_ever: true,
                ..GaConfig::default()
            };
            let f = ga_search(&obj, &cfg).unwrap().report.fitness;
            assert!(f >= last);
            last = f;
        }
        assert!(last <= brute_force(&obj, 4).unwrap().report.fitness);
    }

    #[test]
    fn report_matches_best() {
        let s = crate::testutil::random_snapshot(20, 15, 8);
        let obj = CriteriaContext::all_learners(&s).unwrap().with_lambda(0.3).unwrap();
        for track_best_ever in [false, true] {
            let cfg = GaConfig {
                k: 3,
                population_size: 25,
                generations: 4,
                track_best_ever,
                ..GaConfig::default()
            };
            let r = ga_search(&obj, &cfg).unwrap();
            assert_eq!(r.report, obj.fitness(r.best.genes()));
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let obj = toy_objective();
        let bad = [
            GaConfig { population_size: 1, k: 2, ..GaConfig::default() },
            GaConfig { generations: 0, k: 2, ..GaConfig::default() },
            GaConfig { p_c: 1.5, k: 2, ..GaConfig::default() },
            GaConfig { k: 5, ..GaConfig::default() },
        ];
        for cfg in bad {
            assert!(ga_search(&obj, &cfg).is_err());
        }
    }
}
