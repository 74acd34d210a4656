//! Genetic operators over fixed-size sets of distinct question indices.
//!
//! Every operator keeps the invariant that an individual holds exactly K
//! distinct indices in `0..pool_size`. Random draws happen in a fixed order
//! (documented per operator) so runs are reproducible from the seed alone.

use rand::seq::index;
use rand::Rng as _;

use crate::criteria::FitnessReport;
use crate::model::Rng;

/// A uniformly random K-subset, in sampling order.
pub fn random_individual(pool_size: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    index::sample(rng, pool_size, k).into_vec()
}

/// Number of individuals per tournament for a population of `population`.
pub fn tournament_size(population: usize, fraction: f64) -> usize {
    ((fraction * population as f64).round() as usize).clamp(1, population.max(1))
}

/// Tournament selection: `population.len()` tournaments, each over a sample
/// (without replacement) of `tournament_size` members. The winner is the
/// highest fitness, ties going to the lower population index.
///
/// Draws: one `index::sample` call per tournament.
pub fn select(
    population: &[Vec<usize>],
    fitness: &[FitnessReport],
    tournament_fraction: f64,
    rng: &mut Rng,
) -> (Vec<Vec<usize>>, Vec<FitnessReport>) {
    let p = population.len();
    let size = tournament_size(p, tournament_fraction);
    let mut next = Vec::with_capacity(p);
    let mut next_fitness = Vec::with_capacity(p);
    for _ in 0..p {
        let winner = index::sample(rng, p, size)
            .into_iter()
            .reduce(|best, i| {
                let (fi, fb) = (fitness[i].fitness, fitness[best].fitness);
                if fi > fb || (fi == fb && i < best) {
                    i
                } else {
                    best
                }
            })
            .expect("tournament is never empty");
        next.push(population[winner].clone());
        next_fitness.push(fitness[winner]);
    }
    (next, next_fitness)
}

fn draw_absent(present: &[bool], rng: &mut Rng) -> Option<usize> {
    let candidates: Vec<usize> = present
        .iter()
        .enumerate()
        .filter_map(|(q, &p)| (!p).then_some(q))
        .collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

/// Replaces genes in `genes[cut..]` that duplicate the inherited prefix with
/// uniformly random questions absent from the offspring, left to right.
fn repair(genes: &mut [usize], cut: usize, pool_size: usize, rng: &mut Rng) {
    let mut in_prefix = vec![false; pool_size];
    let mut present = vec![false; pool_size];
    for &g in &genes[..cut] {
        in_prefix[g] = true;
    }
    for &g in genes.iter() {
        present[g] = true;
    }
    for i in cut..genes.len() {
        if in_prefix[genes[i]] {
            let fresh = draw_absent(&present, rng)
                .expect("a duplicated offspring always misses at least one question");
            present[fresh] = true;
            genes[i] = fresh;
        }
    }
}

/// One-point crossover with duplicate repair. Returns whether the tails were
/// swapped.
///
/// Draws: nothing when K < 2; otherwise one Bernoulli(`p_c`) draw, then on a
/// swap the cut point in `1..K`, then repair draws for the first offspring,
/// then for the second.
pub fn crossover(
    a: &mut [usize],
    b: &mut [usize],
    p_c: f64,
    pool_size: usize,
    rng: &mut Rng,
) -> bool {
    let k = a.len();
    debug_assert_eq!(k, b.len());
    if k < 2 || !rng.gen_bool(p_c) {
        return false;
    }
    let cut = rng.gen_range(1..k);
    a[cut..].swap_with_slice(&mut b[cut..]);
    repair(a, cut, pool_size, rng);
    repair(b, cut, pool_size, rng);
    true
}

/// Gene-replacement mutation. Returns whether any gene changed.
///
/// Draws: one Bernoulli(`p_m1`) draw; if the individual is selected, per gene
/// in order one Bernoulli(`p_m2`) draw followed, on success, by a uniform pick
/// among the questions not currently in the individual. When no such question
/// exists the gene is left as is and no pick is drawn.
pub fn mutate(genes: &mut [usize], p_m1: f64, p_m2: f64, pool_size: usize, rng: &mut Rng) -> bool {
    if !rng.gen_bool(p_m1) {
        return false;
    }
    let mut present = vec![false; pool_size];
    for &g in genes.iter() {
        present[g] = true;
    }
    let mut changed = false;
    for gene in genes.iter_mut() {
        if !rng.gen_bool(p_m2) {
            continue;
        }
        if let Some(fresh) = draw_absent(&present, rng) {
            present[*gene] = false;
            present[fresh] = true;
            *gene = fresh;
            changed = true;
        }
    }
    changed
}

/// Exactly K distinct in-range genes.
pub fn is_valid_individual(genes: &[usize], k: usize, pool_size: usize) -> bool {
    let mut seen = vec![false; pool_size];
    genes.len() == k
        && genes
            .iter()
            .all(|&g| g < pool_size && !std::mem::replace(&mut seen[g], true))
}
