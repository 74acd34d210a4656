//! Assessment quality criteria.
//!
//! For a question subset `S` and learner set `L`:
//!
//! * `c1` is the RMSE across learners between each learner's mean over the
//!   whole pool and their mean over `S` (lower = more representative),
//! * `c2` is the population standard deviation across learners of their mean
//!   over `S` (higher = more discriminative),
//! * `fitness = -c1 + lambda * c2`, with `lambda` set to the ratio of the
//!   average `c1` to the average `c2` over random subsets, so that a random
//!   subset scores about zero.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rng_from_seed, Snapshot};
use crate::par::{self, Execution};

pub const DEFAULT_LAMBDA_SAMPLES: usize = 10_000;

/// Criteria values for one assessment on one learner set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    #[serde(rename = "rmse", alias = "c1")]
    pub c1: f64,
    #[serde(rename = "std", alias = "c2")]
    pub c2: f64,
    pub fitness: f64,
    pub lambda: f64,
}

impl FitnessReport {
    pub fn new(c1: f64, c2: f64, lambda: f64) -> Self {
        Self {
            c1,
            c2,
            fitness: -c1 + lambda * c2,
            lambda,
        }
    }
}

/// A snapshot restricted to a learner subset, with the per-learner pool means
/// precomputed so every evaluation costs `O(K * |L|)`.
#[derive(Debug, Clone)]
pub struct CriteriaContext {
    learners: Vec<usize>,
    n_questions: usize,
    // rows = questions, columns = `learners` in order
    values: Vec<f64>,
    pool_means: Vec<f64>,
    execution: Execution,
}

impl CriteriaContext {
    pub fn new(snapshot: &Snapshot, learners: Vec<usize>) -> Result<Self> {
        if learners.is_empty() {
            return Err(Error::param("learners", "learner subset is empty"));
        }
        if let Some(&bad) = learners.iter().find(|&&l| l >= snapshot.n_learners()) {
            return Err(Error::param("learners", format!("index {bad} out of range")));
        }
        let n_questions = snapshot.n_questions();
        let mut values = Vec::with_capacity(n_questions * learners.len());
        for q in 0..n_questions {
            let row = snapshot.row(q);
            values.extend(learners.iter().map(|&l| row[l]));
        }
        let mut ctx = Self {
            learners,
            n_questions,
            values,
            pool_means: Vec::new(),
            execution: Execution::default(),
        };
        let all: Vec<usize> = (0..n_questions).collect();
        ctx.pool_means = ctx.subset_means(&all);
        Ok(ctx)
    }

    /// Context over every learner of the snapshot.
    pub fn all_learners(snapshot: &Snapshot) -> Result<Self> {
        Self::new(snapshot, (0..snapshot.n_learners()).collect())
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn execution(&self) -> Execution {
        self.execution
    }

    pub fn n_questions(&self) -> usize {
        self.n_questions
    }

    pub fn learners(&self) -> &[usize] {
        &self.learners
    }

    pub fn pool_means(&self) -> &[f64] {
        &self.pool_means
    }

    fn row(&self, q: usize) -> &[f64] {
        let n = self.learners.len();
        &self.values[q * n..(q + 1) * n]
    }

    /// Mean over `genes` for each learner of the subset.
    ///
    /// Genes are summed in ascending index order, which makes the result
    /// exactly independent of gene order and makes `S = U` reproduce the pool
    /// means bit for bit.
    pub fn subset_means(&self, genes: &[usize]) -> Vec<f64> {
        debug_assert!(!genes.is_empty());
        let mut sorted = genes.to_vec();
        sorted.sort_unstable();
        let mut acc = vec![0.0; self.learners.len()];
        for &q in &sorted {
            for (a, v) in acc.iter_mut().zip(self.row(q)) {
                *a += v;
            }
        }
        let k = sorted.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    /// `(c1, c2)` in a single pass over the subset.
    pub fn criteria(&self, genes: &[usize]) -> (f64, f64) {
        let means = self.subset_means(genes);
        (rmse(&self.pool_means, &means), population_std(&means))
    }

    pub fn c1(&self, genes: &[usize]) -> f64 {
        rmse(&self.pool_means, &self.subset_means(genes))
    }

    pub fn c2(&self, genes: &[usize]) -> f64 {
        population_std(&self.subset_means(genes))
    }

    /// Checks that `genes` is a non-empty list of distinct in-range indices.
    pub fn check_genes(&self, genes: &[usize]) -> Result<()> {
        crate::model::Assessment::new(genes.to_vec(), self.n_questions).map(|_| ())
    }

    /// Average `(c1, c2)` over `n_samples` uniform random `k`-subsets.
    /// Subsets are drawn sequentially from one generator, so the result only
    /// depends on `seed` (not on the execution mode).
    pub fn random_subset_means(&self, k: usize, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
        if k == 0 || k > self.n_questions {
            return Err(Error::KTooLarge {
                k,
                pool: self.n_questions,
            });
        }
        if n_samples == 0 {
            return Err(Error::param("n_samples", "must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        let subsets: Vec<Vec<usize>> = (0..n_samples)
            .map(|_| index::sample(&mut rng, self.n_questions, k).into_vec())
            .collect();
        let values = par::map_slice(self.execution, &subsets, |s| self.criteria(s));
        let (sum1, sum2) = values
            .iter()
            .fold((0.0, 0.0), |(a, b), &(c1, c2)| (a + c1, b + c2));
        Ok((sum1 / n_samples as f64, sum2 / n_samples as f64))
    }

    /// `lambda = mean(c1) / mean(c2)` over random `k`-subsets.
    pub fn calibrate_lambda(&self, k: usize, n_samples: usize, seed: u64) -> Result<f64> {
        let (mean_c1, mean_c2) = self.random_subset_means(k, n_samples, seed)?;
        if !(mean_c2 > 1e-15) {
            return Err(Error::DegenerateLambda);
        }
        Ok(mean_c1 / mean_c2)
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Objective> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("{lambda} is not a finite non-negative number")));
        }
        Ok(Objective { ctx: self, lambda })
    }
}

/// A criteria context with its mixing coefficient fixed: the search objective.
#[derive(Debug, Clone)]
pub struct Objective {
    ctx: CriteriaContext,
    lambda: f64,
}

impl Objective {
    pub fn context(&self) -> &CriteriaContext {
        &self.ctx
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_questions(&self) -> usize {
        self.ctx.n_questions
    }

    pub fn execution(&self) -> Execution {
        self.ctx.execution
    }

    pub fn fitness(&self, genes: &[usize]) -> FitnessReport {
        let (c1, c2) = self.ctx.criteria(genes);
        FitnessReport::new(c1, c2, self.lambda)
    }

    /// Fitness of many individuals, in input order.
    pub fn evaluate_batch(&self, individuals: &[Vec<usize>]) -> Vec<FitnessReport> {
        par::map_slice(self.ctx.execution, individuals, |g| self.fitness(g))
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq / a.len() as f64).sqrt()
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn toy() -> Snapshot {
        Snapshot::from_rows(&[
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.0, 1.0],
            vec![0.9, 0.1],
        ])
        .unwrap()
    }

    #[test]
    fn toy_subset_means() {
        let ctx = CriteriaContext::all_learners(&toy()).unwrap();
        let m = ctx.subset_means(&[1, 3]);
        assert_abs_diff_eq!(m[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(ctx.pool_means()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(ctx.pool_means()[1], 0.4, epsilon = 1e-15);
        assert_eq!(ctx.subset_means(&[0, 1, 2, 3]), ctx.pool_means());
        assert_eq!(ctx.subset_means(&[3, 1, 0, 2]), ctx.pool_means());
    }

    #[test]
    fn toy_criteria() {
        let ctx = CriteriaContext::all_learners(&toy()).unwrap();
        assert_abs_diff_eq!(ctx.c1(&[1, 3]), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(ctx.c2(&[1, 3]), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(ctx.c1(&[0, 3]), 0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(ctx.c2(&[0, 3]), 0.45, epsilon = 1e-12);
        assert_eq!(ctx.c1(&[0, 1, 2, 3]), 0.0);

        let obj = ctx.with_lambda(0.5).unwrap();
        assert_abs_diff_eq!(obj.fitness(&[1, 3]).fitness, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(obj.fitness(&[0, 3]).fitness, -0.125, epsilon = 1e-12);
        let full = obj.fitness(&[0, 1, 2, 3]);
        assert_eq!(full.fitness, 0.5 * full.c2);
    }

    #[test]
    fn constant_subset_means_have_zero_std() {
        let s = Snapshot::from_rows(&[vec![0.3, 0.3, 0.3], vec![0.8, 0.8, 0.8]]).unwrap();
        let ctx = CriteriaContext::all_learners(&s).unwrap();
        assert_eq!(ctx.c2(&[0]), 0.0);
        assert_eq!(ctx.c2(&[0, 1]), 0.0);
    }

    #[test]
    fn lambda_from_constant_sample_statistics() {
        // Two learner archetypes 0.4 apart, offsets +-0.04 with zero mean:
        // every singleton has c1 = 0.04 and c2 = 0.2.
        let d = [0.04, -0.04, 0.04, -0.04];
        let rows: Vec<Vec<f64>> = d.iter().map(|d| vec![0.7 + d, 0.3 + d]).collect();
        let ctx = CriteriaContext::all_learners(&Snapshot::from_rows(&rows).unwrap()).unwrap();
        for q in 0..4 {
            assert_abs_diff_eq!(ctx.c1(&[q]), 0.04, epsilon = 1e-12);
            assert_abs_diff_eq!(ctx.c2(&[q]), 0.2, epsilon = 1e-12);
        }
        let lambda = ctx.calibrate_lambda(1, 500, 3).unwrap();
        assert_abs_diff_eq!(lambda, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn constant_snapshot_has_no_lambda() {
        let s = Snapshot::from_rows(&vec![vec![0.5; 6]; 8]).unwrap();
        let ctx = CriteriaContext::all_learners(&s).unwrap();
        let err = ctx.calibrate_lambda(3, 100, 0).unwrap_err();
        assert_eq!(err.to_string(), "snapshot has no learner discrimination; lambda undefined");
    }

    #[test]
    fn calibration_is_seed_deterministic_and_mode_independent() {
        let s = crate::testutil::random_snapshot(20, 40, 5);
        let seq = CriteriaContext::all_learners(&s).unwrap().with_execution(Execution::Sequential);
        let par = seq.clone().with_execution(Execution::Parallel);
        let a = seq.calibrate_lambda(4, 2000, 9).unwrap();
        assert_eq!(a, par.calibrate_lambda(4, 2000, 9).unwrap());
        assert_ne!(a, seq.calibrate_lambda(4, 2000, 10).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let ctx = CriteriaContext::all_learners(&toy()).unwrap();
        assert!(ctx.calibrate_lambda(5, 10, 0).is_err());
        assert!(ctx.calibrate_lambda(2, 0, 0).is_err());
        assert!(ctx.check_genes(&[1, 1]).is_err());
        assert!(CriteriaContext::new(&toy(), vec![]).is_err());
        assert!(CriteriaContext::new(&toy(), vec![2]).is_err());
        assert!(ctx.with_lambda(-1.0).is_err());
    }

    #[test]
    fn random_subsets_score_near_zero() {
        for seed in 0..3 {
            let s = crate::testutil::random_snapshot(30, 50, seed);
            let ctx = CriteriaContext::all_learners(&s).unwrap();
            let k = 5;
            let lambda = ctx.calibrate_lambda(k, 10_000, seed).unwrap();
            let (_, mean_c2) = ctx.random_subset_means(k, 10_000, seed).unwrap();
            let obj = ctx.with_lambda(lambda).unwrap();
            let mut rng = rng_from_seed(seed + 100);
            let mean_fitness = (0..1000)
                .map(|_| obj.fitness(&index::sample(&mut rng, 30, k).into_vec()).fitness)
                .sum::<f64>()
                / 1000.0;
            let bound = 0.1 * lambda * mean_c2;
            assert!(mean_fitness.abs() < bound, "{mean_fitness} vs {bound}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gene_order_and_learner_relabeling_do_not_matter(
            seed in 0u64..1000,
            rot in 0usize..7,
        ) {
            let s = crate::testutil::random_snapshot(12, 9, seed);
            let ctx = CriteriaContext::all_learners(&s).unwrap().with_lambda(0.3).unwrap();
            let genes = vec![7, 2, 11, 4, 0];
            let mut shuffled = genes.clone();
            shuffled.rotate_left(rot % genes.len());
            shuffled.swap(0, 2);
            prop_assert_eq!(ctx.fitness(&genes), ctx.fitness(&shuffled));

            let mut perm: Vec<usize> = (0..9).collect();
            perm.rotate_left(rot);
            let relabeled = s.select_learners(&perm).unwrap();
            let ctx2 = CriteriaContext::all_learners(&relabeled).unwrap().with_lambda(0.3).unwrap();
            let (a, b) = (ctx.fitness(&genes), ctx2.fitness(&genes));
            prop_assert!((a.c1 - b.c1).abs() < 1e-12);
            prop_assert!((a.c2 - b.c2).abs() < 1e-12);
        }

        #[test]
        fn constant_shift_leaves_criteria_unchanged(
            seed in 0u64..1000,
            shift in -0.2f64..0.2,
        ) {
            let base = crate::testutil::random_snapshot(10, 15, seed);
            let rows: Vec<Vec<f64>> = (0..10)
                .map(|q| base.row(q).iter().map(|v| 0.2 + 0.6 * v).collect())
                .collect();
            let shifted: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().map(|v| v + shift).collect())
                .collect();
            let a = CriteriaContext::all_learners(&Snapshot::from_rows(&rows).unwrap()).unwrap();
            let b = CriteriaContext::all_learners(&Snapshot::from_rows(&shifted).unwrap()).unwrap();
            let genes = [1, 4, 8];
            prop_assert!((a.c1(&genes) - b.c1(&genes)).abs() < 1e-12);
            prop_assert!((a.c2(&genes) - b.c2(&genes)).abs() < 1e-12);
        }

        #[test]
        fn fitness_is_monotone_in_components(
            c1 in 0.0f64..1.0, c2 in 0.0f64..1.0, d in 0.001f64..0.5, lambda in 0.0f64..2.0,
        ) {
            let base = FitnessReport::new(c1, c2, lambda);
            prop_assert!(FitnessReport::new(c1 + d, c2, lambda).fitness < base.fitness);
            prop_assert!(FitnessReport::new(c1, c2 + d, lambda).fitness >= base.fitness);
        }
    }
}
