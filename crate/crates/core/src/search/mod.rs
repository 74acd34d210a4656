//! Subset search: random baseline, greedy, genetic algorithm, and an
//! exhaustive oracle for small pools.
//!
//! All searches maximize [`Objective::fitness`]. They only ever see the
//! learners baked into the objective (the training learners in the pipeline).

mod ga;
pub mod operators;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ga::{ga_search, GaConfig};

use crate::criteria::{FitnessReport, Objective};
use crate::error::{Error, Result};
use crate::model::{rng_from_seed, Assessment};

/// Greedy ties: candidates within this margin of the incumbent keep the
/// incumbent (the lower question index).
const GREEDY_TIE_EPS: f64 = 1e-12;

/// Combination-count guard for [`brute_force`].
pub const MAX_EXHAUSTIVE: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Random,
    Greedy,
    Ga,
    Brute,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::Greedy => "greedy",
            Algorithm::Ga => "ga",
            Algorithm::Brute => "brute",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Algorithm::Random),
            "greedy" => Ok(Algorithm::Greedy),
            "ga" => Ok(Algorithm::Ga),
            "brute" => Ok(Algorithm::Brute),
            other => Err(Error::param("algorithm", format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Best and mean fitness after one generation (GA) or step (greedy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub algorithm: Algorithm,
    pub best: Assessment,
    pub report: FitnessReport,
    pub history: Vec<GenerationStats>,
    pub evaluations: u64,
}

fn check_k(objective: &Objective, k: usize) -> Result<()> {
    let pool = objective.n_questions();
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if k > pool {
        return Err(Error::KTooLarge { k, pool });
    }
    Ok(())
}

/// One uniform K-subset without replacement.
pub fn random_search(objective: &Objective, k: usize, seed: u64) -> Result<SearchResult> {
    check_k(objective, k)?;
    let genes = operators::random_individual(objective.n_questions(), k, &mut rng_from_seed(seed));
    let report = objective.fitness(&genes);
    Ok(SearchResult {
        algorithm: Algorithm::Random,
        best: Assessment::from_genes_unchecked(genes),
        report,
        history: vec![GenerationStats {
            generation: 0,
            best: report.fitness,
            mean: report.fitness,
        }],
        evaluations: 1,
    })
}

/// Adds, one at a time, the question that maximizes the fitness of the grown
/// subset. Deterministic; at most `k * |U|` evaluations.
pub fn greedy_search(objective: &Objective, k: usize) -> Result<SearchResult> {
    check_k(objective, k)?;
    let n = objective.n_questions();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut in_set = vec![false; n];
    let mut history = Vec::with_capacity(k);
    let mut evaluations = 0u64;
    let mut report = None;

    for step in 0..k {
        let candidates: Vec<usize> = (0..n).filter(|&q| !in_set[q]).collect();
        let trials: Vec<Vec<usize>> = candidates
            .iter()
            .map(|&q| {
                let mut g = chosen.clone();
                g.push(q);
                g
            })
            .collect();
        let reports = objective.evaluate_batch(&trials);
        evaluations += reports.len() as u64;

        let mut best = 0;
        for (i, r) in reports.iter().enumerate().skip(1) {
            if r.fitness > reports[best].fitness + GREEDY_TIE_EPS {
                best = i;
            }
        }
        let q = candidates[best];
        chosen.push(q);
        in_set[q] = true;
        report = Some(reports[best]);
        history.push(GenerationStats {
            generation: step + 1,
            best: reports[best].fitness,
            mean: reports.iter().map(|r| r.fitness).sum::<f64>() / reports.len() as f64,
        });
    }

    Ok(SearchResult {
        algorithm: Algorithm::Greedy,
        best: Assessment::from_genes_unchecked(chosen),
        report: report.expect("k >= 1"),
        history,
        evaluations,
    })
}

/// Binomial coefficient, `None` on overflow.
pub fn n_choose_k(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Advances `c` to the next K-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
        return false;
    };
    c[i] += 1;
    for j in i + 1..k {
        c[j] = c[j - 1] + 1;
    }
    true
}

/// Exact argmax over every K-subset. Ties keep the lexicographically
/// smallest gene list.
pub fn brute_force(objective: &Objective, k: usize) -> Result<SearchResult> {
    check_k(objective, k)?;
    let n = objective.n_questions();
    let total = n_choose_k(n, k).unwrap_or(u128::MAX);
    if total > MAX_EXHAUSTIVE {
        return Err(Error::TooLargeForExhaustive {
            combinations: total,
            limit: MAX_EXHAUSTIVE,
        });
    }

    const CHUNK: usize = 4096;
    let mut current: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, FitnessReport)> = None;
    let mut evaluations = 0u64;
    let mut exhausted = false;
    while !exhausted {
        let mut chunk = Vec::with_capacity(CHUNK);
        while chunk.len() < CHUNK {
            chunk.push(current.clone());
            if !next_combination(&mut current, n) {
                exhausted = true;
                break;
            }
        }
        let reports = objective.evaluate_batch(&chunk);
        evaluations += reports.len() as u64;
        for (genes, r) in chunk.into_iter().zip(reports) {
            if best.as_ref().is_none_or(|(_, b)| r.fitness > b.fitness) {
                best = Some((genes, r));
            }
        }
    }

    let (genes, report) = best.expect("at least one combination");
    Ok(SearchResult {
        algorithm: Algorithm::Brute,
        best: Assessment::from_genes_unchecked(genes),
        report,
        history: vec![GenerationStats {
            generation: 0,
            best: report.fitness,
            mean: report.fitness,
        }],
        evaluations,
    })
}
