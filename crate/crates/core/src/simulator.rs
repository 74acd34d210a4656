//! Synthetic learners in the style of the Simulated-5 dataset.
//!
//! Each question has a concept, a difficulty `alpha ~ N(0, 1)` and a growth
//! factor `delta ~ N(growth_mean, growth_std^2)`. Each learner has one skill
//! `beta ~ N(0, 1)` per concept. Learners answer every question once, in index
//! order, with
//!
//! ```text
//! P(correct) = c + (1 - c) / (1 + exp(alpha - beta))
//! ```
//!
//! where `beta` is the learner's current skill on the question's concept. A
//! correct answer raises that skill by the question's `delta`. The ground-truth
//! snapshot evaluates the same probability with the learners' final skills.

use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rng_from_seed, IdMap, Interaction, InteractionLog, Rng, Snapshot};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_learners: usize,
    pub num_questions: usize,
    pub num_concepts: usize,
    /// Floor of the response curve (the guessing rate).
    pub slip: f64,
    pub growth_mean: f64,
    pub growth_std: f64,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_learners: 6000,
            num_questions: 50,
            num_concepts: 5,
            slip: 0.25,
            growth_mean: 0.4,
            growth_std: 0.05,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_learners == 0 {
            return Err(Error::param("num_learners", "must be at least 1"));
        }
        if self.num_concepts == 0 || self.num_questions < self.num_concepts {
            return Err(Error::param(
                "num_concepts",
                "need 1 <= num_concepts <= num_questions",
            ));
        }
        if !(0.0..1.0).contains(&self.slip) {
            return Err(Error::param("slip", "must be in [0, 1)"));
        }
        if !(self.growth_std >= 0.0) || !self.growth_mean.is_finite() {
            return Err(Error::param("growth_std", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Hidden parameters of a simulated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimWorld {
    pub question_concept: Vec<usize>,
    pub question_difficulty: Vec<f64>,
    pub question_growth: Vec<f64>,
    /// Initial skills, `num_concepts` per learner.
    pub learner_skill: Vec<Vec<f64>>,
    /// Skills after the learner's full history.
    pub final_skill: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub world: SimWorld,
    pub log: InteractionLog,
    pub true_snapshot: Snapshot,
}

/// `c + (1 - c) / (1 + exp(alpha - beta))`.
#[inline]
pub fn solve_probability(alpha: f64, beta: f64, c: f64) -> f64 {
    c + (1.0 - c) / (1.0 + (alpha - beta).exp())
}

/// Standard normal variate by the Box-Muller transform: two uniforms
/// `u1, u2` from `Rng::gen::<f64>()`, then `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.
/// One variate per pair of draws (the sine branch is discarded).
pub fn standard_normal(rng: &mut Rng) -> f64 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (TAU * u2).cos()
}

pub fn question_id(q: usize) -> String {
    format!("q{q}")
}

pub fn learner_id(l: usize) -> String {
    format!("l{l}")
}

/// Question parameters come from the stream seeded with `seed`: the concept
/// assignment (round-robin over concepts, then shuffled, so every concept is
/// used), then `alpha` and `delta` for every question in index order.
/// Learner `l` draws its skills and responses from the same seed on ChaCha
/// stream `l + 1`, so learners can be simulated in any order or in parallel.
pub fn simulate(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let nq = cfg.num_questions;
    let mut rng = rng_from_seed(cfg.seed);
    let mut question_concept: Vec<usize> = (0..nq).map(|q| q % cfg.num_concepts).collect();
    question_concept.shuffle(&mut rng);
    let question_difficulty: Vec<f64> = (0..nq).map(|_| standard_normal(&mut rng)).collect();
    let question_growth: Vec<f64> = (0..nq)
        .map(|_| cfg.growth_mean + cfg.growth_std * standard_normal(&mut rng))
        .collect();

    struct Learner {
        initial: Vec<f64>,
        skill: Vec<f64>,
        correct: Vec<bool>,
    }

    let learners = par::map_range(cfg.execution, cfg.num_learners, |l| {
        let mut rng = rng_from_seed(cfg.seed);
        rng.set_stream(l as u64 + 1);
        let initial: Vec<f64> = (0..cfg.num_concepts).map(|_| standard_normal(&mut rng)).collect();
        let mut skill = initial.clone();
        let correct = (0..nq)
            .map(|q| {
                let concept = question_concept[q];
                let p = solve_probability(question_difficulty[q], skill[concept], cfg.slip);
                let ok = rng.gen::<f64>() < p;
                if ok {
                    skill[concept] += question_growth[q];
                }
                ok
            })
            .collect();
        Learner {
            initial,
            skill,
            correct,
        }
    });

    let mut records = Vec::with_capacity(cfg.num_learners * nq);
    for (l, learner) in learners.iter().enumerate() {
        let lid = learner_id(l);
        for (q, &correct) in learner.correct.iter().enumerate() {
            records.push(Interaction {
                learner: lid.clone(),
                question: question_id(q),
                correct,
                order: q as u64,
            });
        }
    }

    let n = cfg.num_learners;
    let mut values = vec![0.0; nq * n];
    for (l, learner) in learners.iter().enumerate() {
        for q in 0..nq {
            values[q * n + l] = solve_probability(
                question_difficulty[q],
                learner.skill[question_concept[q]],
                cfg.slip,
            );
        }
    }
    let true_snapshot = Snapshot::new(
        values,
        IdMap::from_ids((0..nq).map(question_id))?,
        IdMap::from_ids((0..n).map(learner_id))?,
    )?;

    let (learner_skill, final_skill) = learners.into_iter().map(|l| (l.initial, l.skill)).unzip();
    Ok(Simulation {
        world: SimWorld {
            question_concept,
            question_difficulty,
            question_growth,
            learner_skill,
            final_skill,
        },
        log: InteractionLog::new(records),
        true_snapshot,
    })
}
