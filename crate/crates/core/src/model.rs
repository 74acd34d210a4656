//! Domain types shared by every stage of the pipeline.
//!
//! Algorithms work on dense 0-based indices. External string ids only show up
//! at the I/O boundary, through [`IdMap`].

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The run-wide pseudo random generator: ChaCha with 8 rounds, seeded through
/// `SeedableRng::seed_from_u64`. Reproducible across platforms.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed (splitmix64 finalizer over `seed + stream`).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuestionId {
    pub index: usize,
    pub external_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LearnerId {
    pub index: usize,
    pub external_id: String,
}

/// Bijection between external string ids and dense indices `0..len`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a map from a list of unique ids; position becomes the index.
    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = IdMap::new();
        for id in ids {
            let id = id.into();
            if map.lookup.contains_key(&id) {
                return Err(Error::Shape(format!("duplicate id `{id}`")));
            }
            map.insert(id);
        }
        Ok(map)
    }

    /// Returns the index of `id`, assigning the next free index on first sight.
    pub fn insert(&mut self, id: impl Into<String>) -> usize {
        let id = id.into();
        if let Some(&index) = self.lookup.get(&id) {
            return index;
        }
        let index = self.ids.len();
        self.lookup.insert(id.clone(), index);
        self.ids.push(id);
        index
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn external(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sub-map keeping only `indices`, re-indexed in the given order.
    pub fn select(&self, indices: &[usize]) -> IdMap {
        let mut map = IdMap::new();
        for &i in indices {
            map.insert(self.ids[i].clone());
        }
        map
    }
}

/// One raw response record, as read from an interaction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub learner: String,
    pub question: String,
    pub correct: bool,
    pub order: u64,
}

/// Raw problem-solving history. Per learner, `order` is strictly increasing in
/// record order (enforced by the reader and by [`InteractionLog::validate`]).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn new(records: Vec<Interaction>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut last: HashMap<&str, u64> = HashMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if let Some(prev) = last.insert(r.learner.as_str(), r.order) {
                if r.order <= prev {
                    return Err(Error::NonMonotoneOrder {
                        learner: r.learner.clone(),
                        line: i as u64 + 2,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Question and learner index spaces for one interaction log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub questions: IdMap,
    pub learners: IdMap,
}

/// Interaction record in dense index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexedInteraction {
    pub learner: usize,
    pub question: usize,
    pub correct: bool,
}

impl Pool {
    pub fn question(&self, index: usize) -> QuestionId {
        QuestionId {
            index,
            external_id: self.questions.external(index).to_owned(),
        }
    }

    pub fn learner(&self, index: usize) -> LearnerId {
        LearnerId {
            index,
            external_id: self.learners.external(index).to_owned(),
        }
    }

    /// Maps every record of `log` into this pool's index space.
    pub fn index(&self, log: &InteractionLog) -> Result<Vec<IndexedInteraction>> {
        log.records
            .iter()
            .map(|r| {
                Ok(IndexedInteraction {
                    learner: self
                        .learners
                        .index_of(&r.learner)
                        .ok_or_else(|| Error::UnknownId(r.learner.clone()))?,
                    question: self
                        .questions
                        .index_of(&r.question)
                        .ok_or_else(|| Error::UnknownId(r.question.clone()))?,
                    correct: r.correct,
                })
            })
            .collect()
    }
}

/// Assigns dense indices to questions and learners in order of first appearance.
pub fn build_pool(log: &InteractionLog) -> Result<Pool> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut questions = IdMap::new();
    let mut learners = IdMap::new();
    for r in &log.records {
        questions.insert(r.question.as_str());
        learners.insert(r.learner.as_str());
    }
    Ok(Pool {
        questions,
        learners,
    })
}

/// Learner performance snapshot: probability that each learner answers each
/// question correctly. Questions are rows, learners are columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    values: Vec<f64>,
    questions: IdMap,
    learners: IdMap,
}

impl Snapshot {
    /// `values` is row-major, `questions.len()` rows of `learners.len()` entries.
    pub fn new(values: Vec<f64>, questions: IdMap, learners: IdMap) -> Result<Self> {
        if questions.is_empty() || learners.is_empty() {
            return Err(Error::Shape("snapshot needs at least one question and one learner".into()));
        }
        let expected = questions.len() * learners.len();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "{} values for {} questions x {} learners",
                values.len(),
                questions.len(),
                learners.len()
            )));
        }
        let cols = learners.len();
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ValueOutOfRange {
                question: pos / cols,
                learner: pos % cols,
                value: values[pos],
            });
        }
        Ok(Self {
            values,
            questions,
            learners,
        })
    }

    /// Builds a snapshot from rows, with generated ids `q0..` and `l0..`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_questions = rows.len();
        let n_learners = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_learners) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(
            rows.concat(),
            IdMap::from_ids((0..n_questions).map(|q| format!("q{q}")))?,
            IdMap::from_ids((0..n_learners).map(|l| format!("l{l}")))?,
        )
    }

    pub fn n_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn n_learners(&self) -> usize {
        self.learners.len()
    }

    #[inline]
    pub fn get(&self, question: usize, learner: usize) -> f64 {
        self.values[question * self.learners.len() + learner]
    }

    pub fn row(&self, question: usize) -> &[f64] {
        let n = self.learners.len();
        &self.values[question * n..(question + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn question_ids(&self) -> &IdMap {
        &self.questions
    }

    pub fn learner_ids(&self) -> &IdMap {
        &self.learners
    }

    pub fn question(&self, index: usize) -> QuestionId {
        QuestionId {
            index,
            external_id: self.questions.external(index).to_owned(),
        }
    }

    pub fn learner(&self, index: usize) -> LearnerId {
        LearnerId {
            index,
            external_id: self.learners.external(index).to_owned(),
        }
    }

    /// Average over all questions for every learner.
    pub fn learner_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.n_learners()];
        for q in 0..self.n_questions() {
            for (m, v) in means.iter_mut().zip(self.row(q)) {
                *m += v;
            }
        }
        let n = self.n_questions() as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Column selection; values are copied exactly.
    pub fn select_learners(&self, learners: &[usize]) -> Result<Snapshot> {
        if let Some(&bad) = learners.iter().find(|&&l| l >= self.n_learners()) {
            return Err(Error::param("learners", format!("index {bad} out of range")));
        }
        let mut values = Vec::with_capacity(learners.len() * self.n_questions());
        for q in 0..self.n_questions() {
            let row = self.row(q);
            values.extend(learners.iter().map(|&l| row[l]));
        }
        Snapshot::new(values, self.questions.clone(), self.learners.select(learners))
    }
}

/// A candidate diagnostic test: K distinct question indices. Order is kept for
/// reproducibility but carries no meaning for fitness.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assessment {
    genes: Vec<usize>,
}

impl Assessment {
    pub fn new(genes: Vec<usize>, pool_size: usize) -> Result<Self> {
        if genes.is_empty() {
            return Err(Error::InvalidAssessment("no questions".into()));
        }
        let mut seen = vec![false; pool_size];
        for &g in &genes {
            if g >= pool_size {
                return Err(Error::InvalidAssessment(format!(
                    "question index {g} outside pool of {pool_size}"
                )));
            }
            if std::mem::replace(&mut seen[g], true) {
                return Err(Error::InvalidAssessment(format!("duplicate question index {g}")));
            }
        }
        Ok(Self { genes })
    }

    pub(crate) fn from_genes_unchecked(genes: Vec<usize>) -> Self {
        Self { genes }
    }

    pub fn genes(&self) -> &[usize] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut g = self.genes.clone();
        g.sort_unstable();
        g
    }
}

/// Disjoint train/test partition of learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Splits learners (by learner, never by interaction). A pure function of the
/// sorted learner list, `ratio` and `seed`; both halves come back sorted.
pub fn split_learners(learners: &[usize], ratio: f64, seed: u64) -> Result<LearnerSplit> {
    if learners.len() < 2 {
        return Err(Error::TooFewLearners(learners.len()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::param("ratio", format!("{ratio} not in (0, 1)")));
    }
    let mut order = learners.to_vec();
    order.sort_unstable();
    order.dedup();
    if order.len() != learners.len() {
        return Err(Error::param("learners", "duplicate learner index"));
    }
    let n = order.len();
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    order.shuffle(&mut rng_from_seed(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(LearnerSplit {
        train,
        test,
        seed,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(learner: &str, question: &str, order: u64) -> Interaction {
        Interaction {
            learner: learner.into(),
            question: question.into(),
            correct: true,
            order,
        }
    }

    #[test]
    fn pool_uses_first_appearance_order() {
        let log = InteractionLog::new(vec![rec("x", "b", 0), rec("x", "a", 1), rec("y", "b", 0)]);
        let pool = build_pool(&log).unwrap();
        assert_eq!(pool.questions.index_of("b"), Some(0));
        assert_eq!(pool.questions.index_of("a"), Some(1));
        assert_eq!(pool.questions.len(), 2);
        assert_eq!(pool.learners.len(), 2);
        assert_eq!(pool, build_pool(&log).unwrap());
    }

    #[test]
    fn single_record_pool() {
        let pool = build_pool(&InteractionLog::new(vec![rec("x", "q", 0)])).unwrap();
        assert_eq!((pool.questions.len(), pool.learners.len()), (1, 1));
    }

    #[test]
    fn empty_log_is_rejected() {
        let err = build_pool(&InteractionLog::default()).unwrap_err();
        assert_eq!(err.to_string(), "empty interaction log");
    }

    #[test]
    fn split_cardinalities() {
        let learners: Vec<usize> = (0..10).collect();
        let s = split_learners(&learners, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert!(s.train.iter().all(|l| !s.test.contains(l)));
        assert_eq!(s, split_learners(&learners, 0.8, 7).unwrap());

        let big: Vec<usize> = (0..6000).collect();
        let s = split_learners(&big, 0.9, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (5400, 600));
    }

    #[test]
    fn split_keeps_one_on_each_side() {
        let s = split_learners(&[3, 9], 0.99, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        let s = split_learners(&[3, 9, 4], 0.01, 0).unwrap();
        assert_eq!(s.train.len(), 1);
        assert!(matches!(split_learners(&[1], 0.5, 0), Err(Error::TooFewLearners(1))));
        assert!(split_learners(&[1, 2], 1.0, 0).is_err());
    }

    #[test]
    fn split_ignores_input_order() {
        let a = split_learners(&[5, 1, 4, 2, 3], 0.6, 11).unwrap();
        let b = split_learners(&[1, 2, 3, 4, 5], 0.6, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn snapshot_validation() {
        assert!(Snapshot::from_rows(&[vec![0.5, 1.01]]).is_err());
        assert!(Snapshot::from_rows(&[vec![0.5, f64::NAN]]).is_err());
        assert!(Snapshot::from_rows(&[vec![0.5, 0.2], vec![0.1]]).is_err());
        let s = Snapshot::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.25]]).unwrap();
        assert_eq!(s.get(1, 1), 0.25);
        assert_eq!(s.learner_means(), vec![0.25, 0.625]);
    }

    #[test]
    fn assessment_validation() {
        assert!(Assessment::new(vec![0, 1, 1], 5).is_err());
        assert!(Assessment::new(vec![0, 5], 5).is_err());
        assert!(Assessment::new(vec![], 5).is_err());
        assert_eq!(Assessment::new(vec![3, 0], 5).unwrap().sorted(), vec![0, 3]);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
