//! End-to-end runs: estimate a snapshot, calibrate lambda, search on training
//! learners, and score the result on held-out learners.
//!
//! Data flows one way. Held-out learners never reach the estimator fit, the
//! lambda calibration or the search; they only enter [`CriteriaContext`]s used
//! for the final scores.

use serde::{Deserialize, Serialize};

use crate::criteria::{CriteriaContext, FitnessReport, Objective, DEFAULT_LAMBDA_SAMPLES};
use crate::error::{Error, Result};
use crate::estimate::{
    correct_ratio_snapshot_for, fit_rasch, rasch_snapshot, RaschParams,
};
use crate::io::SCHEMA_VERSION;
use crate::model::{build_pool, derive_seed, split_learners, InteractionLog, LearnerSplit, Snapshot};
use crate::par::{self, Execution};
use crate::search::{
    brute_force, ga_search, greedy_search, random_search, Algorithm, GaConfig, GenerationStats,
    SearchResult,
};
use crate::stats;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;

/// Train/test partition parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_SPLIT_RATIO,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn split(&self, n_learners: usize) -> Result<LearnerSplit> {
        split_learners(&(0..n_learners).collect::<Vec<_>>(), self.ratio, self.seed)
    }
}

/// GA settings that are not per-run (K and the seed come from [`SearchConfig`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSettings {
    pub population_size: usize,
    pub generations: usize,
    pub p_c: f64,
    pub p_m1: f64,
    pub p_m2: f64,
    pub tournament_fraction: f64,
    pub track_best_ever: bool,
}

impl Default for GaSettings {
    fn default() -> Self {
        let d = GaConfig::default();
        Self {
            population_size: d.population_size,
            generations: d.generations,
            p_c: d.p_c,
            p_m1: d.p_m1,
            p_m2: d.p_m2,
            tournament_fraction: d.tournament_fraction,
            track_best_ever: d.track_best_ever,
        }
    }
}

impl GaSettings {
    pub fn config(&self, k: usize, seed: u64) -> GaConfig {
        GaConfig {
            k,
            population_size: self.population_size,
            generations: self.generations,
            p_c: self.p_c,
            p_m1: self.p_m1,
            p_m2: self.p_m2,
            tournament_fraction: self.tournament_fraction,
            seed,
            track_best_ever: self.track_best_ever,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    pub repeats: usize,
    pub split: SplitConfig,
    /// Fixed mixing coefficient; calibrated on training learners when absent.
    pub lambda: Option<f64>,
    pub lambda_samples: usize,
    pub lambda_seed: u64,
    pub ga: GaSettings,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ga,
            k: 10,
            seed: 0,
            repeats: 1,
            split: SplitConfig::default(),
            lambda: None,
            lambda_samples: DEFAULT_LAMBDA_SAMPLES,
            lambda_seed: 0,
            ga: GaSettings::default(),
        }
    }
}

impl SearchConfig {
    /// Seed of repeat `r`: the configured seed for the first repeat, derived
    /// sub-seeds for the others. A repeat can be re-run on its own by passing
    /// its seed with `repeats = 1`.
    pub fn repeat_seed(&self, r: usize) -> u64 {
        if r == 0 {
            self.seed
        } else {
            derive_seed(self.seed, r as u64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        Self {
            mean: stats::mean(values),
            std: stats::sample_std(values),
        }
    }
}

/// Mean and sample standard deviation over repeats, per metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub rmse: MeanStd,
    pub std: MeanStd,
    pub fitness: MeanStd,
}

impl MetricSummary {
    fn of(reports: &[FitnessReport]) -> Self {
        let pick = |f: fn(&FitnessReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
        Self {
            rmse: MeanStd::of(&pick(|r| r.c1)),
            std: MeanStd::of(&pick(|r| r.c2)),
            fitness: MeanStd::of(&pick(|r| r.fitness)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub train: MetricSummary,
    pub test: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub questions: Vec<String>,
    pub genes: Vec<usize>,
    pub train: FitnessReport,
    pub test: FitnessReport,
    pub history: Vec<GenerationStats>,
    pub evaluations: u64,
}

/// Everything needed to audit a search: configuration, lambda, the selected
/// questions and their train/test criteria for every repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub config: SearchConfig,
    pub lambda: f64,
    pub n_questions: usize,
    pub n_train_learners: usize,
    pub n_test_learners: usize,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub generated_at: u64,
}

/// Train and test objectives for one snapshot and split.
pub struct Objectives {
    pub split: LearnerSplit,
    pub train: Objective,
    pub test: Objective,
}

/// Builds both objectives. Lambda is `cfg.lambda` or calibrated on the
/// training learners with the search's K.
pub fn objectives(snapshot: &Snapshot, cfg: &SearchConfig, execution: Execution) -> Result<Objectives> {
    let split = cfg.split.split(snapshot.n_learners())?;
    let train = CriteriaContext::new(snapshot, split.train.clone())?.with_execution(execution);
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => train.calibrate_lambda(cfg.k, cfg.lambda_samples, cfg.lambda_seed)?,
    };
    let test = CriteriaContext::new(snapshot, split.test.clone())?.with_execution(execution);
    Ok(Objectives {
        split,
        train: train.with_lambda(lambda)?,
        test: test.with_lambda(lambda)?,
    })
}

pub fn run_algorithm(objective: &Objective, cfg: &SearchConfig, seed: u64) -> Result<SearchResult> {
    match cfg.algorithm {
        Algorithm::Random => random_search(objective, cfg.k, seed),
        Algorithm::Greedy => greedy_search(objective, cfg.k),
        Algorithm::Ga => ga_search(objective, &cfg.ga.config(cfg.k, seed)),
        Algorithm::Brute => brute_force(objective, cfg.k),
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Full search protocol on one snapshot.
pub fn run_search(snapshot: &Snapshot, cfg: &SearchConfig) -> Result<ResultDocument> {
    run_search_with(snapshot, cfg, Execution::default())
}

pub fn run_search_with(snapshot: &Snapshot, cfg: &SearchConfig, execution: Execution) -> Result<ResultDocument> {
    if cfg.repeats == 0 {
        return Err(Error::param("repeats", "must be at least 1"));
    }
    let obj = objectives(snapshot, cfg, execution)?;
    let runs = par::map_range(execution, cfg.repeats, |r| -> Result<RunRecord> {
        let seed = cfg.repeat_seed(r);
        let result = run_algorithm(&obj.train, cfg, seed)?;
        let genes = result.best.genes().to_vec();
        Ok(RunRecord {
            seed,
            questions: genes
                .iter()
                .map(|&q| snapshot.question_ids().external(q).to_owned())
                .collect(),
            test: obj.test.fitness(&genes),
            train: result.report,
            genes,
            history: result.history,
            evaluations: result.evaluations,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let train: Vec<FitnessReport> = runs.iter().map(|r| r.train).collect();
    let test: Vec<FitnessReport> = runs.iter().map(|r| r.test).collect();
    Ok(ResultDocument {
        schema_version: SCHEMA_VERSION,
        algorithm: cfg.algorithm,
        config: cfg.clone(),
        lambda: obj.train.lambda(),
        n_questions: snapshot.n_questions(),
        n_train_learners: obj.split.train.len(),
        n_test_learners: obj.split.test.len(),
        summary: Summary {
            train: MetricSummary::of(&train),
            test: MetricSummary::of(&test),
        },
        runs,
        generated_at: unix_now(),
    })
}

/// Lambda calibration summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lambda: f64,
    pub mean_c1: f64,
    pub mean_c2: f64,
    pub k: usize,
    pub samples: usize,
    pub seed: u64,
}

pub fn calibrate(snapshot: &Snapshot, split: &SplitConfig, k: usize, samples: usize, seed: u64) -> Result<Calibration> {
    let s = split.split(snapshot.n_learners())?;
    let ctx = CriteriaContext::new(snapshot, s.train)?;
    let lambda = ctx.calibrate_lambda(k, samples, seed)?;
    let (mean_c1, mean_c2) = ctx.random_subset_means(k, samples, seed)?;
    Ok(Calibration {
        lambda,
        mean_c1,
        mean_c2,
        k,
        samples,
        seed,
    })
}

/// Criteria of a fixed question list on training and held-out learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub questions: Vec<String>,
    pub lambda: f64,
    pub train: FitnessReport,
    pub test: FitnessReport,
}

pub fn evaluate(snapshot: &Snapshot, split: &LearnerSplit, questions: &[String], lambda: f64) -> Result<Evaluation> {
    let genes = questions
        .iter()
        .map(|id| {
            snapshot
                .question_ids()
                .index_of(id)
                .ok_or_else(|| Error::UnknownId(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let train = CriteriaContext::new(snapshot, split.train.clone())?.with_lambda(lambda)?;
    train.context().check_genes(&genes)?;
    let test = CriteriaContext::new(snapshot, split.test.clone())?.with_lambda(lambda)?;
    Ok(Evaluation {
        questions: questions.to_vec(),
        lambda,
        train: train.fitness(&genes),
        test: test.fitness(&genes),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Rasch,
    Ratio,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rasch" => Ok(Estimator::Rasch),
            "ratio" => Ok(Estimator::Ratio),
            other => Err(Error::param("estimator", format!("unknown estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub estimator: Estimator,
    pub split: SplitConfig,
    pub smoothing: f64,
    pub rasch: RaschParams,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::Rasch,
            split: SplitConfig::default(),
            smoothing: 1.0,
            rasch: RaschParams::default(),
        }
    }
}

/// Fits the estimator on the training learners' interactions and produces a
/// snapshot for every learner in the log (questions and learners in order of
/// first appearance).
pub fn estimate_snapshot(log: &InteractionLog, cfg: &EstimateConfig) -> Result<Snapshot> {
    let pool = build_pool(log)?;
    let split = cfg.split.split(pool.learners.len())?;
    let mut is_train = vec![false; pool.learners.len()];
    for &l in &split.train {
        is_train[l] = true;
    }
    let train_log = InteractionLog::new(
        log.records
            .iter()
            .filter(|r| is_train[pool.learners.index_of(&r.learner).expect("pool covers log")])
            .cloned()
            .collect(),
    );

    match cfg.estimator {
        // question and global ratios only count training learners; each
        // learner's own ratio uses their full history
        Estimator::Ratio => correct_ratio_snapshot_for(&pool, log, &split.train, cfg.smoothing),
        Estimator::Rasch => {
            let model = fit_rasch(&train_log, &cfg.rasch)?;
            if let Some(missing) = pool.questions.ids().iter().find(|q| model.questions.index_of(q).is_none()) {
                return Err(Error::NoInteractions {
                    entity: "question",
                    id: format!("{missing} (in training learners)"),
                });
            }
            let model = model.with_question_order(&pool.questions)?;
            rasch_snapshot(&model.score(log)?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
    pub learners: usize,
}

/// Correlation of per-learner mean performance between two snapshots,
/// matching learners by id.
pub fn compare_learner_means(predicted: &Snapshot, truth: &Snapshot) -> Result<Correlation> {
    let pred_means = predicted.learner_means();
    let true_means = truth.learner_means();
    let mut x = Vec::with_capacity(pred_means.len());
    let mut y = Vec::with_capacity(pred_means.len());
    for (l, id) in predicted.learner_ids().ids().iter().enumerate() {
        let t = truth
            .learner_ids()
            .index_of(id)
            .ok_or_else(|| Error::UnknownId(id.clone()))?;
        x.push(pred_means[l]);
        y.push(true_means[t]);
    }
    Ok(Correlation {
        pearson: stats::pearson(&x, &y),
        spearman: stats::spearman(&x, &y),
        learners: x.len(),
    })
}
