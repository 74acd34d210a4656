//! Snapshot estimation from raw interaction logs, and snapshot downsizing.
//!
//! Two estimators are provided: an additive correct-ratio estimator and a
//! Rasch (1PL) model, `P(correct) = sigmoid(theta_learner - b_question)`,
//! fitted by preconditioned gradient descent on the L2-regularized negative
//! log-likelihood.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_pool, rng_from_seed, IdMap, InteractionLog, Pool, Snapshot};

/// Clipping margin of the correct-ratio estimator.
pub const RATIO_EPS: f64 = 1e-3;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log P(y | z)` for a logistic model with logit `z`.
#[inline]
fn bernoulli_nll(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

fn smoothed(correct: f64, total: f64, smoothing: f64) -> Option<f64> {
    let denom = total + 2.0 * smoothing;
    (denom > 0.0).then(|| (correct + smoothing) / denom)
}

/// Additive correct-ratio snapshot over every learner and question of `log`:
/// `clip(p_q + a_l - g, eps, 1 - eps)` with smoothed per-question (`p_q`),
/// per-learner (`a_l`) and global (`g`) correct ratios.
pub fn correct_ratio_snapshot(log: &InteractionLog, smoothing: f64) -> Result<Snapshot> {
    let pool = build_pool(log)?;
    let all: Vec<usize> = (0..pool.learners.len()).collect();
    correct_ratio_snapshot_for(&pool, log, &all, smoothing)
}

/// Correct-ratio snapshot where question and global ratios come only from
/// `train` learners' records; every learner of `pool` gets a column, with
/// `a_l` from the learner's own history (`a_l = g` when there is none).
pub fn correct_ratio_snapshot_for(
    pool: &Pool,
    log: &InteractionLog,
    train: &[usize],
    smoothing: f64,
) -> Result<Snapshot> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::param("smoothing", "must be finite and non-negative"));
    }
    let records = pool.index(log)?;
    let (nq, nl) = (pool.questions.len(), pool.learners.len());
    let mut is_train = vec![false; nl];
    for &l in train {
        is_train[l] = true;
    }

    let mut q_correct = vec![0.0; nq];
    let mut q_total = vec![0.0; nq];
    let mut l_correct = vec![0.0; nl];
    let mut l_total = vec![0.0; nl];
    let (mut g_correct, mut g_total) = (0.0, 0.0);
    for r in &records {
        let y = f64::from(u8::from(r.correct));
        l_correct[r.learner] += y;
        l_total[r.learner] += 1.0;
        if is_train[r.learner] {
            q_correct[r.question] += y;
            q_total[r.question] += 1.0;
            g_correct += y;
            g_total += 1.0;
        }
    }
    let g = smoothed(g_correct, g_total, smoothing)
        .ok_or_else(|| Error::param("train", "no training interactions"))?;
    let p: Vec<f64> = (0..nq)
        .map(|q| if q_total[q] > 0.0 { smoothed(q_correct[q], q_total[q], smoothing).unwrap() } else { g })
        .collect();
    let a: Vec<f64> = (0..nl)
        .map(|l| if l_total[l] > 0.0 { smoothed(l_correct[l], l_total[l], smoothing).unwrap() } else { g })
        .collect();

    let mut values = Vec::with_capacity(nq * nl);
    for &pq in &p {
        values.extend(a.iter().map(|al| (pq + al - g).clamp(RATIO_EPS, 1.0 - RATIO_EPS)));
    }
    Snapshot::new(values, pool.questions.clone(), pool.learners.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaschParams {
    pub reg: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tol: f64,
}

impl Default for RaschParams {
    fn default() -> Self {
        Self {
            reg: 1e-4,
            learning_rate: 0.1,
            max_epochs: 500,
            tol: 1e-6,
        }
    }
}

impl RaschParams {
    fn validate(&self) -> Result<()> {
        if !(self.reg >= 0.0) {
            return Err(Error::param("reg", "must be non-negative"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tol", "must be non-negative"));
        }
        Ok(())
    }
}

/// Fitted Rasch model over its own question and learner id spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct RaschModel {
    pub questions: IdMap,
    pub learners: IdMap,
    pub theta: Vec<f64>,
    pub b: Vec<f64>,
    pub params: RaschParams,
    pub epochs: usize,
    /// Objective after each accepted epoch (starting with the initial value).
    pub objective_trace: Vec<f64>,
}

struct Problem {
    learner: Vec<usize>,
    question: Vec<usize>,
    y: Vec<f64>,
    learner_count: Vec<f64>,
    question_count: Vec<f64>,
}

impl Problem {
    fn objective(&self, theta: &[f64], b: &[f64], reg: f64) -> f64 {
        let nll: f64 = (0..self.y.len())
            .map(|i| bernoulli_nll(theta[self.learner[i]] - b[self.question[i]], self.y[i]))
            .sum();
        let penalty = theta.iter().chain(b).map(|v| v * v).sum::<f64>();
        nll + 0.5 * reg * penalty
    }

    /// Gradient-descent loop. Each step scales a parameter's gradient by the
    /// inverse of its interaction count; a step that raises the objective is
    /// retried with half the learning rate (which then stays halved).
    fn optimize(
        &self,
        theta: &mut [f64],
        b: &mut [f64],
        fit_b: bool,
        params: &RaschParams,
    ) -> Result<(usize, Vec<f64>)> {
        let mut lr = params.learning_rate;
        let mut current = self.objective(theta, b, params.reg);
        if !current.is_finite() {
            return Err(Error::Diverged { epoch: 0 });
        }
        let mut trace = vec![current];
        let mut g_theta = vec![0.0; theta.len()];
        let mut g_b = vec![0.0; b.len()];
        let mut epochs = 0;

        for epoch in 1..=params.max_epochs {
            g_theta.iter_mut().zip(theta.iter()).for_each(|(g, t)| *g = params.reg * t);
            g_b.iter_mut().zip(b.iter()).for_each(|(g, v)| *g = params.reg * v);
            for i in 0..self.y.len() {
                let (l, q) = (self.learner[i], self.question[i]);
                let residual = sigmoid(theta[l] - b[q]) - self.y[i];
                g_theta[l] += residual;
                g_b[q] -= residual;
            }

            let mut accepted = None;
            for _ in 0..60 {
                let new_theta: Vec<f64> = theta
                    .iter()
                    .zip(&g_theta)
                    .zip(&self.learner_count)
                    .map(|((t, g), n)| t - lr * g / n)
                    .collect();
                let new_b: Vec<f64> = if fit_b {
                    b.iter()
                        .zip(&g_b)
                        .zip(&self.question_count)
                        .map(|((v, g), n)| v - lr * g / n)
                        .collect()
                } else {
                    b.to_vec()
                };
                let value = self.objective(&new_theta, &new_b, params.reg);
                if !value.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                if value <= current {
                    accepted = Some((new_theta, new_b, value));
                    break;
                }
                lr *= 0.5;
            }
            epochs = epoch;
            let Some((new_theta, new_b, value)) = accepted else {
                break;
            };
            let change = theta
                .iter()
                .zip(&new_theta)
                .chain(b.iter().zip(&new_b))
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            theta.copy_from_slice(&new_theta);
            b.copy_from_slice(&new_b);
            current = value;
            trace.push(value);
            if change < params.tol {
                break;
            }
        }
        Ok((epochs, trace))
    }
}

/// Fits abilities and difficulties jointly on every record of `log`, then
/// shifts both so the difficulties have zero mean.
pub fn fit_rasch(log: &InteractionLog, params: &RaschParams) -> Result<RaschModel> {
    params.validate()?;
    let pool = build_pool(log)?;
    let records = pool.index(log)?;
    let (nq, nl) = (pool.questions.len(), pool.learners.len());
    let mut problem = Problem {
        learner: records.iter().map(|r| r.learner).collect(),
        question: records.iter().map(|r| r.question).collect(),
        y: records.iter().map(|r| f64::from(u8::from(r.correct))).collect(),
        learner_count: vec![0.0; nl],
        question_count: vec![0.0; nq],
    };
    for r in &records {
        problem.learner_count[r.learner] += 1.0;
        problem.question_count[r.question] += 1.0;
    }

    let mut theta = vec![0.0; nl];
    let mut b = vec![0.0; nq];
    let (epochs, objective_trace) = problem.optimize(&mut theta, &mut b, true, params)?;
    let shift = b.iter().sum::<f64>() / nq as f64;
    b.iter_mut().for_each(|v| *v -= shift);
    theta.iter_mut().for_each(|v| *v -= shift);

    Ok(RaschModel {
        questions: pool.questions,
        learners: pool.learners,
        theta,
        b,
        params: *params,
        epochs,
        objective_trace,
    })
}

impl RaschModel {
    /// Estimates an ability for every learner of `log` with the question
    /// difficulties held fixed. Questions of `log` must be known to the model.
    pub fn score(&self, log: &InteractionLog) -> Result<RaschModel> {
        if log.is_empty() {
            return Err(Error::EmptyLog);
        }
        let mut learners = IdMap::new();
        let mut problem = Problem {
            learner: Vec::with_capacity(log.len()),
            question: Vec::with_capacity(log.len()),
            y: Vec::with_capacity(log.len()),
            learner_count: Vec::new(),
            question_count: vec![1.0; self.b.len()],
        };
        for r in &log.records {
            let q = self
                .questions
                .index_of(&r.question)
                .ok_or_else(|| Error::UnknownId(r.question.clone()))?;
            let l = learners.insert(r.learner.as_str());
            if l == problem.learner_count.len() {
                problem.learner_count.push(0.0);
            }
            problem.learner_count[l] += 1.0;
            problem.learner.push(l);
            problem.question.push(q);
            problem.y.push(f64::from(u8::from(r.correct)));
        }
        let mut theta = vec![0.0; learners.len()];
        let mut b = self.b.clone();
        let (epochs, objective_trace) = problem.optimize(&mut theta, &mut b, false, &self.params)?;
        Ok(RaschModel {
            questions: self.questions.clone(),
            learners,
            theta,
            b,
            params: self.params,
            epochs,
            objective_trace,
        })
    }

    /// Re-orders questions to follow `order` (every id must be known).
    pub fn with_question_order(mut self, order: &IdMap) -> Result<RaschModel> {
        if order.len() != self.questions.len() {
            return Err(Error::Shape(format!(
                "model has {} questions, requested order has {}",
                self.questions.len(),
                order.len()
            )));
        }
        let b = order
            .ids()
            .iter()
            .map(|id| {
                self.questions
                    .index_of(id)
                    .map(|q| self.b[q])
                    .ok_or_else(|| Error::UnknownId(id.clone()))
            })
            .collect::<Result<Vec<f64>>>()?;
        self.b = b;
        self.questions = order.clone();
        Ok(self)
    }
}

/// `Q[q][l] = sigmoid(theta_l - b_q)`.
pub fn rasch_snapshot(model: &RaschModel) -> Result<Snapshot> {
    let mut values = Vec::with_capacity(model.b.len() * model.theta.len());
    for &b in &model.b {
        values.extend(model.theta.iter().map(|&t| sigmoid(t - b)));
    }
    Snapshot::new(values, model.questions.clone(), model.learners.clone())
}

/// `n` uniformly chosen learner columns, kept in their original order.
pub fn subsample_learners(snapshot: &Snapshot, n: usize, seed: u64) -> Result<Snapshot> {
    if n == 0 || n > snapshot.n_learners() {
        return Err(Error::param(
            "n",
            format!("{n} not in 1..={}", snapshot.n_learners()),
        ));
    }
    let mut chosen = index::sample(&mut rng_from_seed(seed), snapshot.n_learners(), n).into_vec();
    chosen.sort_unstable();
    snapshot.select_learners(&chosen)
}

/// Change in the running mean performance as learners are added in steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyCurve {
    pub counts: Vec<usize>,
    pub deltas: Vec<f64>,
    pub chosen_n: Option<usize>,
}

fn curve_from_values(values: &[f64], order: &[usize], step: usize, epsilon: f64, window: usize) -> SufficiencyCurve {
    let mut counts = Vec::new();
    let mut deltas = Vec::new();
    let mut sum = 0.0;
    let mut previous: Option<f64> = None;
    for (i, &l) in order.iter().enumerate() {
        sum += values[l];
        let n = i + 1;
        if n % step != 0 {
            continue;
        }
        let mean = sum / n as f64;
        if let Some(prev) = previous {
            counts.push(n);
            deltas.push((mean - prev).abs());
        }
        previous = Some(mean);
    }
    let chosen_n = (0..deltas.len())
        .find(|&i| i + window <= deltas.len() && deltas[i..i + window].iter().all(|&d| d < epsilon))
        .map(|i| counts[i]);
    SufficiencyCurve {
        counts,
        deltas,
        chosen_n,
    }
}

fn check_curve_params(step: usize, epsilon: f64, window: usize) -> Result<()> {
    if step == 0 {
        return Err(Error::param("step", "must be at least 1"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    if window == 0 {
        return Err(Error::param("window", "must be at least 1"));
    }
    Ok(())
}

fn shuffled_learners(snapshot: &Snapshot, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..snapshot.n_learners()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    order
}

/// Learners are taken in a seeded random order. At every multiple of `step`
/// the running mean of per-learner average performance is compared with the
/// previous multiple; `deltas[i]` is that absolute change at `counts[i]`
/// (so the first point is at `2 * step`). `chosen_n` is the first count that
/// starts a run of `window` deltas below `epsilon`.
pub fn sufficiency_curve(
    snapshot: &Snapshot,
    step: usize,
    epsilon: f64,
    window: usize,
    seed: u64,
) -> Result<SufficiencyCurve> {
    check_curve_params(step, epsilon, window)?;
    let order = shuffled_learners(snapshot, seed);
    Ok(curve_from_values(&snapshot.learner_means(), &order, step, epsilon, window))
}

/// The same analysis applied to each question's column values separately,
/// with the same learner order as [`sufficiency_curve`].
pub fn per_question_sufficiency(
    snapshot: &Snapshot,
    step: usize,
    epsilon: f64,
    window: usize,
    seed: u64,
) -> Result<Vec<SufficiencyCurve>> {
    check_curve_params(step, epsilon, window)?;
    let order = shuffled_learners(snapshot, seed);
    Ok((0..snapshot.n_questions())
        .map(|q| curve_from_values(snapshot.row(q), &order, step, epsilon, window))
        .collect())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::model::Interaction;
    use crate::simulator::{simulate, SimConfig};
    use crate::stats::spearman;

    fn rec(learner: &str, question: &str, correct: bool, order: u64) -> Interaction {
        Interaction {
            learner: learner.into(),
            question: question.into(),
            correct,
            order,
        }
    }

    #[test]
    fn ratio_saturates_when_everything_is_correct() {
        let log = InteractionLog::new(vec![
            rec("a", "x", true, 0),
            rec("a", "y", true, 1),
            rec("b", "x", true, 0),
        ]);
        let s = correct_ratio_snapshot(&log, 0.0).unwrap();
        assert!(s.values().iter().all(|&v| v == 1.0 - RATIO_EPS));
    }

    #[test]
    fn ratio_single_record_laplace() {
        let log = InteractionLog::new(vec![rec("a", "x", true, 0)]);
        let s = correct_ratio_snapshot(&log, 1.0).unwrap();
        assert_abs_diff_eq!(s.get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ratio_orders_learners_by_raw_correct_ratio() {
        let sim = simulate(&SimConfig {
            num_learners: 80,
            num_questions: 20,
            seed: 1,
            ..SimConfig::default()
        })
        .unwrap();
        let s = correct_ratio_snapshot(&sim.log, 1.0).unwrap();
        let means = s.learner_means();
        let mut raw = vec![0.0; 80];
        for r in &sim.log.records {
            raw[s.learner_ids().index_of(&r.learner).unwrap()] += f64::from(u8::from(r.correct));
        }
        for i in 0..80 {
            for j in 0..80 {
                if raw[i] > raw[j] {
                    assert!(means[i] >= means[j]);
                }
            }
        }
    }

    #[test]
    fn ratio_without_history_falls_back_to_question_ratio() {
        let log = InteractionLog::new(vec![
            rec("a", "x", true, 0),
            rec("a", "y", false, 1),
            rec("b", "x", false, 0),
        ]);
        let pool = build_pool(&log).unwrap();
        let train_only = InteractionLog::new(log.records[..2].to_vec());
        // learner b is in the pool but has no records in the log passed in
        let s = correct_ratio_snapshot_for(&pool, &train_only, &[0], 1.0).unwrap();
        let p_x = 2.0 / 3.0;
        assert_abs_diff_eq!(s.get(0, 1), p_x, epsilon = 1e-15);
        assert!(correct_ratio_snapshot(&InteractionLog::default(), 1.0).is_err());
    }

    fn static_log(theta: &[f64], b: &[f64], seed: u64) -> InteractionLog {
        use rand::Rng as _;
        let mut rng = rng_from_seed(seed);
        let mut records = Vec::new();
        for (l, t) in theta.iter().enumerate() {
            for (q, d) in b.iter().enumerate() {
                records.push(rec(&format!("l{l}"), &format!("q{q}"), rng.gen::<f64>() < sigmoid(t - d), q as u64));
            }
        }
        InteractionLog::new(records)
    }

    #[test]
    fn rasch_recovers_abilities() {
        let mut rng = rng_from_seed(10);
        let theta: Vec<f64> = (0..200).map(|_| crate::simulator::standard_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..50).map(|_| crate::simulator::standard_normal(&mut rng)).collect();
        let model = fit_rasch(&static_log(&theta, &b, 11), &RaschParams::default()).unwrap();
        let rho = spearman(&model.theta, &theta);
        assert!(rho >= 0.9, "spearman {rho}");
        assert!(model.b.iter().sum::<f64>().abs() / 50.0 < 1e-9);
        for w in model.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn rasch_symmetry_and_monotonicity() {
        let mut records = Vec::new();
        let patterns = [
            ("perfect", [true, true, true, true]),
            ("twin1", [true, false, true, false]),
            ("twin2", [true, false, true, false]),
            ("weak", [false, false, true, false]),
        ];
        for (name, answers) in patterns {
            for (q, &ok) in answers.iter().enumerate() {
                records.push(rec(name, &format!("q{q}"), ok, q as u64));
            }
        }
        let model = fit_rasch(&InteractionLog::new(records), &RaschParams::default()).unwrap();
        let t = |id: &str| model.theta[model.learners.index_of(id).unwrap()];
        assert!((t("twin1") - t("twin2")).abs() < 1e-6);
        assert!(t("perfect") > t("twin1") && t("twin1") > t("weak"));
        assert!(model.theta.iter().all(|&v| v <= t("perfect")));
    }

    #[test]
    fn rasch_snapshot_values() {
        let model = RaschModel {
            questions: IdMap::from_ids(["q"]).unwrap(),
            learners: IdMap::from_ids(["a", "b", "c"]).unwrap(),
            theta: vec![1.0, -1.0, 0.0],
            b: vec![0.0],
            params: RaschParams::default(),
            epochs: 0,
            objective_trace: vec![],
        };
        let s = rasch_snapshot(&model).unwrap();
        assert_abs_diff_eq!(s.get(0, 0), 0.731_058_578_630_004_9, epsilon = 1e-12);
        assert_abs_diff_eq!(s.get(0, 1), 0.268_941_421_369_995_1, epsilon = 1e-12);
        assert_eq!(s.get(0, 2), 0.5);
    }

    #[test]
    fn scoring_with_fixed_difficulties_matches_training_order() {
        let sim = simulate(&SimConfig {
            num_learners: 60,
            num_questions: 15,
            seed: 2,
            ..SimConfig::default()
        })
        .unwrap();
        let model = fit_rasch(&sim.log, &RaschParams::default()).unwrap();
        let scored = model.score(&sim.log).unwrap();
        assert_eq!(scored.b, model.b);
        assert!(spearman(&scored.theta, &model.theta) > 0.99);
        let unknown = InteractionLog::new(vec![rec("z", "nope", true, 0)]);
        assert!(matches!(model.score(&unknown), Err(Error::UnknownId(_))));
    }

    #[test]
    fn diverging_rates_are_contained() {
        let log = static_log(&[0.5, -0.5, 1.0], &[0.0, 1.0], 3);
        let params = RaschParams {
            learning_rate: 1e6,
            ..RaschParams::default()
        };
        let model = fit_rasch(&log, &params).unwrap();
        for w in model.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn subsampling() {
        let s = crate::testutil::random_snapshot(5, 30, 1);
        assert_eq!(subsample_learners(&s, 30, 4).unwrap(), s);
        let one = subsample_learners(&s, 1, 4).unwrap();
        assert_eq!(one.n_learners(), 1);
        let sub = subsample_learners(&s, 12, 4).unwrap();
        assert_eq!(sub, subsample_learners(&s, 12, 4).unwrap());
        for l in 0..12 {
            let orig = s.learner_ids().index_of(sub.learner_ids().external(l)).unwrap();
            for q in 0..5 {
                assert_eq!(sub.get(q, l), s.get(q, orig));
            }
        }
        assert!(subsample_learners(&s, 0, 0).is_err());
        assert!(subsample_learners(&s, 31, 0).is_err());
    }

    #[test]
    fn constant_columns_settle_immediately() {
        let s = Snapshot::from_rows(&[vec![0.4; 50], vec![0.6; 50]]).unwrap();
        let c = sufficiency_curve(&s, 5, 1e-4, 3, 0).unwrap();
        assert_eq!(c.counts, vec![10, 15, 20, 25, 30, 35, 40, 45, 50]);
        assert!(c.deltas.iter().all(|&d| d == 0.0));
        assert_eq!(c.chosen_n, Some(10));
    }

    #[test]
    fn two_column_curve() {
        let s = Snapshot::from_rows(&[vec![0.0, 1.0]]).unwrap();
        for seed in 0..4 {
            let c = sufficiency_curve(&s, 1, 1e-4, 1, seed).unwrap();
            assert_eq!(c.counts, vec![2]);
            assert_eq!(c.deltas, vec![0.5]);
            assert_eq!(c.chosen_n, None);
        }
    }

    #[test]
    fn per_question_curves() {
        let s = crate::testutil::random_snapshot(4, 400, 3);
        let curves = per_question_sufficiency(&s, 20, 1e-2, 2, 5).unwrap();
        assert_eq!(curves.len(), 4);
        assert!(curves.iter().all(|c| c.counts.len() == 19));
        assert!(sufficiency_curve(&s, 0, 1e-3, 1, 0).is_err());
    }
}
