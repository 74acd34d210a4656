//! `diagsearch` command line.
//!
//! Every subcommand takes its parameters as flags; `--config file.json`
//! overrides them with the keys present in the file. Failures exit with
//! status 1 and print `{"error":{"kind":...,"message":...}}` on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diagsearch::estimate::{per_question_sufficiency, sufficiency_curve, RaschParams};
use diagsearch::io;
use diagsearch::pipeline::{
    calibrate, compare_learner_means, estimate_snapshot, evaluate, run_search_with,
    EstimateConfig, Estimator, GaSettings, SearchConfig, SplitConfig,
};
use diagsearch::simulator::{simulate, SimConfig};
use diagsearch::{Algorithm, Error, Execution, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "diagsearch", version, about = "Generate diagnostic assessments from learner response data")]
struct Cli {
    /// Run everything on the current thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a learner population and write its interaction log and true snapshot.
    Simulate(SimulateArgs),
    /// Estimate a performance snapshot from an interaction log.
    Estimate(EstimateArgs),
    /// Calibrate lambda on the training learners of a snapshot.
    Calibrate(CalibrateArgs),
    /// Search for a K-question assessment.
    Search(SearchArgs),
    /// How the mean performance settles as learners are added.
    Sufficiency(SufficiencyArgs),
    /// Criteria of a given question list on training and test learners.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Fraction of learners used for training.
    #[arg(long, default_value_t = 0.8)]
    split_ratio: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

impl SplitArgs {
    fn config(&self) -> SplitConfig {
        SplitConfig {
            ratio: self.split_ratio,
            seed: self.split_seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 6000)]
    learners: usize,
    #[arg(long, default_value_t = 50)]
    questions: usize,
    #[arg(long, default_value_t = 5)]
    concepts: usize,
    #[arg(long, default_value_t = 0.25)]
    slip: f64,
    #[arg(long, default_value_t = 0.4)]
    growth_mean: f64,
    #[arg(long, default_value_t = 0.05)]
    growth_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Interaction log CSV.
    #[arg(long)]
    out: PathBuf,
    /// True snapshot CSV.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Interaction log CSV.
    #[arg(long)]
    interactions: PathBuf,
    #[arg(long, default_value = "rasch")]
    estimator: Estimator,
    /// Snapshot CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Laplace smoothing of the ratio estimator.
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    #[arg(long, default_value_t = 1e-4)]
    reg: f64,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// True snapshot to correlate per-learner means against.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long = "algo", default_value = "ga")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[command(flatten)]
    split: SplitArgs,
    /// Fixed lambda instead of calibrating one.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    lambda_samples: usize,
    #[arg(long, default_value_t = 0)]
    lambda_seed: u64,
    #[arg(long, default_value_t = 1000)]
    population: usize,
    #[arg(long, default_value_t = 5)]
    generations: usize,
    #[arg(long, default_value_t = 0.75)]
    p_c: f64,
    #[arg(long, default_value_t = 0.5)]
    p_m1: f64,
    #[arg(long, default_value_t = 0.25)]
    p_m2: f64,
    #[arg(long, default_value_t = 0.1)]
    tournament_fraction: f64,
    /// Return the best individual seen in any generation.
    #[arg(long)]
    track_best_ever: bool,
    /// Result JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the learner split used.
    #[arg(long)]
    split_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SufficiencyArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 100)]
    step: usize,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV of `count,delta`.
    #[arg(long)]
    out: PathBuf,
    /// CSV of `question_id,chosen_n` from per-question curves.
    #[arg(long)]
    per_question_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    snapshot: PathBuf,
    /// Comma-separated question ids.
    #[arg(long, value_delimiter = ',', required = true)]
    questions: Vec<String>,
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    split: SplitArgs,
    /// Split file written by `search --split-out`; overrides the split flags.
    #[arg(long)]
    split_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overlays `overlay` onto `base`, recursing into objects.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

fn with_config<T: Serialize + DeserializeOwned>(from_flags: T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(from_flags);
    };
    let overlay: Value = io::read_json(path)?;
    if !overlay.is_object() {
        return Err(Error::param("config", "must be a JSON object"));
    }
    let mut value = serde_json::to_value(from_flags)?;
    merge(&mut value, overlay);
    Ok(serde_json::from_value(value)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run_simulate(args: SimulateArgs, execution: Execution) -> Result<()> {
    let mut cfg = with_config(
        SimConfig {
            num_learners: args.learners,
            num_questions: args.questions,
            num_concepts: args.concepts,
            slip: args.slip,
            growth_mean: args.growth_mean,
            growth_std: args.growth_std,
            seed: args.seed,
            execution,
        },
        args.config.as_deref(),
    )?;
    cfg.execution = execution;
    let sim = simulate(&cfg)?;
    io::write_interactions(&sim.log, &args.out)?;
    if let Some(path) = &args.truth_out {
        io::write_snapshot(&sim.true_snapshot, path)?;
    }
    print_json(&json!({
        "learners": cfg.num_learners,
        "questions": cfg.num_questions,
        "interactions": sim.log.len(),
    }))
}

fn run_estimate(args: EstimateArgs) -> Result<()> {
    let cfg = with_config(
        EstimateConfig {
            estimator: args.estimator,
            split: args.split.config(),
            smoothing: args.smoothing,
            rasch: RaschParams {
                reg: args.reg,
                learning_rate: args.learning_rate,
                max_epochs: args.max_epochs,
                tol: args.tol,
            },
        },
        args.config.as_deref(),
    )?;
    let log = io::read_interactions(&args.interactions)?;
    let snapshot = estimate_snapshot(&log, &cfg)?;
    io::write_snapshot(&snapshot, &args.out)?;
    let mut summary = json!({
        "estimator": cfg.estimator,
        "questions": snapshot.n_questions(),
        "learners": snapshot.n_learners(),
    });
    if let Some(path) = &args.truth {
        let truth = io::read_snapshot(path)?;
        summary["correlation"] = serde_json::to_value(compare_learner_means(&snapshot, &truth)?)?;
    }
    print_json(&summary)
}

fn run_calibrate(args: CalibrateArgs) -> Result<()> {
    let snapshot = io::read_snapshot(&args.snapshot)?;
    let calibration = calibrate(&snapshot, &args.split.config(), args.k, args.samples, args.seed)?;
    if let Some(path) = &args.out {
        io::write_json(&calibration, path)?;
    }
    print_json(&calibration)
}

fn run_search(args: SearchArgs, execution: Execution) -> Result<()> {
    let cfg = with_config(
        SearchConfig {
            algorithm: args.algorithm,
            k: args.k,
            seed: args.seed,
            repeats: args.repeats,
            split: args.split.config(),
            lambda: args.lambda,
            lambda_samples: args.lambda_samples,
            lambda_seed: args.lambda_seed,
            ga: GaSettings {
                population_size: args.population,
                generations: args.generations,
                p_c: args.p_c,
                p_m1: args.p_m1,
                p_m2: args.p_m2,
                tournament_fraction: args.tournament_fraction,
                track_best_ever: args.track_best_ever,
            },
        },
        args.config.as_deref(),
    )?;
    let snapshot = io::read_snapshot(&args.snapshot)?;
    let doc = run_search_with(&snapshot, &cfg, execution)?;
    io::write_result(&doc, &args.out)?;
    if let Some(path) = &args.split_out {
        let split = cfg.split.split(snapshot.n_learners())?;
        io::write_split(&split, snapshot.learner_ids(), path)?;
    }
    print_json(&json!({
        "algorithm": doc.algorithm,
        "lambda": doc.lambda,
        "repeats": doc.runs.len(),
        "best_questions": doc
            .runs
            .iter()
            .max_by(|a, b| a.test.fitness.total_cmp(&b.test.fitness))
            .map(|r| r.questions.clone()),
        "test": doc.summary.test,
    }))
}

fn run_sufficiency(args: SufficiencyArgs) -> Result<()> {
    let snapshot = io::read_snapshot(&args.snapshot)?;
    let curve = sufficiency_curve(&snapshot, args.step, args.epsilon, args.window, args.seed)?;
    io::write_sufficiency(&curve, &args.out)?;
    if let Some(path) = &args.per_question_out {
        let curves = per_question_sufficiency(&snapshot, args.step, args.epsilon, args.window, args.seed)?;
        io::write_question_sufficiency(&snapshot, &curves, path)?;
    }
    print_json(&json!({
        "learners": snapshot.n_learners(),
        "points": curve.counts.len(),
        "chosen_n": curve.chosen_n,
    }))
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let snapshot = io::read_snapshot(&args.snapshot)?;
    let split = match &args.split_file {
        Some(path) => io::read_split(path, snapshot.learner_ids())?,
        None => args.split.config().split(snapshot.n_learners())?,
    };
    let evaluation = evaluate(&snapshot, &split, &args.questions, args.lambda)?;
    if let Some(path) = &args.out {
        io::write_json(&evaluation, path)?;
    }
    print_json(&evaluation)
}

fn run(cli: Cli) -> Result<()> {
    let execution = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Simulate(args) => run_simulate(args, execution),
        Command::Estimate(args) => run_estimate(args),
        Command::Calibrate(args) => run_calibrate(args),
        Command::Search(args) => run_search(args, execution),
        Command::Sufficiency(args) => run_sufficiency(args),
        Command::Evaluate(args) => run_evaluate(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": {"kind": e.kind(), "message": e.to_string()}}));
            ExitCode::FAILURE
        }
    }
}
