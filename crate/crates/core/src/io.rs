//! File formats.
//!
//! * Interaction CSV: header `learner_id,question_id,correct,order`, `correct`
//!   is `0` or `1`, `order` a non-negative integer strictly increasing per
//!   learner.
//! * Snapshot CSV: header `question_id,<learner ids...>`, then one row per
//!   question: its id followed by one probability per learner, written with 6
//!   decimals.
//! * Split JSON and result JSON, both carrying `schema_version: 1`.
//! * Sufficiency CSV: `count,delta`; per-question sufficiency CSV:
//!   `question_id,chosen_n` with an empty cell when no count qualifies.
//!
//! Readers reject malformed input with the offending line (and column for
//! snapshot cells) instead of coercing it.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::SufficiencyCurve;
use crate::model::{IdMap, Interaction, InteractionLog, LearnerSplit, Snapshot};
use crate::pipeline::ResultDocument;

pub const SCHEMA_VERSION: u32 = 1;
pub const INTERACTION_HEADER: [&str; 4] = ["learner_id", "question_id", "correct", "order"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn reader(file: File) -> csv::Reader<File> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file)
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_interactions(path: impl AsRef<Path>) -> Result<InteractionLog> {
    let mut rdr = reader(open(path.as_ref())?);
    let mut rows = rdr.records();
    let header = rows.next().ok_or_else(|| parse_err(1, "missing header"))??;
    if header.iter().ne(INTERACTION_HEADER) {
        return Err(parse_err(
            1,
            format!("expected header `{}`", INTERACTION_HEADER.join(",")),
        ));
    }

    let mut records = Vec::new();
    let mut last_order: HashMap<String, u64> = HashMap::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, got {}", row.len())));
        }
        let (learner, question) = (&row[0], &row[1]);
        if learner.is_empty() || question.is_empty() {
            return Err(parse_err(line, "empty learner or question id"));
        }
        let correct = match &row[2] {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err(line, "correct must be 0 or 1")),
        };
        let order: u64 = row[3]
            .parse()
            .map_err(|_| parse_err(line, "order must be a non-negative integer"))?;
        if let Some(prev) = last_order.insert(learner.to_owned(), order) {
            if order <= prev {
                return Err(Error::NonMonotoneOrder {
                    learner: learner.to_owned(),
                    line,
                });
            }
        }
        records.push(Interaction {
            learner: learner.to_owned(),
            question: question.to_owned(),
            correct,
            order,
        });
    }
    Ok(InteractionLog::new(records))
}

pub fn write_interactions(log: &InteractionLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{}", INTERACTION_HEADER.join(","))?;
        for r in &log.records {
            writeln!(out, "{},{},{},{}", r.learner, r.question, u8::from(r.correct), r.order)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn write_snapshot(snapshot: &Snapshot, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        write!(out, "question_id")?;
        for id in snapshot.learner_ids().ids() {
            write!(out, ",{id}")?;
        }
        writeln!(out)?;
        for q in 0..snapshot.n_questions() {
            write!(out, "{}", snapshot.question_ids().external(q))?;
            for v in snapshot.row(q) {
                write!(out, ",{v:.6}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn write_sufficiency(curve: &SufficiencyCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "count,delta")?;
        for (count, delta) in curve.counts.iter().zip(&curve.deltas) {
            writeln!(out, "{count},{delta:.9}")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// One row per question of `snapshot`, `curves` in question order.
pub fn write_question_sufficiency(
    snapshot: &Snapshot,
    curves: &[SufficiencyCurve],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "question_id,chosen_n")?;
        for (q, curve) in curves.iter().enumerate() {
            let n = curve.chosen_n.map(|n| n.to_string()).unwrap_or_default();
            writeln!(out, "{},{n}", snapshot.question_ids().external(q))?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Snapshot> {
    let mut rdr = reader(open(path.as_ref())?);
    let mut rows = rdr.records();
    let header = rows.next().ok_or_else(|| parse_err(1, "missing header"))??;
    if header.get(0) != Some("question_id") || header.len() < 2 {
        return Err(parse_err(
            1,
            "expected header `question_id,<learner ids...>` with at least one learner",
        ));
    }
    let learners = IdMap::from_ids(header.iter().skip(1))
        .map_err(|e| parse_err(1, e.to_string()))?;
    let width = header.len();

    let mut questions = IdMap::new();
    let mut values = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(parse_err(
                line,
                format!("ragged row: expected {width} fields, got {}", row.len()),
            ));
        }
        let id = &row[0];
        if questions.index_of(id).is_some() {
            return Err(parse_err(line, format!("duplicate question id `{id}`")));
        }
        questions.insert(id);
        for (col, cell) in row.iter().enumerate().skip(1) {
            let v: f64 = cell.parse().map_err(|_| {
                parse_err(line, format!("non-numeric value `{cell}` in column {}", col + 1))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(parse_err(
                    line,
                    format!("value {cell} in column {} is outside [0, 1]", col + 1),
                ));
            }
            values.push(v);
        }
    }
    if questions.is_empty() {
        return Err(parse_err(2, "snapshot has no question rows"));
    }
    Snapshot::new(values, questions, learners)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitFile {
    schema_version: u32,
    seed: u64,
    ratio: f64,
    train: Vec<String>,
    test: Vec<String>,
}

/// Writes a split with learners named by their external ids.
pub fn write_split(split: &LearnerSplit, learners: &IdMap, path: impl AsRef<Path>) -> Result<()> {
    let file = SplitFile {
        schema_version: SCHEMA_VERSION,
        seed: split.seed,
        ratio: split.ratio,
        train: split.train.iter().map(|&l| learners.external(l).to_owned()).collect(),
        test: split.test.iter().map(|&l| learners.external(l).to_owned()).collect(),
    };
    write_json(&file, path)
}

pub fn read_split(path: impl AsRef<Path>, learners: &IdMap) -> Result<LearnerSplit> {
    let file: SplitFile = read_json(path)?;
    let resolve = |ids: &[String]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| learners.index_of(id).ok_or_else(|| Error::UnknownId(id.clone())))
            .collect()
    };
    let split = LearnerSplit {
        train: resolve(&file.train)?,
        test: resolve(&file.test)?,
        seed: file.seed,
        ratio: file.ratio,
    };
    let mut seen = vec![false; learners.len()];
    for &l in split.train.iter().chain(&split.test) {
        if std::mem::replace(&mut seen[l], true) {
            return Err(Error::Shape(format!(
                "learner `{}` appears twice in split",
                learners.external(l)
            )));
        }
    }
    Ok(split)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let file = open(path.as_ref())?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

pub fn write_result(doc: &ResultDocument, path: impl AsRef<Path>) -> Result<()> {
    write_json(doc, path)
}

pub fn read_result(path: impl AsRef<Path>) -> Result<ResultDocument> {
    read_json(path)
}
