//! JSONL record format.
//!
//! One UTF-8 JSON object per line:
//!
//! ```text
//! {"id":"r1","pillar":"P1","task":"mcq","indicator":"women bmi","context_test":"T1",
//!  "candidates":["A","B","C"],"logits":{"q":[..],"ctx":[..],"img":[..],"full":[..]},
//!  "truth":{"option":"A"}}
//! ```
//!
//! Regression records use digit candidates `"0".."9"`, `"truth":{"value":48.0}`
//! and may carry `view_values` (view → rendered answer) and `completions`
//! (digit → number). `provenance` is an optional opaque string. Blank lines are
//! skipped.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{
    CandidateKind, CandidateSet, ContextTest, PerView, Pillar, QuestionRecord, Task, Truth,
    ViewKind,
};
use crate::error::{CadeError, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogitsWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ctx: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    img: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    full: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordWire {
    id: String,
    pillar: Pillar,
    task: Task,
    indicator: String,
    context_test: ContextTest,
    candidates: Vec<String>,
    logits: LogitsWire,
    truth: Truth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    view_values: Option<BTreeMap<ViewKind, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    completions: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

impl From<&QuestionRecord> for RecordWire {
    fn from(r: &QuestionRecord) -> Self {
        RecordWire {
            id: r.id.clone(),
            pillar: r.pillar,
            task: r.task,
            indicator: r.indicator.clone(),
            context_test: r.context_test,
            candidates: r.candidates.labels().to_vec(),
            logits: LogitsWire {
                q: Some(r.logits.q.clone()),
                ctx: Some(r.logits.ctx.clone()),
                img: Some(r.logits.img.clone()),
                full: Some(r.logits.full.clone()),
            },
            truth: r.truth.clone(),
            view_values: r.view_values.clone(),
            completions: r.completions.clone(),
            provenance: r.provenance.clone(),
        }
    }
}

impl RecordWire {
    fn into_record(self) -> Result<QuestionRecord> {
        let id = self.id;
        let take = |v: Option<Vec<f64>>, view: ViewKind| {
            v.ok_or_else(|| {
                CadeError::validation(&id, &format!("logits.{view}"), "view is missing")
            })
        };
        let logits = PerView {
            q: take(self.logits.q, ViewKind::Q)?,
            ctx: take(self.logits.ctx, ViewKind::Ctx)?,
            img: take(self.logits.img, ViewKind::Img)?,
            full: take(self.logits.full, ViewKind::Full)?,
        };
        let kind = match self.task {
            Task::Mcq => CandidateKind::McqLetters,
            Task::Regression => CandidateKind::Digits,
        };
        let candidates = CandidateSet::new(kind, self.candidates)
            .map_err(|e| CadeError::validation(&id, "candidates", e.to_string()))?;
        let record = QuestionRecord {
            id,
            pillar: self.pillar,
            task: self.task,
            indicator: self.indicator,
            context_test: self.context_test,
            candidates,
            logits,
            truth: self.truth,
            view_values: self.view_values,
            completions: self.completions,
            provenance: self.provenance,
        };
        record.validate()?;
        Ok(record)
    }
}

/// Parses one JSONL line (1-based `line` for error messages).
pub fn parse_record(text: &str, line: usize) -> Result<QuestionRecord> {
    let wire: RecordWire = serde_json::from_str(text).map_err(|e| CadeError::Parse {
        line,
        message: e.to_string(),
    })?;
    let record = wire.into_record().map_err(|e| e.at_line(line))?;
    if record.context_test == ContextTest::T5 && record.logits.ctx != record.logits.q {
        log::warn!(
            "line {line}: record {} is T5 but its ctx logits differ from q",
            record.id
        );
    }
    Ok(record)
}

/// Canonical single-line JSON for a record (no trailing newline).
pub fn record_to_line(record: &QuestionRecord) -> String {
    serde_json::to_string(&RecordWire::from(record)).expect("records serialize")
}

pub fn read_records_from<R: BufRead>(reader: R) -> Result<Vec<QuestionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?);
    }
    Ok(out)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<QuestionRecord>> {
    let path = path.as_ref();
    read_records_from(BufReader::new(
        File::open(path).map_err(|e| CadeError::io_at(path, e))?,
    ))
}

pub fn write_records_to<W: Write>(mut out: W, records: &[QuestionRecord]) -> Result<()> {
    for r in records {
        out.write_all(record_to_line(r).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records(path: impl AsRef<Path>, records: &[QuestionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CadeError::io_at(path, e))?;
    write_records_to(BufWriter::new(file), records)
}
