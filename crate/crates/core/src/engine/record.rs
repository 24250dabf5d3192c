//! Benchmark record types: views, candidate sets and the question record itself.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CadeError, Result};

/// One of the four input regimes a model is queried under.
///
/// Declaration order is the canonical iteration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    /// Question only.
    Q,
    /// Structured context + question.
    Ctx,
    /// Image + question.
    Img,
    /// Image + context + question.
    Full,
}

impl ViewKind {
    pub const ALL: [ViewKind; 4] = [ViewKind::Q, ViewKind::Ctx, ViewKind::Img, ViewKind::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Q => "q",
            ViewKind::Ctx => "ctx",
            ViewKind::Img => "img",
            ViewKind::Full => "full",
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ViewKind {
    type Err = CadeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "q" => Ok(ViewKind::Q),
            "ctx" => Ok(ViewKind::Ctx),
            "img" => Ok(ViewKind::Img),
            "full" => Ok(ViewKind::Full),
            other => Err(CadeError::invalid(format!("unknown view `{other}`"))),
        }
    }
}

/// A value held once per view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerView<T> {
    pub q: T,
    pub ctx: T,
    pub img: T,
    pub full: T,
}

impl<T> PerView<T> {
    pub fn get(&self, view: ViewKind) -> &T {
        match view {
            ViewKind::Q => &self.q,
            ViewKind::Ctx => &self.ctx,
            ViewKind::Img => &self.img,
            ViewKind::Full => &self.full,
        }
    }

    pub fn get_mut(&mut self, view: ViewKind) -> &mut T {
        match view {
            ViewKind::Q => &mut self.q,
            ViewKind::Ctx => &mut self.ctx,
            ViewKind::Img => &mut self.img,
            ViewKind::Full => &mut self.full,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(ViewKind, &T) -> U) -> PerView<U> {
        PerView {
            q: f(ViewKind::Q, &self.q),
            ctx: f(ViewKind::Ctx, &self.ctx),
            img: f(ViewKind::Img, &self.img),
            full: f(ViewKind::Full, &self.full),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(ViewKind, &T) -> Result<U>) -> Result<PerView<U>> {
        Ok(PerView {
            q: f(ViewKind::Q, &self.q)?,
            ctx: f(ViewKind::Ctx, &self.ctx)?,
            img: f(ViewKind::Img, &self.img)?,
            full: f(ViewKind::Full, &self.full)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (ViewKind, &T)> {
        ViewKind::ALL.into_iter().map(move |v| (v, self.get(v)))
    }
}

/// Per-view pre-softmax logits, each aligned with the record's candidate set.
pub type ViewLogits = PerView<Vec<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    McqLetters,
    Digits,
}

/// Ordered candidate labels. Position encodes the ordinal development axis
/// (index 0 = lowest development).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    kind: CandidateKind,
    labels: Vec<String>,
}

pub const DIGIT_LABELS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];

impl CandidateSet {
    pub fn new(kind: CandidateKind, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(CadeError::invalid("candidate set is empty"));
        }
        if !(2..=10).contains(&labels.len()) {
            return Err(CadeError::invalid(format!(
                "candidate set has {} labels, expected 2..=10",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(CadeError::invalid(format!(
                    "duplicate candidate label `{l}`"
                )));
            }
        }
        match kind {
            CandidateKind::McqLetters if !(2..=3).contains(&labels.len()) => {
                return Err(CadeError::invalid(format!(
                    "multiple-choice sets take 2 or 3 options, got {}",
                    labels.len()
                )))
            }
            CandidateKind::Digits if labels.iter().map(String::as_str).ne(DIGIT_LABELS) => {
                return Err(CadeError::invalid(
                    "digit candidates must be exactly 0..9 in order",
                ))
            }
            _ => {}
        }
        Ok(Self { kind, labels })
    }

    /// `A`, `B`, (`C`).
    pub fn letters(n: usize) -> Result<Self> {
        let labels = (0..n)
            .map(|i| char::from(b'A' + i as u8).to_string())
            .collect();
        Self::new(CandidateKind::McqLetters, labels)
    }

    pub fn digits() -> Self {
        Self {
            kind: CandidateKind::Digits,
            labels: DIGIT_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn kind(&self) -> CandidateKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Indicator group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pillar {
    /// Health & Nutrition.
    P1,
    /// Basic Services & Infrastructure.
    P2,
    /// Human Capital & Development.
    P3,
}

impl Pillar {
    pub const ALL: [Pillar; 3] = [Pillar::P1, Pillar::P2, Pillar::P3];

    pub fn as_str(self) -> &'static str {
        match self {
            Pillar::P1 => "P1",
            Pillar::P2 => "P2",
            Pillar::P3 => "P3",
        }
    }
}

impl fmt::Display for Pillar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mcq,
    Regression,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mcq => "mcq",
            Task::Regression => "regression",
        }
    }
}

/// Graded availability of structured context: T1/T2 value-given (full/reduced),
/// T3/T4 name-only hints (full/reduced), T5 no context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContextTest {
    T1,
    T2,
    T3,
    T4,
    T5,
}

impl ContextTest {
    pub const ALL: [ContextTest; 5] = [
        ContextTest::T1,
        ContextTest::T2,
        ContextTest::T3,
        ContextTest::T4,
        ContextTest::T5,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextTest::T1 => "T1",
            ContextTest::T2 => "T2",
            ContextTest::T3 => "T3",
            ContextTest::T4 => "T4",
            ContextTest::T5 => "T5",
        }
    }
}

impl fmt::Display for ContextTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground truth: an option label for MCQ, a number for regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Option(String),
    Value(f64),
}

/// One benchmark item.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionRecord {
    pub id: String,
    pub pillar: Pillar,
    pub task: Task,
    pub indicator: String,
    pub context_test: ContextTest,
    pub candidates: CandidateSet,
    pub logits: ViewLogits,
    pub truth: Truth,
    /// Rendered value each view would generate (regression only).
    pub view_values: Option<BTreeMap<ViewKind, String>>,
    /// Final numeric value reached after each possible first digit (regression only).
    pub completions: Option<BTreeMap<String, f64>>,
    pub provenance: Option<String>,
}

impl QuestionRecord {
    /// Checks every record invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        let id = self.id.as_str();
        let n = self.candidates.len();
        let expected_kind = match self.task {
            Task::Mcq => CandidateKind::McqLetters,
            Task::Regression => CandidateKind::Digits,
        };
        if self.candidates.kind() != expected_kind {
            return Err(CadeError::validation(
                id,
                "candidates",
                format!(
                    "{} records need {:?} candidates",
                    self.task.as_str(),
                    expected_kind
                ),
            ));
        }
        for (view, v) in self.logits.iter() {
            if v.len() != n {
                return Err(CadeError::validation(
                    id,
                    &format!("logits.{view}"),
                    format!("length {} does not match {} candidates", v.len(), n),
                ));
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(CadeError::validation(
                    id,
                    &format!("logits.{view}"),
                    format!("non-finite entry {bad}"),
                ));
            }
        }
        match (&self.task, &self.truth) {
            (Task::Mcq, Truth::Option(label)) => {
                if self.candidates.index_of(label).is_none() {
                    return Err(CadeError::validation(
                        id,
                        "truth",
                        format!("label `{label}` is not a candidate"),
                    ));
                }
            }
            (Task::Regression, Truth::Value(v)) => {
                if !v.is_finite() {
                    return Err(CadeError::validation(id, "truth", "non-finite value"));
                }
            }
            (task, _) => {
                return Err(CadeError::validation(
                    id,
                    "truth",
                    format!("truth kind does not match task {}", task.as_str()),
                ))
            }
        }
        if let Some(c) = &self.completions {
            if self.task != Task::Regression {
                return Err(CadeError::validation(
                    id,
                    "completions",
                    "only allowed on regression records",
                ));
            }
            for (k, v) in c {
                if !DIGIT_LABELS.contains(&k.as_str()) {
                    return Err(CadeError::validation(
                        id,
                        "completions",
                        format!("key `{k}` is not a digit"),
                    ));
                }
                if !v.is_finite() {
                    return Err(CadeError::validation(
                        id,
                        "completions",
                        format!("non-finite value for `{k}`"),
                    ));
                }
            }
        }
        if self.view_values.is_some() && self.task != Task::Regression {
            return Err(CadeError::validation(
                id,
                "view_values",
                "only allowed on regression records",
            ));
        }
        Ok(())
    }

    /// Index of the truth label; `None` for regression records.
    pub fn truth_index(&self) -> Option<usize> {
        match &self.truth {
            Truth::Option(label) => self.candidates.index_of(label),
            Truth::Value(_) => None,
        }
    }

    pub fn truth_value(&self) -> Option<f64> {
        match self.truth {
            Truth::Value(v) => Some(v),
            Truth::Option(_) => None,
        }
    }
}
