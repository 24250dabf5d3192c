//! Directional-default diagnostics and the option-perturbation control.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    decide, view_argmax, CandidateKind, CandidateSet, EngineConfig, HyperParams, QuestionRecord,
    Task, Truth, ViewKind,
};
use crate::error::{CadeError, Result};

/// Semantic direction of an ordinal option.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Lowest-development choice.
    Pessimistic,
    /// Middle choice.
    Conservative,
    /// Highest-development choice.
    Optimistic,
}

impl Direction {
    pub const ALL: [Direction; 3] = [
        Direction::Pessimistic,
        Direction::Conservative,
        Direction::Optimistic,
    ];
}

pub fn direction_of(index: usize, set_size: usize) -> Result<Direction> {
    match (set_size, index) {
        (3, 0) | (2, 0) => Ok(Direction::Pessimistic),
        (3, 1) => Ok(Direction::Conservative),
        (3, 2) | (2, 1) => Ok(Direction::Optimistic),
        (2 | 3, _) => Err(CadeError::invalid(format!(
            "option index {index} out of range for {set_size} options"
        ))),
        _ => Err(CadeError::invalid(format!(
            "directions are defined for 2 or 3 options, not {set_size}"
        ))),
    }
}

/// Share of predictions falling in each direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionFractions {
    pub count: usize,
    pub optimistic: f64,
    pub conservative: f64,
    pub pessimistic: f64,
}

impl DirectionFractions {
    fn from_counts(counts: [usize; 3]) -> Self {
        let n: usize = counts.iter().sum();
        let f = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        Self {
            count: n,
            pessimistic: f(counts[0]),
            conservative: f(counts[1]),
            optimistic: f(counts[2]),
        }
    }

    pub fn get(&self, d: Direction) -> f64 {
        match d {
            Direction::Pessimistic => self.pessimistic,
            Direction::Conservative => self.conservative,
            Direction::Optimistic => self.optimistic,
        }
    }
}

fn ensure_mcq(record: &QuestionRecord) -> Result<()> {
    if record.task != Task::Mcq {
        return Err(CadeError::invalid(format!(
            "record {} is not multiple-choice",
            record.id
        )));
    }
    Ok(())
}

fn tally(counts: &mut [usize; 3], d: Direction) {
    counts[d as usize] += 1;
}

/// Key for the pooled slice of [`directional_distribution`].
pub const ALL_SLICE: &str = "all";

/// Directions of a view's argmax, pooled (`"all"`) or per pillar (`"P1"`, ...).
pub fn directional_distribution(
    records: &[QuestionRecord],
    view: ViewKind,
    by_pillar: bool,
) -> Result<BTreeMap<String, DirectionFractions>> {
    if records.is_empty() {
        return Err(CadeError::invalid("no records"));
    }
    let floor = EngineConfig::default().prob_floor;
    let mut counts: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for r in records {
        ensure_mcq(r)?;
        let d = direction_of(view_argmax(r, view, floor)?, r.candidates.len())?;
        let key = if by_pillar {
            r.pillar.as_str().to_string()
        } else {
            ALL_SLICE.to_string()
        };
        tally(counts.entry(key).or_default(), d);
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, DirectionFractions::from_counts(c)))
        .collect())
}

/// Option-order or option-token perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationScheme {
    ReverseOrder,
    RandomOrder { seed: u64 },
    LowercaseToken,
    NumericToken,
}

impl PerturbationScheme {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationScheme::ReverseOrder => "reverse",
            PerturbationScheme::RandomOrder { .. } => "random",
            PerturbationScheme::LowercaseToken => "lowercase",
            PerturbationScheme::NumericToken => "numeric",
        }
    }

    fn is_order(&self) -> bool {
        matches!(
            self,
            PerturbationScheme::ReverseOrder | PerturbationScheme::RandomOrder { .. }
        )
    }
}

impl fmt::Display for PerturbationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationScheme::RandomOrder { seed } => write!(f, "random(seed={seed})"),
            other => f.write_str(other.name()),
        }
    }
}

/// `original_index[i]` is the unperturbed position of perturbed option `i`.
fn order_for(scheme: &PerturbationScheme, n: usize, stream: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    match scheme {
        PerturbationScheme::ReverseOrder => order.reverse(),
        PerturbationScheme::RandomOrder { seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            rng.set_stream(stream);
            order.shuffle(&mut rng);
        }
        _ => {}
    }
    order
}

fn relabel(label_index: usize, scheme: &PerturbationScheme, original: &str) -> String {
    match scheme {
        PerturbationScheme::LowercaseToken => original.to_lowercase(),
        PerturbationScheme::NumericToken => (label_index + 1).to_string(),
        _ => original.to_string(),
    }
}

fn perturb_with_stream(
    record: &QuestionRecord,
    scheme: &PerturbationScheme,
    stream: u64,
) -> Result<(QuestionRecord, Vec<usize>)> {
    ensure_mcq(record)?;
    let n = record.candidates.len();
    let order = order_for(scheme, n, stream);
    let labels: Vec<String> = order
        .iter()
        .map(|&o| relabel(o, scheme, record.candidates.label(o)))
        .collect();
    let mut out = record.clone();
    out.candidates = CandidateSet::new(CandidateKind::McqLetters, labels)?;
    if scheme.is_order() {
        for view in ViewKind::ALL {
            let src = record.logits.get(view);
            *out.logits.get_mut(view) = order.iter().map(|&o| src[o]).collect();
        }
    }
    if let Truth::Option(label) = &record.truth {
        let t = record.candidates.index_of(label).ok_or_else(|| {
            CadeError::invalid(format!("record {}: truth not a candidate", record.id))
        })?;
        out.truth = Truth::Option(relabel(t, scheme, label));
    }
    Ok((out, order))
}

/// Perturbs one record. The returned vector maps each perturbed option index
/// back to its original index.
pub fn perturb_record(
    record: &QuestionRecord,
    scheme: &PerturbationScheme,
) -> Result<(QuestionRecord, Vec<usize>)> {
    perturb_with_stream(record, scheme, 0)
}

/// What produces the answer being mapped to a direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Predictor {
    View(ViewKind),
    Cade { hp: HyperParams, cfg: EngineConfig },
}

impl Predictor {
    fn predict(&self, record: &QuestionRecord) -> Result<usize> {
        match self {
            Predictor::View(v) => view_argmax(record, *v, EngineConfig::default().prob_floor),
            Predictor::Cade { hp, cfg } => Ok(decide(record, hp, cfg)?.chosen_index),
        }
    }
}

/// How a perturbed prompt's logits relate to the original ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitBinding {
    /// Logits travel with their option (a model that reads option semantics).
    #[default]
    Semantic,
    /// Logits stay at their position (a model that only reads option slots).
    Positional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub scheme: String,
    pub fractions: DirectionFractions,
}

/// Direction table with an `Original` row followed by one row per scheme.
///
/// `RandomOrder` draws an independent permutation per record (stream = record
/// position) from the scheme's seed.
pub fn perturbation_report(
    records: &[QuestionRecord],
    schemes: &[PerturbationScheme],
    predictor: &Predictor,
    binding: LogitBinding,
) -> Result<Vec<PerturbationRow>> {
    if records.is_empty() {
        return Err(CadeError::invalid("no records"));
    }
    let mut rows = Vec::with_capacity(schemes.len() + 1);
    let mut counts = [0usize; 3];
    for r in records {
        ensure_mcq(r)?;
        tally(
            &mut counts,
            direction_of(predictor.predict(r)?, r.candidates.len())?,
        );
    }
    rows.push(PerturbationRow {
        scheme: "Original".into(),
        fractions: DirectionFractions::from_counts(counts),
    });
    for scheme in schemes {
        let mut counts = [0usize; 3];
        for (i, r) in records.iter().enumerate() {
            let (mut perturbed, original_index) = perturb_with_stream(r, scheme, i as u64)?;
            if binding == LogitBinding::Positional {
                perturbed.logits = r.logits.clone();
            }
            let j = predictor.predict(&perturbed)?;
            tally(
                &mut counts,
                direction_of(original_index[j], r.candidates.len())?,
            );
        }
        rows.push(PerturbationRow {
            scheme: scheme.to_string(),
            fractions: DirectionFractions::from_counts(counts),
        });
    }
    Ok(rows)
}

/// CSV with columns `scheme,Optimistic,Conservative,Pessimistic` (fractions).
pub fn write_perturbation_csv<W: Write>(rows: &[PerturbationRow], out: W) -> Result<()> {
    let io = crate::metrics::csv_error;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "Optimistic", "Conservative", "Pessimistic"])
        .map_err(io)?;
    for row in rows {
        let f = &row.fractions;
        w.write_record([
            row.scheme.clone(),
            f.optimistic.to_string(),
            f.conservative.to_string(),
            f.pessimistic.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `slice,count,Optimistic,Conservative,Pessimistic`.
pub fn write_distribution_csv<W: Write>(
    dist: &BTreeMap<String, DirectionFractions>,
    out: W,
) -> Result<()> {
    let io = crate::metrics::csv_error;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slice",
        "count",
        "Optimistic",
        "Conservative",
        "Pessimistic",
    ])
    .map_err(io)?;
    for (slice, f) in dist {
        w.write_record([
            slice.clone(),
            f.count.to_string(),
            f.optimistic.to_string(),
            f.conservative.to_string(),
            f.pessimistic.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
