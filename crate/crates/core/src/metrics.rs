//! Benchmark metrics and the aggregated run report.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{
    view_argmax, ContextTest, Decision, Pillar, QuestionRecord, Task, ViewKind, DEFAULT_PROB_FLOOR,
};
use crate::error::{CadeError, Result};
use crate::regression::resolve_value;

/// Per-indicator tolerances for interval accuracy, keyed by normalized name.
#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceTable {
    entries: BTreeMap<String, f64>,
}

fn normalize_indicator(name: &str) -> String {
    name.trim().to_lowercase()
}

impl Default for ToleranceTable {
    fn default() -> Self {
        Self::new([
            ("under 5 mortality rate", 5.0),
            ("women bmi", 1.0),
            ("asset index", 0.75),
            ("sanitation index", 0.75),
            ("water index", 0.75),
            ("women edu", 1.5),
        ])
        .expect("built-in tolerances are positive")
    }
}

impl ToleranceTable {
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, delta) in entries {
            if delta.is_nan() || delta <= 0.0 {
                return Err(CadeError::invalid(format!(
                    "tolerance for `{}` must be positive, got {delta}",
                    name.as_ref()
                )));
            }
            map.insert(normalize_indicator(name.as_ref()), delta);
        }
        Ok(Self { entries: map })
    }

    /// Case-insensitive, whitespace-trimmed lookup.
    pub fn get(&self, indicator: &str) -> Result<f64> {
        self.entries
            .get(&normalize_indicator(indicator))
            .copied()
            .ok_or_else(|| CadeError::UnknownIndicator(indicator.to_string()))
    }

    pub fn indicators(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Fraction of exact label matches.
pub fn accuracy<P: AsRef<str>, T: AsRef<str>>(predictions: &[P], truths: &[T]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(CadeError::invalid(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(CadeError::invalid("accuracy of an empty set"));
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

fn mcq_truth(record: &QuestionRecord) -> Result<usize> {
    if record.task != Task::Mcq {
        return Err(CadeError::invalid(format!(
            "record {} is not multiple-choice",
            record.id
        )));
    }
    record
        .truth_index()
        .ok_or_else(|| CadeError::invalid(format!("record {} has no truth label", record.id)))
}

fn view_hits(records: &[QuestionRecord], view: ViewKind) -> Result<Vec<bool>> {
    records
        .iter()
        .map(|r| Ok(view_argmax(r, view, DEFAULT_PROB_FLOOR)? == mcq_truth(r)?))
        .collect()
}

fn rate(hits: &[bool]) -> f64 {
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

/// Accuracy of each single view's argmax.
pub fn per_view_accuracy(records: &[QuestionRecord]) -> Result<BTreeMap<ViewKind, f64>> {
    if records.is_empty() {
        return Err(CadeError::invalid("no records"));
    }
    ViewKind::ALL
        .into_iter()
        .map(|v| Ok((v, rate(&view_hits(records, v)?))))
        .collect()
}

/// Full-view accuracy minus CTX-view accuracy, per pillar present in the input.
pub fn delta_acc(records: &[QuestionRecord]) -> Result<BTreeMap<Pillar, f64>> {
    let full = view_hits(records, ViewKind::Full)?;
    let ctx = view_hits(records, ViewKind::Ctx)?;
    let mut tallies: BTreeMap<Pillar, (usize, i64)> = BTreeMap::new();
    for ((r, f), c) in records.iter().zip(full).zip(ctx) {
        let e = tallies.entry(r.pillar).or_default();
        e.0 += 1;
        e.1 += f as i64 - c as i64;
    }
    Ok(tallies
        .into_iter()
        .map(|(p, (n, diff))| (p, diff as f64 / n as f64))
        .collect())
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(CadeError::invalid(format!(
            "mae needs equal non-empty inputs, got {} and {}",
            predictions.len(),
            truths.len()
        )));
    }
    let total: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Fraction of predictions within their indicator's tolerance.
pub fn interval_accuracy<S: AsRef<str>>(
    predictions: &[f64],
    truths: &[f64],
    indicators: &[S],
    table: &ToleranceTable,
) -> Result<f64> {
    if predictions.len() != truths.len() || predictions.len() != indicators.len() {
        return Err(CadeError::invalid(
            "interval accuracy inputs differ in length",
        ));
    }
    if predictions.is_empty() {
        return Err(CadeError::invalid("interval accuracy of an empty set"));
    }
    let mut hits = 0usize;
    for ((p, t), ind) in predictions.iter().zip(truths).zip(indicators) {
        if (p - t).abs() <= table.get(ind.as_ref())? {
            hits += 1;
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

/// A rate together with the number of records it was measured on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub count: usize,
    pub value: f64,
}

/// Aggregated metrics for one run. Fields are declared alphabetically so the
/// serialized JSON has a fixed key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Decision accuracy over multiple-choice records.
    pub accuracy: Option<f64>,
    pub accuracy_by_context_test: BTreeMap<ContextTest, Slice>,
    pub accuracy_by_pillar: BTreeMap<Pillar, Slice>,
    /// Single-view argmax accuracy.
    pub accuracy_by_view: BTreeMap<ViewKind, Slice>,
    pub delta_acc: BTreeMap<Pillar, Slice>,
    pub gated_fraction: f64,
    pub interval_accuracy: Option<f64>,
    pub mae: Option<f64>,
    pub mae_by_pillar: BTreeMap<Pillar, Slice>,
    pub mcq_count: usize,
    pub regression_count: usize,
    pub total_count: usize,
}

fn sliced<K: Ord + Copy>(
    keys: impl Iterator<Item = K>,
    values: impl Iterator<Item = f64>,
) -> BTreeMap<K, Slice> {
    let mut acc: BTreeMap<K, (usize, f64)> = BTreeMap::new();
    for (k, v) in keys.zip(values) {
        let e = acc.entry(k).or_default();
        e.0 += 1;
        e.1 += v;
    }
    acc.into_iter()
        .map(|(k, (count, sum))| {
            (
                k,
                Slice {
                    count,
                    value: sum / count as f64,
                },
            )
        })
        .collect()
}

/// Assembles every metric for a set of records and their aligned decisions.
pub fn build_report(
    records: &[QuestionRecord],
    decisions: &[Decision],
    table: &ToleranceTable,
) -> Result<RunReport> {
    if records.is_empty() {
        return Err(CadeError::invalid("a report needs at least one record"));
    }
    if records.len() != decisions.len() {
        return Err(CadeError::invalid(format!(
            "{} records but {} decisions",
            records.len(),
            decisions.len()
        )));
    }
    let (mcq, reg): (Vec<_>, Vec<_>) = records
        .iter()
        .zip(decisions)
        .partition(|(r, _)| r.task == Task::Mcq);

    let mut report = RunReport {
        accuracy: None,
        accuracy_by_context_test: BTreeMap::new(),
        accuracy_by_pillar: BTreeMap::new(),
        accuracy_by_view: BTreeMap::new(),
        delta_acc: BTreeMap::new(),
        gated_fraction: decisions.iter().filter(|d| d.gated).count() as f64
            / decisions.len() as f64,
        interval_accuracy: None,
        mae: None,
        mae_by_pillar: BTreeMap::new(),
        mcq_count: mcq.len(),
        regression_count: reg.len(),
        total_count: records.len(),
    };

    if !mcq.is_empty() {
        let mut hits = Vec::with_capacity(mcq.len());
        for (r, d) in &mcq {
            if d.chosen_index >= r.candidates.len() {
                return Err(CadeError::invalid(format!(
                    "decision for {} is out of range",
                    r.id
                )));
            }
            hits.push(if d.chosen_index == mcq_truth(r)? {
                1.0
            } else {
                0.0
            });
        }
        report.accuracy = Some(hits.iter().sum::<f64>() / hits.len() as f64);
        report.accuracy_by_pillar = sliced(mcq.iter().map(|(r, _)| r.pillar), hits.iter().copied());
        report.accuracy_by_context_test = sliced(
            mcq.iter().map(|(r, _)| r.context_test),
            hits.iter().copied(),
        );

        let mcq_records: Vec<QuestionRecord> = mcq.iter().map(|(r, _)| (*r).clone()).collect();
        for view in ViewKind::ALL {
            let h = view_hits(&mcq_records, view)?;
            report.accuracy_by_view.insert(
                view,
                Slice {
                    count: h.len(),
                    value: rate(&h),
                },
            );
        }
        let counts = sliced(mcq.iter().map(|(r, _)| r.pillar), std::iter::repeat(0.0));
        report.delta_acc = delta_acc(&mcq_records)?
            .into_iter()
            .map(|(p, value)| {
                (
                    p,
                    Slice {
                        count: counts[&p].count,
                        value,
                    },
                )
            })
            .collect();
    }

    if !reg.is_empty() {
        let mut preds = Vec::with_capacity(reg.len());
        let mut truths = Vec::with_capacity(reg.len());
        let mut indicators = Vec::with_capacity(reg.len());
        for (r, d) in &reg {
            preds.push(resolve_value(r, &d.chosen)?.value);
            truths.push(r.truth_value().expect("validated regression truth"));
            indicators.push(r.indicator.as_str());
        }
        report.mae = Some(mae(&preds, &truths)?);
        report.interval_accuracy = Some(interval_accuracy(&preds, &truths, &indicators, table)?);
        report.mae_by_pillar = sliced(
            reg.iter().map(|(r, _)| r.pillar),
            preds.iter().zip(&truths).map(|(p, t)| (p - t).abs()),
        );
    }
    Ok(report)
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Flattened `(section, key, count, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        let mut row = |section: &str, key: &str, count: usize, value: f64| {
            rows.push(ReportRow {
                section: section.to_string(),
                key: key.to_string(),
                count,
                value,
            })
        };
        if let Some(a) = self.accuracy {
            row("overall", "accuracy", self.mcq_count, a);
        }
        if let Some(m) = self.mae {
            row("overall", "mae", self.regression_count, m);
        }
        if let Some(i) = self.interval_accuracy {
            row("overall", "interval_accuracy", self.regression_count, i);
        }
        row(
            "overall",
            "gated_fraction",
            self.total_count,
            self.gated_fraction,
        );
        for (k, s) in &self.accuracy_by_pillar {
            row("accuracy_by_pillar", k.as_str(), s.count, s.value);
        }
        for (k, s) in &self.accuracy_by_context_test {
            row("accuracy_by_context_test", k.as_str(), s.count, s.value);
        }
        for (k, s) in &self.accuracy_by_view {
            row("accuracy_by_view", k.as_str(), s.count, s.value);
        }
        for (k, s) in &self.delta_acc {
            row("delta_acc", k.as_str(), s.count, s.value);
        }
        for (k, s) in &self.mae_by_pillar {
            row("mae_by_pillar", k.as_str(), s.count, s.value);
        }
        rows
    }

    /// CSV with header `section,key,count,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.rows() {
            w.serialize(r).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One line of the flattened report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub section: String,
    pub key: String,
    pub count: usize,
    pub value: f64,
}

pub(crate) fn csv_error(e: csv::Error) -> CadeError {
    CadeError::Io(std::io::Error::other(e))
}
