//! First-digit debiasing for numeric answers.
//!
//! Only the first generated token is debiased. Its candidates are the digits
//! 0..9. The chosen digit is then turned into a number, either by looking up the
//! completion the model produced after that digit or, failing that, by
//! substituting the digit into the Full view's rendered answer.

use serde::{Deserialize, Serialize};

use crate::engine::{
    decide, CandidateKind, Decision, EngineConfig, HyperParams, QuestionRecord, Task, ViewKind,
    DIGIT_LABELS,
};
use crate::error::{CadeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    CompletionMap,
    LeadingDigitSubstitution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedValue {
    pub value: f64,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DigitDecision {
    pub decision: Decision,
    pub resolved_value: f64,
    pub resolution: Resolution,
}

fn ensure_digit_record(record: &QuestionRecord) -> Result<()> {
    if record.task != Task::Regression || record.candidates.kind() != CandidateKind::Digits {
        return Err(CadeError::invalid(format!(
            "record {} is not a first-digit regression record",
            record.id
        )));
    }
    Ok(())
}

/// Debiases the first-digit distribution of a regression record.
pub fn debias_first_digit(
    record: &QuestionRecord,
    hp: &HyperParams,
    cfg: &EngineConfig,
) -> Result<Decision> {
    ensure_digit_record(record)?;
    decide(record, hp, cfg)
}

/// Replaces the first ASCII digit in `rendered` with `digit`.
pub fn substitute_leading_digit(rendered: &str, digit: char) -> Option<String> {
    let pos = rendered.find(|c: char| c.is_ascii_digit())?;
    let mut out = String::with_capacity(rendered.len());
    out.push_str(&rendered[..pos]);
    out.push(digit);
    out.push_str(&rendered[pos + 1..]);
    Some(out)
}

/// Turns a chosen first digit into the record's final numeric prediction.
pub fn resolve_value(record: &QuestionRecord, chosen_digit: &str) -> Result<ResolvedValue> {
    ensure_digit_record(record)?;
    if !DIGIT_LABELS.contains(&chosen_digit) {
        return Err(CadeError::invalid(format!(
            "`{chosen_digit}` is not a digit"
        )));
    }
    if let Some(v) = record
        .completions
        .as_ref()
        .and_then(|c| c.get(chosen_digit))
    {
        return Ok(ResolvedValue {
            value: *v,
            resolution: Resolution::CompletionMap,
        });
    }
    let Some(rendered) = record
        .view_values
        .as_ref()
        .and_then(|v| v.get(&ViewKind::Full))
    else {
        return Err(CadeError::UnresolvableRegression {
            id: record.id.clone(),
            digit: chosen_digit.to_string(),
        });
    };
    let malformed = |reason: &str| CadeError::MalformedRecord {
        id: record.id.clone(),
        field: "view_values.full".into(),
        reason: format!("{reason}: `{rendered}`"),
    };
    let digit = chosen_digit
        .chars()
        .next()
        .expect("digit labels are one char");
    let substituted =
        substitute_leading_digit(rendered, digit).ok_or_else(|| malformed("no digit"))?;
    let value: f64 = substituted
        .trim()
        .parse()
        .map_err(|_| malformed("not a number"))?;
    if !value.is_finite() {
        return Err(malformed("not finite"));
    }
    Ok(ResolvedValue {
        value,
        resolution: Resolution::LeadingDigitSubstitution,
    })
}

/// Debias, then resolve.
pub fn debias_regression(
    record: &QuestionRecord,
    hp: &HyperParams,
    cfg: &EngineConfig,
) -> Result<DigitDecision> {
    let decision = debias_first_digit(record, hp, cfg)?;
    let resolved = resolve_value(record, &decision.chosen)?;
    Ok(DigitDecision {
        decision,
        resolved_value: resolved.value,
        resolution: resolved.resolution,
    })
}
