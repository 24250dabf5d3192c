#![allow(dead_code)]

use std::collections::BTreeMap;

use cade_core::engine::{
    CandidateSet, ContextTest, PerView, Pillar, QuestionRecord, Task, Truth, ViewLogits,
};
use proptest::prelude::*;

pub fn mcq(id: &str, logits: ViewLogits, truth: usize) -> QuestionRecord {
    let n = logits.full.len();
    let candidates = CandidateSet::letters(n).unwrap();
    let truth = Truth::Option(candidates.label(truth).to_string());
    QuestionRecord {
        id: id.into(),
        pillar: Pillar::P1,
        task: Task::Mcq,
        indicator: "women bmi".into(),
        context_test: ContextTest::T1,
        candidates,
        logits,
        truth,
        view_values: None,
        completions: None,
        provenance: None,
    }
}

pub fn digits(id: &str, logits: ViewLogits, truth: f64, tail: f64) -> QuestionRecord {
    let completions: BTreeMap<String, f64> = (0..10)
        .map(|d| (d.to_string(), d as f64 * 10.0 + tail))
        .collect();
    QuestionRecord {
        id: id.into(),
        pillar: Pillar::P2,
        task: Task::Regression,
        indicator: "water index".into(),
        context_test: ContextTest::T2,
        candidates: CandidateSet::digits(),
        logits,
        truth: Truth::Value(truth),
        view_values: None,
        completions: Some(completions),
        provenance: None,
    }
}

pub fn logit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0f64..8.0, n)
}

pub fn view_logits(n: usize) -> impl Strategy<Value = ViewLogits> {
    (logit_vec(n), logit_vec(n), logit_vec(n), logit_vec(n))
        .prop_map(|(q, ctx, img, full)| PerView { q, ctx, img, full })
}

/// MCQ record with 2 or 3 options.
pub fn mcq_record() -> impl Strategy<Value = QuestionRecord> {
    (2usize..=3)
        .prop_flat_map(|n| (view_logits(n), 0..n))
        .prop_map(|(l, t)| mcq("p", l, t))
}

pub fn digit_record() -> impl Strategy<Value = QuestionRecord> {
    (view_logits(10), 0.0f64..100.0, 0.0f64..9.9).prop_map(|(l, t, tail)| digits("d", l, t, tail))
}
