//! Shared test fixtures.

use crate::engine::{CandidateSet, ContextTest, PerView, Pillar, QuestionRecord, Task, Truth};

/// The three-option record used by the worked CADE example.
pub(crate) fn abc_record() -> QuestionRecord {
    QuestionRecord {
        id: "r1".into(),
        pillar: Pillar::P1,
        task: Task::Mcq,
        indicator: "under 5 mortality rate".into(),
        context_test: ContextTest::T1,
        candidates: CandidateSet::letters(3).unwrap(),
        logits: PerView {
            q: vec![0.0, 0.0, 1.5],
            ctx: vec![0.0, 1.0, 0.5],
            img: vec![1.2, 0.2, 0.0],
            full: vec![1.0, 0.5, 0.0],
        },
        truth: Truth::Option("A".into()),
        view_values: None,
        completions: None,
        provenance: None,
    }
}

/// A digit record whose views peak (logit `peak`) on the given digits.
pub(crate) fn digit_record(
    full: usize,
    img: usize,
    ctx: usize,
    q: usize,
    peak: f64,
) -> QuestionRecord {
    let peaked = |d: usize| {
        (0..10)
            .map(|i| if i == d { peak } else { 0.0 })
            .collect::<Vec<_>>()
    };
    QuestionRecord {
        id: "d1".into(),
        pillar: Pillar::P2,
        task: Task::Regression,
        indicator: "women bmi".into(),
        context_test: ContextTest::T2,
        candidates: CandidateSet::digits(),
        logits: PerView {
            q: peaked(q),
            ctx: peaked(ctx),
            img: peaked(img),
            full: peaked(full),
        },
        truth: Truth::Value(18.0),
        view_values: None,
        completions: None,
        provenance: None,
    }
}
