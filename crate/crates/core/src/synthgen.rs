//! Synthetic records from a parametric biased model.
//!
//! The generator plants two signatures:
//!
//! * a pillar-conditioned directional default in the Q view, independent of
//!   the truth;
//! * a context-dominated Full view: its logits are a convex mix that leans on
//!   CTX even when IMG is more reliable.
//!
//! Each view "peaks" on one option: that option gets logit `1 / temperature`,
//! the others 0. Full = `w * ctx + (1 - w) * img` in logit space. T5 records have
//! no context, so their CTX logits are a copy of the Q logits.
//!
//! # Streams
//!
//! Records are generated cell by cell in the order pillar, task, context test.
//! Cell `c` (0-based position in that order over *all* pillars, tasks and tests,
//! whether requested or not) uses `ChaCha20Rng::seed_from_u64(seed)` on stream
//! `c`. [`generate_cell`] produces one cell on its own, so sharded and serial
//! generation agree.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    CandidateSet, ContextTest, PerView, Pillar, QuestionRecord, Task, Truth, ViewKind,
};
use crate::error::{CadeError, Result};

/// Probabilities of (Pessimistic, Conservative, Optimistic), i.e. of options A, B, C.
pub type Triple = [f64; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Records per (pillar, task, context test) cell.
    pub n_records: usize,
    #[serde(default = "all_pillars")]
    pub pillars: Vec<Pillar>,
    #[serde(default = "mcq_only")]
    pub tasks: Vec<Task>,
    #[serde(default = "all_tests")]
    pub context_tests: Vec<ContextTest>,
    /// Planted Q-only skew per pillar.
    pub q_prior: BTreeMap<Pillar, Triple>,
    /// Probability the CTX view peaks on the truth.
    pub ctx_fidelity: f64,
    /// Probability the IMG view peaks on the truth.
    pub img_fidelity: f64,
    /// Weight of CTX logits in the Full view.
    pub fusion_ctx_weight: f64,
    pub logit_temperature: f64,
    pub truth_distribution: BTreeMap<Pillar, Triple>,
    pub seed: u64,
}

fn all_pillars() -> Vec<Pillar> {
    Pillar::ALL.to_vec()
}

fn mcq_only() -> Vec<Task> {
    vec![Task::Mcq]
}

fn all_tests() -> Vec<ContextTest> {
    ContextTest::ALL.to_vec()
}

const DEMO_SPEC: &str = include_str!("../data/demo_spec.json");

const TASKS: [Task; 2] = [Task::Mcq, Task::Regression];

fn indicators(pillar: Pillar) -> [&'static str; 2] {
    match pillar {
        Pillar::P1 => ["under 5 mortality rate", "women bmi"],
        Pillar::P2 => ["water index", "sanitation index"],
        Pillar::P3 => ["women edu", "asset index"],
    }
}

impl GeneratorSpec {
    /// The bundled demonstration spec (`data/demo_spec.json`).
    pub fn demo() -> Self {
        serde_json::from_str(DEMO_SPEC).expect("bundled demo spec parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| CadeError::invalid(format!("generator spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let check_triples = |name: &str, map: &BTreeMap<Pillar, Triple>| -> Result<()> {
            for p in &self.pillars {
                let t = map
                    .get(p)
                    .ok_or_else(|| CadeError::invalid(format!("{name} has no entry for {p}")))?;
                if t.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(CadeError::invalid(format!(
                        "{name}[{p}] has a negative entry"
                    )));
                }
                if (t.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(CadeError::invalid(format!("{name}[{p}] does not sum to 1")));
                }
            }
            Ok(())
        };
        check_triples("q_prior", &self.q_prior)?;
        check_triples("truth_distribution", &self.truth_distribution)?;
        for (name, v) in [
            ("ctx_fidelity", self.ctx_fidelity),
            ("img_fidelity", self.img_fidelity),
            ("fusion_ctx_weight", self.fusion_ctx_weight),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CadeError::invalid(format!(
                    "{name} must lie in [0,1], got {v}"
                )));
            }
        }
        if !(self.logit_temperature > 0.0 && self.logit_temperature.is_finite()) {
            return Err(CadeError::invalid("logit_temperature must be positive"));
        }
        if self.pillars.is_empty() || self.tasks.is_empty() || self.context_tests.is_empty() {
            return Err(CadeError::invalid(
                "pillars, tasks and context_tests must be non-empty",
            ));
        }
        Ok(())
    }

    pub fn total_records(&self) -> usize {
        self.n_records * self.pillars.len() * self.tasks.len() * self.context_tests.len()
    }
}

fn cell_stream(pillar: Pillar, task: Task, test: ContextTest) -> u64 {
    let p = pillar as u64;
    let t = TASKS.iter().position(|&x| x == task).unwrap() as u64;
    let c = test as u64;
    (p * TASKS.len() as u64 + t) * ContextTest::ALL.len() as u64 + c
}

/// All requested cells, serially.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<QuestionRecord>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.total_records());
    for &pillar in &spec.pillars {
        for &task in &spec.tasks {
            for &test in &spec.context_tests {
                out.extend(generate_cell(spec, pillar, task, test)?);
            }
        }
    }
    Ok(out)
}

/// One (pillar, task, context test) cell.
pub fn generate_cell(
    spec: &GeneratorSpec,
    pillar: Pillar,
    task: Task,
    test: ContextTest,
) -> Result<Vec<QuestionRecord>> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(cell_stream(pillar, task, test));
    let cell = Cell {
        spec,
        pillar,
        task,
        test,
        truth_dist: weighted(&spec.truth_distribution[&pillar])?,
        q_dist: weighted(&spec.q_prior[&pillar])?,
    };
    (0..spec.n_records)
        .map(|i| {
            let record = cell.record(i, &mut rng);
            record.validate()?;
            Ok(record)
        })
        .collect()
}

fn weighted(t: &Triple) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(t).map_err(|e| CadeError::invalid(format!("bad probability triple: {e}")))
}

struct Cell<'a> {
    spec: &'a GeneratorSpec,
    pillar: Pillar,
    task: Task,
    test: ContextTest,
    truth_dist: WeightedIndex<f64>,
    q_dist: WeightedIndex<f64>,
}

impl Cell<'_> {
    fn peaked(&self, n: usize, at: usize) -> Vec<f64> {
        let height = 1.0 / self.spec.logit_temperature;
        (0..n).map(|i| if i == at { height } else { 0.0 }).collect()
    }

    /// `truth` with probability `fidelity`, else a uniformly drawn other option
    /// from `choices`.
    fn noisy(rng: &mut ChaCha20Rng, truth: usize, fidelity: f64, choices: &[usize]) -> usize {
        let hit = rng.gen::<f64>() < fidelity;
        let wrong: Vec<usize> = choices.iter().copied().filter(|&c| c != truth).collect();
        let pick = wrong[rng.gen_range(0..wrong.len())];
        if hit {
            truth
        } else {
            pick
        }
    }

    fn logits(&self, n: usize, q: usize, ctx: usize, img: usize) -> PerView<Vec<f64>> {
        let q = self.peaked(n, q);
        let ctx = if self.test == ContextTest::T5 {
            q.clone()
        } else {
            self.peaked(n, ctx)
        };
        let img = self.peaked(n, img);
        let w = self.spec.fusion_ctx_weight;
        let full = ctx
            .iter()
            .zip(&img)
            .map(|(c, i)| w * c + (1.0 - w) * i)
            .collect();
        PerView { q, ctx, img, full }
    }

    fn record(&self, i: usize, rng: &mut ChaCha20Rng) -> QuestionRecord {
        let id = format!(
            "{}-{}-{}-{:05}",
            self.pillar,
            self.task.as_str(),
            self.test,
            i
        );
        let indicator = indicators(self.pillar)[i % 2].to_string();
        let provenance = Some(format!("synthgen seed={}", self.spec.seed));
        let truth_dir = self.truth_dist.sample(rng);
        let q_dir = self.q_dist.sample(rng);
        match self.task {
            Task::Mcq => {
                let opts = [0, 1, 2];
                let ctx = Self::noisy(rng, truth_dir, self.spec.ctx_fidelity, &opts);
                let img = Self::noisy(rng, truth_dir, self.spec.img_fidelity, &opts);
                QuestionRecord {
                    id,
                    pillar: self.pillar,
                    task: Task::Mcq,
                    indicator,
                    context_test: self.test,
                    candidates: CandidateSet::letters(3).expect("three letters"),
                    logits: self.logits(3, q_dir, ctx, img),
                    truth: Truth::Option(["A", "B", "C"][truth_dir].to_string()),
                    view_values: None,
                    completions: None,
                    provenance,
                }
            }
            Task::Regression => {
                // directions map to digit bands 1-3, 4-6, 7-9
                let band = |dir: usize, rng: &mut ChaCha20Rng| 1 + 3 * dir + rng.gen_range(0..3);
                let truth_digit = band(truth_dir, rng);
                let q_digit = band(q_dir, rng);
                let digits: Vec<usize> = (1..=9).collect();
                let ctx = Self::noisy(rng, truth_digit, self.spec.ctx_fidelity, &digits);
                let img = Self::noisy(rng, truth_digit, self.spec.img_fidelity, &digits);
                let tail = rng.gen_range(0..100) as f64 / 10.0;
                let value_for = |d: usize| d as f64 * 10.0 + tail;
                let completions: BTreeMap<String, f64> =
                    (0..10).map(|d| (d.to_string(), value_for(d))).collect();
                let logits = self.logits(10, q_digit, ctx, img);
                let view_values = ViewKind::ALL
                    .iter()
                    .map(|&v| {
                        let d = crate::engine::argmax(logits.get(v));
                        (v, format!("{:.1}", value_for(d)))
                    })
                    .collect();
                QuestionRecord {
                    id,
                    pillar: self.pillar,
                    task: Task::Regression,
                    indicator,
                    context_test: self.test,
                    candidates: CandidateSet::digits(),
                    logits,
                    truth: Truth::Value(value_for(truth_digit)),
                    view_values: Some(view_values),
                    completions: Some(completions),
                    provenance,
                }
            }
        }
    }
}
