//! Seeded random search over the debiasing hyperparameters.
//!
//! # Random streams
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`), a
//! counter-based generator, keyed with `seed_from_u64(seed)`:
//!
//! * stream 0 draws hyperparameters. Each trial consumes four `u64` words in the
//!   order alpha, lambda_kl, beta, tau. A word `w` maps to
//!   `low + ((w >> 11) as f64 * 2^-53) * (high - low)`.
//! * stream 1 shuffles validation indices (Fisher-Yates as implemented by
//!   `rand::seq::SliceRandom::shuffle`). The first `ceil(fraction * n)` indices,
//!   sorted ascending, form the evaluation subset.
//!
//! Because the streams are separate, a search with fewer samples replays a
//! prefix of a longer search with the same seed.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    EngineConfig, HyperParams, PreparedRecord, QuestionRecord, Task, DIGIT_LABELS,
};
use crate::error::{CadeError, Result};
use crate::regression::resolve_value;

const PARAM_STREAM: u64 = 0;
const SUBSET_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    fn at(&self, unit: f64) -> f64 {
        self.low + unit * (self.high - self.low)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRanges {
    pub alpha: Interval,
    pub lambda_kl: Interval,
    pub beta: Interval,
    pub tau: Interval,
    pub task: Task,
}

impl SearchRanges {
    pub const MCQ: SearchRanges = SearchRanges {
        alpha: Interval::new(0.5, 2.0),
        lambda_kl: Interval::new(0.0, 5.0),
        beta: Interval::new(0.0, 1.5),
        tau: Interval::new(0.65, 0.99),
        task: Task::Mcq,
    };

    pub const REGRESSION: SearchRanges = SearchRanges {
        alpha: Interval::new(0.0, 7.0),
        lambda_kl: Interval::new(0.0, 7.0),
        beta: Interval::new(0.0, 7.0),
        tau: Interval::new(0.25, 0.99),
        task: Task::Regression,
    };

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Mcq => Self::MCQ,
            Task::Regression => Self::REGRESSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [
            ("alpha", self.alpha),
            ("lambda_kl", self.lambda_kl),
            ("beta", self.beta),
            ("tau", self.tau),
        ] {
            if !(iv.low.is_finite() && iv.high.is_finite() && iv.low <= iv.high) {
                return Err(CadeError::invalid(format!(
                    "{name} range [{}, {}] is not a closed interval",
                    iv.low, iv.high
                )));
            }
        }
        for iv in [self.alpha, self.lambda_kl, self.beta] {
            if iv.low < 0.0 {
                return Err(CadeError::invalid(
                    "alpha, lambda_kl and beta ranges must be non-negative",
                ));
            }
        }
        if !(self.tau.low > 0.0 && self.tau.high < 1.0) {
            return Err(CadeError::invalid("tau range must lie inside (0,1)"));
        }
        Ok(())
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        self.alpha.contains(hp.alpha)
            && self.lambda_kl.contains(hp.lambda_kl)
            && self.beta.contains(hp.beta)
            && self.tau.contains(hp.tau)
    }
}

/// The hyperparameter stream of a search.
pub struct ParamSampler {
    rng: ChaCha20Rng,
}

impl ParamSampler {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(PARAM_STREAM);
        Self { rng }
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Draws one joint configuration, each coordinate uniform on its interval.
pub fn sample_params(ranges: &SearchRanges, sampler: &mut ParamSampler) -> HyperParams {
    let alpha = ranges.alpha.at(sampler.unit());
    let lambda_kl = ranges.lambda_kl.at(sampler.unit());
    let beta = ranges.beta.at(sampler.unit());
    let tau = ranges.tau.at(sampler.unit());
    HyperParams {
        tau,
        alpha,
        lambda_kl,
        beta,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxAccuracy,
    MinMae,
}

impl Objective {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Mcq => Objective::MaxAccuracy,
            Task::Regression => Objective::MinMae,
        }
    }

    /// True when `a` is strictly better than `b`.
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Objective::MaxAccuracy => a > b,
            Objective::MinMae => a < b,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub ranges: SearchRanges,
    pub samples: usize,
    pub subset_fraction: f64,
    pub top_k: usize,
    pub seed: u64,
    pub cfg: EngineConfig,
    pub objective: Objective,
}

impl SearchOptions {
    /// 10,000 samples, 20% subset, top 100, task-matched ranges and objective.
    pub fn for_task(task: Task, seed: u64) -> Self {
        Self {
            ranges: SearchRanges::for_task(task),
            samples: 10_000,
            subset_fraction: 0.20,
            top_k: 100,
            seed,
            cfg: EngineConfig::default(),
            objective: Objective::for_task(task),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial: usize,
    pub params: HyperParams,
    pub subset_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finalist {
    pub trial: usize,
    pub params: HyperParams,
    pub full_objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub seed: u64,
    pub objective: Objective,
    pub subset_size: usize,
    pub validation_size: usize,
    pub trials: Vec<Trial>,
    /// Re-scored finalists, in subset-rank order.
    pub top_k: Vec<Finalist>,
    pub best: Finalist,
}

enum Target {
    Label(usize),
    /// Truth value and the resolved prediction for every first digit.
    Value(f64, [f64; 10]),
}

/// A validation record reduced to what scoring needs.
pub struct EvalItem {
    prepared: PreparedRecord,
    target: Target,
}

/// Prepares validation records once so each trial is a cheap re-scoring.
pub fn prepare_items(
    records: &[QuestionRecord],
    cfg: &EngineConfig,
    objective: Objective,
) -> Result<Vec<EvalItem>> {
    records
        .par_iter()
        .map(|r| {
            r.validate()?;
            let target = match (objective, r.task) {
                (Objective::MaxAccuracy, Task::Mcq) => {
                    Target::Label(r.truth_index().expect("validated mcq truth"))
                }
                (Objective::MinMae, Task::Regression) => {
                    let mut resolved = [0.0; 10];
                    for (slot, digit) in resolved.iter_mut().zip(DIGIT_LABELS) {
                        *slot = resolve_value(r, digit)?.value;
                    }
                    Target::Value(
                        r.truth_value().expect("validated regression truth"),
                        resolved,
                    )
                }
                (obj, task) => {
                    return Err(CadeError::invalid(format!(
                        "record {}: objective {obj:?} does not apply to {} records",
                        r.id,
                        task.as_str()
                    )))
                }
            };
            Ok(EvalItem {
                prepared: PreparedRecord::new(&r.logits, cfg)?,
                target,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Accuracy or MAE of `hp` over `items` (in item order).
pub fn evaluate_items<'a>(
    items: impl IntoIterator<Item = &'a EvalItem>,
    hp: &HyperParams,
    cfg: &EngineConfig,
) -> f64 {
    let mut n = 0usize;
    let mut total = 0.0;
    for item in items {
        let chosen = item.prepared.choose(hp, &cfg.flags);
        n += 1;
        total += match &item.target {
            Target::Label(t) => (chosen == *t) as u8 as f64,
            Target::Value(truth, resolved) => (resolved[chosen] - truth).abs(),
        };
    }
    total / n as f64
}

/// Random search with subset screening and top-k re-evaluation.
pub fn random_search(validation: &[QuestionRecord], opts: &SearchOptions) -> Result<SearchTrace> {
    if validation.is_empty() {
        return Err(CadeError::invalid("validation set is empty"));
    }
    if opts.samples == 0 {
        return Err(CadeError::invalid("samples must be positive"));
    }
    if opts.top_k == 0 || opts.top_k > opts.samples {
        return Err(CadeError::invalid(format!(
            "top_k must be in 1..={}, got {}",
            opts.samples, opts.top_k
        )));
    }
    if !(opts.subset_fraction > 0.0 && opts.subset_fraction <= 1.0) {
        return Err(CadeError::invalid(format!(
            "subset fraction must be in (0,1], got {}",
            opts.subset_fraction
        )));
    }
    opts.ranges.validate()?;
    opts.cfg.validate()?;

    let items = prepare_items(validation, &opts.cfg, opts.objective)?;
    let subset = draw_subset(items.len(), opts.subset_fraction, opts.seed);

    let mut sampler = ParamSampler::new(opts.seed);
    let params: Vec<HyperParams> = (0..opts.samples)
        .map(|_| sample_params(&opts.ranges, &mut sampler))
        .collect();

    let trials: Vec<Trial> = params
        .par_iter()
        .enumerate()
        .map(|(trial, hp)| Trial {
            trial,
            params: *hp,
            subset_objective: evaluate_items(subset.iter().map(|&i| &items[i]), hp, &opts.cfg),
        })
        .collect();

    let mut ranked: Vec<&Trial> = trials.iter().collect();
    ranked.sort_by(|a, b| {
        let ord = a.subset_objective.total_cmp(&b.subset_objective);
        let ord = match opts.objective {
            Objective::MaxAccuracy => ord.reverse(),
            Objective::MinMae => ord,
        };
        ord.then(a.trial.cmp(&b.trial))
    });
    let top_k: Vec<Finalist> = ranked[..opts.top_k]
        .par_iter()
        .map(|t| Finalist {
            trial: t.trial,
            params: t.params,
            full_objective: evaluate_items(&items, &t.params, &opts.cfg),
        })
        .collect();

    let mut best = &top_k[0];
    for f in &top_k[1..] {
        let improves = opts.objective.better(f.full_objective, best.full_objective);
        let ties_earlier = f.full_objective == best.full_objective && f.trial < best.trial;
        if improves || ties_earlier {
            best = f;
        }
    }
    let best = best.clone();

    Ok(SearchTrace {
        seed: opts.seed,
        objective: opts.objective,
        subset_size: subset.len(),
        validation_size: items.len(),
        trials,
        top_k,
        best,
    })
}

fn draw_subset(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(SUBSET_STREAM);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    objective: Objective,
    samples: usize,
    subset_size: usize,
    validation_size: usize,
    best: &'a Finalist,
    top_k: &'a [Finalist],
}

impl SearchTrace {
    /// One JSON object per trial.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.trials {
            serde_json::to_writer(&mut out, t).map_err(|e| CadeError::Io(e.into()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Best parameters plus the re-scored finalists.
    pub fn summary_json(&self) -> String {
        let summary = Summary {
            seed: self.seed,
            objective: self.objective,
            samples: self.trials.len(),
            subset_size: self.subset_size,
            validation_size: self.validation_size,
            best: &self.best,
            top_k: &self.top_k,
        };
        let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
        s.push('\n');
        s
    }
}
