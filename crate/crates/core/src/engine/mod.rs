//! The contrastive adaptive debiasing ensemble over per-view logits.
//!
//! A record is scored in six steps:
//!
//! 1. softmax every view;
//! 2. take the Full view's top probability `m` and argmax as the baseline;
//! 3. keep the baseline when `m >= tau` (confidence gate);
//! 4. form three streams: image (Full and/or IMG), context (CTX) and bias (Q);
//! 5. measure image/context disagreement `D` and set `alpha_i = alpha * (1 + lambda_kl * D)`;
//! 6. score `ln p_img - alpha_i * ln p_ctx - beta * ln p_q` and take the argmax.
//!
//! Every argmax breaks ties towards the lowest candidate index. All functions are
//! pure, so records can be scored in any order or in parallel.

mod params;
mod record;

pub use params::{
    AblationFlags, Decision, Divergence, EngineConfig, HyperParams, ImageStream, TieBreak,
    DEFAULT_PROB_FLOOR,
};
pub use record::{
    CandidateKind, CandidateSet, ContextTest, PerView, Pillar, QuestionRecord, Task, Truth,
    ViewKind, ViewLogits, DIGIT_LABELS,
};

use rayon::prelude::*;

use crate::error::{CadeError, Result};

/// Numerically stable softmax, floored at `prob_floor`.
///
/// Entries that would fall below the floor are pinned to it and the remaining
/// mass is rescaled so the vector still sums to one.
pub fn softmax(logits: &[f64], prob_floor: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(CadeError::invalid("softmax of an empty vector"));
    }
    if let Some(bad) = logits.iter().find(|x| !x.is_finite()) {
        return Err(CadeError::invalid(format!("non-finite logit {bad}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    apply_floor(&mut p, prob_floor);
    Ok(p)
}

fn apply_floor(p: &mut [f64], floor: f64) {
    let floored = p.iter().filter(|&&x| x < floor).count();
    if floored == 0 {
        return;
    }
    let kept: f64 = p.iter().filter(|&&x| x >= floor).sum();
    let scale = (1.0 - floored as f64 * floor) / kept;
    for x in p.iter_mut() {
        *x = if *x < floor { floor } else { *x * scale };
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Argmax of a single view's softmax.
pub fn view_argmax(record: &QuestionRecord, view: ViewKind, prob_floor: f64) -> Result<usize> {
    Ok(argmax(&softmax(record.logits.get(view), prob_floor)?))
}

/// The three renormalized probability streams.
#[derive(Clone, Debug, PartialEq)]
pub struct Streams {
    pub img: Vec<f64>,
    pub ctx: Vec<f64>,
    pub q: Vec<f64>,
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.into_iter().map(|x| x / sum).collect()
}

/// Groups per-view probabilities into image, context and bias streams.
pub fn form_streams(probs: &PerView<Vec<f64>>, mode: ImageStream) -> Result<Streams> {
    let n = probs.full.len();
    if let Some((view, v)) = probs.iter().find(|(_, v)| v.len() != n) {
        return Err(CadeError::invalid(format!(
            "view {view} has {} probabilities, expected {n}",
            v.len()
        )));
    }
    let img = match mode {
        ImageStream::ImgOnly => probs.img.clone(),
        ImageStream::FullOnly => probs.full.clone(),
        ImageStream::FullPlusImg => probs
            .full
            .iter()
            .zip(&probs.img)
            .map(|(a, b)| a + b)
            .collect(),
    };
    Ok(Streams {
        img: normalized(img),
        ctx: normalized(probs.ctx.clone()),
        q: normalized(probs.q.clone()),
    })
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// `KL(p || q)` or the Jensen-Shannon divergence, in nats.
pub fn divergence(p: &[f64], q: &[f64], kind: Divergence) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CadeError::invalid(format!(
            "divergence between vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let d = match kind {
        Divergence::Kl => kl(p, q),
        Divergence::Js => {
            let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
            0.5 * kl(p, &m) + 0.5 * kl(q, &m)
        }
    };
    // rounding can leave a tiny negative residue for (near-)identical inputs
    Ok(d.max(0.0))
}

/// `alpha * (1 + lambda_kl * d)`.
pub fn adaptive_alpha(alpha: f64, lambda_kl: f64, d: f64) -> Result<f64> {
    for (name, v) in [
        ("alpha", alpha),
        ("lambda_kl", lambda_kl),
        ("divergence", d),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CadeError::invalid(format!(
                "{name} must be finite and non-negative, got {v}"
            )));
        }
    }
    Ok(alpha * (1.0 + lambda_kl * d))
}

#[inline]
fn score_term(ln_img: f64, ln_ctx: f64, ln_q: f64, alpha_i: f64, beta: f64) -> f64 {
    ln_img - alpha_i * ln_ctx - beta * ln_q
}

/// Per-candidate contrastive scores.
pub fn cade_scores(
    p_img: &[f64],
    p_ctx: &[f64],
    p_q: &[f64],
    alpha_i: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    if p_ctx.len() != p_img.len() || p_q.len() != p_img.len() {
        return Err(CadeError::invalid("stream lengths differ"));
    }
    if !(alpha_i >= 0.0 && beta >= 0.0) {
        return Err(CadeError::invalid("alpha_i and beta must be non-negative"));
    }
    Ok(p_img
        .iter()
        .zip(p_ctx)
        .zip(p_q)
        .map(|((a, c), q)| score_term(a.ln(), c.ln(), q.ln(), alpha_i, beta))
        .collect())
}

/// Everything about a record that does not depend on the hyperparameters.
///
/// Preparing once and scoring many times is what makes the random search cheap;
/// [`decide`] goes through the same path.
#[derive(Clone, Debug)]
pub struct PreparedRecord {
    full_argmax: usize,
    confidence: f64,
    divergence: f64,
    ln_img: Vec<f64>,
    ln_ctx: Vec<f64>,
    ln_q: Vec<f64>,
}

/// Outcome of scoring a prepared record, before labels are attached.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub index: usize,
    pub gated: bool,
    pub divergence_d: f64,
    pub alpha_i: f64,
    pub scores: Vec<f64>,
}

impl PreparedRecord {
    pub fn new(logits: &ViewLogits, cfg: &EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let probs = logits.try_map(|_, z| softmax(z, cfg.prob_floor))?;
        let full_argmax = argmax(&probs.full);
        let confidence = probs.full[full_argmax];
        let streams = form_streams(&probs, cfg.image_stream)?;
        let divergence = divergence(&streams.img, &streams.ctx, cfg.divergence)?;
        let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
        Ok(Self {
            full_argmax,
            confidence,
            divergence,
            ln_img: ln(&streams.img),
            ln_ctx: ln(&streams.ctx),
            ln_q: ln(&streams.q),
        })
    }

    pub fn len(&self) -> usize {
        self.ln_img.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_img.is_empty()
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn full_argmax(&self) -> usize {
        self.full_argmax
    }

    pub fn divergence(&self) -> f64 {
        self.divergence
    }

    fn is_gated(&self, hp: &HyperParams, flags: &AblationFlags) -> bool {
        flags.confidence_gate && self.confidence >= hp.tau
    }

    fn coefficients(&self, hp: &HyperParams, flags: &AblationFlags, d: f64) -> (f64, f64) {
        let alpha_i = match (flags.context_penalty, flags.adaptive_disagreement) {
            (false, _) => 0.0,
            (true, false) => hp.alpha,
            (true, true) => hp.alpha * (1.0 + hp.lambda_kl * d),
        };
        let beta = if flags.prior_penalty { hp.beta } else { 0.0 };
        (alpha_i, beta)
    }

    /// Chosen candidate index only; allocation free.
    pub fn choose(&self, hp: &HyperParams, flags: &AblationFlags) -> usize {
        if self.is_gated(hp, flags) || !flags.any_penalty() {
            return self.full_argmax;
        }
        let (alpha_i, beta) = self.coefficients(hp, flags, self.divergence);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..self.len() {
            let s = score_term(self.ln_img[a], self.ln_ctx[a], self.ln_q[a], alpha_i, beta);
            if a == 0 || s > best_score {
                best = a;
                best_score = s;
            }
        }
        best
    }

    /// Full scoring with the audit trail.
    pub fn score(&self, hp: &HyperParams, flags: &AblationFlags) -> Scored {
        if self.is_gated(hp, flags) {
            return Scored {
                index: self.full_argmax,
                gated: true,
                divergence_d: 0.0,
                // consistent with the reported D = 0
                alpha_i: self.coefficients(hp, flags, 0.0).0,
                scores: Vec::new(),
            };
        }
        let (alpha_i, beta) = self.coefficients(hp, flags, self.divergence);
        if !flags.any_penalty() {
            return Scored {
                index: self.full_argmax,
                gated: false,
                divergence_d: self.divergence,
                alpha_i,
                scores: Vec::new(),
            };
        }
        let scores: Vec<f64> = (0..self.len())
            .map(|a| score_term(self.ln_img[a], self.ln_ctx[a], self.ln_q[a], alpha_i, beta))
            .collect();
        Scored {
            index: argmax(&scores),
            gated: false,
            divergence_d: self.divergence,
            alpha_i,
            scores,
        }
    }
}

/// Debiased decision for one record.
pub fn decide(record: &QuestionRecord, hp: &HyperParams, cfg: &EngineConfig) -> Result<Decision> {
    record.validate()?;
    hp.validate()?;
    let prepared = PreparedRecord::new(&record.logits, cfg)?;
    let scored = prepared.score(hp, &cfg.flags);
    Ok(Decision {
        chosen: record.candidates.label(scored.index).to_string(),
        chosen_index: scored.index,
        gated: scored.gated,
        confidence_m: prepared.confidence,
        divergence_d: scored.divergence_d,
        alpha_i: scored.alpha_i,
        scores: scored.scores,
    })
}

/// [`decide`] over many records, in parallel, returned in input order.
pub fn decide_batch(
    records: &[QuestionRecord],
    hp: &HyperParams,
    cfg: &EngineConfig,
) -> Result<Vec<Decision>> {
    let results: Vec<Result<Decision>> = records.par_iter().map(|r| decide(r, hp, cfg)).collect();
    results
        .into_iter()
        .zip(records)
        .map(|(res, r)| res.map_err(|e| CadeError::InvalidInput(format!("record {}: {e}", r.id))))
        .collect()
}
