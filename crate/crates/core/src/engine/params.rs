use serde::{Deserialize, Serialize};

use crate::error::{CadeError, Result};

/// The four debiasing knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Confidence gate threshold, strictly inside (0, 1).
    pub tau: f64,
    /// Base strength of the context penalty.
    pub alpha: f64,
    /// Sensitivity of the context penalty to image/context disagreement.
    pub lambda_kl: f64,
    /// Strength of the question-only prior penalty.
    pub beta: f64,
}

impl HyperParams {
    pub fn new(tau: f64, alpha: f64, lambda_kl: f64, beta: f64) -> Result<Self> {
        let hp = Self {
            tau,
            alpha,
            lambda_kl,
            beta,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(CadeError::invalid(format!(
                "tau must lie in (0,1), got {}",
                self.tau
            )));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda_kl", self.lambda_kl),
            ("beta", self.beta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CadeError::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    #[default]
    Kl,
    Js,
}

/// How the image stream is built from the image-bearing views.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStream {
    ImgOnly,
    FullOnly,
    #[default]
    FullPlusImg,
}

/// Component switches for ablations. All on by default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub context_penalty: bool,
    pub adaptive_disagreement: bool,
    pub prior_penalty: bool,
    pub confidence_gate: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::all()
    }
}

impl AblationFlags {
    pub fn all() -> Self {
        Self {
            context_penalty: true,
            adaptive_disagreement: true,
            prior_penalty: true,
            confidence_gate: true,
        }
    }

    /// The baseline variant: plain Full-view argmax.
    pub fn none() -> Self {
        Self {
            context_penalty: false,
            adaptive_disagreement: false,
            prior_penalty: false,
            confidence_gate: false,
        }
    }

    /// True when at least one penalty term contributes to the contrastive score.
    pub fn any_penalty(&self) -> bool {
        self.context_penalty || self.prior_penalty
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub divergence: Divergence,
    pub image_stream: ImageStream,
    pub flags: AblationFlags,
    pub prob_floor: f64,
    pub tie_break: TieBreak,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            divergence: Divergence::Kl,
            image_stream: ImageStream::FullPlusImg,
            flags: AblationFlags::all(),
            prob_floor: DEFAULT_PROB_FLOOR,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

impl EngineConfig {
    pub fn with_flags(flags: AblationFlags) -> Self {
        Self {
            flags,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prob_floor > 0.0 && self.prob_floor <= 1e-6) {
            return Err(CadeError::invalid(format!(
                "prob_floor must lie in (0, 1e-6], got {}",
                self.prob_floor
            )));
        }
        Ok(())
    }
}

/// The chosen candidate plus everything needed to audit how it was chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub chosen: String,
    pub chosen_index: usize,
    /// The Full-view prediction was confident enough to be kept as is.
    pub gated: bool,
    /// Top Full-view probability.
    pub confidence_m: f64,
    /// Image/context divergence; 0 when gated.
    pub divergence_d: f64,
    /// Effective context-penalty coefficient.
    pub alpha_i: f64,
    /// Per-candidate contrastive scores; empty when no scoring took place.
    pub scores: Vec<f64>,
}
