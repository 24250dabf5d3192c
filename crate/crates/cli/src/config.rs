//! TOML configuration. Every key is optional; flags on the command line win.
//!
//! ```toml
//! [engine]
//! alpha = 0.7
//! lambda_kl = 2.0
//! beta = 1.0
//! tau = 0.9
//! divergence = "kl"            # or "js"
//! image_stream = "full+img"    # "img", "full"
//! prob_floor = 1e-12
//! confidence_gate = true
//! context_penalty = true
//! adaptive_disagreement = true
//! prior_penalty = true
//!
//! [tune]
//! samples = 10000
//! subset = 0.2
//! top_k = 100
//! seed = 7
//!
//! [provider]
//! endpoint = "http://localhost:8080/logits"
//! timeout_secs = 30
//! attempts = 3
//! backoff_ms = 200
//! max_concurrency = 4
//!
//! [tolerances]
//! "women bmi" = 1.0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use cade_core::engine::{Divergence, ImageStream};
use cade_core::CadeError;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
// the provider section is accepted, and ignored, by builds without `fetch`
#[cfg_attr(not(feature = "provider"), allow(dead_code))]
pub struct Config {
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub provider: ProviderSection,
    /// Replaces the built-in tolerance table when non-empty.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub alpha: Option<f64>,
    pub lambda_kl: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub divergence: Option<DivergenceArg>,
    pub image_stream: Option<ImageStreamArg>,
    pub prob_floor: Option<f64>,
    pub confidence_gate: Option<bool>,
    pub context_penalty: Option<bool>,
    pub adaptive_disagreement: Option<bool>,
    pub prior_penalty: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub samples: Option<usize>,
    pub subset: Option<f64>,
    pub top_k: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
#[cfg_attr(not(feature = "provider"), allow(dead_code))]
pub struct ProviderSection {
    pub endpoint: Option<String>,
    pub timeout_secs: Option<u64>,
    pub attempts: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub max_concurrency: Option<usize>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CadeError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CadeError::io_at(path, e))?;
        toml::from_str(&text)
            .map_err(|e| CadeError::InvalidInput(format!("config {}: {e}", path.display())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceArg {
    Kl,
    Js,
}

impl From<DivergenceArg> for Divergence {
    fn from(d: DivergenceArg) -> Self {
        match d {
            DivergenceArg::Kl => Divergence::Kl,
            DivergenceArg::Js => Divergence::Js,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
pub enum ImageStreamArg {
    #[serde(rename = "img")]
    #[value(name = "img")]
    Img,
    #[serde(rename = "full")]
    #[value(name = "full")]
    Full,
    #[serde(rename = "full+img")]
    #[value(name = "full+img")]
    FullPlusImg,
}

impl From<ImageStreamArg> for ImageStream {
    fn from(s: ImageStreamArg) -> Self {
        match s {
            ImageStreamArg::Img => ImageStream::ImgOnly,
            ImageStreamArg::Full => ImageStream::FullOnly,
            ImageStreamArg::FullPlusImg => ImageStream::FullPlusImg,
        }
    }
}
