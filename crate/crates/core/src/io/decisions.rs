//! Decision JSONL and the run manifest written next to every output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{Decision, EngineConfig, HyperParams};
use crate::error::{CadeError, Result};

/// One line of a decisions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionLine {
    pub id: String,
    pub chosen: String,
    pub chosen_index: usize,
    pub gated: bool,
    pub m: f64,
    #[serde(rename = "d")]
    pub divergence: f64,
    pub alpha_i: f64,
    pub scores: Vec<f64>,
}

impl DecisionLine {
    pub fn new(id: &str, d: &Decision) -> Self {
        Self {
            id: id.to_string(),
            chosen: d.chosen.clone(),
            chosen_index: d.chosen_index,
            gated: d.gated,
            m: d.confidence_m,
            divergence: d.divergence_d,
            alpha_i: d.alpha_i,
            scores: d.scores.clone(),
        }
    }

    pub fn to_decision(&self) -> Decision {
        Decision {
            chosen: self.chosen.clone(),
            chosen_index: self.chosen_index,
            gated: self.gated,
            confidence_m: self.m,
            divergence_d: self.divergence,
            alpha_i: self.alpha_i,
            scores: self.scores.clone(),
        }
    }
}

/// SHA-256 of one input file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| CadeError::io_at(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_config: Option<EngineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper_params: Option<HyperParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, inputs: &[&Path]) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            inputs: inputs
                .iter()
                .map(InputDigest::of_file)
                .collect::<Result<_>>()?,
            engine_config: None,
            hyper_params: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    /// `<output>.manifest.json`.
    pub fn path_for(output: impl AsRef<Path>) -> PathBuf {
        let mut s = output.as_ref().as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    /// Writes the manifest next to `output`.
    pub fn write_beside(&self, output: impl AsRef<Path>) -> Result<PathBuf> {
        let path = Self::path_for(output);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CadeError::io_at(&path, e))?;
        Ok(path)
    }
}

pub fn write_decisions_to<W: Write>(mut out: W, lines: &[DecisionLine]) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut out, l).map_err(|e| CadeError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the decisions JSONL plus its manifest.
pub fn write_decisions(
    path: impl AsRef<Path>,
    lines: &[DecisionLine],
    manifest: &RunManifest,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CadeError::io_at(path, e))?;
    write_decisions_to(BufWriter::new(file), lines)?;
    manifest.write_beside(path)?;
    Ok(())
}

pub fn read_decisions(path: impl AsRef<Path>) -> Result<Vec<DecisionLine>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|e| CadeError::io_at(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CadeError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
