//! Optional HTTP bridge to a live logit server.
//!
//! Protocol: `POST <endpoint>` with body
//! `{"record_id": .., "view": "q|ctx|img|full", "candidates": [..], "payload_refs": [..]}`;
//! the server answers `{"logits": [..]}` with one finite entry per candidate.
//! Transport errors, timeouts, HTTP 429 and 5xx are retried with exponential
//! backoff; any other non-2xx status or a malformed body is a protocol error.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::ViewKind;
use crate::error::{CadeError, Result};

/// Environment variable holding the default endpoint URL.
pub const ENDPOINT_ENV: &str = "CADE_ENDPOINT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitRequest {
    pub record_id: String,
    pub view: ViewKind,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub payload_refs: Vec<String>,
}

#[derive(Deserialize)]
struct LogitResponse {
    logits: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Clone, Debug)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Maximum requests in flight for [`ProviderClient::fetch_many`].
    pub max_concurrency: usize,
}

impl ProviderConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
            max_concurrency: 4,
        }
    }

    /// Endpoint from `CADE_ENDPOINT`.
    pub fn from_env() -> Result<Self> {
        std::env::var(ENDPOINT_ENV)
            .map(Self::new)
            .map_err(|_| CadeError::invalid(format!("{ENDPOINT_ENV} is not set")))
    }
}

enum Failure {
    Transient(String),
    Fatal(CadeError),
}

pub struct ProviderClient {
    config: ProviderConfig,
    agent: ureq::Agent,
}

impl ProviderClient {
    pub fn new(config: ProviderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn attempt(&self, request: &LogitRequest) -> std::result::Result<Vec<f64>, Failure> {
        let mut response = match self.agent.post(&self.config.endpoint).send_json(request) {
            Ok(r) => r,
            Err(e @ (ureq::Error::BadUri(_) | ureq::Error::Http(_))) => {
                return Err(Failure::Fatal(CadeError::Protocol(e.to_string())))
            }
            Err(e) => return Err(Failure::Transient(e.to_string())),
        };
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(CadeError::Protocol(format!(
                "HTTP {status}"
            ))));
        }
        let body: LogitResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Failure::Fatal(CadeError::Protocol(format!("bad response body: {e}"))))?;
        if body.logits.len() != request.candidates.len() {
            return Err(Failure::Fatal(CadeError::Protocol(format!(
                "{} logits for {} candidates",
                body.logits.len(),
                request.candidates.len()
            ))));
        }
        if body.logits.iter().any(|x| !x.is_finite()) {
            return Err(Failure::Fatal(CadeError::Protocol(
                "non-finite logit".into(),
            )));
        }
        Ok(body.logits)
    }

    /// Logits for one (record, view), retrying transient failures.
    pub fn fetch_view_logits(&self, request: &LogitRequest) -> Result<Vec<f64>> {
        let attempts = self.config.retry.attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Ok(logits) => return Ok(logits),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => {
                    log::debug!(
                        "attempt {attempt}/{attempts} for {} failed: {msg}",
                        request.record_id
                    );
                    last_error = msg;
                    if attempt < attempts {
                        thread::sleep(self.config.retry.delay(attempt));
                    }
                }
            }
        }
        Err(CadeError::EndpointUnavailable {
            attempts,
            last_error,
        })
    }

    /// Fetches many requests with at most `max_concurrency` in flight; results
    /// come back in request order.
    pub fn fetch_many(&self, requests: &[LogitRequest]) -> Vec<Result<Vec<f64>>> {
        let cap = self.config.max_concurrency.max(1);
        let mut out = Vec::with_capacity(requests.len());
        for chunk in requests.chunks(cap) {
            let results: Vec<Result<Vec<f64>>> = thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|r| s.spawn(move || self.fetch_view_logits(r)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("fetch thread panicked"))
                    .collect()
            });
            out.extend(results);
        }
        out
    }
}
