//! Inference harness: run every (model, prompt, sample) combination against
//! chat-completion backends with bounded concurrency, retries, and
//! crash-safe incremental record capture.

pub mod backend;
pub mod runner;

pub use backend::{BackendError, BackendImpl, HttpBackend, MockBackend, MockPolicy, MockStats};
pub use runner::{
    expected_combinations, run_inference, run_inference_blocking, CancelToken, PreparedEndpoint,
    RunOptions, RunOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One HTTP chat-completion endpoint. The API key is referenced by env-var
/// name; secrets never live in config files or records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEndpoint {
    /// Short name used in reports, e.g. `gpt_4o_mini`.
    pub model_id: String,
    pub base_url: String,
    /// Backend-side model identifier.
    pub model_name: String,
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Failed,
}

/// Result of one (model, prompt, sample) request, successful or not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub model_id: String,
    pub prompt_id: String,
    pub sample_id: String,
    pub raw_response: Option<String>,
    pub latency_seconds: f64,
    pub attempt_count: u32,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl InferenceRecord {
    pub fn ok(
        model_id: String,
        prompt_id: String,
        sample_id: String,
        raw_response: String,
        latency_seconds: f64,
        attempt_count: u32,
    ) -> Self {
        InferenceRecord {
            model_id,
            prompt_id,
            sample_id,
            raw_response: Some(raw_response),
            latency_seconds,
            attempt_count,
            status: RecordStatus::Ok,
            error: None,
        }
    }

    pub fn failed(
        model_id: String,
        prompt_id: String,
        sample_id: String,
        attempt_count: u32,
        error: String,
    ) -> Self {
        InferenceRecord {
            model_id,
            prompt_id,
            sample_id,
            raw_response: None,
            latency_seconds: 0.0,
            attempt_count,
            status: RecordStatus::Failed,
            error: Some(error),
        }
    }

    pub fn key(&self) -> (String, String, String) {
        (
            self.model_id.clone(),
            self.prompt_id.clone(),
            self.sample_id.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusTotals {
    pub ok: u64,
    pub failed: u64,
}

/// Sidecar manifest describing one completed inference run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// Content hash of the sample set the run was issued over.
    pub dataset_fingerprint: String,
    pub endpoints: Vec<String>,
    pub prompts: Vec<String>,
    pub sample_count: u64,
    pub started_at: u64,
    pub finished_at: u64,
    pub seed: u64,
    pub totals: StatusTotals,
}

impl RunManifest {
    /// Totals must cover the full combination grid.
    pub fn validate(&self) -> Result<()> {
        let expected =
            self.endpoints.len() as u64 * self.prompts.len() as u64 * self.sample_count;
        let got = self.totals.ok + self.totals.failed;
        if got != expected {
            return Err(Error::Inference(format!(
                "run `{}`: {got} records for {expected} combinations",
                self.run_id
            )));
        }
        Ok(())
    }
}

/// Exponential backoff settings for failed requests.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt; a request is tried at most
    /// `max_retries + 1` times.
    pub max_retries: u32,
    pub initial_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): initial × 2^(attempt−1),
    /// capped at `max_delay_ms`.
    pub fn delay(&self, attempt: u32) -> std::time::Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(20);
        let ms = self
            .initial_delay_ms
            .saturating_mul(factor)
            .min(self.max_delay_ms);
        std::time::Duration::from_millis(ms)
    }
}
