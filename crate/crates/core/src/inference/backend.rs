//! Chat-completion backends: a real HTTP client and a deterministic offline
//! mock.
//!
//! The mock is the pipeline's test double: it answers from the gold labels
//! with configurable behaviors (exact oracle, noisy oracle, constant,
//! seeded adversarial flips) plus scripted transient failures, so retry
//! accounting and end-to-end runs are verifiable without any network.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::label::GoldLabel;
use crate::manifest::stable_hash64;
use crate::prompts::{AnswerContract, PromptInstance};

use super::ModelEndpoint;

/// Request-level failure, split by whether a retry can help.
#[derive(Debug, Clone)]
pub enum BackendError {
    Retryable(String),
    Fatal(String),
}

impl BackendError {
    pub fn message(&self) -> &str {
        match self {
            BackendError::Retryable(m) | BackendError::Fatal(m) => m,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Retryable(_))
    }
}

/// A backend ready to answer prompt instances.
pub enum BackendImpl {
    Http(HttpBackend),
    Mock(MockBackend),
}

impl BackendImpl {
    /// Cheap checks run before any request is issued, so misconfiguration
    /// (most importantly a missing API key) fails the whole batch fast.
    pub fn preflight(&self, model_id: &str) -> Result<()> {
        match self {
            BackendImpl::Http(http) => http.preflight(model_id),
            BackendImpl::Mock(_) => Ok(()),
        }
    }

    /// Answer one rendered prompt. Returns the raw response text and the
    /// request latency in seconds.
    pub async fn respond(
        &self,
        instance: &PromptInstance,
        attempt: u32,
    ) -> std::result::Result<(String, f64), BackendError> {
        match self {
            BackendImpl::Http(http) => http.respond(instance).await,
            BackendImpl::Mock(mock) => mock.respond(instance, attempt).await,
        }
    }
}

/// Client for the de-facto chat-completions HTTP JSON shape: a `messages`
/// array in, a single text choice out.
pub struct HttpBackend {
    endpoint: ModelEndpoint,
    client: reqwest::Client,
    url: String,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl HttpBackend {
    pub fn new(endpoint: ModelEndpoint, timeout: Duration) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Inference(format!("http client: {e}")))?;
        let url = format!(
            "{}/chat/completions",
            endpoint.base_url.trim_end_matches('/')
        );
        Ok(HttpBackend {
            endpoint,
            client,
            url,
        })
    }

    fn api_key(&self) -> Result<Option<String>> {
        match &self.endpoint.api_key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.trim().is_empty() => Ok(Some(key)),
                _ => Err(Error::Auth {
                    endpoint: self.endpoint.model_id.clone(),
                    var: var.clone(),
                }),
            },
        }
    }

    fn preflight(&self, _model_id: &str) -> Result<()> {
        self.api_key().map(|_| ())
    }

    async fn respond(
        &self,
        instance: &PromptInstance,
    ) -> std::result::Result<(String, f64), BackendError> {
        let key = self
            .api_key()
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        let body = serde_json::json!({
            "model": self.endpoint.model_name,
            "messages": [{"role": "user", "content": instance.rendered_text}],
            "temperature": self.endpoint.temperature,
            "max_tokens": self.endpoint.max_output_tokens,
        });
        let mut request = self.client.post(&self.url).json(&body);
        if let Some(key) = key {
            request = request.bearer_auth(key);
        }
        let started = std::time::Instant::now();
        let response = request.send().await.map_err(|e| {
            // Connect errors and timeouts are transient by assumption.
            BackendError::Retryable(format!("request error: {e}"))
        })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Retryable(format!("http status {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("http status {status}")));
        }
        let parsed: ChatCompletionResponse = response
            .json()
            .await
            .map_err(|e| BackendError::Fatal(format!("malformed response body: {e}")))?;
        let latency = started.elapsed().as_secs_f64();
        match parsed.choices.into_iter().next() {
            Some(choice) => Ok((choice.message.content, latency)),
            None => Err(BackendError::Fatal("response has no choices".into())),
        }
    }
}

/// Deterministic behaviors for the offline mock backend.
#[derive(Debug, Clone, PartialEq)]
pub enum MockPolicy {
    /// Answer the sample's gold label, bare.
    Oracle,
    /// Answer the gold label wrapped in explanation/markdown noise of the
    /// kinds real fine-tuned models produce.
    NoisyOracle,
    /// Always the same text.
    Constant(String),
    /// Answer the wrong label with the given probability, decided per
    /// (sample, prompt) by the backend seed.
    AdversarialFlip { probability: f64 },
}

/// Noise wrappers for the noisy oracle. None of them may contain label
/// tokens of their own.
const NOISE_TEMPLATES: [&str; 8] = [
    "ANALISI: il testo contiene termini riferiti a persone. Label: {label}",
    "**{label}**",
    "La risposta è: {label}.",
    "{label}\n\nMotivazione: le forme usate nel testo determinano la classificazione.",
    "Risposta finale -> {label}!",
    "### Valutazione\n{label}",
    "Dopo un'attenta analisi direi {label}",
    "```\n{label}\n```",
];

/// Observable counters for tests: total calls and the concurrency
/// high-water mark.
#[derive(Debug, Default)]
pub struct MockStats {
    pub calls: AtomicU64,
    in_flight: AtomicU64,
    pub max_in_flight: AtomicU64,
}

impl MockStats {
    fn enter(&self) {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
    }

    fn exit(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

pub struct MockBackend {
    policy: MockPolicy,
    gold: HashMap<String, GoldLabel>,
    seed: u64,
    /// Fail this many attempts per combination before answering.
    fail_first_attempts: u32,
    /// Simulated latency; keeps requests overlapping so concurrency is
    /// observable in tests.
    latency: Duration,
    stats: Arc<MockStats>,
}

impl MockBackend {
    pub fn new(policy: MockPolicy, gold: HashMap<String, GoldLabel>, seed: u64) -> Self {
        MockBackend {
            policy,
            gold,
            seed,
            fail_first_attempts: 0,
            latency: Duration::ZERO,
            stats: Arc::new(MockStats::default()),
        }
    }

    pub fn with_fail_first(mut self, attempts: u32) -> Self {
        self.fail_first_attempts = attempts;
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn stats(&self) -> Arc<MockStats> {
        Arc::clone(&self.stats)
    }

    /// The deterministic answer for one instance: same (instance, policy,
    /// seed) always yields the same text.
    pub fn mock_respond(
        &self,
        instance: &PromptInstance,
    ) -> std::result::Result<String, BackendError> {
        let gold = *self.gold.get(&instance.sample_id).ok_or_else(|| {
            BackendError::Fatal(format!(
                "mock backend has no gold label for sample `{}`",
                instance.sample_id
            ))
        })?;
        let answer = |label: GoldLabel| AnswerContract::BareLabel.answer(label);
        let text = match &self.policy {
            MockPolicy::Oracle => answer(gold),
            MockPolicy::Constant(text) => text.clone(),
            MockPolicy::NoisyOracle => {
                let pick = self.combination_hash(instance, b"noise") as usize;
                NOISE_TEMPLATES[pick % NOISE_TEMPLATES.len()]
                    .replace("{label}", &answer(gold))
            }
            MockPolicy::AdversarialFlip { probability } => {
                let hash = self.combination_hash(instance, b"flip");
                // Map to [0,1) with 53 bits so probability 1.0 always flips.
                let unit = (hash >> 11) as f64 / (1u64 << 53) as f64;
                if unit < *probability {
                    answer(gold.flipped())
                } else {
                    answer(gold)
                }
            }
        };
        Ok(text)
    }

    fn combination_hash(&self, instance: &PromptInstance, domain: &[u8]) -> u64 {
        stable_hash64(&[
            &self.seed.to_le_bytes(),
            instance.sample_id.as_bytes(),
            instance.prompt_id.as_bytes(),
            domain,
        ])
    }

    async fn respond(
        &self,
        instance: &PromptInstance,
        attempt: u32,
    ) -> std::result::Result<(String, f64), BackendError> {
        self.stats.enter();
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let outcome = if attempt <= self.fail_first_attempts {
            Err(BackendError::Retryable(format!(
                "scripted failure {attempt}/{}",
                self.fail_first_attempts
            )))
        } else {
            // Latency is reported as 0 so mock record files are byte-stable.
            self.mock_respond(instance).map(|text| (text, 0.0))
        };
        self.stats.exit();
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalizer::RuleSet;
    use crate::label::Prediction;

    fn instance(sample_id: &str, prompt_id: &str) -> PromptInstance {
        PromptInstance {
            prompt_id: prompt_id.into(),
            sample_id: sample_id.into(),
            rendered_text: "Testo: esempio".into(),
        }
    }

    fn gold_map() -> HashMap<String, GoldLabel> {
        HashMap::from([
            ("s-inc".to_string(), GoldLabel::Inclusive),
            ("s-non".to_string(), GoldLabel::NonInclusive),
        ])
    }

    #[test]
    fn oracle_answers_the_gold_label() {
        let mock = MockBackend::new(MockPolicy::Oracle, gold_map(), 1);
        assert_eq!(mock.mock_respond(&instance("s-inc", "zsl#0")).unwrap(), "INCLUSIVO");
        assert_eq!(
            mock.mock_respond(&instance("s-non", "zsl#0")).unwrap(),
            "NON INCLUSIVO"
        );
    }

    #[test]
    fn noisy_oracle_stays_parseable_and_deterministic() {
        let mock = MockBackend::new(MockPolicy::NoisyOracle, gold_map(), 7);
        let rules = RuleSet::default_rules();
        for sample in ["s-inc", "s-non"] {
            for prompt in ["zsl#0", "zsl#1", "fsl#0", "zslcot#0"] {
                let a = mock.mock_respond(&instance(sample, prompt)).unwrap();
                let b = mock.mock_respond(&instance(sample, prompt)).unwrap();
                assert_eq!(a, b, "same combination must answer the same");
                let want = if sample == "s-inc" {
                    Prediction::Inclusive
                } else {
                    Prediction::NonInclusive
                };
                assert_eq!(rules.normalize(&a).label, want, "noise `{a}` must normalize");
            }
        }
    }

    #[test]
    fn full_flip_is_always_wrong() {
        let mock = MockBackend::new(
            MockPolicy::AdversarialFlip { probability: 1.0 },
            gold_map(),
            3,
        );
        assert_eq!(
            mock.mock_respond(&instance("s-inc", "zsl#0")).unwrap(),
            "NON INCLUSIVO"
        );
        assert_eq!(
            mock.mock_respond(&instance("s-non", "zsl#0")).unwrap(),
            "INCLUSIVO"
        );
        let never = MockBackend::new(
            MockPolicy::AdversarialFlip { probability: 0.0 },
            gold_map(),
            3,
        );
        assert_eq!(never.mock_respond(&instance("s-inc", "zsl#0")).unwrap(), "INCLUSIVO");
    }

    #[test]
    fn unknown_sample_is_fatal() {
        let mock = MockBackend::new(MockPolicy::Oracle, gold_map(), 1);
        let err = mock.mock_respond(&instance("missing", "zsl#0")).unwrap_err();
        assert!(!err.is_retryable());
    }

    #[tokio::test]
    async fn scripted_failures_respect_attempt_numbers() {
        let mock = MockBackend::new(MockPolicy::Oracle, gold_map(), 1).with_fail_first(2);
        let inst = instance("s-inc", "zsl#0");
        assert!(mock.respond(&inst, 1).await.is_err());
        assert!(mock.respond(&inst, 2).await.is_err());
        let (text, latency) = mock.respond(&inst, 3).await.unwrap();
        assert_eq!(text, "INCLUSIVO");
        assert_eq!(latency, 0.0);
        assert_eq!(mock.stats().calls.load(Ordering::SeqCst), 3);
    }
}
