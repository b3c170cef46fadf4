//! Declarative run configuration: one TOML file drives every stage.
//!
//! String values may interpolate environment variables with `${VAR}`;
//! secrets themselves stay out of config files (endpoints name the env var
//! holding their API key instead).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::ExpansionPolicy;
use crate::inference::{BackendImpl, HttpBackend, MockBackend, MockPolicy, ModelEndpoint, PreparedEndpoint, RetryPolicy};
use crate::label::GoldLabel;
use crate::manifest::sha256_bytes;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub seed_corpus: PathBuf,
    pub vocabulary: PathBuf,
    pub prompts_dir: PathBuf,
    pub endpoints: PathBuf,
    /// Normalizer rule file; the embedded default applies when absent.
    #[serde(default)]
    pub rules: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Exhaustive,
    Capped,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub target_length: usize,
    pub policy: PolicyKind,
    /// Per-chunk combination cap under the capped policy.
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub seed: u64,
    /// Optional corpus-level total for the test partition.
    #[serde(default)]
    pub test_total: Option<usize>,
    /// Optional corpus-level total for the train partition.
    #[serde(default)]
    pub train_total: Option<usize>,
}

fn default_cap() -> usize {
    200
}

impl GenerationConfig {
    pub fn expansion_policy(&self) -> ExpansionPolicy {
        match self.policy {
            PolicyKind::Exhaustive => ExpansionPolicy::Exhaustive,
            PolicyKind::Capped => ExpansionPolicy::Capped {
                cap: self.cap,
                seed: self.seed,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatConfig {
    /// Prompts used to build chat rows; each sample yields one row per
    /// prompt listed here.
    #[serde(default = "default_chat_prompts")]
    pub prompts: Vec<String>,
    /// Optional exact row count for the exported chat dataset.
    #[serde(default)]
    pub total_rows: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_chat_prompts() -> Vec<String> {
    vec!["zsl#0".to_string()]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PromptConfig {
    #[serde(default = "default_per_class")]
    pub fsl_exemplars_per_class: usize,
    #[serde(default)]
    pub exemplar_seed: u64,
}

fn default_per_class() -> usize {
    1
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            fsl_exemplars_per_class: 1,
            exemplar_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InferenceConfig {
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    #[serde(default = "default_initial_backoff")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff")]
    pub max_backoff_ms: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_parallelism() -> usize {
    8
}
fn default_max_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    30
}
fn default_initial_backoff() -> u64 {
    500
}
fn default_max_backoff() -> u64 {
    8_000
}

impl InferenceConfig {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_delay_ms: self.initial_backoff_ms,
            max_delay_ms: self.max_backoff_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvaluationConfig {
    #[serde(default = "default_bin_width")]
    pub bin_width: usize,
}

fn default_bin_width() -> usize {
    10
}

/// The whole pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub split: SplitConfig,
    pub generation: GenerationConfig,
    #[serde(default = "default_chat_config")]
    pub chat: ChatConfig,
    #[serde(default)]
    pub prompts: PromptConfig,
    pub inference: InferenceConfig,
    pub evaluation: EvaluationConfig,
    /// SHA-256 of the resolved config text; ties manifests to the exact
    /// configuration.
    #[serde(skip)]
    pub content_hash: String,
}

fn default_chat_config() -> ChatConfig {
    ChatConfig {
        prompts: default_chat_prompts(),
        total_rows: None,
        seed: 0,
    }
}

/// Replace `${VAR}` references with environment values; unset variables are
/// a config error so broken interpolation cannot slip through silently.
pub fn interpolate_env(raw: &str) -> Result<String> {
    let pattern = regex::Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex");
    let mut out = String::with_capacity(raw.len());
    let mut last = 0;
    for caps in pattern.captures_iter(raw) {
        let whole = caps.get(0).expect("match");
        let var = &caps[1];
        out.push_str(&raw[last..whole.start()]);
        match std::env::var(var) {
            Ok(value) => out.push_str(&value),
            Err(_) => {
                return Err(Error::Config(format!(
                    "config references unset environment variable `{var}`"
                )))
            }
        }
        last = whole.end();
    }
    out.push_str(&raw[last..]);
    Ok(out)
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let resolved = interpolate_env(&raw)?;
        let mut config: PipelineConfig = toml::from_str(&resolved)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.content_hash = sha256_bytes(resolved.as_bytes());
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!(
                "split.ratio must be in (0,1), got {}",
                self.split.ratio
            )));
        }
        if self.generation.target_length < 1 {
            return Err(Error::Config("generation.target_length must be at least 1".into()));
        }
        if self.generation.policy == PolicyKind::Capped && self.generation.cap < 1 {
            return Err(Error::Config("generation.cap must be at least 1".into()));
        }
        if self.inference.parallelism < 1 {
            return Err(Error::Config("inference.parallelism must be at least 1".into()));
        }
        if self.evaluation.bin_width < 1 {
            return Err(Error::Config("evaluation.bin_width must be at least 1".into()));
        }
        if self.chat.prompts.is_empty() {
            return Err(Error::Config("chat.prompts must list at least one prompt".into()));
        }
        for (name, path) in [
            ("paths.seed_corpus", &self.paths.seed_corpus),
            ("paths.vocabulary", &self.paths.vocabulary),
            ("paths.prompts_dir", &self.paths.prompts_dir),
            ("paths.endpoints", &self.paths.endpoints),
        ] {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "{name} does not exist: {}",
                    path.display()
                )));
            }
        }
        if let Some(rules) = &self.paths.rules {
            if !rules.exists() {
                return Err(Error::Config(format!(
                    "paths.rules does not exist: {}",
                    rules.display()
                )));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.inference.timeout_seconds)
    }
}

/// Endpoint list file: `[[endpoints]]` entries, either real HTTP backends or
/// offline mocks.
#[derive(Debug, Clone, Deserialize)]
pub struct EndpointsFile {
    pub endpoints: Vec<EndpointEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EndpointEntry {
    Http(HttpEndpointEntry),
    Mock(MockEndpointEntry),
}

#[derive(Debug, Clone, Deserialize)]
pub struct HttpEndpointEntry {
    pub model_id: String,
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    256
}

#[derive(Debug, Clone, Deserialize)]
pub struct MockEndpointEntry {
    pub model_id: String,
    /// `oracle`, `noisy-oracle`, `constant`, or `adversarial-flip`.
    pub policy: String,
    #[serde(default)]
    pub constant: Option<String>,
    #[serde(default)]
    pub flip_probability: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fail_first: u32,
    #[serde(default)]
    pub latency_ms: u64,
}

impl EndpointEntry {
    pub fn model_id(&self) -> &str {
        match self {
            EndpointEntry::Http(e) => &e.model_id,
            EndpointEntry::Mock(e) => &e.model_id,
        }
    }
}

impl EndpointsFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let resolved = interpolate_env(&raw)?;
        let file: EndpointsFile = toml::from_str(&resolved)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if file.endpoints.is_empty() {
            return Err(Error::Config(format!(
                "{}: endpoint list is empty",
                path.display()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for entry in &file.endpoints {
            if !seen.insert(entry.model_id()) {
                return Err(Error::Config(format!(
                    "duplicate endpoint model_id `{}`",
                    entry.model_id()
                )));
            }
        }
        Ok(file)
    }

    /// Build runnable backends. Mock endpoints answer from the provided
    /// gold-label map.
    pub fn prepare(
        &self,
        gold: &HashMap<String, GoldLabel>,
        timeout: Duration,
    ) -> Result<Vec<PreparedEndpoint>> {
        self.endpoints
            .iter()
            .map(|entry| entry.prepare(gold, timeout))
            .collect()
    }
}

impl EndpointEntry {
    pub fn prepare(
        &self,
        gold: &HashMap<String, GoldLabel>,
        timeout: Duration,
    ) -> Result<PreparedEndpoint> {
        match self {
            EndpointEntry::Http(entry) => {
                let endpoint = ModelEndpoint {
                    model_id: entry.model_id.clone(),
                    base_url: entry.base_url.clone(),
                    model_name: entry.model_name.clone(),
                    api_key_env: entry.api_key_env.clone(),
                    temperature: entry.temperature,
                    max_output_tokens: entry.max_tokens,
                };
                Ok(PreparedEndpoint {
                    model_id: entry.model_id.clone(),
                    backend: BackendImpl::Http(HttpBackend::new(endpoint, timeout)?),
                })
            }
            EndpointEntry::Mock(entry) => {
                let policy = match entry.policy.as_str() {
                    "oracle" => MockPolicy::Oracle,
                    "noisy-oracle" | "noisy_oracle" => MockPolicy::NoisyOracle,
                    "constant" => MockPolicy::Constant(entry.constant.clone().ok_or_else(
                        || {
                            Error::Config(format!(
                                "mock endpoint `{}`: constant policy needs `constant`",
                                entry.model_id
                            ))
                        },
                    )?),
                    "adversarial-flip" | "adversarial_flip" => {
                        let probability = entry.flip_probability.ok_or_else(|| {
                            Error::Config(format!(
                                "mock endpoint `{}`: adversarial-flip needs `flip_probability`",
                                entry.model_id
                            ))
                        })?;
                        if !(0.0..=1.0).contains(&probability) {
                            return Err(Error::Config(format!(
                                "mock endpoint `{}`: flip_probability must be in [0,1]",
                                entry.model_id
                            )));
                        }
                        MockPolicy::AdversarialFlip { probability }
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "mock endpoint `{}`: unknown policy `{other}`",
                            entry.model_id
                        )))
                    }
                };
                let backend = MockBackend::new(policy, gold.clone(), entry.seed)
                    .with_fail_first(entry.fail_first)
                    .with_latency(Duration::from_millis(entry.latency_ms));
                Ok(PreparedEndpoint {
                    model_id: entry.model_id.clone(),
                    backend: BackendImpl::Mock(backend),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_substitutes_and_rejects_unset() {
        std::env::set_var("INCLUSIVO_TEST_VAR", "demo");
        assert_eq!(
            interpolate_env("path = \"${INCLUSIVO_TEST_VAR}/x\"").unwrap(),
            "path = \"demo/x\""
        );
        std::env::remove_var("INCLUSIVO_TEST_VAR");
        assert!(interpolate_env("x = \"${INCLUSIVO_UNSET_VAR}\"").is_err());
        // No references: text passes through untouched.
        assert_eq!(interpolate_env("a = 1").unwrap(), "a = 1");
    }

    fn write_minimal_inputs(dir: &Path) {
        std::fs::write(dir.join("seed.jsonl"), "{}\n").unwrap();
        std::fs::write(dir.join("vocab.csv"), "surface,category,gender,orthography\n").unwrap();
        std::fs::create_dir_all(dir.join("prompts")).unwrap();
        std::fs::write(dir.join("endpoints.toml"), "").unwrap();
    }

    fn minimal_config(dir: &Path) -> String {
        format!(
            r#"
[paths]
seed_corpus = "{0}/seed.jsonl"
vocabulary = "{0}/vocab.csv"
prompts_dir = "{0}/prompts"
endpoints = "{0}/endpoints.toml"
output_dir = "{0}/out"

[split]
ratio = 0.7
seed = 42

[generation]
target_length = 30
policy = "capped"
cap = 100
seed = 7

[inference]
parallelism = 4

[evaluation]
bin_width = 10
"#,
            dir.display()
        )
    }

    #[test]
    fn loads_with_defaults_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        write_minimal_inputs(dir.path());
        let path = dir.path().join("pipeline.toml");
        std::fs::write(&path, minimal_config(dir.path())).unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.split.ratio, 0.7);
        assert_eq!(config.chat.prompts, vec!["zsl#0"]);
        assert_eq!(config.prompts.fsl_exemplars_per_class, 1);
        assert_eq!(config.inference.max_retries, 3);
        assert_eq!(config.content_hash.len(), 64);
    }

    #[test]
    fn bad_ratio_is_field_precise() {
        let dir = tempfile::tempdir().unwrap();
        write_minimal_inputs(dir.path());
        let path = dir.path().join("pipeline.toml");
        std::fs::write(&path, minimal_config(dir.path()).replace("ratio = 0.7", "ratio = 1.4"))
            .unwrap();
        let err = PipelineConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("split.ratio"), "got: {err}");
    }

    #[test]
    fn missing_input_path_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_minimal_inputs(dir.path());
        std::fs::remove_file(dir.path().join("vocab.csv")).unwrap();
        let path = dir.path().join("pipeline.toml");
        std::fs::write(&path, minimal_config(dir.path())).unwrap();
        let err = PipelineConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("paths.vocabulary"), "got: {err}");
    }

    #[test]
    fn endpoints_file_parses_both_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("endpoints.toml");
        std::fs::write(
            &path,
            r#"
[[endpoints]]
kind = "mock"
model_id = "mock_oracle"
policy = "oracle"
seed = 1

[[endpoints]]
kind = "mock"
model_id = "mock_flip30"
policy = "adversarial-flip"
flip_probability = 0.3
seed = 2

[[endpoints]]
kind = "http"
model_id = "gpt_4o_mini"
base_url = "https://api.example.com/v1"
model_name = "gpt-4o-mini"
api_key_env = "EXAMPLE_API_KEY"
temperature = 0.0
"#,
        )
        .unwrap();
        let file = EndpointsFile::load(&path).unwrap();
        assert_eq!(file.endpoints.len(), 3);
        assert_eq!(file.endpoints[0].model_id(), "mock_oracle");
        let prepared = file
            .prepare(&HashMap::new(), Duration::from_secs(5))
            .unwrap();
        assert_eq!(prepared.len(), 3);
    }

    #[test]
    fn duplicate_model_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("endpoints.toml");
        std::fs::write(
            &path,
            r#"
[[endpoints]]
kind = "mock"
model_id = "m"
policy = "oracle"

[[endpoints]]
kind = "mock"
model_id = "m"
policy = "oracle"
"#,
        )
        .unwrap();
        assert!(EndpointsFile::load(&path).is_err());
    }

    #[test]
    fn bad_mock_policy_is_a_config_error() {
        let entry = MockEndpointEntry {
            model_id: "m".into(),
            policy: "telepathy".into(),
            constant: None,
            flip_probability: None,
            seed: 0,
            fail_first: 0,
            latency_ms: 0,
        };
        let err = EndpointEntry::Mock(entry)
            .prepare(&HashMap::new(), Duration::from_secs(1))
            .err()
            .expect("unknown policy must fail");
        assert!(err.to_string().contains("telepathy"));
    }
}
