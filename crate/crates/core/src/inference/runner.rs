//! The inference engine: bounded-concurrency fan-out over every
//! (endpoint, prompt, sample) combination with incremental, resumable
//! record capture.
//!
//! Records append to the JSONL sink as they arrive (crash-safe, any order);
//! when a run completes, the file is rewritten in canonical combination
//! order so identical runs produce identical bytes. Resume loads the
//! existing file and skips completed combinations without issuing new
//! backend calls for them.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use tokio::sync::{mpsc, Semaphore};
use tokio::task::JoinSet;

use crate::error::{Error, Result};
use crate::generator::GeneratedSample;
use crate::jsonl::{self, JsonlAppender};
use crate::manifest::timestamp;
use crate::prompts::{render_prompt, PromptRegistry};

use super::backend::BackendImpl;
use super::{InferenceRecord, RecordStatus, RetryPolicy, RunManifest, StatusTotals};

/// An endpoint name bound to a ready backend.
pub struct PreparedEndpoint {
    pub model_id: String,
    pub backend: BackendImpl,
}

/// Cooperative cancellation: the engine stops issuing new requests, drains
/// what is in flight, and leaves a resumable record file behind.
#[derive(Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

pub struct RunOptions {
    pub run_id: String,
    /// Per-endpoint in-flight request cap.
    pub parallelism: usize,
    pub retry: RetryPolicy,
    pub records_path: PathBuf,
    pub manifest_path: PathBuf,
    pub dataset_fingerprint: String,
    pub seed: u64,
    /// Keep the existing record file and skip completed combinations.
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub expected: u64,
    /// Records written by this invocation.
    pub written: u64,
    /// Combinations already present in the record file at start.
    pub skipped_existing: u64,
    pub totals: StatusTotals,
    pub complete: bool,
}

/// Size of the full combination grid for a run.
pub fn expected_combinations(
    endpoints: usize,
    prompts: usize,
    samples: usize,
) -> u64 {
    endpoints as u64 * prompts as u64 * samples as u64
}

/// Run the full grid. See the module docs for persistence and resume
/// semantics.
pub async fn run_inference(
    samples: &[GeneratedSample],
    registry: &PromptRegistry,
    endpoints: Vec<PreparedEndpoint>,
    options: &RunOptions,
    cancel: CancelToken,
) -> Result<RunOutcome> {
    if options.parallelism < 1 {
        return Err(Error::InvalidParameter("parallelism must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("samples"));
    }
    if endpoints.is_empty() {
        return Err(Error::EmptyInput("endpoints"));
    }
    if registry.is_empty() {
        return Err(Error::EmptyInput("prompts"));
    }
    for endpoint in &endpoints {
        endpoint.backend.preflight(&endpoint.model_id)?;
    }
    let started_at = timestamp();

    let done: HashSet<(String, String, String)> = if options.resume {
        if options.records_path.exists() {
            jsonl::read_jsonl::<InferenceRecord>(&options.records_path)?
                .into_iter()
                .map(|r| r.key())
                .collect()
        } else {
            HashSet::new()
        }
    } else {
        if options.records_path.exists() {
            std::fs::remove_file(&options.records_path)
                .map_err(|e| Error::io(&options.records_path, e))?;
        }
        HashSet::new()
    };

    let prompt_ids: Vec<String> = registry.ids().into_iter().map(String::from).collect();
    let endpoint_ids: Vec<String> = endpoints.iter().map(|e| e.model_id.clone()).collect();
    let expected = expected_combinations(endpoints.len(), prompt_ids.len(), samples.len());

    let samples: Arc<Vec<GeneratedSample>> = Arc::new(samples.to_vec());
    let registry = Arc::new(registry.clone());

    // Pending work per endpoint, in canonical combination order.
    let mut skipped_existing = 0u64;
    let mut pending: Vec<(Arc<BackendImpl>, String, Vec<(String, usize)>)> = Vec::new();
    for PreparedEndpoint { model_id, backend } in endpoints {
        let mut combos = Vec::new();
        for prompt_id in &prompt_ids {
            for (sample_idx, sample) in samples.iter().enumerate() {
                let key = (model_id.clone(), prompt_id.clone(), sample.sample_id.clone());
                if done.contains(&key) {
                    skipped_existing += 1;
                } else {
                    combos.push((prompt_id.clone(), sample_idx));
                }
            }
        }
        pending.push((Arc::new(backend), model_id, combos));
    }

    let (tx, mut rx) = mpsc::channel::<InferenceRecord>(1024);
    let records_path = options.records_path.clone();
    let writer = tokio::spawn(async move {
        let mut appender = JsonlAppender::open(&records_path)?;
        let mut written = 0u64;
        while let Some(record) = rx.recv().await {
            appender.append(&record)?;
            written += 1;
        }
        Ok::<u64, Error>(written)
    });

    let mut drivers = JoinSet::new();
    for (backend, model_id, combos) in pending {
        let samples = Arc::clone(&samples);
        let registry = Arc::clone(&registry);
        let tx = tx.clone();
        let cancel = cancel.clone();
        let retry = options.retry;
        let parallelism = options.parallelism;
        drivers.spawn(async move {
            let semaphore = Arc::new(Semaphore::new(parallelism));
            let mut requests = JoinSet::new();
            for (prompt_id, sample_idx) in combos {
                if cancel.is_cancelled() {
                    break;
                }
                let permit = Arc::clone(&semaphore)
                    .acquire_owned()
                    .await
                    .expect("semaphore never closes");
                let backend = Arc::clone(&backend);
                let samples = Arc::clone(&samples);
                let registry = Arc::clone(&registry);
                let tx = tx.clone();
                let model_id = model_id.clone();
                requests.spawn(async move {
                    let _permit = permit;
                    let sample = &samples[sample_idx];
                    let record =
                        answer_one(&backend, &registry, &model_id, &prompt_id, sample, retry)
                            .await;
                    // A closed channel means the writer died; the run error
                    // surfaces from the writer task itself.
                    let _ = tx.send(record).await;
                });
            }
            // Drain in-flight requests so a cancelled run loses nothing.
            while requests.join_next().await.is_some() {}
        });
    }
    drop(tx);
    while let Some(result) = drivers.join_next().await {
        result.map_err(|e| Error::Inference(format!("endpoint driver panicked: {e}")))?;
    }
    let written = writer
        .await
        .map_err(|e| Error::Inference(format!("record writer panicked: {e}")))??;

    finalize(
        options,
        &endpoint_ids,
        &prompt_ids,
        &samples,
        expected,
        written,
        skipped_existing,
        started_at,
    )
}

async fn answer_one(
    backend: &BackendImpl,
    registry: &PromptRegistry,
    model_id: &str,
    prompt_id: &str,
    sample: &GeneratedSample,
    retry: RetryPolicy,
) -> InferenceRecord {
    let spec = match registry.get(prompt_id) {
        Ok(spec) => spec,
        Err(e) => {
            return InferenceRecord::failed(
                model_id.into(),
                prompt_id.into(),
                sample.sample_id.clone(),
                0,
                e.to_string(),
            )
        }
    };
    let instance = match render_prompt(spec, sample) {
        Ok(instance) => instance,
        Err(e) => {
            return InferenceRecord::failed(
                model_id.into(),
                prompt_id.into(),
                sample.sample_id.clone(),
                0,
                format!("render: {e}"),
            )
        }
    };
    let mut attempt = 1u32;
    loop {
        match backend.respond(&instance, attempt).await {
            Ok((raw, latency)) => {
                return InferenceRecord::ok(
                    model_id.into(),
                    prompt_id.into(),
                    sample.sample_id.clone(),
                    raw,
                    latency,
                    attempt,
                )
            }
            Err(e) if e.is_retryable() && attempt <= retry.max_retries => {
                tokio::time::sleep(retry.delay(attempt)).await;
                attempt += 1;
            }
            Err(e) => {
                return InferenceRecord::failed(
                    model_id.into(),
                    prompt_id.into(),
                    sample.sample_id.clone(),
                    attempt,
                    e.message().to_string(),
                )
            }
        }
    }
}

/// Post-run bookkeeping: coverage check, canonical rewrite, manifest.
#[allow(clippy::too_many_arguments)]
fn finalize(
    options: &RunOptions,
    endpoint_ids: &[String],
    prompt_ids: &[String],
    samples: &[GeneratedSample],
    expected: u64,
    written: u64,
    skipped_existing: u64,
    started_at: u64,
) -> Result<RunOutcome> {
    let mut records: Vec<InferenceRecord> = jsonl::read_jsonl(&options.records_path)?;

    let model_idx: HashMap<&str, usize> = endpoint_ids
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_str(), i))
        .collect();
    let prompt_idx: HashMap<&str, usize> = prompt_ids
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let sample_idx: HashMap<&str, usize> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.sample_id.as_str(), i))
        .collect();

    // Drop records outside the current grid (stale resumes) and duplicates.
    let before = records.len();
    let mut seen = HashSet::new();
    records.retain(|r| {
        model_idx.contains_key(r.model_id.as_str())
            && prompt_idx.contains_key(r.prompt_id.as_str())
            && sample_idx.contains_key(r.sample_id.as_str())
            && seen.insert(r.key())
    });
    if records.len() != before {
        log::warn!(
            "dropped {} stale or duplicate records from {}",
            before - records.len(),
            options.records_path.display()
        );
    }

    let mut totals = StatusTotals::default();
    for record in &records {
        match record.status {
            RecordStatus::Ok => totals.ok += 1,
            RecordStatus::Failed => totals.failed += 1,
        }
    }
    let complete = records.len() as u64 == expected;

    if complete {
        records.sort_by_key(|r| {
            (
                model_idx[r.model_id.as_str()],
                prompt_idx[r.prompt_id.as_str()],
                sample_idx[r.sample_id.as_str()],
            )
        });
        let tmp = options.records_path.with_extension("jsonl.tmp");
        jsonl::write_jsonl(&tmp, &records)?;
        std::fs::rename(&tmp, &options.records_path)
            .map_err(|e| Error::io(&options.records_path, e))?;

        let manifest = RunManifest {
            run_id: options.run_id.clone(),
            dataset_fingerprint: options.dataset_fingerprint.clone(),
            endpoints: endpoint_ids.to_vec(),
            prompts: prompt_ids.to_vec(),
            sample_count: samples.len() as u64,
            started_at,
            finished_at: timestamp(),
            seed: options.seed,
            totals,
        };
        manifest.validate()?;
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format(&options.manifest_path, 0, e.to_string()))?;
        std::fs::write(&options.manifest_path, body + "\n")
            .map_err(|e| Error::io(&options.manifest_path, e))?;
    }

    Ok(RunOutcome {
        expected,
        written,
        skipped_existing,
        totals,
        complete,
    })
}

/// Blocking wrapper for synchronous callers (the CLI).
pub fn run_inference_blocking(
    samples: &[GeneratedSample],
    registry: &PromptRegistry,
    endpoints: Vec<PreparedEndpoint>,
    options: &RunOptions,
    cancel: CancelToken,
) -> Result<RunOutcome> {
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Error::Inference(format!("tokio runtime: {e}")))?;
    runtime.block_on(run_inference(samples, registry, endpoints, options, cancel))
}
