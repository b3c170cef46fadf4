//! Pipeline stage commands. Each command validates its inputs, writes its
//! outputs plus a stage manifest with content hashes, and composes with the
//! others through the fixed output layout.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use inclusivo_core::config::{EndpointsFile, PipelineConfig};
use inclusivo_core::error::{Error, Result};
use inclusivo_core::eval::{
    self, best_prompt, confusion, label_distribution, length_analysis, length_histogram,
    position_analysis, prompt_accuracy_table, svg, MetricsReport, ScoredSample,
};
use inclusivo_core::generator::{
    expand_all, merge_chunks, subsample_preserving_order, GeneratedSample, TemplateChunk,
};
use inclusivo_core::inference::{
    run_inference_blocking, CancelToken, InferenceRecord, RecordStatus, RunOptions,
};
use inclusivo_core::jsonl;
use inclusivo_core::label::Prediction;
use inclusivo_core::manifest::{sha256_file, StageManifest};
use inclusivo_core::normalizer::{batch_parse_rate, NormalizedRow, RuleSet};
use inclusivo_core::prompts::{build_chat_rows, export_chat_jsonl, ChatRow, PromptRegistry};
use inclusivo_core::split::{read_split, split_templates, write_split, Partition, TemplateSplit};
use inclusivo_core::templates::{extract_templates, SeedDocument, TemplateLabel, TemplateSentence};
use inclusivo_core::vocab::VocabularyStore;

use crate::layout::OutputLayout;

/// Global CLI overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<std::path::PathBuf>,
    pub seed_override: Option<u64>,
}

/// Inference-specific flag overrides.
#[derive(Debug, Clone, Default)]
pub struct InferFlags {
    pub parallelism: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_seconds: Option<u64>,
    pub resume: Option<String>,
}

/// Apply CLI overrides. A seed override pins every stage seed so one flag
/// reproduces or perturbs a whole run.
pub fn apply_overrides(mut config: PipelineConfig, overrides: &Overrides) -> PipelineConfig {
    if let Some(dir) = &overrides.output_dir {
        config.paths.output_dir = dir.clone();
    }
    if let Some(seed) = overrides.seed_override {
        config.split.seed = seed;
        config.generation.seed = seed;
        config.chat.seed = seed;
        config.prompts.exemplar_seed = seed;
        config.inference.seed = seed;
    }
    config
}

fn layout(config: &PipelineConfig) -> OutputLayout {
    OutputLayout::new(&config.paths.output_dir)
}

fn require(path: &Path, command: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            command: command.to_string(),
        })
    }
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn load_templates(layout: &OutputLayout) -> Result<Vec<TemplateSentence>> {
    require(&layout.templates(), "inclusivo extract")?;
    jsonl::read_jsonl(layout.templates())
}

fn load_split(layout: &OutputLayout) -> Result<TemplateSplit> {
    require(&layout.split_rows(), "inclusivo split")?;
    require(&layout.split_meta(), "inclusivo split")?;
    read_split(&layout.split_rows(), &layout.split_meta())
}

fn load_samples(layout: &OutputLayout) -> Result<Vec<GeneratedSample>> {
    require(&layout.samples(), "inclusivo generate")?;
    jsonl::read_jsonl(layout.samples())
}

/// Load the prompt registry and resolve FSL exemplars from train samples.
fn load_registry(
    config: &PipelineConfig,
    train_samples: &[GeneratedSample],
) -> Result<PromptRegistry> {
    let mut registry = PromptRegistry::load_dir(&config.paths.prompts_dir)?;
    registry.attach_fsl_exemplars(
        train_samples,
        config.prompts.fsl_exemplars_per_class,
        config.prompts.exemplar_seed,
    )?;
    registry.validate()?;
    Ok(registry)
}

fn load_rules(config: &PipelineConfig) -> Result<RuleSet> {
    match &config.paths.rules {
        Some(path) => RuleSet::load(path),
        None => Ok(RuleSet::default_rules()),
    }
}

/// Segment the seed corpus and annotate templates.
pub fn cmd_extract(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = layout(config);
    let docs: Vec<SeedDocument> = jsonl::read_jsonl(&config.paths.seed_corpus)?;
    let vocab = VocabularyStore::load(&config.paths.vocabulary)?;
    let templates = extract_templates(&docs, &vocab)?;
    for template in &templates {
        template.validate()?;
    }
    let todo = templates
        .iter()
        .filter(|t| t.template_label == TemplateLabel::Todo)
        .count();
    jsonl::write_jsonl(layout.templates(), &templates)?;

    let mut manifest = StageManifest::new("extract", &config.content_hash);
    manifest.record_input(&config.paths.seed_corpus)?;
    manifest.record_input(&config.paths.vocabulary)?;
    manifest.record_output(layout.templates())?;
    manifest.count("documents", docs.len() as u64);
    manifest.count("templates", templates.len() as u64);
    manifest.count("todo_templates", todo as u64);
    manifest.count("inclusive_templates", (templates.len() - todo) as u64);
    manifest.write(layout.stage_manifest("extract"))?;
    Ok(manifest)
}

/// Split templates 70/30 (configurable) before any expansion.
pub fn cmd_split(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = layout(config);
    let templates = load_templates(&layout)?;
    let split = split_templates(&templates, config.split.ratio, config.split.seed)?;
    write_split(&split, &layout.split_rows(), &layout.split_meta())?;

    let mut manifest = StageManifest::new("split", &config.content_hash);
    manifest.record_input(layout.templates())?;
    manifest.record_output(layout.split_rows())?;
    manifest.record_output(layout.split_meta())?;
    manifest.param("ratio", config.split.ratio);
    manifest.param("seed", config.split.seed);
    manifest.count("train_templates", split.train_ids.len() as u64);
    manifest.count("test_templates", split.test_ids.len() as u64);
    manifest.write(layout.stage_manifest("split"))?;
    Ok(manifest)
}

/// Merge chunks and expand placeholders into labeled samples.
pub fn cmd_generate(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = layout(config);
    let templates = load_templates(&layout)?;
    let split = load_split(&layout)?;
    let vocab = VocabularyStore::load(&config.paths.vocabulary)?;
    let policy = config.generation.expansion_policy();

    let mut all_chunks: Vec<TemplateChunk> = Vec::new();
    let mut all_samples: Vec<GeneratedSample> = Vec::new();
    for (partition, total) in [
        (Partition::Train, config.generation.train_total),
        (Partition::Test, config.generation.test_total),
    ] {
        let members: Vec<TemplateSentence> = templates
            .iter()
            .filter(|t| split.partition_of(&t.template_id) == Some(partition))
            .cloned()
            .collect();
        if members.is_empty() {
            return Err(Error::EmptyInput("partition has no templates"));
        }
        let chunks = merge_chunks(&members, partition, config.generation.target_length)?;
        let mut samples = expand_all(&chunks, &templates, &vocab, policy)?;
        if let Some(total) = total {
            // Distinct derived seed per partition so the draws differ.
            let offset = match partition {
                Partition::Train => 1,
                Partition::Test => 2,
            };
            samples =
                subsample_preserving_order(samples, total, config.generation.seed.wrapping_add(offset))?;
        }
        all_chunks.extend(chunks);
        all_samples.extend(samples);
    }
    let train_count = all_samples
        .iter()
        .filter(|s| s.partition == Partition::Train)
        .count();
    jsonl::write_jsonl(layout.chunks(), &all_chunks)?;
    jsonl::write_jsonl(layout.samples(), &all_samples)?;

    let mut manifest = StageManifest::new("generate", &config.content_hash);
    manifest.record_input(layout.templates())?;
    manifest.record_input(layout.split_rows())?;
    manifest.record_input(&config.paths.vocabulary)?;
    manifest.record_output(layout.chunks())?;
    manifest.record_output(layout.samples())?;
    manifest.param("target_length", config.generation.target_length);
    manifest.param("policy", format!("{:?}", config.generation.policy));
    manifest.param("cap", config.generation.cap);
    manifest.param("seed", config.generation.seed);
    manifest.count("chunks", all_chunks.len() as u64);
    manifest.count("train_samples", train_count as u64);
    manifest.count("test_samples", (all_samples.len() - train_count) as u64);
    manifest.write(layout.stage_manifest("generate"))?;
    Ok(manifest)
}

/// Build and export the chat-format training dataset.
pub fn cmd_chat_export(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = layout(config);
    let samples = load_samples(&layout)?;
    let train: Vec<GeneratedSample> = samples
        .into_iter()
        .filter(|s| s.partition == Partition::Train)
        .collect();
    let registry = load_registry(config, &train)?;

    let mut rows: Vec<ChatRow> = Vec::new();
    for prompt_id in &config.chat.prompts {
        let spec = registry.get(prompt_id)?;
        // A sample that serves as an FSL exemplar already appears inside the
        // prompt; a training row for it would contain its own answer.
        let eligible: Vec<GeneratedSample> = train
            .iter()
            .filter(|s| !spec.exemplars.iter().any(|ex| ex.text == s.text))
            .cloned()
            .collect();
        rows.extend(build_chat_rows(&eligible, spec)?);
    }
    let built = rows.len();
    if let Some(total) = config.chat.total_rows {
        rows = subsample_preserving_order(rows, total, config.chat.seed)?;
    }
    let written = export_chat_jsonl(&rows, layout.chat_rows())?;

    let mut manifest = StageManifest::new("chat_export", &config.content_hash);
    manifest.record_input(layout.samples())?;
    manifest.record_output(layout.chat_rows())?;
    manifest.param("prompts", config.chat.prompts.join(","));
    manifest.param("seed", config.chat.seed);
    manifest.count("train_samples", train.len() as u64);
    manifest.count("rows_built", built as u64);
    manifest.count("rows_written", written as u64);
    manifest.write(layout.stage_manifest("chat_export"))?;
    Ok(manifest)
}

/// Run inference for every (endpoint, prompt, test sample) combination.
pub fn cmd_infer(config: &PipelineConfig, flags: &InferFlags) -> Result<StageManifest> {
    let layout = layout(config);
    let samples = load_samples(&layout)?;
    let (train, test): (Vec<GeneratedSample>, Vec<GeneratedSample>) = samples
        .into_iter()
        .partition(|s| s.partition == Partition::Train);
    if test.is_empty() {
        return Err(Error::EmptyInput("test partition has no samples"));
    }
    let registry = load_registry(config, &train)?;

    let gold: HashMap<String, inclusivo_core::GoldLabel> = test
        .iter()
        .map(|s| (s.sample_id.clone(), s.gold_label))
        .collect();
    let endpoints_file = EndpointsFile::load(&config.paths.endpoints)?;
    let timeout = std::time::Duration::from_secs(
        flags.timeout_seconds.unwrap_or(config.inference.timeout_seconds),
    );
    let endpoints = endpoints_file.prepare(&gold, timeout)?;

    let fingerprint = sha256_file(layout.samples())?;
    let run_id = flags
        .resume
        .clone()
        .unwrap_or_else(|| format!("run-{}", &fingerprint[..12]));
    let mut retry = config.inference.retry_policy();
    if let Some(max_retries) = flags.max_retries {
        retry.max_retries = max_retries;
    }
    let options = RunOptions {
        run_id: run_id.clone(),
        parallelism: flags.parallelism.unwrap_or(config.inference.parallelism),
        retry,
        records_path: layout.records(),
        manifest_path: layout.run_manifest(),
        dataset_fingerprint: fingerprint,
        seed: config.inference.seed,
        resume: flags.resume.is_some(),
    };
    let outcome = run_inference_blocking(&test, &registry, endpoints, &options, CancelToken::new())?;
    if !outcome.complete {
        return Err(Error::Inference(format!(
            "run `{run_id}` is incomplete ({} of {} records); resume with --resume {run_id}",
            outcome.skipped_existing + outcome.written,
            outcome.expected
        )));
    }

    let mut manifest = StageManifest::new("infer", &config.content_hash);
    manifest.record_input(layout.samples())?;
    manifest.record_input(&config.paths.endpoints)?;
    manifest.record_output(layout.records())?;
    manifest.record_output(layout.run_manifest())?;
    manifest.param("run_id", run_id);
    manifest.param("parallelism", options.parallelism);
    manifest.count("combinations", outcome.expected);
    manifest.count("written", outcome.written);
    manifest.count("skipped_existing", outcome.skipped_existing);
    manifest.count("ok", outcome.totals.ok);
    manifest.count("failed", outcome.totals.failed);
    manifest.write(layout.stage_manifest("infer"))?;
    Ok(manifest)
}

/// Normalize raw responses into the binary label space.
pub fn cmd_normalize(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = layout(config);
    require(&layout.records(), "inclusivo infer")?;
    let rules = load_rules(config)?;
    let records: Vec<InferenceRecord> = jsonl::read_jsonl(layout.records())?;

    let mut rows: Vec<NormalizedRow> = Vec::new();
    let mut failed_records = 0u64;
    for record in &records {
        match (&record.status, &record.raw_response) {
            (RecordStatus::Ok, Some(raw)) => rows.push(NormalizedRow {
                model_id: record.model_id.clone(),
                prompt_id: record.prompt_id.clone(),
                sample_id: record.sample_id.clone(),
                normalized: rules.normalize(raw),
            }),
            // Failed combinations are excluded from metric denominators and
            // reported separately.
            _ => failed_records += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no ok records to normalize"));
    }
    let normalized: Vec<_> = rows.iter().map(|r| r.normalized.clone()).collect();
    let parse_rate = batch_parse_rate(&normalized)?;
    jsonl::write_jsonl(layout.normalized(), &rows)?;

    let mut manifest = StageManifest::new("normalize", &config.content_hash);
    manifest.record_input(layout.records())?;
    manifest.record_output(layout.normalized())?;
    manifest.param("parse_rate", format!("{parse_rate:.6}"));
    manifest.count("normalized", rows.len() as u64);
    manifest.count(
        "undetermined",
        rows.iter()
            .filter(|r| r.normalized.label == Prediction::Undetermined)
            .count() as u64,
    );
    manifest.count("failed_records_excluded", failed_records);
    manifest.write(layout.stage_manifest("normalize"))?;
    Ok(manifest)
}

/// Compute every report: prompt-accuracy table, best-prompt metrics,
/// label distribution, and the length/position analyses with plots.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<StageManifest> {
    let layout = layout(config);
    require(&layout.normalized(), "inclusivo normalize")?;
    let rows: Vec<NormalizedRow> = jsonl::read_jsonl(layout.normalized())?;
    let samples = load_samples(&layout)?;
    let by_id: HashMap<&str, &GeneratedSample> = samples
        .iter()
        .map(|s| (s.sample_id.as_str(), s))
        .collect();

    // Group predictions by (model, prompt).
    let mut groups: BTreeMap<(String, String), Vec<&NormalizedRow>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.model_id.clone(), row.prompt_id.clone()))
            .or_default()
            .push(row);
    }

    let mut reports: Vec<MetricsReport> = Vec::new();
    for ((model_id, prompt_id), group) in &groups {
        let pairs: Vec<(inclusivo_core::GoldLabel, Prediction)> = group
            .iter()
            .map(|row| {
                by_id
                    .get(row.sample_id.as_str())
                    .map(|s| (s.gold_label, row.normalized.label))
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "normalized row references unknown sample `{}`",
                            row.sample_id
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        let cm = confusion(&pairs)?;
        reports.push(MetricsReport::from_confusion(model_id, prompt_id, &cm)?);
    }

    let table1 = prompt_accuracy_table(&reports)?;
    write_text(&layout.report("table1_prompt_accuracy.csv"), &table1.to_csv())?;
    write_text(
        &layout.report("metrics_by_prompt.csv"),
        &eval::metrics_reports_to_csv(&reports),
    )?;

    // Best prompt per model, then the Table-2-shaped metric report.
    let mut by_model: BTreeMap<&str, Vec<MetricsReport>> = BTreeMap::new();
    for report in &reports {
        by_model
            .entry(report.model_id.as_str())
            .or_default()
            .push(report.clone());
    }
    let mut best_reports: Vec<MetricsReport> = Vec::new();
    let mut best_by_model: BTreeMap<String, String> = BTreeMap::new();
    for (model_id, model_reports) in &by_model {
        let winner = best_prompt(model_reports)?;
        best_by_model.insert(model_id.to_string(), winner.clone());
        best_reports.extend(
            model_reports
                .iter()
                .find(|r| r.prompt_id == winner)
                .cloned(),
        );
    }
    write_text(
        &layout.report("table2_best_prompt_metrics.csv"),
        &eval::metrics_reports_to_csv(&best_reports),
    )?;

    // Predicted-label distribution across every (model, prompt) response.
    let predictions: Vec<Prediction> = rows.iter().map(|r| r.normalized.label).collect();
    let distribution = label_distribution(&predictions)?;
    if let Some(warning) = &distribution.warning {
        log::warn!("label distribution: {warning}");
    }
    let mut dist_csv = String::from("label,count\n");
    dist_csv.push_str(&format!("INCLUSIVE,{}\n", distribution.inclusive));
    dist_csv.push_str(&format!("NONINCLUSIVE,{}\n", distribution.noninclusive));
    dist_csv.push_str(&format!("UNDETERMINED,{}\n", distribution.undetermined));
    write_text(&layout.report("label_distribution.csv"), &dist_csv)?;

    // Length and position analyses over each model's best prompt.
    let mut scored: Vec<ScoredSample> = Vec::new();
    for ((model_id, prompt_id), group) in &groups {
        if best_by_model.get(model_id) != Some(prompt_id) {
            continue;
        }
        for row in group {
            let sample = by_id[row.sample_id.as_str()];
            scored.push(ScoredSample {
                model_id: model_id.clone(),
                sample_id: sample.sample_id.clone(),
                word_count: sample.word_count,
                target_position: sample.target_position,
                gold: sample.gold_label,
                prediction: row.normalized.label,
            });
        }
    }
    let length_rows = length_analysis(&scored, config.evaluation.bin_width)?;
    write_text(&layout.report("length_accuracy.csv"), &eval::buckets_to_csv(&length_rows))?;
    write_text(
        &layout.report("length_accuracy.svg"),
        &svg::length_line_chart(&length_rows, "Accuracy by text length (best prompts)"),
    )?;
    let (position_rows, excluded) = position_analysis(&scored);
    write_text(
        &layout.report("position_accuracy.csv"),
        &eval::buckets_to_csv(&position_rows),
    )?;
    write_text(
        &layout.report("position_accuracy.svg"),
        &svg::position_bar_chart(&position_rows, "Accuracy by target position (best prompts)"),
    )?;

    // Word-count histogram of the evaluated samples.
    let test_word_counts: Vec<usize> = samples
        .iter()
        .filter(|s| s.partition == Partition::Test)
        .map(|s| s.word_count)
        .collect();
    let histogram = length_histogram(&test_word_counts, config.evaluation.bin_width)?;
    write_text(&layout.report("length_histogram.csv"), &eval::histogram_to_csv(&histogram))?;

    let mut manifest = StageManifest::new("evaluate", &config.content_hash);
    manifest.record_input(layout.normalized())?;
    manifest.record_input(layout.samples())?;
    for name in [
        "table1_prompt_accuracy.csv",
        "table2_best_prompt_metrics.csv",
        "metrics_by_prompt.csv",
        "label_distribution.csv",
        "length_accuracy.csv",
        "length_accuracy.svg",
        "position_accuracy.csv",
        "position_accuracy.svg",
        "length_histogram.csv",
    ] {
        manifest.record_output(layout.report(name))?;
    }
    manifest.param("bin_width", config.evaluation.bin_width);
    for (model, prompt) in &best_by_model {
        manifest.param(&format!("best_prompt.{model}"), prompt);
    }
    manifest.count("scored_rows", rows.len() as u64);
    manifest.count("position_none_excluded", excluded);
    manifest.write(layout.stage_manifest("evaluate"))?;
    Ok(manifest)
}

/// The full pipeline, stage by stage.
pub fn cmd_run_all(config: &PipelineConfig) -> Result<Vec<StageManifest>> {
    let mut manifests = Vec::new();
    manifests.push(cmd_extract(config)?);
    manifests.push(cmd_split(config)?);
    manifests.push(cmd_generate(config)?);
    manifests.push(cmd_chat_export(config)?);
    manifests.push(cmd_infer(config, &InferFlags::default())?);
    manifests.push(cmd_normalize(config)?);
    manifests.push(cmd_evaluate(config)?);
    Ok(manifests)
}
