//! Prompt definitions, rendering, and chat-format training export.
//!
//! Prompt wording is configuration, not code: each prompt lives in a text
//! file with a small front-matter header, and the four defaults (`zsl#0`,
//! `zsl#1`, `fsl#0`, `zslcot#0`) are embedded so the pipeline runs without
//! external files.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratedSample;
use crate::jsonl;
use crate::label::GoldLabel;
use crate::split::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "ZSL")]
    Zsl,
    #[serde(rename = "FSL")]
    Fsl,
    #[serde(rename = "ZSLCOT")]
    ZslCot,
}

impl Strategy {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ZSL" => Some(Strategy::Zsl),
            "FSL" => Some(Strategy::Fsl),
            "ZSLCOT" => Some(Strategy::ZslCot),
            _ => None,
        }
    }

    /// Prefix a prompt id of this strategy must carry, e.g. `zsl#1`.
    fn id_prefix(self) -> &'static str {
        match self {
            Strategy::Zsl => "zsl",
            Strategy::Fsl => "fsl",
            Strategy::ZslCot => "zslcot",
        }
    }
}

/// Shape of the answer a prompt asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerContract {
    /// A bare `INCLUSIVO` / `NON INCLUSIVO` reply.
    BareLabel,
    /// A final `Label: <INCLUSIVO|NON INCLUSIVO>` line, used by the
    /// chain-of-thought prompt.
    LabeledLine,
}

impl AnswerContract {
    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "bare_label" => Some(AnswerContract::BareLabel),
            "labeled_line" => Some(AnswerContract::LabeledLine),
            _ => None,
        }
    }

    /// Gold answer string in this contract's shape.
    pub fn answer(self, label: GoldLabel) -> String {
        let word = match label {
            GoldLabel::Inclusive => "INCLUSIVO",
            GoldLabel::NonInclusive => "NON INCLUSIVO",
        };
        match self {
            AnswerContract::BareLabel => word.to_string(),
            AnswerContract::LabeledLine => format!("Label: {word}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub label: GoldLabel,
}

/// One prompt definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub strategy: Strategy,
    /// Instruction template with a `{text}` slot, plus `{exemplars}` for FSL.
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
    pub answer_contract: AnswerContract,
}

impl PromptSpec {
    /// Enforce the structural invariants: id format, slot arity, and the
    /// exemplars-iff-FSL rule.
    pub fn validate(&self) -> Result<()> {
        let prefix = self.strategy.id_prefix();
        let well_formed = self
            .prompt_id
            .strip_prefix(prefix)
            .and_then(|rest| rest.strip_prefix('#'))
            .map(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
            .unwrap_or(false);
        if !well_formed {
            return Err(Error::InvalidParameter(format!(
                "prompt id `{}` does not match strategy prefix `{prefix}#<n>`",
                self.prompt_id
            )));
        }
        if self.instruction.matches("{text}").count() != 1 {
            return Err(Error::InvalidParameter(format!(
                "prompt `{}` must contain exactly one {{text}} slot",
                self.prompt_id
            )));
        }
        let is_fsl = self.strategy == Strategy::Fsl;
        if is_fsl && self.instruction.matches("{exemplars}").count() != 1 {
            return Err(Error::InvalidParameter(format!(
                "FSL prompt `{}` must contain exactly one {{exemplars}} slot",
                self.prompt_id
            )));
        }
        if is_fsl != !self.exemplars.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "prompt `{}`: exemplars must be present iff strategy is FSL",
                self.prompt_id
            )));
        }
        Ok(())
    }
}

/// A rendered prompt for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptInstance {
    pub prompt_id: String,
    pub sample_id: String,
    pub rendered_text: String,
}

/// A chat-format training record: the compatibility boundary toward any
/// external fine-tuning tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRow {
    pub question: String,
    pub text: String,
    pub response: String,
}

fn parse_front_matter(raw: &str, origin: &Path) -> Result<PromptSpec> {
    let err = |line: usize, msg: &str| Error::format(origin, line, msg);
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, "---")) => {}
        _ => return Err(err(1, "prompt file must start with a `---` front-matter fence")),
    }
    let mut id = None;
    let mut strategy = None;
    let mut contract = None;
    let mut exemplars = Vec::new();
    let mut body_start = None;
    for (idx, line) in &mut lines {
        if line.trim() == "---" {
            body_start = Some(idx + 1);
            break;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| err(idx + 1, "expected `key: value`"))?;
        let value = value.trim();
        match key.trim() {
            "id" => id = Some(value.to_string()),
            "strategy" => {
                strategy = Some(
                    Strategy::parse(value)
                        .ok_or_else(|| err(idx + 1, "strategy must be ZSL, FSL or ZSLCOT"))?,
                )
            }
            "answer_contract" => {
                contract = Some(AnswerContract::parse(value).ok_or_else(|| {
                    err(idx + 1, "answer_contract must be bare_label or labeled_line")
                })?)
            }
            "exemplar" => {
                let (label, text) = value
                    .split_once('|')
                    .ok_or_else(|| err(idx + 1, "exemplar must be `<LABEL> | <text>`"))?;
                let label = match label.trim() {
                    "INCLUSIVE" => GoldLabel::Inclusive,
                    "NONINCLUSIVE" => GoldLabel::NonInclusive,
                    other => {
                        return Err(err(
                            idx + 1,
                            &format!("unknown exemplar label `{other}`"),
                        ))
                    }
                };
                exemplars.push(Exemplar {
                    text: text.trim().to_string(),
                    label,
                });
            }
            other => return Err(err(idx + 1, &format!("unknown front-matter key `{other}`"))),
        }
    }
    let body_start = body_start.ok_or_else(|| err(1, "unterminated front matter"))?;
    let instruction = raw
        .lines()
        .skip(body_start)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string();
    Ok(PromptSpec {
        prompt_id: id.ok_or_else(|| err(1, "missing `id`"))?,
        strategy: strategy.ok_or_else(|| err(1, "missing `strategy`"))?,
        instruction,
        exemplars,
        answer_contract: contract.ok_or_else(|| err(1, "missing `answer_contract`"))?,
    })
}

/// The set of prompts a run works with, keyed and iterated by prompt id.
#[derive(Debug, Clone, Default)]
pub struct PromptRegistry {
    specs: BTreeMap<String, PromptSpec>,
}

impl PromptRegistry {
    /// Build a registry from already-parsed specs.
    pub fn from_specs(specs: Vec<PromptSpec>) -> Result<Self> {
        let mut registry = PromptRegistry::default();
        for spec in specs {
            registry.insert(spec)?;
        }
        Ok(registry)
    }

    /// The four default prompts shipped with the crate.
    pub fn default_prompts() -> Result<Self> {
        const EMBEDDED: [(&str, &str); 4] = [
            ("zsl0.prompt", include_str!("../assets/prompts/zsl0.prompt")),
            ("zsl1.prompt", include_str!("../assets/prompts/zsl1.prompt")),
            ("fsl0.prompt", include_str!("../assets/prompts/fsl0.prompt")),
            (
                "zslcot0.prompt",
                include_str!("../assets/prompts/zslcot0.prompt"),
            ),
        ];
        let mut registry = PromptRegistry::default();
        for (name, raw) in EMBEDDED {
            registry.insert(parse_front_matter(raw, Path::new(name))?)?;
        }
        Ok(registry)
    }

    /// Load every `*.prompt` file in a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "prompt").unwrap_or(false))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::EmptyInput("prompt directory has no .prompt files"));
        }
        let mut registry = PromptRegistry::default();
        for path in paths {
            let raw = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            registry.insert(parse_front_matter(&raw, &path)?)?;
        }
        Ok(registry)
    }

    fn insert(&mut self, spec: PromptSpec) -> Result<()> {
        if self.specs.contains_key(&spec.prompt_id) {
            return Err(Error::InvalidParameter(format!(
                "duplicate prompt id `{}`",
                spec.prompt_id
            )));
        }
        self.specs.insert(spec.prompt_id.clone(), spec);
        Ok(())
    }

    pub fn get(&self, prompt_id: &str) -> Result<&PromptSpec> {
        self.specs
            .get(prompt_id)
            .ok_or_else(|| Error::UnknownPrompt(prompt_id.to_string()))
    }

    /// Prompt ids in lexicographic order.
    pub fn ids(&self) -> Vec<&str> {
        self.specs.keys().map(|s| s.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptSpec> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Draw FSL exemplars from train-partition samples: `per_class` per
    /// label, chosen by a seeded shuffle over sample ids. Prompts that
    /// already carry exemplars from their file keep them.
    pub fn attach_fsl_exemplars(
        &mut self,
        train_samples: &[GeneratedSample],
        per_class: usize,
        seed: u64,
    ) -> Result<()> {
        let needs: Vec<String> = self
            .specs
            .values()
            .filter(|s| s.strategy == Strategy::Fsl && s.exemplars.is_empty())
            .map(|s| s.prompt_id.clone())
            .collect();
        if needs.is_empty() {
            return Ok(());
        }
        if let Some(test_sample) = train_samples.iter().find(|s| s.partition != Partition::Train) {
            return Err(Error::Leakage(test_sample.sample_id.clone()));
        }
        let mut chosen = Vec::new();
        for label in [GoldLabel::Inclusive, GoldLabel::NonInclusive] {
            let mut candidates: Vec<&GeneratedSample> = train_samples
                .iter()
                .filter(|s| s.gold_label == label)
                .collect();
            if candidates.len() < per_class {
                return Err(Error::InvalidParameter(format!(
                    "need {per_class} {label:?} train samples for FSL exemplars, found {}",
                    candidates.len()
                )));
            }
            candidates.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            candidates.shuffle(&mut rng);
            for sample in candidates.into_iter().take(per_class) {
                chosen.push(Exemplar {
                    text: sample.text.clone(),
                    label,
                });
            }
        }
        for id in needs {
            if let Some(spec) = self.specs.get_mut(&id) {
                spec.exemplars = chosen.clone();
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for spec in self.specs.values() {
            spec.validate()?;
        }
        Ok(())
    }
}

fn render_exemplars(spec: &PromptSpec) -> String {
    spec.exemplars
        .iter()
        .map(|ex| {
            format!(
                "Testo: {}\nRisposta: {}",
                ex.text,
                AnswerContract::BareLabel.answer(ex.label)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Render a prompt for one sample. The rendered text contains the sample
/// text verbatim exactly once; FSL exemplars appear before it.
pub fn render_prompt(spec: &PromptSpec, sample: &GeneratedSample) -> Result<PromptInstance> {
    spec.validate()?;
    let mut rendered = spec.instruction.clone();
    if spec.strategy == Strategy::Fsl {
        rendered = rendered.replace("{exemplars}", &render_exemplars(spec));
    }
    rendered = rendered.replace("{text}", &sample.text);
    if rendered.matches(sample.text.as_str()).count() != 1 {
        return Err(Error::InvalidParameter(format!(
            "prompt `{}`: sample `{}` text must appear exactly once in the rendered prompt",
            spec.prompt_id, sample.sample_id
        )));
    }
    Ok(PromptInstance {
        prompt_id: spec.prompt_id.clone(),
        sample_id: sample.sample_id.clone(),
        rendered_text: rendered,
    })
}

/// Build one chat-format training row per sample. Refuses test-partition
/// samples outright: training data must never see the held-out side.
pub fn build_chat_rows(samples: &[GeneratedSample], spec: &PromptSpec) -> Result<Vec<ChatRow>> {
    let mut rows = Vec::with_capacity(samples.len());
    for sample in samples {
        if sample.partition != Partition::Train {
            return Err(Error::Leakage(sample.sample_id.clone()));
        }
        let instance = render_prompt(spec, sample)?;
        rows.push(ChatRow {
            question: instance.rendered_text,
            text: sample.text.clone(),
            response: spec.answer_contract.answer(sample.gold_label),
        });
    }
    Ok(rows)
}

/// Write chat rows as JSONL, returning the row count.
pub fn export_chat_jsonl(rows: &[ChatRow], path: impl AsRef<Path>) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("chat rows"));
    }
    jsonl::write_jsonl(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::TargetPosition;

    fn sample(id: &str, text: &str, label: GoldLabel, partition: Partition) -> GeneratedSample {
        GeneratedSample {
            sample_id: id.into(),
            chunk_id: "c0".into(),
            text: text.into(),
            substitutions: vec![],
            gold_label: label,
            word_count: text.split_whitespace().count(),
            target_position: TargetPosition::None,
            partition,
        }
    }

    fn train_pool() -> Vec<GeneratedSample> {
        vec![
            sample("s1", "Cerchiamo insegnante qualificato.", GoldLabel::Inclusive, Partition::Train),
            sample("s2", "Cerchiamo un infermiere.", GoldLabel::NonInclusive, Partition::Train),
            sample("s3", "Offriamo contratto stabile.", GoldLabel::Inclusive, Partition::Train),
            sample("s4", "Serve una segretaria.", GoldLabel::NonInclusive, Partition::Train),
        ]
    }

    fn ready_registry() -> PromptRegistry {
        let mut registry = PromptRegistry::default_prompts().unwrap();
        registry.attach_fsl_exemplars(&train_pool(), 1, 7).unwrap();
        registry.validate().unwrap();
        registry
    }

    #[test]
    fn default_registry_has_exactly_the_four_ids() {
        let registry = PromptRegistry::default_prompts().unwrap();
        assert_eq!(registry.ids(), vec!["fsl#0", "zsl#0", "zsl#1", "zslcot#0"]);
    }

    #[test]
    fn unknown_id_is_a_lookup_error() {
        let registry = ready_registry();
        assert!(matches!(
            registry.get("zsl#9"),
            Err(Error::UnknownPrompt(_))
        ));
    }

    #[test]
    fn zsl_renders_instruction_plus_text_without_exemplars() {
        let registry = ready_registry();
        let s = sample("s9", "Sarai contattato per un colloquio.", GoldLabel::NonInclusive, Partition::Test);
        let instance = render_prompt(registry.get("zsl#0").unwrap(), &s).unwrap();
        assert!(instance.rendered_text.contains(&s.text));
        assert!(!instance.rendered_text.contains("Risposta:"));
        assert_eq!(instance.prompt_id, "zsl#0");
    }

    #[test]
    fn fsl_renders_exemplars_before_the_sample() {
        let registry = ready_registry();
        let spec = registry.get("fsl#0").unwrap();
        assert_eq!(spec.exemplars.len(), 2);
        let s = sample("s9", "Testo da classificare qui.", GoldLabel::Inclusive, Partition::Test);
        let instance = render_prompt(spec, &s).unwrap();
        for ex in &spec.exemplars {
            let ex_pos = instance.rendered_text.find(&ex.text).expect("exemplar rendered");
            let text_pos = instance.rendered_text.find(&s.text).unwrap();
            assert!(ex_pos < text_pos, "exemplars must precede the sample");
        }
        assert!(instance.rendered_text.contains("Risposta: INCLUSIVO"));
        assert!(instance.rendered_text.contains("Risposta: NON INCLUSIVO"));
    }

    #[test]
    fn zslcot_ends_demanding_a_label_line() {
        let registry = ready_registry();
        let s = sample("s9", "Testo di prova.", GoldLabel::Inclusive, Partition::Test);
        let instance = render_prompt(registry.get("zslcot#0").unwrap(), &s).unwrap();
        assert!(instance
            .rendered_text
            .trim_end()
            .ends_with("\"Label: INCLUSIVO\" oppure \"Label: NON INCLUSIVO\"."));
    }

    #[test]
    fn rendering_is_deterministic_and_injective_over_texts() {
        let registry = ready_registry();
        let spec = registry.get("zsl#1").unwrap();
        let a = sample("a", "Primo testo.", GoldLabel::Inclusive, Partition::Test);
        let b = sample("b", "Secondo testo.", GoldLabel::Inclusive, Partition::Test);
        let ra1 = render_prompt(spec, &a).unwrap();
        let ra2 = render_prompt(spec, &a).unwrap();
        let rb = render_prompt(spec, &b).unwrap();
        assert_eq!(ra1.rendered_text, ra2.rendered_text);
        assert_ne!(ra1.rendered_text, rb.rendered_text);
    }

    #[test]
    fn chat_rows_encode_gold_labels() {
        let registry = ready_registry();
        let spec = registry.get("zsl#0").unwrap();
        let rows = build_chat_rows(&train_pool(), spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].response, "INCLUSIVO");
        assert_eq!(rows[1].response, "NON INCLUSIVO");
        assert_eq!(rows[0].text, "Cerchiamo insegnante qualificato.");
    }

    #[test]
    fn labeled_line_contract_shapes_responses() {
        let registry = ready_registry();
        let spec = registry.get("zslcot#0").unwrap();
        let rows = build_chat_rows(&train_pool()[..2], spec).unwrap();
        assert_eq!(rows[0].response, "Label: INCLUSIVO");
        assert_eq!(rows[1].response, "Label: NON INCLUSIVO");
    }

    #[test]
    fn test_partition_sample_is_a_leakage_error() {
        let registry = ready_registry();
        let mut samples = train_pool();
        samples.push(sample("leak", "Testo trapelato.", GoldLabel::Inclusive, Partition::Test));
        let err = build_chat_rows(&samples, registry.get("zsl#0").unwrap()).unwrap_err();
        assert!(matches!(err, Error::Leakage(id) if id == "leak"));
    }

    #[test]
    fn exemplar_attachment_is_seed_deterministic() {
        let mut r1 = PromptRegistry::default_prompts().unwrap();
        let mut r2 = PromptRegistry::default_prompts().unwrap();
        r1.attach_fsl_exemplars(&train_pool(), 1, 5).unwrap();
        r2.attach_fsl_exemplars(&train_pool(), 1, 5).unwrap();
        assert_eq!(
            r1.get("fsl#0").unwrap().exemplars,
            r2.get("fsl#0").unwrap().exemplars
        );
        let mut r3 = PromptRegistry::default_prompts().unwrap();
        r3.attach_fsl_exemplars(&train_pool(), 2, 5).unwrap();
        assert_eq!(r3.get("fsl#0").unwrap().exemplars.len(), 4);
    }

    #[test]
    fn export_writes_one_line_per_row() {
        let registry = ready_registry();
        let rows = build_chat_rows(&train_pool(), registry.get("zsl#0").unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chat.jsonl");
        assert_eq!(export_chat_jsonl(&rows, &path).unwrap(), 4);
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body.lines().count(), 4);
        // Re-export is byte-identical.
        let first = body.clone();
        export_chat_jsonl(&rows, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
        assert!(matches!(
            export_chat_jsonl(&[], dir.path().join("empty.jsonl")),
            Err(Error::EmptyInput(_))
        ));
    }
}
