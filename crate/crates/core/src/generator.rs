//! Synthetic sample generation: chunk merging, placeholder expansion, gold
//! labeling and target-position tagging.
//!
//! Chunks give precise control over text length; expansion substitutes each
//! placeholder with vocabulary entries, either exhaustively (the full
//! cross-product) or as a seeded sample without replacement.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::GoldLabel;
use crate::manifest::stable_hash64;
use crate::split::Partition;
use crate::templates::{Span, TemplateSentence};
use crate::vocab::{Category, Gender, VocabularyStore};

/// A length-controlled concatenation of template sentences from one
/// partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateChunk {
    pub chunk_id: String,
    pub member_templates: Vec<String>,
    pub text: String,
    pub target_length: usize,
    pub partition: Partition,
}

impl TemplateChunk {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// How one placeholder was filled in one generated sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstitutionRecord {
    /// Template the slot came from.
    pub template_id: String,
    /// Slot index within that template.
    pub slot_index: usize,
    pub category: Category,
    /// Vocabulary surface substituted in.
    pub surface: String,
    pub gender: Gender,
    /// Zero-based index of the substituted word within the chunk text.
    pub word_index: usize,
}

/// Where the first substituted word falls within the sample, by word-index
/// thirds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetPosition {
    Start,
    Middle,
    End,
    None,
}

impl std::fmt::Display for TargetPosition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            TargetPosition::Start => "start",
            TargetPosition::Middle => "middle",
            TargetPosition::End => "end",
            TargetPosition::None => "none",
        };
        f.write_str(name)
    }
}

/// One fully substituted text with its label and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub sample_id: String,
    pub chunk_id: String,
    pub text: String,
    pub substitutions: Vec<SubstitutionRecord>,
    pub gold_label: GoldLabel,
    pub word_count: usize,
    pub target_position: TargetPosition,
    pub partition: Partition,
}

/// Expansion policy for the placeholder cross-product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExpansionPolicy {
    /// Every combination. Counts grow as the product of slot cardinalities.
    Exhaustive,
    /// At most `cap` combinations per chunk, drawn uniformly without
    /// replacement with a chunk-specific stream derived from `seed`.
    Capped { cap: usize, seed: u64 },
}

/// Greedily merge consecutive templates into chunks of roughly
/// `target_length` words.
///
/// A chunk closes when adding the next sentence would exceed the target;
/// every chunk holds at least one sentence, so a single oversized sentence
/// still gets emitted. Order is preserved and every template lands in
/// exactly one chunk.
pub fn merge_chunks(
    templates: &[TemplateSentence],
    partition: Partition,
    target_length: usize,
) -> Result<Vec<TemplateChunk>> {
    if target_length < 1 {
        return Err(Error::InvalidParameter(
            "target_length must be at least 1".into(),
        ));
    }
    let mut chunks = Vec::new();
    let mut members: Vec<&TemplateSentence> = Vec::new();
    let mut words = 0usize;
    for template in templates {
        let wc = template.word_count();
        if !members.is_empty() && words + wc > target_length {
            chunks.push(build_chunk(&members, partition, target_length, chunks.len()));
            members.clear();
            words = 0;
        }
        members.push(template);
        words += wc;
    }
    if !members.is_empty() {
        chunks.push(build_chunk(&members, partition, target_length, chunks.len()));
    }
    Ok(chunks)
}

fn build_chunk(
    members: &[&TemplateSentence],
    partition: Partition,
    target_length: usize,
    index: usize,
) -> TemplateChunk {
    let text = members
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    TemplateChunk {
        chunk_id: format!("{partition}-c{index:05}"),
        member_templates: members.iter().map(|t| t.template_id.clone()).collect(),
        text,
        target_length,
        partition,
    }
}

/// A chunk slot: a template placeholder relocated into chunk-text
/// coordinates.
struct ChunkSlot {
    template_id: String,
    slot_index: usize,
    category: Category,
    span: Span,
}

fn chunk_slots(chunk: &TemplateChunk, members: &[&TemplateSentence]) -> Result<Vec<ChunkSlot>> {
    let joined = members
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    if joined != chunk.text {
        return Err(Error::InvalidParameter(format!(
            "chunk `{}` text does not match its member templates",
            chunk.chunk_id
        )));
    }
    let mut slots = Vec::new();
    let mut offset = 0usize;
    for member in members {
        for slot in &member.placeholders {
            slots.push(ChunkSlot {
                template_id: member.template_id.clone(),
                slot_index: slot.index,
                category: slot.category,
                span: Span {
                    start: slot.char_span.start + offset,
                    end: slot.char_span.end + offset,
                },
            });
        }
        offset += member.text.chars().count() + 1; // separator space
    }
    Ok(slots)
}

/// Expand one chunk into generated samples under the given policy.
///
/// `members` must be the chunk's templates in order. Under the exhaustive
/// policy the output is the full cross-product over slot vocabularies; under
/// the capped policy it is a seeded uniform sample without replacement of at
/// most `cap` combinations, in ascending combination order.
pub fn expand_chunk(
    chunk: &TemplateChunk,
    members: &[&TemplateSentence],
    vocab: &VocabularyStore,
    policy: ExpansionPolicy,
) -> Result<Vec<GeneratedSample>> {
    let slots = chunk_slots(chunk, members)?;
    let mut cards = Vec::with_capacity(slots.len());
    for slot in &slots {
        let n = vocab.category_count(slot.category);
        if n == 0 {
            return Err(Error::MissingVocabulary(slot.category));
        }
        cards.push(n);
    }
    let total: u128 = cards.iter().map(|&c| c as u128).product();
    if total > usize::MAX as u128 {
        return Err(Error::InvalidParameter(format!(
            "chunk `{}` expands to {total} combinations",
            chunk.chunk_id
        )));
    }
    let total = total as usize;

    let picks: Vec<usize> = match policy {
        ExpansionPolicy::Exhaustive => (0..total).collect(),
        ExpansionPolicy::Capped { cap, .. } if total <= cap => (0..total).collect(),
        ExpansionPolicy::Capped { cap, seed } => {
            let stream = stable_hash64(&[&seed.to_le_bytes(), chunk.chunk_id.as_bytes()]);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let mut picked = rand::seq::index::sample(&mut rng, total, cap).into_vec();
            picked.sort_unstable();
            picked
        }
    };

    let entries_by_slot: Vec<Vec<_>> = slots
        .iter()
        .map(|s| vocab.entries_for(s.category))
        .collect();

    let mut samples = Vec::with_capacity(picks.len());
    for combination in picks {
        samples.push(materialize(chunk, &slots, &entries_by_slot, combination)?);
    }
    Ok(samples)
}

fn materialize(
    chunk: &TemplateChunk,
    slots: &[ChunkSlot],
    entries_by_slot: &[Vec<&crate::vocab::VocabularyEntry>],
    combination: usize,
) -> Result<GeneratedSample> {
    let chars: Vec<char> = chunk.text.chars().collect();
    let mut text = String::with_capacity(chunk.text.len() + 16);
    let mut substitutions = Vec::with_capacity(slots.len());
    let mut cursor = 0usize;
    let mut remainder = combination;
    for (slot, entries) in slots.iter().zip(entries_by_slot) {
        let entry = entries[remainder % entries.len()];
        remainder /= entries.len();
        for &c in &chars[cursor..slot.span.start] {
            text.push(c);
        }
        let word_index = next_word_index(&text);
        text.push_str(&entry.surface);
        substitutions.push(SubstitutionRecord {
            template_id: slot.template_id.clone(),
            slot_index: slot.slot_index,
            category: slot.category,
            surface: entry.surface.clone(),
            gender: entry.gender,
            word_index,
        });
        cursor = slot.span.end;
    }
    for &c in &chars[cursor..] {
        text.push(c);
    }
    let word_count = text.split_whitespace().count();
    let gold_label = derive_gold_label(&substitutions);
    let target_position = locate_target(&substitutions, word_count);
    Ok(GeneratedSample {
        sample_id: format!("{}-x{:06}", chunk.chunk_id, combination),
        chunk_id: chunk.chunk_id.clone(),
        text,
        substitutions,
        gold_label,
        word_count,
        target_position,
        partition: chunk.partition,
    })
}

/// Word index the next appended content will occupy in `prefix`. If the
/// prefix ends mid-token (punctuation hugging a placeholder) the appended
/// text continues that token.
fn next_word_index(prefix: &str) -> usize {
    let words = prefix.split_whitespace().count();
    match prefix.chars().last() {
        Some(c) if !c.is_whitespace() => words.saturating_sub(1),
        _ => words,
    }
}

/// Gold-label rule: a sample is `INCLUSIVE` iff every substitution is
/// gender-neutral (vacuously true for templates with no placeholders); one
/// masculine or feminine substitution makes it `NONINCLUSIVE`.
pub fn derive_gold_label(substitutions: &[SubstitutionRecord]) -> GoldLabel {
    if substitutions.iter().all(|s| s.gender == Gender::Neutral) {
        GoldLabel::Inclusive
    } else {
        GoldLabel::NonInclusive
    }
}

/// Bucket the first substituted word into start/middle/end thirds by its
/// position fraction `word_index / max(word_count - 1, 1)`.
pub fn locate_target(substitutions: &[SubstitutionRecord], word_count: usize) -> TargetPosition {
    let Some(first) = substitutions.first() else {
        return TargetPosition::None;
    };
    let denom = word_count.saturating_sub(1).max(1) as f64;
    let fraction = first.word_index as f64 / denom;
    if fraction < 1.0 / 3.0 {
        TargetPosition::Start
    } else if fraction < 2.0 / 3.0 {
        TargetPosition::Middle
    } else {
        TargetPosition::End
    }
}

impl GeneratedSample {
    /// Recompute the target position from the stored fields.
    pub fn locate_target(&self) -> TargetPosition {
        locate_target(&self.substitutions, self.word_count)
    }
}

/// Expand every chunk, in parallel, merging results in chunk order so output
/// is deterministic regardless of thread scheduling.
pub fn expand_all(
    chunks: &[TemplateChunk],
    templates: &[TemplateSentence],
    vocab: &VocabularyStore,
    policy: ExpansionPolicy,
) -> Result<Vec<GeneratedSample>> {
    let by_id: HashMap<&str, &TemplateSentence> = templates
        .iter()
        .map(|t| (t.template_id.as_str(), t))
        .collect();
    let per_chunk: Vec<Result<Vec<GeneratedSample>>> = chunks
        .par_iter()
        .map(|chunk| {
            let members: Vec<&TemplateSentence> = chunk
                .member_templates
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).copied().ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "chunk `{}` references unknown template `{id}`",
                            chunk.chunk_id
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            expand_chunk(chunk, &members, vocab, policy)
        })
        .collect();
    let mut samples = Vec::new();
    for result in per_chunk {
        samples.extend(result?);
    }
    Ok(samples)
}

/// Reduce a list to exactly `total` items with a seeded uniform draw
/// without replacement, preserving input order. Used to pin corpus-level
/// dataset sizes (sample totals, chat row counts).
pub fn subsample_preserving_order<T>(items: Vec<T>, total: usize, seed: u64) -> Result<Vec<T>> {
    if items.len() < total {
        return Err(Error::InvalidParameter(format!(
            "cannot select {total} items from {}; lower the total or raise the expansion cap",
            items.len()
        )));
    }
    if items.len() == total {
        return Ok(items);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, items.len(), total).into_vec();
    keep.sort_unstable();
    let mut keep_iter = keep.into_iter().peekable();
    Ok(items
        .into_iter()
        .enumerate()
        .filter_map(|(i, item)| {
            if keep_iter.peek() == Some(&i) {
                keep_iter.next();
                Some(item)
            } else {
                None
            }
        })
        .collect())
}

/// Pin a generated sample list to an exact size, deterministically.
pub fn cap_total(
    samples: Vec<GeneratedSample>,
    total: usize,
    seed: u64,
) -> Result<Vec<GeneratedSample>> {
    subsample_preserving_order(samples, total, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::annotate_template;
    use crate::vocab::{Orthography, VocabularyEntry};

    fn vocab() -> VocabularyStore {
        let entry = |surface: &str, category, gender, orthography| VocabularyEntry {
            surface: surface.into(),
            category,
            gender,
            orthography,
        };
        VocabularyStore::new(vec![
            entry("insegnante", Category::Job, Gender::Neutral, Orthography::Plain),
            entry("infermiere", Category::Job, Gender::Masculine, Orthography::Plain),
            entry("giornalista", Category::Job, Gender::Neutral, Orthography::Plain),
            entry("esperto", Category::Adj, Gender::Masculine, Orthography::Plain),
            entry("esperta", Category::Adj, Gender::Feminine, Orthography::Plain),
            entry("espert*", Category::Adj, Gender::Neutral, Orthography::Star),
            entry("competente", Category::Adj, Gender::Neutral, Orthography::Plain),
            entry("contattato", Category::Verb, Gender::Masculine, Orthography::Plain),
        ])
        .unwrap()
    }

    fn template(id: &str, sentence: &str) -> TemplateSentence {
        annotate_template(sentence, &vocab(), id, "d1")
    }

    fn plain_template(id: &str, words: usize) -> TemplateSentence {
        let text = (0..words).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ") + ".";
        TemplateSentence {
            template_id: id.into(),
            source_doc: "d1".into(),
            text,
            placeholders: vec![],
            template_label: crate::templates::TemplateLabel::Inclusive,
        }
    }

    #[test]
    fn greedy_merge_respects_target() {
        let templates = vec![
            plain_template("a", 10),
            plain_template("b", 10),
            plain_template("c", 10),
        ];
        let chunks = merge_chunks(&templates, Partition::Train, 20).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].member_templates, vec!["a", "b"]);
        assert_eq!(chunks[1].member_templates, vec!["c"]);
    }

    #[test]
    fn target_one_means_one_sentence_per_chunk() {
        let templates = vec![plain_template("a", 4), plain_template("b", 6)];
        let chunks = merge_chunks(&templates, Partition::Test, 1).unwrap();
        assert_eq!(chunks.len(), 2);
    }

    #[test]
    fn target_zero_is_rejected() {
        assert!(merge_chunks(&[plain_template("a", 3)], Partition::Train, 0).is_err());
    }

    #[test]
    fn chunk_bound_and_coverage_hold_on_random_input() {
        // Brute-force recount oracle over 100 random-length sentences.
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let templates: Vec<TemplateSentence> = (0..100)
            .map(|i| plain_template(&format!("t{i:03}"), rng.random_range(1..=25)))
            .collect();
        let max_len = templates.iter().map(|t| t.word_count()).max().unwrap();
        let chunks = merge_chunks(&templates, Partition::Train, 30).unwrap();
        let mut recounted: Vec<String> = Vec::new();
        for chunk in &chunks {
            assert!(chunk.word_count() <= 30 + max_len, "chunk too long");
            recounted.extend(chunk.member_templates.clone());
        }
        let expected: Vec<String> = templates.iter().map(|t| t.template_id.clone()).collect();
        assert_eq!(recounted, expected);
    }

    #[test]
    fn single_job_slot_expands_to_vocab_size() {
        let t = template("t1", "Cerchiamo un infermiere per la clinica.");
        let chunks = merge_chunks(std::slice::from_ref(&t), Partition::Train, 30).unwrap();
        let samples =
            expand_chunk(&chunks[0], &[&t], &vocab(), ExpansionPolicy::Exhaustive).unwrap();
        assert_eq!(samples.len(), 3); // insegnante, infermiere, giornalista
        assert!(samples.iter().all(|s| !s.text.contains("[JOB]")));
    }

    #[test]
    fn two_slots_expand_to_cross_product() {
        let t = template("t1", "Cerchiamo un infermiere esperto davvero.");
        assert_eq!(t.placeholders.len(), 2);
        let chunks = merge_chunks(std::slice::from_ref(&t), Partition::Train, 30).unwrap();
        let samples =
            expand_chunk(&chunks[0], &[&t], &vocab(), ExpansionPolicy::Exhaustive).unwrap();
        assert_eq!(samples.len(), 3 * 4);
    }

    #[test]
    fn missing_category_names_the_culprit() {
        let sparse = VocabularyStore::new(vec![VocabularyEntry {
            surface: "contattato".into(),
            category: Category::Verb,
            gender: Gender::Masculine,
            orthography: Orthography::Plain,
        }])
        .unwrap();
        let t = annotate_template("Sarai contattato presto.", &sparse, "t1", "d1");
        let chunks = merge_chunks(std::slice::from_ref(&t), Partition::Train, 30).unwrap();
        // Annotated against `sparse` but expanded against an empty-verb store.
        let empty = VocabularyStore::new(vec![VocabularyEntry {
            surface: "insegnante".into(),
            category: Category::Job,
            gender: Gender::Neutral,
            orthography: Orthography::Plain,
        }])
        .unwrap();
        let err = expand_chunk(&chunks[0], &[&t], &empty, ExpansionPolicy::Exhaustive).unwrap_err();
        assert!(matches!(err, Error::MissingVocabulary(Category::Verb)));
    }

    #[test]
    fn capped_expansion_is_deterministic_and_bounded() {
        let t = template("t1", "Cerchiamo un infermiere esperto davvero.");
        let chunks = merge_chunks(std::slice::from_ref(&t), Partition::Train, 30).unwrap();
        let policy = ExpansionPolicy::Capped { cap: 5, seed: 99 };
        let a = expand_chunk(&chunks[0], &[&t], &vocab(), policy).unwrap();
        let b = expand_chunk(&chunks[0], &[&t], &vocab(), policy).unwrap();
        assert_eq!(a.len(), 5);
        let ids: Vec<_> = a.iter().map(|s| s.sample_id.clone()).collect();
        let ids_b: Vec<_> = b.iter().map(|s| s.sample_id.clone()).collect();
        assert_eq!(ids, ids_b);
        // A different seed picks a different subset of the 12 combinations.
        let c = expand_chunk(
            &chunks[0],
            &[&t],
            &vocab(),
            ExpansionPolicy::Capped { cap: 5, seed: 100 },
        )
        .unwrap();
        assert_ne!(
            ids,
            c.iter().map(|s| s.sample_id.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn gold_label_follows_gender_tags() {
        let sub = |gender| SubstitutionRecord {
            template_id: "t".into(),
            slot_index: 0,
            category: Category::Job,
            surface: "x".into(),
            gender,
            word_index: 0,
        };
        // insegnante (neutral) -> INCLUSIVE
        assert_eq!(derive_gold_label(&[sub(Gender::Neutral)]), GoldLabel::Inclusive);
        // infermiere (masculine) -> NONINCLUSIVE
        assert_eq!(
            derive_gold_label(&[sub(Gender::Masculine)]),
            GoldLabel::NonInclusive
        );
        // no substitutions -> vacuously INCLUSIVE
        assert_eq!(derive_gold_label(&[]), GoldLabel::Inclusive);
        // neutral + feminine -> NONINCLUSIVE
        assert_eq!(
            derive_gold_label(&[sub(Gender::Neutral), sub(Gender::Feminine)]),
            GoldLabel::NonInclusive
        );
    }

    #[test]
    fn gold_label_matches_independent_predicate_across_expansion() {
        let t = template("t1", "Cerchiamo un infermiere esperto davvero.");
        let chunks = merge_chunks(std::slice::from_ref(&t), Partition::Train, 30).unwrap();
        let samples =
            expand_chunk(&chunks[0], &[&t], &vocab(), ExpansionPolicy::Exhaustive).unwrap();
        for sample in &samples {
            let oracle_inclusive = sample
                .substitutions
                .iter()
                .filter(|s| s.gender != Gender::Neutral)
                .count()
                == 0;
            assert_eq!(
                sample.gold_label == GoldLabel::Inclusive,
                oracle_inclusive,
                "sample {}",
                sample.sample_id
            );
        }
    }

    #[test]
    fn target_position_thirds() {
        let sub_at = |word_index| SubstitutionRecord {
            template_id: "t".into(),
            slot_index: 0,
            category: Category::Job,
            surface: "x".into(),
            gender: Gender::Neutral,
            word_index,
        };
        assert_eq!(locate_target(&[sub_at(0)], 30), TargetPosition::Start);
        assert_eq!(locate_target(&[sub_at(29)], 30), TargetPosition::End);
        assert_eq!(locate_target(&[sub_at(15)], 30), TargetPosition::Middle);
        assert_eq!(locate_target(&[], 30), TargetPosition::None);
        // 1-word text: degenerate denominator guards to start.
        assert_eq!(locate_target(&[sub_at(0)], 1), TargetPosition::Start);
    }

    #[test]
    fn word_index_points_at_substituted_word() {
        let t = template("t1", "Sarai contattato per un colloquio.");
        let chunks = merge_chunks(std::slice::from_ref(&t), Partition::Test, 30).unwrap();
        let samples =
            expand_chunk(&chunks[0], &[&t], &vocab(), ExpansionPolicy::Exhaustive).unwrap();
        for sample in &samples {
            let record = &sample.substitutions[0];
            let words: Vec<&str> = sample.text.split_whitespace().collect();
            let first_surface_word = record.surface.split_whitespace().next().unwrap();
            assert!(
                words[record.word_index].contains(first_surface_word),
                "word {} of `{}` should contain `{}`",
                record.word_index,
                sample.text,
                first_surface_word
            );
        }
    }

    #[test]
    fn expand_all_merges_in_chunk_order() {
        let templates = vec![
            template("t1", "Cerchiamo un infermiere per la clinica."),
            template("t2", "Sarai contattato per un colloquio."),
        ];
        let chunks = merge_chunks(&templates, Partition::Train, 5).unwrap();
        assert_eq!(chunks.len(), 2);
        let samples = expand_all(&chunks, &templates, &vocab(), ExpansionPolicy::Exhaustive).unwrap();
        // 3 JOB entries + 1 VERB entry worth of combinations, chunk order.
        assert_eq!(samples.len(), 4);
        assert!(samples[..3].iter().all(|s| s.chunk_id == chunks[0].chunk_id));
        assert_eq!(samples[3].chunk_id, chunks[1].chunk_id);
    }

    #[test]
    fn cap_total_selects_deterministically() {
        let t = template("t1", "Cerchiamo un infermiere esperto davvero.");
        let chunks = merge_chunks(std::slice::from_ref(&t), Partition::Train, 30).unwrap();
        let samples =
            expand_chunk(&chunks[0], &[&t], &vocab(), ExpansionPolicy::Exhaustive).unwrap();
        let a = cap_total(samples.clone(), 7, 3).unwrap();
        let b = cap_total(samples.clone(), 7, 3).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(
            a.iter().map(|s| &s.sample_id).collect::<Vec<_>>(),
            b.iter().map(|s| &s.sample_id).collect::<Vec<_>>()
        );
        assert!(cap_total(samples, 99, 3).is_err());
    }
}
