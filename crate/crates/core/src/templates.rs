//! Template extraction: segment seed job ads into sentences and mask
//! vocabulary matches with typed placeholders.
//!
//! A sentence whose words match substitution-vocabulary surfaces becomes a
//! `TODO` template with `[JOB]`/`[ADJ]`/`[VERB]` placeholder tokens; a
//! sentence with no matches is kept verbatim as an `INCLUSIVE` template.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{normalize_surface, Category, VocabularyStore};

/// Character-offset range (Unicode scalar values, end exclusive). Char
/// offsets keep the JSONL interface language-neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Resolve to byte offsets within `text`.
    pub fn byte_range(&self, text: &str) -> (usize, usize) {
        let mut start_byte = text.len();
        let mut end_byte = text.len();
        for (chars_seen, (byte, _)) in text.char_indices().enumerate() {
            if chars_seen == self.start {
                start_byte = byte;
            }
            if chars_seen == self.end {
                end_byte = byte;
                break;
            }
        }
        if self.start == self.end {
            end_byte = start_byte;
        }
        (start_byte, end_byte)
    }

    /// The text the span covers.
    pub fn slice<'t>(&self, text: &'t str) -> &'t str {
        let (a, b) = self.byte_range(text);
        &text[a..b]
    }
}

/// One real job advertisement from the seed corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedDocument {
    pub doc_id: String,
    pub body: String,
    #[serde(default)]
    pub source_tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateLabel {
    /// Has maskable words; requires expansion.
    #[serde(rename = "TODO")]
    Todo,
    /// Inherently neutral; reused verbatim.
    #[serde(rename = "INCLUSIVE")]
    Inclusive,
}

/// A placeholder slot inside a template sentence.
///
/// `char_span` covers the literal placeholder token (e.g. `[VERB]`) in the
/// template text; `source_surface` is the original text it replaced, kept so
/// the source sentence can be reconstructed exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderSlot {
    pub category: Category,
    pub index: usize,
    pub char_span: Span,
    pub source_surface: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateSentence {
    pub template_id: String,
    pub source_doc: String,
    pub text: String,
    pub placeholders: Vec<PlaceholderSlot>,
    pub template_label: TemplateLabel,
}

impl TemplateSentence {
    /// Whitespace-token count of the template text (a placeholder counts as
    /// one word).
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    /// Restore the original sentence by substituting each placeholder with
    /// the surface it masked.
    pub fn render_original(&self) -> String {
        let mut out = self.text.clone();
        for slot in self.placeholders.iter().rev() {
            let (a, b) = slot.char_span.byte_range(&out);
            out.replace_range(a..b, &slot.source_surface);
        }
        out
    }

    /// Check the structural invariants: label soundness, span bounds and
    /// ordering, and span-token agreement.
    pub fn validate(&self) -> Result<()> {
        let expects_todo = !self.placeholders.is_empty();
        let is_todo = self.template_label == TemplateLabel::Todo;
        if expects_todo != is_todo {
            return Err(Error::InvalidParameter(format!(
                "template `{}`: label {:?} inconsistent with {} placeholders",
                self.template_id,
                self.template_label,
                self.placeholders.len()
            )));
        }
        let total_chars = self.text.chars().count();
        let mut prev_end = 0usize;
        for (i, slot) in self.placeholders.iter().enumerate() {
            if slot.index != i {
                return Err(Error::InvalidParameter(format!(
                    "template `{}`: slot {} has index {}",
                    self.template_id, i, slot.index
                )));
            }
            if slot.char_span.end > total_chars || slot.char_span.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "template `{}`: slot {} span out of bounds",
                    self.template_id, i
                )));
            }
            if slot.char_span.start < prev_end {
                return Err(Error::InvalidParameter(format!(
                    "template `{}`: slot {} overlaps previous slot",
                    self.template_id, i
                )));
            }
            if slot.char_span.slice(&self.text) != slot.category.placeholder_token() {
                return Err(Error::InvalidParameter(format!(
                    "template `{}`: slot {} span does not cover `{}`",
                    self.template_id,
                    i,
                    slot.category.placeholder_token()
                )));
            }
            prev_end = slot.char_span.end;
        }
        Ok(())
    }
}

/// Split a document body into sentences.
///
/// Boundaries fall after terminal punctuation (`.`, `!`, `?`, `:`) followed
/// by whitespace or end of text, and at newlines, so colon-terminated
/// headings like `Descrizione del ruolo:` stand alone. The punctuation stays
/// attached to its sentence and no empty sentences are produced.
pub fn segment_sentences(doc: &SeedDocument) -> Result<Vec<String>> {
    if doc.body.trim().is_empty() {
        return Err(Error::EmptyInput("seed document body"));
    }
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = doc.body.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' {
            flush(&mut current, &mut sentences);
            continue;
        }
        current.push(c);
        if matches!(c, '.' | '!' | '?' | ':') {
            // Only break when the punctuation ends a token; "3.5" or "(es.:"
            // mid-token stays intact.
            match chars.peek() {
                None => flush(&mut current, &mut sentences),
                Some(next) if next.is_whitespace() => flush(&mut current, &mut sentences),
                _ => {}
            }
        }
    }
    flush(&mut current, &mut sentences);
    Ok(sentences)
}

fn flush(current: &mut String, sentences: &mut Vec<String>) {
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        sentences.push(trimmed.to_string());
    }
    current.clear();
}

/// A word token inside a sentence, with edge punctuation stripped.
#[derive(Debug, Clone)]
struct WordToken {
    /// Char offsets of the stripped token.
    span: Span,
    normalized: String,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '*' | '/' | '\'' | '’')
}

/// Tokenize into words: maximal non-whitespace runs with non-word edge
/// characters (punctuation, quotes) stripped. `*`, `/` and apostrophes count
/// as word characters so star/slash orthographies survive intact.
fn word_tokens(sentence: &str) -> Vec<WordToken> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let mut start = run_start;
        let mut end = i;
        while start < end && !is_word_char(chars[start]) {
            start += 1;
        }
        while end > start && !is_word_char(chars[end - 1]) {
            end -= 1;
        }
        if start < end {
            let raw: String = chars[start..end].iter().collect();
            tokens.push(WordToken {
                span: Span { start, end },
                normalized: normalize_surface(&raw),
            });
        }
    }
    tokens
}

/// Mask every maximal token run that exactly matches a vocabulary surface.
///
/// Matching is greedy longest-first, left to right; multi-word surfaces only
/// match runs separated by plain whitespace. The template label is `TODO`
/// iff at least one replacement occurred.
pub fn annotate_template(
    sentence: &str,
    vocab: &VocabularyStore,
    template_id: impl Into<String>,
    source_doc: impl Into<String>,
) -> TemplateSentence {
    let chars: Vec<char> = sentence.chars().collect();
    let tokens = word_tokens(sentence);
    let max_words = vocab.max_surface_words().max(1);

    // Matched source spans with their categories, in sentence order.
    let mut matches: Vec<(Span, Category, String)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched_len = 0;
        let mut matched: Option<(Span, Category)> = None;
        let upper = max_words.min(tokens.len() - i);
        for len in (1..=upper).rev() {
            if len > 1 && !whitespace_separated(&chars, &tokens[i..i + len]) {
                continue;
            }
            let candidate = tokens[i..i + len]
                .iter()
                .map(|t| t.normalized.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if let Some(entry) = vocab.find_surface(&candidate) {
                let span = Span {
                    start: tokens[i].span.start,
                    end: tokens[i + len - 1].span.end,
                };
                matched = Some((span, entry.category));
                matched_len = len;
                break;
            }
        }
        match matched {
            Some((span, category)) => {
                let surface: String = chars[span.start..span.end].iter().collect();
                matches.push((span, category, surface));
                i += matched_len;
            }
            None => i += 1,
        }
    }

    // Rebuild the text with placeholder tokens and fresh char spans.
    let mut text = String::new();
    let mut out_chars = 0usize;
    let mut cursor = 0usize;
    let mut placeholders = Vec::new();
    for (index, (span, category, surface)) in matches.into_iter().enumerate() {
        for &c in &chars[cursor..span.start] {
            text.push(c);
            out_chars += 1;
        }
        let token = category.placeholder_token();
        let start = out_chars;
        text.push_str(token);
        out_chars += token.chars().count();
        placeholders.push(PlaceholderSlot {
            category,
            index,
            char_span: Span { start, end: out_chars },
            source_surface: surface,
        });
        cursor = span.end;
    }
    text.extend(&chars[cursor..]);

    let template_label = if placeholders.is_empty() {
        TemplateLabel::Inclusive
    } else {
        TemplateLabel::Todo
    };
    TemplateSentence {
        template_id: template_id.into(),
        source_doc: source_doc.into(),
        text,
        placeholders,
        template_label,
    }
}

fn whitespace_separated(chars: &[char], tokens: &[WordToken]) -> bool {
    tokens.windows(2).all(|pair| {
        chars[pair[0].span.end..pair[1].span.start]
            .iter()
            .all(|c| c.is_whitespace())
    })
}

/// Segment and annotate a whole corpus. Template ids are
/// `<doc_id>/s<NNN>`, unique as long as doc ids are.
pub fn extract_templates(
    docs: &[SeedDocument],
    vocab: &VocabularyStore,
) -> Result<Vec<TemplateSentence>> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("seed corpus"));
    }
    let mut seen = std::collections::HashSet::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate doc_id `{}` in seed corpus",
                doc.doc_id
            )));
        }
    }
    let mut templates = Vec::new();
    for doc in docs {
        let sentences = segment_sentences(doc)?;
        for (idx, sentence) in sentences.iter().enumerate() {
            let id = format!("{}/s{:03}", doc.doc_id, idx);
            templates.push(annotate_template(sentence, vocab, id, doc.doc_id.clone()));
        }
    }
    Ok(templates)
}
