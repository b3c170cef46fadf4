//! Substitution vocabulary: gender-tagged surface forms per placeholder
//! category.
//!
//! Gender-neutral orthographies (asterisk `espert*`, slash `pronto/a`, paired
//! `pronto e pronta`) are vocabulary-level data tagged `neutral`; no morphology
//! is generated in code.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Placeholder category a vocabulary entry can fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "JOB")]
    Job,
    #[serde(rename = "ADJ")]
    Adj,
    #[serde(rename = "VERB")]
    Verb,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Job, Category::Adj, Category::Verb];

    /// Literal token used in template text, e.g. `[JOB]`.
    pub fn placeholder_token(self) -> &'static str {
        match self {
            Category::Job => "[JOB]",
            Category::Adj => "[ADJ]",
            Category::Verb => "[VERB]",
        }
    }

    pub fn from_placeholder_token(token: &str) -> Option<Self> {
        match token {
            "[JOB]" => Some(Category::Job),
            "[ADJ]" => Some(Category::Adj),
            "[VERB]" => Some(Category::Verb),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Category::Job => "JOB",
            Category::Adj => "ADJ",
            Category::Verb => "VERB",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Neutral,
    Masculine,
    Feminine,
}

/// How a surface form encodes (or avoids) grammatical gender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orthography {
    /// Ordinary inflected or invariant form, e.g. `infermiere`, `insegnante`.
    Plain,
    /// Asterisk ending, e.g. `espert*`.
    Star,
    /// Slashed double ending, e.g. `pronto/a`.
    Slash,
    /// Explicit dual form, e.g. `pronto e pronta`.
    Pair,
}

/// One substitutable surface form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyEntry {
    pub surface: String,
    pub category: Category,
    pub gender: Gender,
    pub orthography: Orthography,
}

impl VocabularyEntry {
    pub fn validate(&self) -> Result<()> {
        if self.surface.trim().is_empty() {
            return Err(Error::InvalidParameter(
                "vocabulary entry with empty surface".into(),
            ));
        }
        // Star/slash/pair forms address both genders at once; tagging them
        // anything but neutral would corrupt gold labels downstream.
        if self.orthography != Orthography::Plain && self.gender != Gender::Neutral {
            return Err(Error::InvalidParameter(format!(
                "entry `{}`: {:?} orthography requires neutral gender",
                self.surface, self.orthography
            )));
        }
        Ok(())
    }

    /// Number of whitespace-separated words in the surface.
    pub fn word_len(&self) -> usize {
        self.surface.split_whitespace().count()
    }
}

/// Loaded vocabulary with lookup indexes for annotation and expansion.
///
/// Matching is case-insensitive but accent-sensitive: `Esperto` matches
/// `esperto`, `perche` does not match `perché`.
#[derive(Debug, Clone, Default)]
pub struct VocabularyStore {
    entries: Vec<VocabularyEntry>,
    by_category: HashMap<Category, Vec<usize>>,
    by_surface: HashMap<String, usize>,
    max_surface_words: usize,
}

impl VocabularyStore {
    pub fn new(entries: Vec<VocabularyEntry>) -> Result<Self> {
        let mut store = VocabularyStore::default();
        for entry in entries {
            store.push(entry)?;
        }
        Ok(store)
    }

    fn push(&mut self, entry: VocabularyEntry) -> Result<()> {
        entry.validate()?;
        let idx = self.entries.len();
        let key = normalize_surface(&entry.surface);
        // First entry wins on duplicate surfaces so file order stays authoritative.
        self.by_surface.entry(key).or_insert(idx);
        self.by_category.entry(entry.category).or_default().push(idx);
        self.max_surface_words = self.max_surface_words.max(entry.word_len());
        self.entries.push(entry);
        Ok(())
    }

    /// Load from CSV (`surface,category,gender,orthography` header) or JSONL,
    /// decided by file extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let entries: Vec<VocabularyEntry> = if ext.eq_ignore_ascii_case("csv") {
            let mut reader = csv::Reader::from_path(path).map_err(|e| {
                Error::format(path, 0, e.to_string())
            })?;
            let mut rows = Vec::new();
            for (idx, record) in reader.deserialize().enumerate() {
                let entry: VocabularyEntry =
                    record.map_err(|e| Error::format(path, idx + 2, e.to_string()))?;
                rows.push(entry);
            }
            rows
        } else {
            jsonl::read_jsonl(path)?
        };
        if entries.is_empty() {
            return Err(Error::EmptyInput("vocabulary file has no entries"));
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabularyEntry] {
        &self.entries
    }

    /// Entries of one category, in file order.
    pub fn entries_for(&self, category: Category) -> Vec<&VocabularyEntry> {
        self.by_category
            .get(&category)
            .map(|idxs| idxs.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    pub fn category_count(&self, category: Category) -> usize {
        self.by_category.get(&category).map_or(0, |v| v.len())
    }

    /// Exact-surface lookup over a normalized (lowercased, space-joined) key.
    pub fn find_surface(&self, normalized: &str) -> Option<&VocabularyEntry> {
        self.by_surface.get(normalized).map(|&i| &self.entries[i])
    }

    /// Longest surface length in words; bounds the annotation scan window.
    pub fn max_surface_words(&self) -> usize {
        self.max_surface_words
    }
}

/// Normalization applied to both vocabulary surfaces and candidate token runs:
/// lowercase, single-space word separation. Accents are preserved.
pub fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}
