//! Normalization of noisy model responses into the binary label space.
//!
//! Matching is case-insensitive and tolerant of punctuation and markdown,
//! with three fixed precedence rules:
//!
//! 1. negation first — any non-inclusive variant is searched before
//!    inclusive ones, so substring containment never flips the class;
//! 2. `Label:`-prefixed lines outrank free-text mentions;
//! 3. conflicting classes resolve to `UNDETERMINED`, never to a guess.
//!
//! The pattern set is data: an ordered rule list loaded from TOML, so new
//! model quirks can be handled without code changes.

use std::ops::Range;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{GoldLabel, Prediction};
use crate::templates::Span;

const DEFAULT_RULES: &str = include_str!("../assets/default_rules.toml");

/// One extraction rule from the rule file.
#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub label: GoldLabel,
    pub priority: i64,
    regex: Regex,
}

#[derive(Debug, Deserialize)]
struct RuleFile {
    label_line: String,
    #[serde(rename = "rules")]
    rules: Vec<RuleEntry>,
}

#[derive(Debug, Deserialize)]
struct RuleEntry {
    id: String,
    label: GoldLabel,
    priority: i64,
    pattern: String,
}

/// Compiled, priority-ordered rule set.
#[derive(Debug, Clone)]
pub struct RuleSet {
    label_line: Regex,
    rules: Vec<Rule>,
}

impl RuleSet {
    /// The embedded default rule set, reproducing the canonical label forms.
    pub fn default_rules() -> Self {
        Self::from_toml(DEFAULT_RULES, Path::new("assets/default_rules.toml"))
            .expect("embedded default rules must compile")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&raw, path)
    }

    pub fn from_toml(raw: &str, origin: &Path) -> Result<Self> {
        let file: RuleFile =
            toml::from_str(raw).map_err(|e| Error::format(origin, 0, e.to_string()))?;
        if file.rules.is_empty() {
            return Err(Error::format(origin, 0, "rule file has no rules"));
        }
        let label_line = Regex::new(&file.label_line)
            .map_err(|e| Error::format(origin, 0, format!("label_line: {e}")))?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for entry in file.rules {
            let regex = Regex::new(&entry.pattern)
                .map_err(|e| Error::format(origin, 0, format!("rule `{}`: {e}", entry.id)))?;
            rules.push(Rule {
                id: entry.id,
                label: entry.label,
                priority: entry.priority,
                regex,
            });
        }
        // Priority order, file order as tie-break.
        rules.sort_by(|a, b| b.priority.cmp(&a.priority));
        Ok(RuleSet { label_line, rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }
}

/// The normalized outcome for one raw response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedResponse {
    pub label: Prediction,
    /// Id of the rule that fired; present iff the label is determined.
    pub matched_pattern: Option<String>,
    /// Char offsets of the matched text in the raw response.
    pub evidence_span: Option<Span>,
}

impl NormalizedResponse {
    fn undetermined() -> Self {
        NormalizedResponse {
            label: Prediction::Undetermined,
            matched_pattern: None,
            evidence_span: None,
        }
    }
}

/// A normalized response joined to its inference record keys, as written to
/// the normalized JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub model_id: String,
    pub prompt_id: String,
    pub sample_id: String,
    #[serde(flatten)]
    pub normalized: NormalizedResponse,
}

#[derive(Debug, Clone, Copy)]
struct RuleMatch {
    rule_idx: usize,
    start: usize,
    end: usize,
}

impl RuleSet {
    /// Extract a binary label from a raw model response. Total: every input
    /// maps to a `NormalizedResponse`, with `UNDETERMINED` as the only
    /// escape hatch.
    pub fn normalize(&self, raw: &str) -> NormalizedResponse {
        if raw.trim().is_empty() {
            return NormalizedResponse::undetermined();
        }

        let mut matches: Vec<RuleMatch> = Vec::new();
        for (rule_idx, rule) in self.rules.iter().enumerate() {
            for m in rule.regex.find_iter(raw) {
                matches.push(RuleMatch {
                    rule_idx,
                    start: m.start(),
                    end: m.end(),
                });
            }
        }
        // Negation-first suppression: an inclusive match overlapping a
        // non-inclusive match is a substring artifact, not a second class.
        let negative_spans: Vec<Range<usize>> = matches
            .iter()
            .filter(|m| self.rules[m.rule_idx].label == GoldLabel::NonInclusive)
            .map(|m| m.start..m.end)
            .collect();
        matches.retain(|m| {
            self.rules[m.rule_idx].label == GoldLabel::NonInclusive
                || !negative_spans
                    .iter()
                    .any(|neg| m.start < neg.end && neg.start < m.end)
        });

        let label_lines: Vec<Range<usize>> = self
            .label_line
            .find_iter(raw)
            .map(|m| m.start()..m.end())
            .collect();
        let in_label_line = |m: &RuleMatch| {
            label_lines
                .iter()
                .any(|line| m.start >= line.start && m.end <= line.end)
        };

        let line_matches: Vec<RuleMatch> =
            matches.iter().copied().filter(in_label_line).collect();
        for pool in [&line_matches, &matches] {
            match self.decide(pool, raw) {
                Decision::Unanimous(response) => return response,
                Decision::Conflict => return NormalizedResponse::undetermined(),
                Decision::NoMatch => {}
            }
        }
        NormalizedResponse::undetermined()
    }

    fn decide(&self, pool: &[RuleMatch], raw: &str) -> Decision {
        let has = |label: GoldLabel| pool.iter().any(|m| self.rules[m.rule_idx].label == label);
        match (has(GoldLabel::Inclusive), has(GoldLabel::NonInclusive)) {
            (false, false) => Decision::NoMatch,
            (true, true) => Decision::Conflict,
            _ => {
                // Rules are already priority-sorted; earliest match of the
                // strongest rule wins the attribution.
                let best = pool
                    .iter()
                    .min_by_key(|m| (m.rule_idx, m.start))
                    .expect("pool is non-empty");
                let rule = &self.rules[best.rule_idx];
                Decision::Unanimous(NormalizedResponse {
                    label: rule.label.into(),
                    matched_pattern: Some(rule.id.clone()),
                    evidence_span: Some(Span {
                        start: raw[..best.start].chars().count(),
                        end: raw[..best.end].chars().count(),
                    }),
                })
            }
        }
    }
}

enum Decision {
    Unanimous(NormalizedResponse),
    Conflict,
    NoMatch,
}

/// Fraction of responses that received a determined label.
pub fn batch_parse_rate(responses: &[NormalizedResponse]) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::EmptyInput("normalized responses"));
    }
    let parsed = responses
        .iter()
        .filter(|r| r.label != Prediction::Undetermined)
        .count();
    Ok(parsed as f64 / responses.len() as f64)
}
