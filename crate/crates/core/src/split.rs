//! Leakage-free template split.
//!
//! Templates are partitioned into train and test *before* any expansion, so
//! the same sentence skeleton never appears on both sides of the evaluation.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::templates::TemplateSentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Partition::Train => f.write_str("train"),
            Partition::Test => f.write_str("test"),
        }
    }
}

/// Result of one seeded split. Sets are ordered so serialization is
/// deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSplit {
    pub train_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub ratio: f64,
    pub seed: u64,
}

impl TemplateSplit {
    pub fn partition_of(&self, template_id: &str) -> Option<Partition> {
        if self.train_ids.contains(template_id) {
            Some(Partition::Train)
        } else if self.test_ids.contains(template_id) {
            Some(Partition::Test)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.train_ids.len() + self.test_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_ids.is_empty() && self.test_ids.is_empty()
    }
}

/// Deterministically split templates at template granularity.
///
/// Template ids are sorted, shuffled with a seeded permutation, and the first
/// `round(ratio * n)` become the train set, so the outcome depends only on
/// the id set, the ratio and the seed.
pub fn split_templates(
    templates: &[TemplateSentence],
    ratio: f64,
    seed: u64,
) -> Result<TemplateSplit> {
    if templates.is_empty() {
        return Err(Error::EmptyInput("template list"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "split ratio must be in (0,1), got {ratio}"
        )));
    }
    let mut ids: Vec<&str> = templates.iter().map(|t| t.template_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != templates.len() {
        return Err(Error::InvalidParameter(
            "template ids must be unique for splitting".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train_n = (ratio * ids.len() as f64).round() as usize;
    let train_ids: BTreeSet<String> = ids[..train_n].iter().map(|s| s.to_string()).collect();
    let test_ids: BTreeSet<String> = ids[train_n..].iter().map(|s| s.to_string()).collect();
    Ok(TemplateSplit {
        train_ids,
        test_ids,
        ratio,
        seed,
    })
}

/// One line of the split manifest JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRow {
    pub template_id: String,
    pub partition: Partition,
}

/// Sidecar metadata recorded next to the split manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitMeta {
    pub ratio: f64,
    pub seed: u64,
    pub train_count: usize,
    pub test_count: usize,
}

/// Write the split as a JSONL manifest plus a JSON sidecar with ratio/seed.
pub fn write_split(split: &TemplateSplit, rows_path: &Path, meta_path: &Path) -> Result<()> {
    let mut rows: Vec<SplitRow> = split
        .train_ids
        .iter()
        .map(|id| SplitRow {
            template_id: id.clone(),
            partition: Partition::Train,
        })
        .chain(split.test_ids.iter().map(|id| SplitRow {
            template_id: id.clone(),
            partition: Partition::Test,
        }))
        .collect();
    rows.sort_by(|a, b| a.template_id.cmp(&b.template_id));
    jsonl::write_jsonl(rows_path, &rows)?;
    let meta = SplitMeta {
        ratio: split.ratio,
        seed: split.seed,
        train_count: split.train_ids.len(),
        test_count: split.test_ids.len(),
    };
    let body = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::format(meta_path, 0, e.to_string()))?;
    std::fs::write(meta_path, body + "\n").map_err(|e| Error::io(meta_path, e))?;
    Ok(())
}

/// Load a split back from its manifest and sidecar.
pub fn read_split(rows_path: &Path, meta_path: &Path) -> Result<TemplateSplit> {
    let rows: Vec<SplitRow> = jsonl::read_jsonl(rows_path)?;
    let meta_raw = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: SplitMeta = serde_json::from_str(&meta_raw)
        .map_err(|e| Error::format(meta_path, 0, e.to_string()))?;
    let mut split = TemplateSplit {
        train_ids: BTreeSet::new(),
        test_ids: BTreeSet::new(),
        ratio: meta.ratio,
        seed: meta.seed,
    };
    for row in rows {
        match row.partition {
            Partition::Train => split.train_ids.insert(row.template_id),
            Partition::Test => split.test_ids.insert(row.template_id),
        };
    }
    Ok(split)
}
