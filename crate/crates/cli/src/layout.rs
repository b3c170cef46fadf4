//! Output-directory layout shared by every stage.

use std::path::{Path, PathBuf};

/// Fixed file layout under the configured output directory. Each stage
/// knows where the previous one wrote, so the stages compose with no hidden
/// state.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn templates(&self) -> PathBuf {
        self.root.join("templates.jsonl")
    }

    pub fn split_rows(&self) -> PathBuf {
        self.root.join("split.jsonl")
    }

    pub fn split_meta(&self) -> PathBuf {
        self.root.join("split_meta.json")
    }

    pub fn chunks(&self) -> PathBuf {
        self.root.join("chunks.jsonl")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples.jsonl")
    }

    pub fn chat_rows(&self) -> PathBuf {
        self.root.join("chat_rows.jsonl")
    }

    pub fn records(&self) -> PathBuf {
        self.root.join("records.jsonl")
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("run_manifest.json")
    }

    pub fn normalized(&self) -> PathBuf {
        self.root.join("normalized.jsonl")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.reports_dir().join(name)
    }

    pub fn stage_manifest(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{stage}.manifest.json"))
    }
}
