//! Core library for the `inclusivo` pipeline: synthetic-data generation and
//! LLM evaluation for inclusive-language detection in Italian job ads.
//!
//! The pipeline runs in stages, each with a file-based handoff:
//!
//! 1. [`templates`] — segment seed job ads into sentences and turn them into
//!    placeholder templates ([`vocab`] provides the maskable-word lexicon).
//! 2. [`split`] — partition templates 70/30 into train/test *before* any
//!    expansion, so no sentence skeleton leaks across partitions.
//! 3. [`generator`] — merge templates into length-controlled chunks, expand
//!    placeholders with gender-tagged vocabulary, derive gold labels.
//! 4. [`prompts`] — render ZSL/FSL/ZSLCOT prompts and export chat-format
//!    training rows.
//! 5. [`inference`] — run every (model, prompt, sample) combination against
//!    chat-completion backends (or offline mocks) with bounded concurrency.
//! 6. [`normalizer`] — extract binary labels from noisy model output.
//! 7. [`eval`] — confusion matrices, the six classification metrics, and the
//!    prompt/length/position comparison tables and plots.

pub mod config;
pub mod error;
pub mod eval;
pub mod generator;
pub mod inference;
pub mod jsonl;
pub mod label;
pub mod manifest;
pub mod normalizer;
pub mod prompts;
pub mod split;
pub mod templates;
pub mod vocab;

pub use error::{Error, Result};
pub use label::{GoldLabel, Prediction};
