//! Library surface of the `inclusivo` CLI: the stage commands and the
//! output-directory layout, kept callable so integration tests can drive
//! whole pipeline runs in-process.

pub mod commands;
pub mod layout;

pub use commands::{
    apply_overrides, cmd_chat_export, cmd_evaluate, cmd_extract, cmd_generate, cmd_infer,
    cmd_normalize, cmd_run_all, cmd_split, InferFlags, Overrides,
};
pub use layout::OutputLayout;
