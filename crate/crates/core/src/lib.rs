//! Core of `bictrace`, a tracer that walks back from a bug-fixing commit to the
//! commit that introduced the bug.
//!
//! Everything in this crate is pure text and data manipulation over `alloc`:
//! the tool schemas and argument validation, the observation compression
//! pipeline, the investigation loop (generic over a model backend and a tool
//! runner), final-answer parsing, the commit prefix ladder, SZZ candidate
//! selection and the evaluation metrics. Process spawning, file IO and HTTP
//! live in the `bictrace` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod cache;
pub mod commit;
pub mod compress;
pub mod diff;
pub mod final_output;
pub mod metrics;
pub mod prompt;
pub mod redact;
pub mod resolve;
pub mod szz;
pub mod time;
pub mod tools;
pub mod transcript;

pub use commit::{CommitId, InvalidCommitId};
pub use tools::{ToolArgs, ToolName, ToolSchema};
