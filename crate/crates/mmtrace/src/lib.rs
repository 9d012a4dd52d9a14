//! MMTR trace files, reports and the `mmtrace` command-line tool.
//!
//! The metrics, compression and toy model live in `mmtrace-core`; this
//! crate adds everything that needs `std`: file formats, digests, report
//! rendering and the CLI.

#![warn(missing_docs)]

pub mod cli;
pub mod fixtures;
pub mod format;
pub mod manifest;
pub mod number;
pub mod report;

pub use mmtrace_core as core;
