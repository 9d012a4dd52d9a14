//! Modality dominance analysis for multimodal transformers.
//!
//! This crate holds the pure, allocation-only parts of the toolkit:
//!
//! - [`trace`]: the attention-trace data model, validation and synthetic
//!   fixtures.
//! - [`metrics`]: modality attention masses, the Modality Dominance Index
//!   (MDI) and the Attention Efficiency Index (AEI), per layer and per
//!   early/middle/late layer bucket.
//! - [`compression`]: `[CLS]`-guided top-k retention of non-text tokens and
//!   budget-driven threshold selection.
//! - [`toy`]: a seeded toy multimodal decoder that produces real attention
//!   traces with controllable redundancy and replication of the non-text
//!   block.
//!
//! File formats, reports and the command-line tool live in the companion
//! `mmtrace` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod compression;
pub mod error;
pub mod metrics;
pub mod toy;
pub mod trace;

pub use error::{Error, Result};
