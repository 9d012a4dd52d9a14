//! Toy multimodal decoder.
//!
//! A small random-init pre-norm transformer that decodes greedily over
//! `[BOS] text [SEP] non-text` input and records real attention traces.
//! Non-text tokens are continuous embeddings built from a few prototypes,
//! so redundancy and replication are direct knobs. A separate frozen
//! `[CLS]` encoder scores the non-text tokens for pruning.

mod cls;
mod config;
mod decode;
mod input;
mod linalg;
mod model;
mod sweep;

pub use cls::{encode_cls_scores, CLS_SOURCE};
pub use config::ToyConfig;
pub use decode::{generate, generate_with_trace, Generation};
pub use input::{compose_input, ComposedInput};
pub use linalg::Matrix;
pub use model::{build_model, ClsEncoder, DecoderLayer, ToyModel, BOS, SEP};
pub use sweep::{
    prune_fraction, replication_fraction, run_prune_sweep, run_replication_sweep, SweepKind, SweepPoint,
    SweepRow,
};
