//! Attention-trace data model.
//!
//! An [`AttentionTrace`] records, for every generated token, the attention it
//! paid to each input position, per layer and per head. Positions are
//! labelled by a [`RoleMap`]. The payload is dense and row-major in
//! `[step][layer][head][position]` order.

mod synth;
mod validate;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

pub use synth::{synth_trace, SynthSpec};
pub use validate::{validate_trace, Violation, ViolationKind};

/// Free-form, string-keyed trace metadata (model id, replication factor, ...).
pub type Metadata = Map<String, Value>;

/// Role of one input position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenRole {
    /// Content text token; member of the text set.
    Text,
    /// Content token of any other modality.
    #[serde(rename = "nontext")]
    NonText,
    /// BOS, separators, modality boundary markers. Excluded from both sets.
    Special,
}

impl TokenRole {
    /// Wire name used in trace headers.
    pub const fn as_str(self) -> &'static str {
        match self {
            TokenRole::Text => "text",
            TokenRole::NonText => "nontext",
            TokenRole::Special => "special",
        }
    }

    /// Parses a wire name.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(TokenRole::Text),
            "nontext" => Some(TokenRole::NonText),
            "special" => Some(TokenRole::Special),
            _ => None,
        }
    }
}

impl fmt::Display for TokenRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-position role labels of an input sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleMap {
    roles: Vec<TokenRole>,
}

impl RoleMap {
    /// Wraps a role sequence.
    pub fn new(roles: Vec<TokenRole>) -> Self {
        Self { roles }
    }

    /// Number of positions.
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    /// True when there are no positions.
    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// The labels, in position order.
    pub fn roles(&self) -> &[TokenRole] {
        &self.roles
    }

    /// Number of positions carrying `role`.
    pub fn count(&self, role: TokenRole) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    /// `|T|`, the number of text positions.
    pub fn n_text(&self) -> usize {
        self.count(TokenRole::Text)
    }

    /// `|O|`, the number of non-text positions.
    pub fn n_nontext(&self) -> usize {
        self.count(TokenRole::NonText)
    }

    /// Number of special positions.
    pub fn n_special(&self) -> usize {
        self.count(TokenRole::Special)
    }

    /// Positions of the non-text tokens, in order of appearance.
    pub fn nontext_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == TokenRole::NonText)
            .map(|(i, _)| i)
    }

    /// Returns the map with Text and NonText labels exchanged.
    pub fn swapped(&self) -> Self {
        let roles = self
            .roles
            .iter()
            .map(|r| match r {
                TokenRole::Text => TokenRole::NonText,
                TokenRole::NonText => TokenRole::Text,
                TokenRole::Special => TokenRole::Special,
            })
            .collect();
        Self { roles }
    }
}

impl FromIterator<TokenRole> for RoleMap {
    fn from_iter<I: IntoIterator<Item = TokenRole>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Dimensions of a trace payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceShape {
    /// Generated tokens `S`.
    pub steps: usize,
    /// Decoder layers `L`.
    pub layers: usize,
    /// Attention heads `H`; 1 means the producer averaged heads.
    pub heads: usize,
    /// Input positions `P`.
    pub input_len: usize,
}

impl TraceShape {
    /// `S * L * H * P`, or `None` on overflow.
    pub fn element_count(&self) -> Option<usize> {
        self.steps
            .checked_mul(self.layers)?
            .checked_mul(self.heads)?
            .checked_mul(self.input_len)
    }

    /// Flat offset of the first element of row `(step, layer, head)`.
    pub fn row_offset(&self, step: usize, layer: usize, head: usize) -> usize {
        ((step * self.layers + layer) * self.heads + head) * self.input_len
    }
}

/// Attention from every generated token to every input position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    shape: TraceShape,
    role_map: RoleMap,
    metadata: Metadata,
    payload: Vec<f32>,
}

impl AttentionTrace {
    /// Builds a trace and rejects it if any structural invariant fails.
    ///
    /// Metric eligibility (at least one text and one non-text position) is
    /// not required here; [`validate_trace`] reports it separately.
    pub fn new(
        shape: TraceShape,
        role_map: RoleMap,
        metadata: Metadata,
        payload: Vec<f32>,
    ) -> Result<Self> {
        let trace = Self::new_unchecked(shape, role_map, metadata, payload);
        if let Some(v) = validate_trace(&trace).into_iter().find(|v| v.kind.is_structural()) {
            return Err(Error::Validation(v.message));
        }
        Ok(trace)
    }

    /// Builds a trace without checking invariants. Use [`validate_trace`]
    /// before handing the result to metric code.
    pub fn new_unchecked(
        shape: TraceShape,
        role_map: RoleMap,
        metadata: Metadata,
        payload: Vec<f32>,
    ) -> Self {
        Self {
            shape,
            role_map,
            metadata,
            payload,
        }
    }

    /// Payload dimensions.
    pub fn shape(&self) -> TraceShape {
        self.shape
    }

    /// `L`.
    pub fn num_layers(&self) -> usize {
        self.shape.layers
    }

    /// `H`.
    pub fn num_heads(&self) -> usize {
        self.shape.heads
    }

    /// `P`.
    pub fn input_len(&self) -> usize {
        self.shape.input_len
    }

    /// `S`.
    pub fn num_steps(&self) -> usize {
        self.shape.steps
    }

    /// Position labels.
    pub fn role_map(&self) -> &RoleMap {
        &self.role_map
    }

    /// Free-form metadata.
    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    /// Flat payload in `[step][layer][head][position]` order.
    pub fn payload(&self) -> &[f32] {
        &self.payload
    }

    /// Attention row of one generated token at one layer and head.
    ///
    /// Panics if an index is out of range.
    pub fn row(&self, step: usize, layer: usize, head: usize) -> &[f32] {
        assert!(step < self.shape.steps && layer < self.shape.layers && head < self.shape.heads);
        let start = self.shape.row_offset(step, layer, head);
        &self.payload[start..start + self.shape.input_len]
    }

    /// Returns a copy with one metadata entry replaced.
    pub fn with_metadata(mut self, key: &str, value: Value) -> Self {
        self.metadata.insert(String::from(key), value);
        self
    }

    /// Returns a copy with a different role map (not re-validated).
    pub fn with_role_map(mut self, role_map: RoleMap) -> Self {
        self.role_map = role_map;
        self
    }

    /// Returns a copy whose payload has been transformed element-wise.
    pub fn map_payload(mut self, mut f: impl FnMut(usize, f32) -> f32) -> Self {
        for (i, v) in self.payload.iter_mut().enumerate() {
            *v = f(i, *v);
        }
        self
    }

    /// Splits the trace into its parts.
    pub fn into_parts(self) -> (TraceShape, RoleMap, Metadata, Vec<f32>) {
        (self.shape, self.role_map, self.metadata, self.payload)
    }
}
