use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::linalg::Matrix;
use super::model::{rng, ToyModel, BOS, SEP, STREAM_CONTENT};
use super::ToyConfig;
use crate::trace::{RoleMap, TokenRole};
use crate::{Error, Result};

/// Embedded decoder input: `[BOS] text [SEP] (non-text block) x n`.
///
/// Embeddings exclude positions; the decoder adds those.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedInput {
    /// One row per input position.
    pub embeddings: Matrix,
    /// Role of every position.
    pub role_map: RoleMap,
    /// The `K` prototype vectors behind the non-text tokens.
    pub prototypes: Matrix,
    /// Text token ids, in order.
    pub text_ids: Vec<usize>,
    /// Replication factor `n`.
    pub replication: usize,
    /// Redundancy `rho`.
    pub redundancy: f64,
    /// Seed the content was drawn from.
    pub seed: u64,
}

impl ComposedInput {
    /// Input length `P`.
    pub fn len(&self) -> usize {
        self.embeddings.rows
    }

    /// Whether the input has no positions (never true for composed input).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Embeddings of the non-text positions, in order.
    pub fn nontext_embeddings(&self) -> Matrix {
        let d = self.embeddings.cols;
        let mut out = Matrix::zeros(0, d);
        for p in self.role_map.nontext_positions() {
            out.data.extend_from_slice(self.embeddings.row(p));
            out.rows += 1;
        }
        out
    }

    /// Drops every non-text token whose index (counted over non-text
    /// positions only) is not in `kept`. Text and specials are untouched.
    pub fn retain_nontext(&self, kept: &[usize]) -> Result<Self> {
        let n = self.role_map.n_nontext();
        let mask = crate::compression::keep_mask(n, kept)?;
        let d = self.embeddings.cols;
        let mut emb = Matrix::zeros(0, d);
        let mut roles = Vec::with_capacity(self.len());
        let mut j = 0;
        for (p, &role) in self.role_map.roles().iter().enumerate() {
            if role == TokenRole::NonText {
                j += 1;
                if !mask[j - 1] {
                    continue;
                }
            }
            emb.data.extend_from_slice(self.embeddings.row(p));
            emb.rows += 1;
            roles.push(role);
        }
        Ok(Self {
            embeddings: emb,
            role_map: RoleMap::new(roles),
            ..self.clone()
        })
    }
}

/// Builds the decoder input for `config`.
///
/// Text ids, prototypes and noise come from their own stream, so they do
/// not depend on `replication`; the `n` copies of the block are exact.
pub fn compose_input(config: &ToyConfig, model: &ToyModel) -> Result<ComposedInput> {
    config.validate()?;
    let d = model.config.d_model;
    if config.d_model != d || config.vocab != model.config.vocab {
        return Err(Error::Validation(format!(
            "config (d_model {}, vocab {}) does not match model (d_model {}, vocab {})",
            config.d_model, config.vocab, d, model.config.vocab
        )));
    }
    if config.input_len() > model.config.max_positions {
        return Err(Error::Validation(format!(
            "input_len {} exceeds the model's {} positions",
            config.input_len(),
            model.config.max_positions
        )));
    }

    let mut r = rng(config.seed, STREAM_CONTENT);
    let text_ids: Vec<usize> = (0..config.text_len).map(|_| r.random_range(2..config.vocab)).collect();
    let k = config.prototypes();
    let prototypes = Matrix::gaussian(&mut r, k, d, 1.0);
    let noise = Matrix::gaussian(&mut r, config.nontext_len, d, config.noise as f32);
    let mut block = Vec::with_capacity(config.nontext_len * d);
    for i in 0..config.nontext_len {
        block.extend(prototypes.row(i % k).iter().zip(noise.row(i)).map(|(p, e)| p + e));
    }

    let p = config.input_len();
    let mut embeddings = Matrix::zeros(0, d);
    embeddings.data.reserve(p * d);
    let mut roles = Vec::with_capacity(p);
    let mut push = |row: &[f32], role| {
        embeddings.data.extend_from_slice(row);
        embeddings.rows += 1;
        roles.push(role);
    };
    push(model.token_embedding.row(BOS), TokenRole::Special);
    for &t in &text_ids {
        push(model.token_embedding.row(t), TokenRole::Text);
    }
    push(model.token_embedding.row(SEP), TokenRole::Special);
    for _ in 0..config.replication {
        for row in block.chunks_exact(d) {
            push(row, TokenRole::NonText);
        }
    }

    Ok(ComposedInput {
        embeddings,
        role_map: RoleMap::new(roles),
        prototypes,
        text_ids,
        replication: config.replication,
        redundancy: config.redundancy,
        seed: config.seed,
    })
}
