use alloc::vec;
use alloc::vec::Vec;

use super::input::ComposedInput;
use super::linalg::{dot, layer_norm, softmax};
use super::model::ToyModel;
use crate::compression::ImportanceScores;
use crate::{Error, Result};

/// Source label attached to `[CLS]` scores.
pub const CLS_SOURCE: &str = "cls-attention";

/// Scores every non-text token by the head-averaged attention it receives
/// from a `[CLS]` query prepended to the non-text embeddings.
///
/// The encoder sees no positions, so permuting tokens permutes scores.
/// Scores sum to one minus the `[CLS]` self-attention.
pub fn encode_cls_scores(model: &ToyModel, input: &ComposedInput) -> Result<ImportanceScores> {
    let tokens = input.nontext_embeddings();
    if tokens.rows == 0 {
        return Err(Error::Validation("no non-text tokens to score".into()));
    }
    let enc = &model.cls_encoder;
    let d = model.config.d_model;
    let heads = model.config.heads;
    let dh = model.head_dim();
    let scale = 1.0 / libm::sqrtf(dh as f32);

    let mut z = vec![0.0; d];
    let mut q = vec![0.0; d];
    layer_norm(&enc.cls, &mut z);
    enc.w_query.left_mul(&z, &mut q);

    let mut keys = vec![0.0; (tokens.rows + 1) * d];
    enc.w_key.left_mul(&z, &mut keys[..d]);
    for i in 0..tokens.rows {
        layer_norm(tokens.row(i), &mut z);
        enc.w_key.left_mul(&z, &mut keys[(i + 1) * d..(i + 2) * d]);
    }

    let mut scores = vec![0.0f64; tokens.rows];
    let mut logits: Vec<f32> = Vec::with_capacity(tokens.rows + 1);
    for h in 0..heads {
        let hs = h * dh..(h + 1) * dh;
        logits.clear();
        logits.extend(keys.chunks_exact(d).map(|k| scale * dot(&q[hs.clone()], &k[hs.clone()])));
        softmax(&mut logits);
        for (s, a) in scores.iter_mut().zip(&logits[1..]) {
            *s += f64::from(*a);
        }
    }
    scores.iter_mut().for_each(|s| *s /= heads as f64);
    ImportanceScores::new(scores, CLS_SOURCE)
}
