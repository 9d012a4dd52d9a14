use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linalg::Matrix;
use super::ToyConfig;
use crate::Result;

/// Multiplier on query and key projections.
pub(crate) const ATTENTION_SHARPNESS: f32 = 0.75;
/// Multiplier on the attention block's contribution to the residual stream.
pub(crate) const ATTENTION_GAIN: f32 = 4.0;
/// Standard deviation of learned absolute position embeddings.
pub(crate) const POSITION_STD: f32 = 0.1;

// Independent ChaCha streams, so that e.g. the size of the position table
// never shifts the draws of the layer weights.
pub(crate) const STREAM_WEIGHTS: u64 = 0;
pub(crate) const STREAM_POSITIONS: u64 = 1;
pub(crate) const STREAM_CONTENT: u64 = 2;
pub(crate) const STREAM_CLS: u64 = 3;

/// Token id of the beginning-of-sequence special token.
pub const BOS: usize = 0;
/// Token id of the separator between text and non-text content.
pub const SEP: usize = 1;

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// One pre-norm decoder layer.
///
/// The key projection is the negated query projection, so a token's logit
/// against another is minus the similarity of their projected states.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub(crate) w_query: Matrix,
    pub(crate) w_key: Matrix,
    pub(crate) w_value: Matrix,
    pub(crate) w_out: Matrix,
    pub(crate) w_ff_in: Matrix,
    pub(crate) w_ff_out: Matrix,
}

/// The frozen one-layer `[CLS]` encoder over non-text embeddings. It has
/// no position embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsEncoder {
    pub(crate) cls: Vec<f32>,
    pub(crate) w_query: Matrix,
    pub(crate) w_key: Matrix,
}

/// Seeded toy multimodal decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub(crate) config: ToyConfig,
    pub(crate) token_embedding: Matrix,
    pub(crate) positions: Matrix,
    pub(crate) layers: Vec<DecoderLayer>,
    pub(crate) w_vocab: Matrix,
    pub(crate) cls_encoder: ClsEncoder,
}

impl ToyModel {
    /// Configuration the model was built from.
    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    /// Every parameter, in a fixed order. Used to compare models.
    pub fn parameters(&self) -> Vec<f32> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.token_embedding.data);
        out.extend_from_slice(&self.positions.data);
        for l in &self.layers {
            for m in [&l.w_query, &l.w_key, &l.w_value, &l.w_out, &l.w_ff_in, &l.w_ff_out] {
                out.extend_from_slice(&m.data);
            }
        }
        out.extend_from_slice(&self.w_vocab.data);
        out.extend_from_slice(&self.cls_encoder.cls);
        out.extend_from_slice(&self.cls_encoder.w_query.data);
        out.extend_from_slice(&self.cls_encoder.w_key.data);
        out
    }

    pub(crate) fn head_dim(&self) -> usize {
        self.config.d_model / self.config.heads
    }
}

/// Draws all parameters from ChaCha8 streams seeded with `config.seed`.
///
/// Weight matrices are `N(0, 1/fan_in)`, token embeddings `N(0, 1)` and
/// position embeddings `N(0, 0.1^2)`. Input-side fields of the config
/// (lengths, redundancy, replication, noise, steps) do not affect the
/// parameters, so one model serves every input variant.
pub fn build_model(config: &ToyConfig) -> Result<ToyModel> {
    config.validate()?;
    let d = config.d_model;
    let ff = config.d_ff;
    let w_std = 1.0 / libm::sqrtf(d as f32);

    let mut r = rng(config.seed, STREAM_WEIGHTS);
    let token_embedding = Matrix::gaussian(&mut r, config.vocab, d, 1.0);
    let layers = (0..config.layers)
        .map(|_| {
            let w_query = Matrix::gaussian(&mut r, d, d, w_std);
            let w_key = w_query.negated();
            DecoderLayer {
                w_query,
                w_key,
                w_value: Matrix::gaussian(&mut r, d, d, w_std),
                w_out: Matrix::gaussian(&mut r, d, d, w_std),
                w_ff_in: Matrix::gaussian(&mut r, d, ff, w_std),
                w_ff_out: Matrix::gaussian(&mut r, ff, d, 1.0 / libm::sqrtf(ff as f32)),
            }
        })
        .collect();
    let w_vocab = Matrix::gaussian(&mut r, d, config.vocab, w_std);

    let positions = Matrix::gaussian(&mut rng(config.seed, STREAM_POSITIONS), config.max_positions, d, POSITION_STD);

    let mut r = rng(config.seed, STREAM_CLS);
    let cls_encoder = ClsEncoder {
        cls: Matrix::gaussian(&mut r, 1, d, 1.0).data,
        w_query: Matrix::gaussian(&mut r, d, d, w_std),
        w_key: Matrix::gaussian(&mut r, d, d, w_std),
    };

    Ok(ToyModel {
        config: config.clone(),
        token_embedding,
        positions,
        layers,
        w_vocab,
        cls_encoder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn same_seed_gives_identical_parameters() {
        let c = ToyConfig::default();
        let a = build_model(&c).unwrap().parameters();
        let b = build_model(&c).unwrap().parameters();
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn different_seed_changes_parameters() {
        let a = build_model(&ToyConfig::with_seed(0)).unwrap().parameters();
        let b = build_model(&ToyConfig::with_seed(1)).unwrap().parameters();
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn input_fields_do_not_change_parameters() {
        let a = build_model(&ToyConfig::default()).unwrap();
        let b = build_model(&ToyConfig { replication: 10, redundancy: 0.5, noise: 0.2, ..ToyConfig::default() }).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let c = ToyConfig { d_model: 65, heads: 4, ..ToyConfig::default() };
        assert!(matches!(build_model(&c), Err(Error::Validation(_))));
    }

    #[test]
    fn parameters_are_finite_and_keys_mirror_queries() {
        let m = build_model(&ToyConfig::default()).unwrap();
        assert!(m.parameters().iter().all(|v| v.is_finite()));
        for l in &m.layers {
            assert!(l.w_key.data.iter().zip(&l.w_query.data).all(|(k, q)| *k == -*q));
        }
    }
}
