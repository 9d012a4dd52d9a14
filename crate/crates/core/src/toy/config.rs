use alloc::format;

use crate::{Error, Result};

/// Configuration of the toy multimodal decoder and of the input it is fed.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    /// Decoder layers.
    pub layers: usize,
    /// Attention heads per layer.
    pub heads: usize,
    /// Model width; must be divisible by `heads`.
    pub d_model: usize,
    /// Feed-forward hidden width.
    pub d_ff: usize,
    /// Text vocabulary size (ids 0 and 1 are BOS and SEP).
    pub vocab: usize,
    /// Prompt text tokens.
    pub text_len: usize,
    /// Non-text tokens in one copy of the non-text block.
    pub nontext_len: usize,
    /// Redundancy of the non-text block in `[0, 1]`; sets the number of
    /// distinct prototypes `K = max(1, round((1 - redundancy) * nontext_len))`.
    pub redundancy: f64,
    /// How many times the non-text block is repeated.
    pub replication: usize,
    /// Generated tokens.
    pub steps: usize,
    /// Scale of the per-token noise added to each prototype.
    pub noise: f64,
    /// Size of the learned position table; bounds the decoded sequence.
    pub max_positions: usize,
    /// Seed of every random draw.
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            vocab: 256,
            text_len: 24,
            nontext_len: 96,
            redundancy: 0.9,
            replication: 1,
            steps: 16,
            noise: 0.05,
            max_positions: 4096,
            seed: 0,
        }
    }
}

impl ToyConfig {
    /// Default configuration with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Number of distinct non-text prototypes.
    pub fn prototypes(&self) -> usize {
        let k = libm::round((1.0 - self.redundancy) * self.nontext_len as f64) as usize;
        k.max(1)
    }

    /// Input length `P` before any pruning: BOS, text, SEP, replicated block.
    pub fn input_len(&self) -> usize {
        2 + self.text_len + self.replication * self.nontext_len
    }

    /// Checks every field constraint.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Validation(msg));
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad(format!(
                "layers, heads, d_model and d_ff must be positive (got {}, {}, {}, {})",
                self.layers, self.heads, self.d_model, self.d_ff
            ));
        }
        if self.d_model % self.heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.vocab < 3 {
            return bad(format!("vocab {} leaves no room for content tokens", self.vocab));
        }
        if self.text_len == 0 || self.nontext_len == 0 || self.replication == 0 || self.steps == 0 {
            return bad(format!(
                "text_len, nontext_len, replication and steps must be >= 1 (got {}, {}, {}, {})",
                self.text_len, self.nontext_len, self.replication, self.steps
            ));
        }
        if !(0.0..=1.0).contains(&self.redundancy) {
            return bad(format!("redundancy {} outside [0, 1]", self.redundancy));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} must be finite and >= 0", self.noise));
        }
        if self.input_len() + self.steps > self.max_positions {
            return bad(format!(
                "input_len {} + steps {} exceeds max_positions {}",
                self.input_len(),
                self.steps,
                self.max_positions
            ));
        }
        Ok(())
    }
}
