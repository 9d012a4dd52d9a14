use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde_json::Value;

use super::input::ComposedInput;
use super::linalg::{dot, layer_norm, softmax, Matrix};
use super::model::{DecoderLayer, ToyModel, ATTENTION_GAIN, ATTENTION_SHARPNESS};
use crate::trace::{AttentionTrace, Metadata, TraceShape};
use crate::{Error, Result};

/// A generation run with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// The recorded trace.
    pub trace: AttentionTrace,
    /// Greedily decoded token ids, one per step.
    pub tokens: Vec<usize>,
    /// Largest `|sum - 1|` over every recorded softmax row, measured before
    /// truncation to input positions.
    pub max_row_sum_error: f32,
}

struct KvCache {
    keys: Vec<f32>,
    values: Vec<f32>,
}

struct Decoder<'a> {
    model: &'a ToyModel,
    caches: Vec<KvCache>,
    input_len: usize,
    max_row_sum_error: f32,
}

impl<'a> Decoder<'a> {
    fn new(model: &'a ToyModel, input_len: usize) -> Self {
        let caches = (0..model.config.layers)
            .map(|_| KvCache { keys: Vec::new(), values: Vec::new() })
            .collect();
        Self { model, caches, input_len, max_row_sum_error: 0.0 }
    }

    /// Runs `hidden` (rows at positions `start..`) through every layer and
    /// writes the last row's attention, truncated to the input, into
    /// `record` laid out as `[L][H][P]`.
    fn forward(&mut self, hidden: &mut Matrix, start: usize, step: usize, record: &mut [f32]) -> Result<()> {
        let model = self.model;
        let p = self.input_len;
        let heads = model.config.heads;
        for (li, layer) in model.layers.iter().enumerate() {
            let rows = &mut record[li * heads * p..(li + 1) * heads * p];
            self.layer(li, layer, hidden, start, rows);
            if let Some(i) = hidden.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: li,
                    step,
                    detail: format!("hidden state {} is {}", i, hidden.data[i]),
                });
            }
        }
        Ok(())
    }

    fn layer(&mut self, li: usize, layer: &DecoderLayer, hidden: &mut Matrix, start: usize, record: &mut [f32]) {
        let cfg = &self.model.config;
        let (d, heads) = (cfg.d_model, cfg.heads);
        let dh = d / heads;
        let m = hidden.rows;
        let scale = ATTENTION_SHARPNESS * ATTENTION_SHARPNESS / libm::sqrtf(dh as f32);

        let mut z = vec![0.0; d];
        let mut queries = vec![0.0; m * d];
        let mut buf = vec![0.0; d];
        let cache = &mut self.caches[li];
        for i in 0..m {
            layer_norm(hidden.row(i), &mut z);
            layer.w_query.left_mul(&z, &mut queries[i * d..(i + 1) * d]);
            layer.w_key.left_mul(&z, &mut buf);
            cache.keys.extend_from_slice(&buf);
            layer.w_value.left_mul(&z, &mut buf);
            cache.values.extend_from_slice(&buf);
        }

        let mut attn = vec![0.0; m * d];
        let mut logits = Vec::with_capacity(start + m);
        for i in 0..m {
            let visible = start + i + 1;
            let q = &queries[i * d..(i + 1) * d];
            let out = &mut attn[i * d..(i + 1) * d];
            for h in 0..heads {
                let hs = h * dh..(h + 1) * dh;
                logits.clear();
                logits.extend(
                    cache.keys.chunks_exact(d).take(visible).map(|k| scale * dot(&q[hs.clone()], &k[hs.clone()])),
                );
                let sum = softmax(&mut logits);
                for (a, v) in logits.iter().zip(cache.values.chunks_exact(d)) {
                    for (o, vv) in out[hs.clone()].iter_mut().zip(&v[hs.clone()]) {
                        *o += a * vv;
                    }
                }
                if i + 1 == m {
                    self.max_row_sum_error = self.max_row_sum_error.max((sum - 1.0).abs());
                    let p = self.input_len;
                    record[h * p..(h + 1) * p].copy_from_slice(&logits[..p]);
                }
            }
        }

        let mut ff = vec![0.0; cfg.d_ff];
        for i in 0..m {
            layer.w_out.left_mul(&attn[i * d..(i + 1) * d], &mut buf);
            let row = &mut hidden.data[i * d..(i + 1) * d];
            for (x, a) in row.iter_mut().zip(&buf) {
                *x += ATTENTION_GAIN * a;
            }
            layer_norm(row, &mut z);
            layer.w_ff_in.left_mul(&z, &mut ff);
            ff.iter_mut().for_each(|v| *v = v.max(0.0));
            layer.w_ff_out.left_mul(&ff, &mut buf);
            for (x, f) in row.iter_mut().zip(&buf) {
                *x += f;
            }
        }
    }

    fn next_token(&self, last: &[f32]) -> usize {
        let mut z = vec![0.0; last.len()];
        layer_norm(last, &mut z);
        let mut logits = vec![0.0; self.model.config.vocab];
        self.model.w_vocab.left_mul(&z, &mut logits);
        // First maximum wins, so ties go to the smaller id.
        let mut best = 0;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        best
    }
}

/// Greedy causal decoding for `steps` tokens, recording attention.
///
/// Step `s` is the row of the query that predicts generated token `s`:
/// step 0 is the last input position, step `s > 0` the `s`-th generated
/// token. Rows are truncated to the `P` input positions.
pub fn generate_with_trace(model: &ToyModel, input: &ComposedInput, steps: usize) -> Result<AttentionTrace> {
    generate(model, input, steps).map(|g| g.trace)
}

/// Like [`generate_with_trace`], also returning tokens and row-sum error.
pub fn generate(model: &ToyModel, input: &ComposedInput, steps: usize) -> Result<Generation> {
    let cfg = &model.config;
    let p = input.len();
    if steps == 0 {
        return Err(Error::Validation("steps must be >= 1".into()));
    }
    if input.embeddings.cols != cfg.d_model {
        return Err(Error::Validation(format!(
            "input width {} does not match model width {}",
            input.embeddings.cols, cfg.d_model
        )));
    }
    if p == 0 || p + steps > cfg.max_positions {
        return Err(Error::Validation(format!(
            "input_len {p} + steps {steps} must be in 1..={}",
            cfg.max_positions
        )));
    }

    let shape = TraceShape { steps, layers: cfg.layers, heads: cfg.heads, input_len: p };
    let step_len = cfg.layers * cfg.heads * p;
    let mut payload = vec![0.0f32; steps * step_len];
    let mut decoder = Decoder::new(model, p);
    let d = cfg.d_model;

    let mut hidden = input.embeddings.clone();
    for (i, row) in hidden.data.chunks_exact_mut(d).enumerate() {
        row.iter_mut().zip(model.positions.row(i)).for_each(|(x, e)| *x += e);
    }
    let mut start = 0;
    let mut tokens = Vec::with_capacity(steps);
    for step in 0..steps {
        decoder.forward(&mut hidden, start, step, &mut payload[step * step_len..(step + 1) * step_len])?;
        let token = decoder.next_token(hidden.row(hidden.rows - 1));
        tokens.push(token);
        start += hidden.rows;
        let mut x = Matrix::zeros(1, d);
        for ((o, e), q) in x.data.iter_mut().zip(model.token_embedding.row(token)).zip(model.positions.row(start)) {
            *o = e + q;
        }
        hidden = x;
    }

    let mut metadata = Metadata::new();
    metadata.insert("replication".into(), Value::from(input.replication));
    metadata.insert("redundancy".into(), Value::from(input.redundancy));
    metadata.insert("seed".into(), Value::from(input.seed));
    let trace = AttentionTrace::new(shape, input.role_map.clone(), metadata, payload)?;
    Ok(Generation { trace, tokens, max_row_sum_error: decoder.max_row_sum_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{build_model, compose_input, ToyConfig};

    fn small() -> ToyConfig {
        ToyConfig { layers: 4, heads: 2, d_model: 16, d_ff: 32, text_len: 6, nontext_len: 12, steps: 5, ..ToyConfig::default() }
    }

    #[test]
    fn shape_and_nonnegativity() {
        let c = small();
        let m = build_model(&c).unwrap();
        let x = compose_input(&c, &m).unwrap();
        assert_eq!(x.len(), 20);
        let g = generate(&m, &x, 5).unwrap();
        assert_eq!(g.trace.payload().len(), 5 * 4 * 2 * 20);
        assert!(g.trace.payload().iter().all(|v| *v >= 0.0));
        assert!(g.max_row_sum_error <= 1e-5);
        assert_eq!(g.tokens.len(), 5);
    }

    #[test]
    fn first_step_covers_whole_input_then_truncates() {
        let c = small();
        let m = build_model(&c).unwrap();
        let x = compose_input(&c, &m).unwrap();
        let t = generate_with_trace(&m, &x, 3).unwrap();
        for l in 0..4 {
            for h in 0..2 {
                let s: f32 = t.row(0, l, h).iter().sum();
                assert!((s - 1.0).abs() < 1e-5);
                let s2: f32 = t.row(2, l, h).iter().sum();
                assert!(s2 < 1.0 + 1e-5);
            }
        }
    }

    #[test]
    fn metadata_records_input_knobs() {
        let c = ToyConfig { replication: 3, ..small() };
        let m = build_model(&c).unwrap();
        let t = generate_with_trace(&m, &compose_input(&c, &m).unwrap(), 2).unwrap();
        assert_eq!(t.metadata()["replication"], Value::from(3));
        assert_eq!(t.metadata()["seed"], Value::from(0u64));
    }

    #[test]
    fn deterministic() {
        let c = small();
        let run = || {
            let m = build_model(&c).unwrap();
            generate(&m, &compose_input(&c, &m).unwrap(), 5).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.tokens, b.tokens);
        assert!(a.trace.payload().iter().zip(b.trace.payload()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_input_reports_layer_and_step() {
        let c = small();
        let m = build_model(&c).unwrap();
        let mut x = compose_input(&c, &m).unwrap();
        x.embeddings.data[3] = f32::INFINITY;
        assert!(matches!(generate(&m, &x, 2), Err(Error::Numeric { layer: 0, step: 0, .. })));
    }
}
