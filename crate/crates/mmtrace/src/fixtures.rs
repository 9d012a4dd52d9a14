//! Built-in synthetic traces with known metrics.
//!
//! The `table2-*` fixtures reproduce the LLaVA-1.5-7B compression results
//! at reduction rates 0, 90 and 95 percent: each layer's text mass is
//! solved from the target MDI, `A_T / (1 - A_T) = MDI * |T| / |O|`, and
//! both layers of a bucket get the same mass. `|O|` follows the pruning
//! budget on 576 image tokens.

use mmtrace_core::compression::retained_count;
use mmtrace_core::trace::{synth_trace, AttentionTrace, Metadata, RoleMap, SynthSpec, TokenRole, TraceShape};
use serde_json::Value;

/// Text tokens in every fixture.
pub const N_TEXT: usize = 60;
/// Non-text tokens before pruning.
pub const N_NONTEXT: usize = 576;
/// Special tokens in every fixture.
pub const N_SPECIAL: usize = 2;
const LAYERS: usize = 6;
const STEPS: usize = 4;
const HEADS: usize = 2;

/// Names accepted by [`fixture`].
pub const NAMES: [&str; 5] = ["table2-row0", "table2-row90", "table2-row95", "balanced", "uniform"];

/// (reduction rate, early, middle, late MDI).
const REDUCTION_ROWS: [(&str, f64, [f64; 3]); 3] = [
    ("table2-row0", 0.0, [1.58, 10.23, 17.37]),
    ("table2-row90", 0.9, [0.57, 1.10, 1.84]),
    ("table2-row95", 0.95, [0.48, 0.86, 3.39]),
];

/// Target bucket MDIs of a `table2-*` fixture.
pub fn target_mdis(name: &str) -> Option<[f64; 3]> {
    REDUCTION_ROWS.iter().find(|r| r.0 == name).map(|r| r.2)
}

fn spec(layer_mdis: &[f64], n_nontext: usize, name: &str) -> SynthSpec {
    let mut metadata = Metadata::new();
    metadata.insert("fixture".into(), Value::from(name));
    SynthSpec {
        n_special: N_SPECIAL,
        steps: STEPS,
        heads: HEADS,
        metadata,
        ..SynthSpec::from_layer_mdis(layer_mdis, N_TEXT, n_nontext)
    }
}

/// Builds the named fixture.
pub fn fixture(name: &str) -> Option<AttentionTrace> {
    if let Some(&(_, rate, [e, m, l])) = REDUCTION_ROWS.iter().find(|r| r.0 == name) {
        let n_nontext = retained_count(N_NONTEXT, rate);
        let trace = synth_trace(&spec(&[e, e, m, m, l, l], n_nontext, name)).expect("fixture spec is valid");
        return Some(trace.with_metadata("reduction_rate", Value::from(rate)));
    }
    match name {
        "balanced" => Some(synth_trace(&spec(&[1.0; LAYERS], N_NONTEXT, name)).expect("fixture spec is valid")),
        "uniform" => {
            let p = N_SPECIAL + N_TEXT + N_NONTEXT;
            let roles: RoleMap = (0..p)
                .map(|i| match i {
                    0 => TokenRole::Special,
                    i if i <= N_TEXT => TokenRole::Text,
                    i if i == N_TEXT + 1 => TokenRole::Special,
                    _ => TokenRole::NonText,
                })
                .collect();
            let shape = TraceShape { steps: STEPS, layers: LAYERS, heads: HEADS, input_len: p };
            let payload = vec![1.0 / p as f32; shape.element_count().expect("small")];
            let mut metadata = Metadata::new();
            metadata.insert("fixture".into(), Value::from(name));
            Some(AttentionTrace::new(shape, roles, metadata, payload).expect("fixture is valid"))
        }
        _ => None,
    }
}
