use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::AttentionTrace;

/// Which invariant a [`Violation`] breaks. Variants are declared in
/// reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    /// `L`, `H` or `S` is zero, or `P < 2`.
    Dimension,
    /// Role map length differs from `P`.
    RoleMapLength,
    /// Payload element count differs from `S * L * H * P`.
    PayloadLength,
    /// A payload value is NaN or infinite.
    NonFinite,
    /// A payload value is negative.
    Negative,
    /// The trace has no text or no non-text positions.
    MetricsIneligible,
}

impl ViolationKind {
    /// Structural violations make a trace unusable for anything; the only
    /// non-structural one is metric eligibility.
    pub fn is_structural(self) -> bool {
        !matches!(self, ViolationKind::MetricsIneligible)
    }
}

/// One violated invariant with location details.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The broken invariant.
    pub kind: ViolationKind,
    /// Flat payload index or position, when the violation has one.
    pub index: Option<usize>,
    /// Human-readable description.
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Lists every invariant the trace violates, ordered by invariant then index.
/// An empty list means the trace is valid and metric-eligible.
pub fn validate_trace(trace: &AttentionTrace) -> Vec<Violation> {
    let shape = trace.shape();
    let mut out = Vec::new();

    let dims = [
        ("layers", shape.layers, 1),
        ("heads", shape.heads, 1),
        ("input_len", shape.input_len, 2),
        ("steps", shape.steps, 1),
    ];
    for (name, value, min) in dims {
        if value < min {
            out.push(Violation {
                kind: ViolationKind::Dimension,
                index: None,
                message: format!("dimension: {name} = {value}, must be >= {min}"),
            });
        }
    }

    if trace.role_map().len() != shape.input_len {
        out.push(Violation {
            kind: ViolationKind::RoleMapLength,
            index: None,
            message: format!(
                "role-map length: {} entries for input_len {}",
                trace.role_map().len(),
                shape.input_len
            ),
        });
    }

    let expected = shape.element_count();
    let payload = trace.payload();
    if expected != Some(payload.len()) {
        out.push(Violation {
            kind: ViolationKind::PayloadLength,
            index: None,
            message: match expected {
                Some(n) => format!("payload length: {} values, expected S*L*H*P = {n}", payload.len()),
                None => String::from("payload length: S*L*H*P overflows"),
            },
        });
    }

    // Element indices are only meaningful with a consistent shape.
    let shaped = expected == Some(payload.len()) && shape.input_len > 0;
    let locate = |i: usize| {
        if shaped {
            let p = i % shape.input_len;
            let h = (i / shape.input_len) % shape.heads;
            let l = (i / (shape.input_len * shape.heads)) % shape.layers;
            let s = i / (shape.input_len * shape.heads * shape.layers);
            format!("[{s}][{l}][{h}][{p}]")
        } else {
            format!("flat index {i}")
        }
    };
    for (i, v) in payload.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation {
                kind: ViolationKind::NonFinite,
                index: Some(i),
                message: format!("non-finite: value {v} at {}", locate(i)),
            });
        }
    }
    for (i, v) in payload.iter().enumerate() {
        if *v < 0.0 {
            out.push(Violation {
                kind: ViolationKind::Negative,
                index: Some(i),
                message: format!("negative: value {v} at {}", locate(i)),
            });
        }
    }

    if trace.role_map().n_text() == 0 {
        out.push(Violation {
            kind: ViolationKind::MetricsIneligible,
            index: None,
            message: String::from("metrics-ineligible: |T| = 0"),
        });
    }
    if trace.role_map().n_nontext() == 0 {
        out.push(Violation {
            kind: ViolationKind::MetricsIneligible,
            index: None,
            message: String::from("metrics-ineligible: |O| = 0"),
        });
    }

    out
}
