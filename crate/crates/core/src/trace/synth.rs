use alloc::format;
use alloc::vec::Vec;

use super::{AttentionTrace, Metadata, RoleMap, TokenRole, TraceShape};
use crate::{Error, Result};

/// Share of every row given to special positions when there are any.
const SPECIAL_SHARE: f64 = 0.125;

/// How many f32 neighbours of the nominal non-text weight are tried when
/// searching for a weight pair whose ratio matches the target.
const SEARCH_ULPS: u32 = 1 << 15;

/// Parameters of a synthetic trace with uniform within-role attention.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Target `(A_T, A_O)` per layer; each pair positive and summing to 1.
    pub layer_masses: Vec<(f64, f64)>,
    /// `|T|`.
    pub n_text: usize,
    /// `|O|`.
    pub n_nontext: usize,
    /// Special positions; these receive attention that metrics must drop.
    pub n_special: usize,
    /// Generated steps `S`.
    pub steps: usize,
    /// Heads `H`.
    pub heads: usize,
    /// Metadata copied into the trace.
    pub metadata: Metadata,
}

impl SynthSpec {
    /// Single-step, single-head spec without special positions.
    pub fn new(layer_masses: Vec<(f64, f64)>, n_text: usize, n_nontext: usize) -> Self {
        Self {
            layer_masses,
            n_text,
            n_nontext,
            n_special: 0,
            steps: 1,
            heads: 1,
            metadata: Metadata::new(),
        }
    }

    /// Spec whose every layer has the given MDI, obtained by solving
    /// `A_T / (1 - A_T) = MDI * |T| / |O|` for `A_T`.
    pub fn from_layer_mdis(mdis: &[f64], n_text: usize, n_nontext: usize) -> Self {
        let masses = mdis
            .iter()
            .map(|&m| {
                let odds = m * n_text as f64 / n_nontext as f64;
                let a_text = odds / (1.0 + odds);
                (a_text, 1.0 / (1.0 + odds))
            })
            .collect();
        Self::new(masses, n_text, n_nontext)
    }
}

/// Builds a trace with uniform attention inside each role so that per-layer
/// mass extraction recovers the requested `(A_T, A_O)`.
///
/// Payload values are f32, so an arbitrary target ratio is not exactly
/// representable. The builder searches nearby f32 weight pairs for the one
/// whose ratio is closest to the target; in practice the recovered masses
/// agree to ~1e-13, and exactly for dyadic targets.
pub fn synth_trace(spec: &SynthSpec) -> Result<AttentionTrace> {
    if spec.layer_masses.is_empty() || spec.steps == 0 || spec.heads == 0 {
        return Err(Error::Validation(format!(
            "synth needs at least one layer, step and head (layers {}, steps {}, heads {})",
            spec.layer_masses.len(),
            spec.steps,
            spec.heads
        )));
    }
    let input_len = spec.n_text + spec.n_nontext + spec.n_special;
    if input_len < 2 {
        return Err(Error::Validation(format!("synth input_len {input_len} < 2")));
    }

    let mut weights = Vec::with_capacity(spec.layer_masses.len());
    for (layer, &(a_text, a_nontext)) in spec.layer_masses.iter().enumerate() {
        if !(a_text.is_finite() && a_nontext.is_finite()) || a_text < 0.0 || a_nontext < 0.0 {
            return Err(Error::Validation(format!(
                "layer {layer}: masses ({a_text}, {a_nontext}) must be finite and non-negative"
            )));
        }
        if (a_text + a_nontext - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "layer {layer}: masses ({a_text}, {a_nontext}) do not sum to 1"
            )));
        }
        if spec.n_text == 0 && a_text > 0.0 || spec.n_nontext == 0 && a_nontext > 0.0 {
            return Err(Error::Validation(format!(
                "layer {layer}: nonzero target mass on a role with zero tokens"
            )));
        }
        if a_text == 0.0 || a_nontext == 0.0 {
            return Err(Error::Validation(format!(
                "layer {layer}: masses ({a_text}, {a_nontext}) must be strictly positive"
            )));
        }
        weights.push(weight_pair(a_text, a_nontext, spec.n_text, spec.n_nontext, spec.n_special > 0));
    }

    let special_weight = if spec.n_special > 0 {
        (SPECIAL_SHARE / spec.n_special as f64) as f32
    } else {
        0.0
    };

    // Layout: one leading special, text, remaining specials, non-text.
    let mut roles = Vec::with_capacity(input_len);
    if spec.n_special > 0 {
        roles.push(TokenRole::Special);
    }
    roles.extend(core::iter::repeat_n(TokenRole::Text, spec.n_text));
    roles.extend(core::iter::repeat_n(TokenRole::Special, spec.n_special.saturating_sub(1)));
    roles.extend(core::iter::repeat_n(TokenRole::NonText, spec.n_nontext));

    let shape = TraceShape {
        steps: spec.steps,
        layers: spec.layer_masses.len(),
        heads: spec.heads,
        input_len,
    };
    let mut payload = Vec::with_capacity(shape.element_count().unwrap_or(0));
    for _ in 0..spec.steps {
        for &(w_text, w_nontext) in &weights {
            for _ in 0..spec.heads {
                payload.extend(roles.iter().map(|r| match r {
                    TokenRole::Text => w_text,
                    TokenRole::NonText => w_nontext,
                    TokenRole::Special => special_weight,
                }));
            }
        }
    }

    AttentionTrace::new(shape, RoleMap::new(roles), spec.metadata.clone(), payload)
}

/// Per-token f32 weights `(w_text, w_nontext)` whose ratio best matches
/// `(a_text / n_text) / (a_nontext / n_nontext)`.
fn weight_pair(a_text: f64, a_nontext: f64, n_text: usize, n_nontext: usize, specials: bool) -> (f32, f32) {
    let content = if specials { 1.0 - SPECIAL_SHARE } else { 1.0 };
    let target = (a_text / n_text as f64) / (a_nontext / n_nontext as f64);
    let nominal = (content * a_nontext / n_nontext as f64) as f32;

    let error = |w_nontext: f32| {
        let w_text = (target * w_nontext as f64) as f32;
        let ratio = w_text as f64 / w_nontext as f64;
        ((ratio - target) / target).abs()
    };

    let mut best = nominal;
    let mut best_err = error(nominal);
    let mut k = 1;
    while best_err > 1e-15 && k <= SEARCH_ULPS {
        for candidate in [
            f32::from_bits(nominal.to_bits() + k),
            f32::from_bits(nominal.to_bits() - k),
        ] {
            let w_text = (target * candidate as f64) as f32;
            if !(candidate > 0.0 && w_text > 0.0 && w_text.is_finite()) {
                continue;
            }
            let e = error(candidate);
            if e < best_err {
                best = candidate;
                best_err = e;
            }
        }
        k += 1;
    }
    ((target * best as f64) as f32, best)
}
