//! Modality attention masses, the Modality Dominance Index and the Attention
//! Efficiency Index.
//!
//! For a trace with text set `T` and non-text set `O`, the attention each
//! layer pays to the two sets is summed over generated tokens, averaged over
//! heads and renormalised so that `A_T + A_O = 1`. Special positions are
//! dropped before renormalising. From the masses:
//!
//! - `MDI = (A_T / |T|) / (A_O / |O|)`: how much more attention a single text
//!   token receives than a single non-text token. Above 1 means text dominance.
//! - `AEI_T = P_T / Q_T` with `P_T = A_T / (A_T + A_O)` and
//!   `Q_T = |T| / (|T| + |O|)`: attention share over token share. `AEI_O` is the
//!   mirrored ratio, and `MDI = AEI_T / AEI_O`.
//!
//! Layers are grouped into early/middle/late buckets of two layers each. A
//! bucket's mass is the mean of its layers' masses; MDI and AEI are computed
//! once from that mean (not averaged over per-layer MDIs).

use alloc::format;
use alloc::vec::Vec;

use serde::Serialize;

use crate::trace::{AttentionTrace, TokenRole};
use crate::{Error, Result};

/// Renormalised attention masses of the two content modalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModalityMass {
    /// `A_T`.
    pub a_text: f64,
    /// `A_O`.
    pub a_nontext: f64,
}

impl ModalityMass {
    /// Normalises raw (non-negative) masses so they sum to 1.
    pub fn from_raw(text: f64, nontext: f64) -> Result<Self> {
        let total = text + nontext;
        if !(total > 0.0 && total.is_finite()) || text < 0.0 || nontext < 0.0 {
            return Err(Error::DegenerateMass(format!(
                "raw masses ({text}, {nontext}) cannot be normalised"
            )));
        }
        Ok(Self {
            a_text: text / total,
            a_nontext: nontext / total,
        })
    }
}

/// `|T|` and `|O|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ModalityCounts {
    /// `|T|`.
    pub n_text: usize,
    /// `|O|`.
    pub n_nontext: usize,
}

impl ModalityCounts {
    /// Counts with the token share `Q_T` available.
    pub fn new(n_text: usize, n_nontext: usize) -> Self {
        Self { n_text, n_nontext }
    }

    /// `Q_T = |T| / (|T| + |O|)`.
    pub fn text_share(&self) -> f64 {
        self.n_text as f64 / (self.n_text + self.n_nontext) as f64
    }
}

/// Selects a content modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    /// The text set.
    Text,
    /// The non-text set.
    NonText,
}

fn check(mass: ModalityMass, counts: ModalityCounts) -> Result<()> {
    if counts.n_text == 0 || counts.n_nontext == 0 {
        return Err(Error::DegenerateMass(format!(
            "token counts |T| = {}, |O| = {} must both be positive",
            counts.n_text, counts.n_nontext
        )));
    }
    if !(mass.a_text > 0.0 && mass.a_nontext > 0.0) || !(mass.a_text.is_finite() && mass.a_nontext.is_finite()) {
        return Err(Error::DegenerateMass(format!(
            "masses A_T = {}, A_O = {} must both be positive",
            mass.a_text, mass.a_nontext
        )));
    }
    Ok(())
}

/// Modality Dominance Index: per-token text attention over per-token
/// non-text attention.
pub fn mdi(mass: ModalityMass, counts: ModalityCounts) -> Result<f64> {
    check(mass, counts)?;
    Ok((mass.a_text / counts.n_text as f64) / (mass.a_nontext / counts.n_nontext as f64))
}

/// Attention Efficiency Index of one modality: its attention share divided
/// by its token share.
pub fn aei(mass: ModalityMass, counts: ModalityCounts, which: Modality) -> Result<f64> {
    check(mass, counts)?;
    let total_mass = mass.a_text + mass.a_nontext;
    let total_tokens = (counts.n_text + counts.n_nontext) as f64;
    let (attn, tokens) = match which {
        Modality::Text => (mass.a_text, counts.n_text),
        Modality::NonText => (mass.a_nontext, counts.n_nontext),
    };
    Ok((attn / total_mass) / (tokens as f64 / total_tokens))
}

/// Renormalised `(A_T, A_O)` of one layer: rows summed over steps, averaged
/// over heads, special positions dropped.
///
/// Reduction order is fixed (positions ascending, then heads, then steps) so
/// results are reproducible to the last bit.
pub fn layer_mass(trace: &AttentionTrace, layer: usize) -> Result<ModalityMass> {
    if layer >= trace.num_layers() {
        return Err(Error::Range(format!(
            "layer {layer} out of range for {} layers",
            trace.num_layers()
        )));
    }
    let roles = trace.role_map().roles();
    let heads = trace.num_heads() as f64;
    let (mut text, mut nontext) = (0.0f64, 0.0f64);
    for step in 0..trace.num_steps() {
        let (mut step_text, mut step_nontext) = (0.0f64, 0.0f64);
        for head in 0..trace.num_heads() {
            let (mut row_text, mut row_nontext) = (0.0f64, 0.0f64);
            for (v, role) in trace.row(step, layer, head).iter().zip(roles) {
                match role {
                    TokenRole::Text => row_text += *v as f64,
                    TokenRole::NonText => row_nontext += *v as f64,
                    TokenRole::Special => {}
                }
            }
            step_text += row_text;
            step_nontext += row_nontext;
        }
        text += step_text / heads;
        nontext += step_nontext / heads;
    }
    if text + nontext == 0.0 {
        return Err(Error::DegenerateMass(format!(
            "layer {layer}: zero attention mass on text and non-text positions"
        )));
    }
    ModalityMass::from_raw(text, nontext)
}

/// Early, middle and late layer buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    /// First two layers.
    Early,
    /// Middle two layers.
    Middle,
    /// Last two layers.
    Late,
}

impl Bucket {
    /// All buckets in reporting order.
    pub const ALL: [Bucket; 3] = [Bucket::Early, Bucket::Middle, Bucket::Late];

    /// Lower-case name.
    pub const fn as_str(self) -> &'static str {
        match self {
            Bucket::Early => "early",
            Bucket::Middle => "middle",
            Bucket::Late => "late",
        }
    }
}

/// Layer indices of each bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBuckets {
    /// `{0, 1}`.
    pub early: Vec<usize>,
    /// `{L/2 - 1, L/2}` (floor division).
    pub middle: Vec<usize>,
    /// `{L - 2, L - 1}`.
    pub late: Vec<usize>,
}

impl LayerBuckets {
    /// Layers of one bucket.
    pub fn get(&self, bucket: Bucket) -> &[usize] {
        match bucket {
            Bucket::Early => &self.early,
            Bucket::Middle => &self.middle,
            Bucket::Late => &self.late,
        }
    }
}

/// Splits `num_layers` layers into early/middle/late pairs. Buckets overlap
/// when there are fewer than six layers; a single layer forms all three.
pub fn layer_buckets(num_layers: usize) -> Result<LayerBuckets> {
    match num_layers {
        0 => Err(Error::Range("cannot bucket zero layers".into())),
        1 => Ok(LayerBuckets {
            early: alloc::vec![0],
            middle: alloc::vec![0],
            late: alloc::vec![0],
        }),
        l => {
            let mid = l / 2;
            Ok(LayerBuckets {
                early: alloc::vec![0, 1],
                middle: alloc::vec![mid - 1, mid],
                late: alloc::vec![l - 2, l - 1],
            })
        }
    }
}

/// Metrics of one bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketValue {
    /// Layers averaged into this bucket.
    pub layers: Vec<usize>,
    /// Mean of the layers' renormalised masses.
    pub mass: ModalityMass,
    /// MDI of the bucket mass.
    pub mdi: f64,
    /// AEI of the text modality.
    pub aei_text: f64,
    /// AEI of the non-text modality.
    pub aei_nontext: f64,
}

impl BucketValue {
    fn from_mass(layers: Vec<usize>, mass: ModalityMass, counts: ModalityCounts) -> Result<Self> {
        Ok(Self {
            layers,
            mass,
            mdi: mdi(mass, counts)?,
            aei_text: aei(mass, counts, Modality::Text)?,
            aei_nontext: aei(mass, counts, Modality::NonText)?,
        })
    }
}

/// Early/middle/late metrics of a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketMetrics {
    /// Content token counts.
    pub counts: ModalityCounts,
    /// Number of special positions (excluded from both sets).
    pub n_special: usize,
    /// First two layers.
    pub early: BucketValue,
    /// Middle two layers.
    pub middle: BucketValue,
    /// Last two layers.
    pub late: BucketValue,
}

impl BucketMetrics {
    /// Values of one bucket.
    pub fn get(&self, bucket: Bucket) -> &BucketValue {
        match bucket {
            Bucket::Early => &self.early,
            Bucket::Middle => &self.middle,
            Bucket::Late => &self.late,
        }
    }
}

fn eligible_counts(trace: &AttentionTrace) -> Result<ModalityCounts> {
    let counts = ModalityCounts::new(trace.role_map().n_text(), trace.role_map().n_nontext());
    if counts.n_text == 0 || counts.n_nontext == 0 {
        return Err(Error::Validation(format!(
            "metrics-ineligible: |T| = {}, |O| = {}",
            counts.n_text, counts.n_nontext
        )));
    }
    Ok(counts)
}

/// Computes MDI and AEI for the early, middle and late buckets.
pub fn bucket_metrics(trace: &AttentionTrace) -> Result<BucketMetrics> {
    let counts = eligible_counts(trace)?;
    let buckets = layer_buckets(trace.num_layers())?;
    let value = |bucket: Bucket| -> Result<BucketValue> {
        let layers = buckets.get(bucket);
        let (mut text, mut nontext) = (0.0, 0.0);
        for &layer in layers {
            let m = layer_mass(trace, layer)?;
            text += m.a_text;
            nontext += m.a_nontext;
        }
        let n = layers.len() as f64;
        let mass = ModalityMass {
            a_text: text / n,
            a_nontext: nontext / n,
        };
        BucketValue::from_mass(layers.to_vec(), mass, counts).map_err(|e| match e {
            Error::DegenerateMass(msg) => {
                Error::DegenerateMass(format!("{} bucket (layers {layers:?}): {msg}", bucket.as_str()))
            }
            other => other,
        })
    };
    Ok(BucketMetrics {
        counts,
        n_special: trace.role_map().n_special(),
        early: value(Bucket::Early)?,
        middle: value(Bucket::Middle)?,
        late: value(Bucket::Late)?,
    })
}

/// Metrics of a single layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerMetrics {
    /// Layer index.
    pub layer: usize,
    /// Renormalised masses.
    pub mass: ModalityMass,
    /// MDI.
    pub mdi: f64,
    /// AEI of the text modality.
    pub aei_text: f64,
}

/// MDI and text AEI of every layer.
pub fn per_layer_metrics(trace: &AttentionTrace) -> Result<Vec<LayerMetrics>> {
    let counts = eligible_counts(trace)?;
    (0..trace.num_layers())
        .map(|layer| {
            let mass = layer_mass(trace, layer)?;
            let named = |e: Error| match e {
                Error::DegenerateMass(msg) => Error::DegenerateMass(format!("layer {layer}: {msg}")),
                other => other,
            };
            Ok(LayerMetrics {
                layer,
                mass,
                mdi: mdi(mass, counts).map_err(named)?,
                aei_text: aei(mass, counts, Modality::Text).map_err(named)?,
            })
        })
        .collect()
}
