use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::Serialize;
use serde_json::Value;

use super::{build_model, compose_input, encode_cls_scores, generate_with_trace, ToyConfig};
use crate::compression::{prune_topk, PruneDecision};
use crate::metrics::{bucket_metrics, Bucket, BucketMetrics};
use crate::trace::AttentionTrace;
use crate::{Error, Result};

/// Which experiment a sweep row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Non-text block repeated `n` times.
    Replication,
    /// Non-text tokens pruned at rate `r` by `[CLS]` scores.
    Prune,
}

impl SweepKind {
    /// Lowercase name used in reports.
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Replication => "replication",
            Self::Prune => "prune",
        }
    }
}

/// One run of a sweep: the parameter value and everything it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Replication factor or reduction rate.
    pub param: f64,
    /// Trace of the run.
    pub trace: AttentionTrace,
    /// Bucket metrics of the trace.
    pub metrics: BucketMetrics,
    /// Pruning decision, for prune sweeps.
    pub decision: Option<PruneDecision>,
}

impl SweepPoint {
    /// One report row per bucket.
    pub fn rows(&self, sweep: SweepKind, seed: u64) -> Vec<SweepRow> {
        Bucket::ALL
            .iter()
            .map(|&bucket| {
                let v = self.metrics.get(bucket);
                SweepRow {
                    sweep,
                    param: self.param,
                    seed,
                    bucket,
                    mdi: v.mdi,
                    aei_text: v.aei_text,
                    aei_nontext: v.aei_nontext,
                    n_text: self.metrics.counts.n_text,
                    n_nontext: self.metrics.counts.n_nontext,
                }
            })
            .collect()
    }
}

/// Flat sweep report row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Experiment.
    pub sweep: SweepKind,
    /// Replication factor or reduction rate.
    pub param: f64,
    /// Seed of the run.
    pub seed: u64,
    /// Layer bucket.
    pub bucket: Bucket,
    /// Modality dominance index.
    pub mdi: f64,
    /// Text attention efficiency.
    pub aei_text: f64,
    /// Non-text attention efficiency.
    pub aei_nontext: f64,
    /// Text tokens.
    pub n_text: usize,
    /// Non-text tokens.
    pub n_nontext: usize,
}

fn run(config: &ToyConfig, model: &super::ToyModel, input: &super::ComposedInput) -> Result<(AttentionTrace, BucketMetrics)> {
    let trace = generate_with_trace(model, input, config.steps)?;
    let metrics = bucket_metrics(&trace)?;
    Ok((trace, metrics))
}

/// Runs one seed of the replication experiment: same model and content,
/// non-text block repeated `n` times for each factor.
pub fn run_replication_sweep(config: &ToyConfig, factors: &[usize]) -> Result<Vec<SweepPoint>> {
    if factors.is_empty() || factors.contains(&0) {
        return Err(Error::Validation(format!("factors must be non-empty and >= 1, got {factors:?}")));
    }
    let max = factors.iter().copied().max().unwrap_or(1);
    let model = build_model(&ToyConfig { replication: max, ..config.clone() })?;
    factors
        .iter()
        .map(|&n| {
            let c = ToyConfig { replication: n, ..config.clone() };
            let input = compose_input(&c, &model)?;
            let (trace, metrics) = run(&c, &model, &input)?;
            Ok(SweepPoint { param: n as f64, trace, metrics, decision: None })
        })
        .collect()
}

/// Runs one seed of the pruning experiment: for each rate, keep the
/// top-scoring non-text tokens by `[CLS]` attention and decode again.
pub fn run_prune_sweep(config: &ToyConfig, rates: &[f64]) -> Result<Vec<SweepPoint>> {
    if rates.is_empty() {
        return Err(Error::Validation("rates must be non-empty".into()));
    }
    if let Some(r) = rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::Range(format!("reduction rate {r} outside [0, 1)")));
    }
    let model = build_model(config)?;
    let input = compose_input(config, &model)?;
    let scores = encode_cls_scores(&model, &input)?;
    rates
        .iter()
        .map(|&rate| {
            let decision = prune_topk(&scores, rate)?;
            let pruned = input.retain_nontext(&decision.kept)?;
            let (trace, metrics) = run(config, &model, &pruned)?;
            let trace = trace.with_metadata("reduction_rate", Value::from(rate));
            Ok(SweepPoint { param: rate, trace, metrics, decision: Some(decision) })
        })
        .collect()
}

fn late_by_seed(rows: &[SweepRow]) -> BTreeMap<u64, Vec<(f64, f64)>> {
    let mut out: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.bucket == Bucket::Late) {
        out.entry(r.seed).or_default().push((r.param, r.mdi));
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

/// Fraction of seeds whose late MDI at the largest factor exceeds the late
/// MDI at the smallest. `None` without rows or with a single factor.
pub fn replication_fraction(rows: &[SweepRow]) -> Option<f64> {
    fraction(rows, |v| {
        let (first, last) = (v.first()?, v.last()?);
        (first.0 < last.0).then_some(last.1 > first.1)
    })
}

/// Fraction of seeds whose late `|MDI - 1|` at the largest rate is smaller
/// than at rate 0. `None` if some seed lacks a rate-0 row or a positive rate.
pub fn prune_fraction(rows: &[SweepRow]) -> Option<f64> {
    fraction(rows, |v| {
        let (first, last) = (v.first()?, v.last()?);
        (first.0 == 0.0 && last.0 > 0.0).then_some((last.1 - 1.0).abs() < (first.1 - 1.0).abs())
    })
}

fn fraction(rows: &[SweepRow], hit: impl Fn(&[(f64, f64)]) -> Option<bool>) -> Option<f64> {
    let seeds = late_by_seed(rows);
    if seeds.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    for v in seeds.values() {
        hits += usize::from(hit(v)?);
    }
    Some(hits as f64 / seeds.len() as f64)
}
