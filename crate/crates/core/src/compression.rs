//! `[CLS]`-guided compression of the non-text token block.
//!
//! Each non-text token carries an importance score (the attention a `[CLS]`
//! query pays to it). Compression keeps the `M = max(1, floor(N * (1 - r)))`
//! highest-scoring tokens, in their original order. The budget form picks the
//! smallest observed score `tau` such that at most `floor(N * (1 - R))` scores
//! are `>= tau`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::trace::{RoleMap, TokenRole};
use crate::{Error, Result};

/// Slack applied before flooring `N * (1 - r)`, so that rates such as 0.7
/// whose product lands just below an integer still floor to it.
const FLOOR_SLACK: f64 = 1e-9;

/// Importance score of every non-text token.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    scores: Vec<f64>,
    source: String,
}

impl ImportanceScores {
    /// Validates that there is at least one score and all are finite and
    /// non-negative.
    pub fn new(scores: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Validation("importance scores are empty".into()));
        }
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Validation(format!("importance score {i} is {s}")));
        }
        Ok(Self {
            scores,
            source: source.into(),
        })
    }

    /// The scores, in token order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Number of scored tokens (`N`).
    pub fn count(&self) -> usize {
        self.scores.len()
    }

    /// Where the scores came from, e.g. `"cls-attention"`.
    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Which non-text tokens survive compression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneDecision {
    /// Indices into the non-text block, strictly ascending.
    pub kept: Vec<usize>,
    /// Rate `r` (or budget `R`) that produced the decision.
    pub reduction_rate: f64,
    /// `M = kept.len()`.
    #[serde(rename = "retained")]
    pub retained_count: usize,
    /// Score threshold, when the decision came from a budget.
    pub threshold: Option<f64>,
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Range(format!("reduction rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// `floor(n * (1 - rate))` without the minimum of one.
pub fn budget(n: usize, rate: f64) -> usize {
    libm::floor(n as f64 * (1.0 - rate) + FLOOR_SLACK) as usize
}

/// `M = max(1, floor(n * (1 - rate)))`.
pub fn retained_count(n: usize, rate: f64) -> usize {
    budget(n, rate).max(1)
}

/// Keeps the `M` highest-scoring tokens; ties go to the smaller index. The
/// result lists indices in ascending order.
pub fn prune_topk(scores: &ImportanceScores, rate: f64) -> Result<PruneDecision> {
    check_rate(rate)?;
    let n = scores.count();
    let m = retained_count(n, rate);
    let s = scores.scores();
    let mut order: Vec<usize> = (0..n).collect();
    // Scores are finite, so partial_cmp never fails.
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
    order.truncate(m);
    order.sort_unstable();
    Ok(PruneDecision {
        kept: order,
        reduction_rate: rate,
        retained_count: m,
        threshold: None,
    })
}

/// Smallest observed score `tau` with `|{a >= tau}| <= floor(N * (1 - R))`.
pub fn threshold_for_budget(scores: &ImportanceScores, budget_rate: f64) -> Result<f64> {
    check_rate(budget_rate)?;
    let limit = budget(scores.count(), budget_rate);
    if limit == 0 {
        return Err(Error::BudgetExhausted(format!(
            "floor({} * (1 - {budget_rate})) = 0 tokens",
            scores.count()
        )));
    }
    let mut sorted = scores.scores().to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Walk distinct values from the top; `count` is |{a >= value}|.
    let mut best = None;
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == value {
            j += 1;
        }
        if j > limit {
            break;
        }
        best = Some(value);
        i = j;
    }
    best.ok_or_else(|| {
        let top = sorted[0];
        let tied = sorted.iter().filter(|&&a| a == top).count();
        Error::InfeasibleTies(format!(
            "{tied} scores tie at the maximum {top}, above the budget of {limit}"
        ))
    })
}

/// Keeps every token whose score reaches the budget threshold.
pub fn prune_budget(scores: &ImportanceScores, budget_rate: f64) -> Result<PruneDecision> {
    let tau = threshold_for_budget(scores, budget_rate)?;
    let kept: Vec<usize> = scores
        .scores()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a >= tau)
        .map(|(i, _)| i)
        .collect();
    Ok(PruneDecision {
        retained_count: kept.len(),
        kept,
        reduction_rate: budget_rate,
        threshold: Some(tau),
    })
}

/// Drops the non-text positions not listed in `decision.kept`. Indices refer
/// to non-text positions in order of appearance; text and special positions
/// are untouched.
pub fn apply_prune(role_map: &RoleMap, decision: &PruneDecision) -> Result<RoleMap> {
    let keep = keep_mask(role_map.n_nontext(), &decision.kept)?;
    let mut nontext_index = 0;
    Ok(role_map
        .roles()
        .iter()
        .copied()
        .filter(|&r| {
            if r != TokenRole::NonText {
                return true;
            }
            let k = keep[nontext_index];
            nontext_index += 1;
            k
        })
        .collect())
}

/// Boolean mask over `n` non-text tokens, true where the token is kept.
pub fn keep_mask(n: usize, kept: &[usize]) -> Result<Vec<bool>> {
    let mut mask = alloc::vec![false; n];
    let mut prev: Option<usize> = None;
    for &i in kept {
        if i >= n {
            return Err(Error::Validation(format!(
                "kept index {i} out of range for {n} non-text tokens"
            )));
        }
        if prev.is_some_and(|p| p >= i) {
            return Err(Error::Validation(format!("kept indices not strictly ascending at {i}")));
        }
        mask[i] = true;
        prev = Some(i);
    }
    Ok(mask)
}
