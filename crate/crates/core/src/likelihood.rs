//! Inverse probabilities `p(obs | O, v)` and `p(obs | O, stop)`.
//!
//! Each source's provided set is split against the assumed truth set
//! `T = O ∪ {v}` (or `T = O` for stop) into consistent, inconsistent, extra
//! and missing values; the source contributes the product of the matching
//! category probabilities. Everything is accumulated as natural logs, with
//! `-inf` standing for an exact zero.

use std::fmt::Debug;

use crate::error::{FusionError, Result};
use crate::model::{ClaimSet, QualityTable, SourceQuality, Value};

/// The next decision under a possible world: another truth, or stop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Next<T> {
    Value(T),
    Stop,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub consistent: usize,
    pub inconsistent: usize,
    pub extra: usize,
    pub missing: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryProbs {
    pub consistent: f64,
    pub inconsistent: f64,
    pub extra: f64,
    pub missing: f64,
    pub no_extra: f64,
}

pub fn partition_counts<T: PartialEq + Debug>(
    provided: &[T],
    selected: &[T],
    candidate: Next<&T>,
) -> Result<CategoryCounts> {
    let mut consistent = selected.iter().filter(|o| provided.contains(o)).count();
    let mut truths = selected.len();
    if let Next::Value(v) = candidate {
        if selected.contains(v) {
            return Err(FusionError::AlreadySelected(format!("{v:?}")));
        }
        truths += 1;
        if provided.contains(v) {
            consistent += 1;
        }
    }
    Ok(counts_from_sizes(provided.len(), truths, consistent))
}

fn counts_from_sizes(provided: usize, truths: usize, consistent: usize) -> CategoryCounts {
    CategoryCounts {
        consistent,
        inconsistent: provided.min(truths) - consistent,
        extra: provided.saturating_sub(truths),
        missing: truths.saturating_sub(provided),
    }
}

pub fn category_probs(quality: &SourceQuality, n: u32) -> CategoryProbs {
    let n = f64::from(n);
    let (a, r, q) = (quality.accuracy, quality.recall, quality.false_positive_rate);
    CategoryProbs {
        consistent: r * a,
        inconsistent: r * (1.0 - a) / n,
        extra: q / n,
        missing: 1.0 - r,
        no_extra: 1.0 - q,
    }
}

fn ln_pow(p: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        count as f64 * p.ln()
    }
}

fn ln_from_counts(counts: CategoryCounts, probs: &CategoryProbs, stop_bonus: bool) -> f64 {
    let mut ln = ln_pow(probs.consistent, counts.consistent)
        + ln_pow(probs.inconsistent, counts.inconsistent)
        + ln_pow(probs.extra, counts.extra)
        + ln_pow(probs.missing, counts.missing);
    if stop_bonus {
        ln += ln_pow(probs.no_extra, 1);
    }
    ln
}

/// `ln p(provided | O, candidate)` for one source.
pub fn source_log_likelihood<T: PartialEq + Debug>(
    provided: &[T],
    selected: &[T],
    candidate: Next<&T>,
    probs: &CategoryProbs,
) -> Result<f64> {
    let counts = partition_counts(provided, selected, candidate)?;
    let stop_bonus = matches!(candidate, Next::Stop) && provided.len() <= selected.len();
    Ok(ln_from_counts(counts, probs, stop_bonus))
}

/// `ln p(obs | O, candidate)` over all participating sources of `claims`.
pub fn joint_log_likelihood(
    claims: &ClaimSet,
    qualities: &QualityTable,
    selected: &[Value],
    candidate: Next<&Value>,
    n: u32,
) -> Result<f64> {
    let selected_idx = selected
        .iter()
        .map(|v| claims.index_of(v).ok_or_else(|| FusionError::invalid("selected", format!("`{v}` is not a candidate"))))
        .collect::<Result<Vec<_>>>()?;
    let candidate_idx = match candidate {
        Next::Value(v) => Next::Value(
            claims
                .index_of(v)
                .ok_or_else(|| FusionError::invalid("candidate", format!("`{v}` is not a candidate")))?,
        ),
        Next::Stop => Next::Stop,
    };
    if let Next::Value(c) = candidate_idx {
        if selected_idx.contains(&c) {
            return Err(FusionError::AlreadySelected(claims.candidates()[c].to_string()));
        }
    }
    let ctx = LikelihoodContext::new(claims, qualities, n)?;
    let mut mask = vec![false; claims.len()];
    for &i in &selected_idx {
        mask[i] = true;
    }
    Ok(ctx.joint(&mask, selected_idx.len(), candidate_idx))
}

/// Pre-resolved per-source probabilities for repeated evaluation over one
/// item (the exact enumeration calls this at every node).
pub(crate) struct LikelihoodContext<'a> {
    sources: Vec<(&'a [usize], CategoryProbs)>,
}

impl<'a> LikelihoodContext<'a> {
    pub(crate) fn new(claims: &'a ClaimSet, qualities: &QualityTable, n: u32) -> Result<Self> {
        let mut sources = Vec::with_capacity(claims.source_count());
        for (source, provided) in claims.sources() {
            if let Some(q) = qualities.lookup(source)? {
                sources.push((provided, category_probs(q, n)));
            }
        }
        Ok(LikelihoodContext { sources })
    }

    /// `selected_mask[i]` marks candidates in `O`; `selected_len = |O|`.
    pub(crate) fn joint(&self, selected_mask: &[bool], selected_len: usize, candidate: Next<usize>) -> f64 {
        let truths = selected_len + usize::from(matches!(candidate, Next::Value(_)));
        let mut total = 0.0;
        for (provided, probs) in &self.sources {
            let mut consistent = provided.iter().filter(|&&v| selected_mask[v]).count();
            if let Next::Value(c) = candidate {
                if provided.binary_search(&c).is_ok() {
                    consistent += 1;
                }
            }
            let counts = counts_from_sizes(provided.len(), truths, consistent);
            let stop_bonus = matches!(candidate, Next::Stop) && provided.len() <= selected_len;
            total += ln_from_counts(counts, probs, stop_bonus);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        total
    }
}
