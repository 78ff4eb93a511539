//! Comparison methods: majority vote, Accu, PrecRec and TwoStep.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::model::{
    clamp_quality, rank_desc, ClaimSet, Diagnostics, FusionResult, Method, PriorConfig, QualityTable, SourceQuality,
    Value,
};

fn result(claims: &ClaimSet, method: Method, probabilities: Vec<f64>, selected: Vec<Value>, notes: Vec<String>) -> FusionResult {
    FusionResult {
        item: claims.item().clone(),
        method,
        values: claims.candidates().to_vec(),
        probabilities,
        selected,
        diagnostics: Diagnostics {
            notes,
            ..Diagnostics::default()
        },
    }
}

/// Picks the top of `order`; records a note when it ties with the runner-up.
fn pick_top(values: &[Value], scores: &[f64], order: &[usize], notes: &mut Vec<String>) -> Value {
    let top = order[0];
    let tied: Vec<&str> = order
        .iter()
        .take_while(|&&i| scores[i] == scores[top])
        .map(|&i| values[i].as_str())
        .collect();
    if tied.len() > 1 {
        let msg = format!("tie between {tied:?}; picked `{}`", values[top]);
        log::debug!("{msg}");
        notes.push(msg);
    }
    values[top].clone()
}

/// Selects the value with the most providers. Probabilities are provider
/// counts scaled by the maximum count.
pub fn majority_vote(claims: &ClaimSet) -> FusionResult {
    let counts: Vec<f64> = (0..claims.len()).map(|v| claims.providers(v).len() as f64).collect();
    let max = counts.iter().copied().fold(0.0, f64::max);
    let probabilities = counts.iter().map(|c| if max > 0.0 { c / max } else { 0.0 }).collect();
    let mut notes = Vec::new();
    let order = rank_desc(claims.candidates(), &counts);
    let selected = if order.is_empty() {
        Vec::new()
    } else {
        vec![pick_top(claims.candidates(), &counts, &order, &mut notes)]
    };
    result(claims, Method::Majority, probabilities, selected, notes)
}

fn participating<'a>(
    claims: &'a ClaimSet,
    qualities: &'a QualityTable,
) -> Result<Vec<(&'a [usize], SourceQuality)>> {
    let mut out = Vec::new();
    for (source, provided) in claims.sources() {
        if let Some(q) = qualities.lookup(source)? {
            out.push((provided, q.clamped()));
        }
    }
    Ok(out)
}

fn softmax(ln: &[f64]) -> Vec<f64> {
    let max = ln.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = ln.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / z).collect()
}

fn accu_probabilities(claims: &ClaimSet, qualities: &QualityTable, n: u32) -> Result<Vec<f64>> {
    let n = f64::from(n);
    let mut ln = vec![0.0; claims.len()];
    for (provided, q) in participating(claims, qualities)? {
        let w = (n * q.accuracy / (1.0 - q.accuracy)).ln();
        for &v in provided {
            ln[v] += w;
        }
    }
    Ok(softmax(&ln))
}

/// Single-truth Bayesian vote: `p(v)` proportional to the product of
/// `n*A/(1-A)` over its providers; the argmax is the truth.
pub fn accu_fuse(claims: &ClaimSet, qualities: &QualityTable, n: u32) -> Result<FusionResult> {
    let probabilities = accu_probabilities(claims, qualities, n)?;
    let mut notes = Vec::new();
    let order = rank_desc(claims.candidates(), &probabilities);
    let selected = vec![pick_top(claims.candidates(), &probabilities, &order, &mut notes)];
    Ok(result(claims, Method::Accu, probabilities, selected, notes))
}

/// Independent per-value decision: each provider multiplies the odds by
/// `R/Q`, each silent source on the item by `(1-R)/(1-Q)`, starting from
/// the prior odds `alpha/(1-alpha)`. Values above 0.5 are selected.
pub fn precrec_fuse(claims: &ClaimSet, qualities: &QualityTable, prior: &PriorConfig) -> Result<FusionResult> {
    let sources = participating(claims, qualities)?;
    let prior_ln = (prior.alpha / (1.0 - prior.alpha)).ln();
    let probabilities: Vec<f64> = (0..claims.len())
        .map(|v| {
            let mut ln_odds = prior_ln;
            for (provided, q) in &sources {
                let (r, fpr) = (q.recall, clamp_quality(q.false_positive_rate));
                ln_odds += if provided.binary_search(&v).is_ok() {
                    (r / fpr).ln()
                } else {
                    ((1.0 - r) / (1.0 - fpr)).ln()
                };
            }
            1.0 / (1.0 + (-ln_odds).exp())
        })
        .collect();
    let selected = rank_desc(claims.candidates(), &probabilities)
        .into_iter()
        .filter(|&v| probabilities[v] > 0.5)
        .map(|v| claims.candidates()[v].clone())
        .collect();
    Ok(result(claims, Method::PrecRec, probabilities, selected, Vec::new()))
}

/// Decides the number of truths `k` with Accu over the sources' claimed
/// cardinalities, then keeps the `k` most probable Accu values.
pub fn twostep_fuse(claims: &ClaimSet, qualities: &QualityTable, prior: &PriorConfig) -> Result<FusionResult> {
    let sources = participating(claims, qualities)?;
    let mut notes = Vec::new();
    let k = if sources.is_empty() {
        1
    } else {
        let max_card = sources.iter().map(|(p, _)| p.len()).max().unwrap_or(1);
        let n = max_card as f64;
        let mut ln_votes: BTreeMap<usize, f64> = BTreeMap::new();
        for (provided, q) in &sources {
            *ln_votes.entry(provided.len()).or_default() += (n * q.accuracy / (1.0 - q.accuracy)).ln();
        }
        let best = ln_votes.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = ln_votes.iter().filter(|(_, &l)| l == best).map(|(&c, _)| c).collect();
        if tied.len() > 1 {
            notes.push(format!("cardinality tie between {tied:?}; picked {}", tied[0]));
        }
        tied[0]
    };
    let probabilities = accu_probabilities(claims, qualities, prior.n)?;
    let order = rank_desc(claims.candidates(), &probabilities);
    let k = k.min(order.len());
    if k < order.len() && probabilities[order[k - 1]] == probabilities[order[k]] {
        notes.push(format!("probability tie at the top-{k} boundary; broken by value order"));
    }
    let selected = order[..k].iter().map(|&v| claims.candidates()[v].clone()).collect();
    Ok(result(claims, Method::TwoStep, probabilities, selected, notes))
}
