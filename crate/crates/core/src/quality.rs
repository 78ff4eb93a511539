//! Source-quality estimation from fusion output and the alternating
//! fuse/update iteration.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::FusionEngine;
use crate::error::{FusionError, Result};
use crate::model::{derive_q, ClaimSet, Dataset, FusionResult, Method, QualityTable, SourceId, SourceQuality};

/// How accuracy is aggregated across items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyMode {
    /// Per-item `avg p / precision`, then averaged over items.
    #[default]
    PerItem,
    /// Average value probability over all items divided by overall precision.
    Literal,
}

impl std::str::FromStr for AccuracyMode {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-item" => Ok(AccuracyMode::PerItem),
            "literal" => Ok(AccuracyMode::Literal),
            other => Err(FusionError::Config(format!("unknown accuracy mode `{other}`"))),
        }
    }
}

/// Which sources take part in the next fusion round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoodSourceRule {
    /// All three conditions of [`is_good_source`].
    Full,
    /// Only `A > 1/(n+1)`. Single-truth methods never use recall or
    /// false-positive rate, so the other two conditions would drop sources
    /// on evidence those methods ignore.
    AccuracyOnly,
    /// Every source takes part. PrecRec uses this: its odds already weigh each
    /// source by `R/Q` and `(1-R)/(1-Q)`, so an uninformative source drops
    /// out on its own, and its early rounds swing through qualities that
    /// fail the full test for every source at once.
    Off,
}

impl GoodSourceRule {
    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Hybrid | Method::HybridExact => GoodSourceRule::Full,
            Method::Accu | Method::TwoStep | Method::Majority => GoodSourceRule::AccuracyOnly,
            Method::PrecRec => GoodSourceRule::Off,
        }
    }

    pub fn admits(self, quality: &SourceQuality, n: u32) -> bool {
        match self {
            GoodSourceRule::Full => is_good_source(quality, n),
            GoodSourceRule::AccuracyOnly => quality.clamped().accuracy > 1.0 / (f64::from(n) + 1.0),
            GoodSourceRule::Off => true,
        }
    }
}

/// One source's view of one item.
struct ItemStats {
    provided: usize,
    mass: f64,
    sum_p: f64,
}

fn item_stats(source: &SourceId, claims: &ClaimSet, result: &FusionResult) -> Result<Option<ItemStats>> {
    let Some(provided) = claims.provided(source) else {
        return Ok(None);
    };
    if result.values.len() != claims.len() || result.item != *claims.item() {
        return Err(FusionError::MismatchedCandidates(claims.item().to_string()));
    }
    Ok(Some(ItemStats {
        provided: provided.len(),
        mass: result.probabilities.iter().sum(),
        sum_p: provided.iter().map(|&v| result.probabilities[v]).sum(),
    }))
}

fn collect_stats(source: &SourceId, dataset: &Dataset, results: &[FusionResult]) -> Result<Vec<ItemStats>> {
    if results.len() != dataset.len() {
        return Err(FusionError::invalid(
            "results",
            format!("{} results for {} items", results.len(), dataset.len()),
        ));
    }
    let mut out = Vec::new();
    for (claims, result) in dataset.items().iter().zip(results) {
        if let Some(s) = item_stats(source, claims, result)? {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(FusionError::UnknownSource(source.clone()));
    }
    Ok(out)
}

fn item_precision(s: &ItemStats) -> f64 {
    (s.mass / s.provided as f64).min(1.0)
}

fn item_recall(s: &ItemStats) -> f64 {
    if s.mass > 0.0 {
        (s.provided as f64 / s.mass).min(1.0)
    } else {
        1.0
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Average over the source's items of `min(mass / |provided|, 1)`, where
/// mass is the item's total value probability.
pub fn update_precision(source: &SourceId, dataset: &Dataset, results: &[FusionResult]) -> Result<f64> {
    let stats = collect_stats(source, dataset, results)?;
    Ok(mean(stats.iter().map(item_precision)))
}

/// Average of `min(|provided| / mass, 1)`; an item with zero mass counts as 1.
pub fn update_recall(source: &SourceId, dataset: &Dataset, results: &[FusionResult]) -> Result<f64> {
    let stats = collect_stats(source, dataset, results)?;
    Ok(mean(stats.iter().map(item_recall)))
}

/// Accuracy: mean probability of the source's values relative to its precision.
pub fn update_accuracy(
    source: &SourceId,
    dataset: &Dataset,
    results: &[FusionResult],
    mode: AccuracyMode,
) -> Result<f64> {
    let stats = collect_stats(source, dataset, results)?;
    let precision = mean(stats.iter().map(item_precision));
    if precision <= 0.0 {
        return Err(FusionError::ZeroPrecision(source.clone()));
    }
    let a = match mode {
        AccuracyMode::PerItem => mean(stats.iter().map(|s| {
            let p = item_precision(s);
            if p > 0.0 {
                (s.sum_p / s.provided as f64 / p).min(1.0)
            } else {
                0.0
            }
        })),
        AccuracyMode::Literal => {
            let sum_p: f64 = stats.iter().map(|s| s.sum_p).sum();
            let count: usize = stats.iter().map(|s| s.provided).sum();
            (sum_p / count as f64 / precision).min(1.0)
        }
    };
    Ok(a.clamp(0.0, 1.0))
}

/// A source whose evidence pushes fusion the right way: accuracy beats a
/// random pick among `n + 1` options, and its false-positive rate and recall
/// sit on the informative side of each other. Evaluated on clamped values.
pub fn is_good_source(quality: &SourceQuality, n: u32) -> bool {
    let SourceQuality {
        accuracy: a,
        recall: r,
        false_positive_rate: q,
        ..
    } = quality.clamped();
    a > 1.0 / (f64::from(n) + 1.0) && q < (r - r * a) / (1.0 - r * a) && r > q / (1.0 - a + a * q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationConfig {
    pub init_accuracy: f64,
    pub init_recall: f64,
    pub init_false_positive_rate: f64,
    /// Quality-update rounds; 0 fuses once with the initial qualities.
    pub max_iterations: usize,
    pub tolerance: f64,
    pub accuracy_mode: AccuracyMode,
    /// `None` picks [`GoodSourceRule::for_method`].
    pub good_sources: Option<GoodSourceRule>,
    /// Starting qualities; overrides the uniform initialisation.
    pub initial: Option<QualityTable>,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            init_accuracy: 0.8,
            init_recall: 0.8,
            init_false_positive_rate: 0.2,
            max_iterations: 5,
            tolerance: 1e-4,
            accuracy_mode: AccuracyMode::PerItem,
            good_sources: None,
            initial: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub source: SourceId,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub false_positive_rate: f64,
    pub good: bool,
}

#[derive(Clone, Debug)]
pub struct IterationOutcome {
    pub results: Vec<FusionResult>,
    pub qualities: QualityTable,
    pub log: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
}

fn updated_quality(
    source: &SourceId,
    dataset: &Dataset,
    results: &[FusionResult],
    mode: AccuracyMode,
    alpha: f64,
) -> Result<SourceQuality> {
    let precision = update_precision(source, dataset, results)?;
    let recall = update_recall(source, dataset, results)?;
    if precision <= 0.0 {
        log::warn!("source `{source}` has zero precision; accuracy set to 0");
        return SourceQuality::new(0.0, recall, 1.0, 0.0);
    }
    let accuracy = update_accuracy(source, dataset, results, mode)?;
    let q = derive_q(precision, recall, alpha)?;
    SourceQuality::new(accuracy, recall, q, precision)
}

fn max_delta(old: &QualityTable, new: &QualityTable) -> f64 {
    new.iter()
        .map(|(s, q)| match old.get(s) {
            Some(o) => [
                q.accuracy - o.accuracy,
                q.recall - o.recall,
                q.false_positive_rate - o.false_positive_rate,
                q.precision - o.precision,
            ]
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs())),
            None => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Alternates fusing every item with the current qualities and re-estimating
/// the qualities from the fused probabilities.
pub fn iterate(dataset: &Dataset, engine: &FusionEngine, config: &IterationConfig) -> Result<IterationOutcome> {
    if dataset.is_empty() {
        return Err(FusionError::EmptyInput("dataset has no items".into()));
    }
    let sources: Vec<SourceId> = dataset.sources().into_iter().collect();
    let mut qualities = match &config.initial {
        Some(t) => t.clone(),
        None => {
            let init = SourceQuality::from_arq(
                config.init_accuracy,
                config.init_recall,
                config.init_false_positive_rate,
                engine.prior.alpha,
            )?;
            QualityTable::uniform(&sources, init)
        }
    };
    let rule = config.good_sources.unwrap_or(GoodSourceRule::for_method(engine.method));
    let mut results = engine.fuse_dataset(dataset, &qualities)?;
    let mut log = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        let updated: Vec<SourceQuality> = sources
            .par_iter()
            .map(|s| updated_quality(s, dataset, &results, config.accuracy_mode, engine.prior.alpha))
            .collect::<Result<_>>()?;
        let mut next = QualityTable::new();
        let mut excluded = BTreeSet::new();
        for (s, q) in sources.iter().zip(updated) {
            let good = rule.admits(&q, engine.prior.n);
            log.push(IterationRecord {
                iteration: iterations,
                source: s.clone(),
                precision: q.precision,
                recall: q.recall,
                accuracy: q.accuracy,
                false_positive_rate: q.false_positive_rate,
                good,
            });
            if !good {
                excluded.insert(s.clone());
            }
            next.insert(s.clone(), q);
        }
        if excluded.len() == sources.len() {
            return Err(FusionError::NoGoodSources);
        }
        log::debug!(
            "iteration {iterations}: {} of {} sources excluded",
            excluded.len(),
            sources.len()
        );
        next.set_excluded(excluded);
        let delta = max_delta(&qualities, &next);
        let same_filter = next.excluded() == qualities.excluded();
        qualities = next;
        results = engine.fuse_dataset(dataset, &qualities)?;
        if delta < config.tolerance && same_filter {
            converged = true;
            break;
        }
    }
    Ok(IterationOutcome {
        results,
        qualities,
        log,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Claim, PriorConfig, TruthCountDist, Value};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Hard probabilities: `truths` get 1, everything else 0.
    fn hard(claims: &ClaimSet, truths: &[&str]) -> FusionResult {
        let probabilities = claims
            .candidates()
            .iter()
            .map(|v| if truths.contains(&v.as_str()) { 1.0 } else { 0.0 })
            .collect();
        FusionResult {
            item: claims.item().clone(),
            method: Method::HybridExact,
            values: claims.candidates().to_vec(),
            probabilities,
            selected: truths.iter().map(|t| Value::new(t)).collect(),
            diagnostics: Default::default(),
        }
    }

    /// d1 has three true values; s2 provides one of them (stick) and one
    /// false value (boots). d2 has one true value, which s2 provides.
    fn hard_truth_scenario() -> (Dataset, Vec<FusionResult>) {
        let claims = [
            Claim::new("s1", "d1", "helmet"),
            Claim::new("s1", "d1", "stick"),
            Claim::new("s2", "d1", "stick"),
            Claim::new("s2", "d1", "boots"),
            Claim::new("s3", "d1", "helmet"),
            Claim::new("s4", "d1", "skates"),
            Claim::new("s2", "d2", "board"),
            Claim::new("s1", "d2", "board"),
        ];
        let (data, _) = Dataset::from_claims(claims);
        let results = vec![
            hard(&data.items()[0], &["helmet", "stick", "skates"]),
            hard(&data.items()[1], &["board"]),
        ];
        (data, results)
    }

    #[test]
    fn hard_truth_updates() {
        let (data, results) = hard_truth_scenario();
        let s2 = SourceId::new("s2");
        assert_abs_diff_eq!(update_precision(&s2, &data, &results).unwrap(), 1.0);
        assert_abs_diff_eq!(update_recall(&s2, &data, &results).unwrap(), (2.0 / 3.0 + 1.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            update_accuracy(&s2, &data, &results, AccuracyMode::PerItem).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            update_accuracy(&s2, &data, &results, AccuracyMode::Literal).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-12
        );
    }

    fn one_item(values: &[&str], probs: &[f64]) -> (Dataset, Vec<FusionResult>) {
        let claims = values.iter().map(|v| Claim::new("s", "d", *v));
        let (data, _) = Dataset::from_claims(claims);
        let mut r = hard(&data.items()[0], &[]);
        r.probabilities = probs.to_vec();
        (data, vec![r])
    }

    #[test]
    fn precision_and_recall_edge_cases() {
        let s = SourceId::new("s");
        let (data, res) = one_item(&["a", "b", "c", "d"], &[0.5; 4]);
        assert_abs_diff_eq!(update_precision(&s, &data, &res).unwrap(), 0.5);
        let (data, res) = one_item(&["a", "b"], &[0.0, 0.0]);
        assert_eq!(update_precision(&s, &data, &res).unwrap(), 0.0);
        assert_eq!(update_recall(&s, &data, &res).unwrap(), 1.0);
        assert!(matches!(
            update_accuracy(&s, &data, &res, AccuracyMode::PerItem),
            Err(FusionError::ZeroPrecision(_))
        ));
        let (data, res) = one_item(&["a", "b"], &[1.0, 1.0]);
        assert_eq!(update_recall(&s, &data, &res).unwrap(), 1.0);
        assert_eq!(update_accuracy(&s, &data, &res, AccuracyMode::PerItem).unwrap(), 1.0);

        // One provided value on an item whose mass is 4.
        let claims = [
            Claim::new("s", "d", "a"),
            Claim::new("t", "d", "b"),
            Claim::new("t", "d", "c"),
            Claim::new("t", "d", "e"),
        ];
        let (data, _) = Dataset::from_claims(claims);
        let mut r = hard(&data.items()[0], &[]);
        r.probabilities = vec![1.0; 4];
        assert_abs_diff_eq!(update_recall(&s, &data, &[r]).unwrap(), 0.25);
    }

    #[test]
    fn good_source_examples() {
        let q = |a, r, fpr| SourceQuality::new(a, r, fpr, 0.5).unwrap();
        assert!(is_good_source(&q(0.6, 0.9, 0.1), 10));
        assert!(!is_good_source(&q(0.05, 0.9, 0.1), 10));
        assert!(is_good_source(&q(1.0 - 1e-9, 1.0 - 1e-9, 0.0), 10));
        assert!(GoodSourceRule::AccuracyOnly.admits(&q(0.6, 0.1, 0.9), 10));
        assert!(!GoodSourceRule::Full.admits(&q(0.6, 0.1, 0.9), 10));
    }

    fn engine(method: Method) -> FusionEngine {
        let prior = PriorConfig::new(10, 0.25, TruthCountDist::uniform(1, 3).unwrap()).unwrap();
        FusionEngine::new(method, prior)
    }

    #[test]
    fn single_perfect_source_converges() {
        let (data, _) = Dataset::from_claims([Claim::new("s", "d", "v")]);
        let out = iterate(&data, &engine(Method::Hybrid), &IterationConfig::default()).unwrap();
        assert!(out.iterations <= 2, "{}", out.iterations);
        assert!(out.converged);
        assert!(out.results[0].probabilities[0] > 0.99);
    }

    #[test]
    fn zero_iterations_is_a_single_pass() {
        let claims = (0..5).flat_map(|d| {
            (0..3).map(move |s| Claim::new(format!("s{s}"), format!("d{d}"), format!("v{}", (d * s) % 4)))
        });
        let (data, _) = Dataset::from_claims(claims);
        let engine = engine(Method::Hybrid);
        let config = IterationConfig {
            max_iterations: 0,
            ..IterationConfig::default()
        };
        let out = iterate(&data, &engine, &config).unwrap();
        let init = SourceQuality::from_arq(0.8, 0.8, 0.2, 0.25).unwrap();
        let direct = engine
            .fuse_dataset(&data, &QualityTable::uniform(&data.sources(), init))
            .unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.log.is_empty());
        for (a, b) in out.results.iter().zip(&direct) {
            assert_eq!(a.probabilities, b.probabilities);
        }
    }

    #[test]
    fn consistent_data_is_a_fixed_point() {
        // Every source provides the same two values on every item and the
        // prior forces exactly two truths.
        let claims = (0..4).flat_map(|d| {
            (0..3).flat_map(move |s| {
                ["x", "y"].map(|v| Claim::new(format!("s{s}"), format!("d{d}"), format!("{v}{d}")))
            })
        });
        let (data, _) = Dataset::from_claims(claims);
        let prior = PriorConfig::new(10, 0.25, TruthCountDist::from_pairs(&[(2, 1.0)]).unwrap()).unwrap();
        let engine = FusionEngine::new(Method::Hybrid, prior);
        let out = iterate(&data, &engine, &IterationConfig::default()).unwrap();
        for (_, q) in out.qualities.iter() {
            assert!(q.precision > 1.0 - 1e-6 && q.recall > 1.0 - 1e-6 && q.accuracy > 1.0 - 1e-6, "{q:?}");
        }
        assert!(out.converged);
    }

    #[test]
    fn all_bad_sources_is_an_error() {
        // Two sources that never agree: after one round each has accuracy
        // near 1/2 and recall near 1, but with n = 1 the accuracy bar is 1/2.
        let claims = (0..6).flat_map(|d| {
            [Claim::new("s0", format!("d{d}"), "a"), Claim::new("s1", format!("d{d}"), "b")]
        });
        let (data, _) = Dataset::from_claims(claims);
        let prior = PriorConfig::new(1, 0.25, TruthCountDist::uniform(1, 1).unwrap()).unwrap();
        let engine = FusionEngine::new(Method::Accu, prior);
        let err = iterate(&data, &engine, &IterationConfig::default()).unwrap_err();
        assert!(matches!(err, FusionError::NoGoodSources), "{err}");
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        proptest::collection::vec((0u8..4, 0u8..6, 0u8..5), 4..40).prop_map(|rows| {
            let claims = rows
                .into_iter()
                .map(|(s, d, v)| Claim::new(format!("s{s}"), format!("d{d}"), format!("v{v}")));
            Dataset::from_claims(claims).0
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn qualities_stay_in_unit_interval(data in arb_dataset()) {
            let config = IterationConfig { max_iterations: 3, good_sources: Some(GoodSourceRule::Off), ..Default::default() };
            let out = iterate(&data, &engine(Method::Hybrid), &config).unwrap();
            for rec in &out.log {
                for x in [rec.precision, rec.recall, rec.accuracy, rec.false_positive_rate] {
                    prop_assert!((0.0..=1.0).contains(&x), "{rec:?}");
                }
            }
        }

        #[test]
        fn precision_and_recall_both_one_iff_mass_matches(k in 1usize..5, probs in proptest::collection::vec(0.0f64..1.0, 5)) {
            let values: Vec<String> = (0..5).map(|i| format!("v{i}")).collect();
            let mut pairs: Vec<Claim> = values[..k].iter().map(|v| Claim::new("s", "d", v.as_str())).collect();
            pairs.extend(values[k..].iter().map(|v| Claim::new("t", "d", v.as_str())));
            let (data, _) = Dataset::from_claims(pairs);
            let mut r = hard(&data.items()[0], &[]);
            r.probabilities = probs.clone();
            let mass: f64 = probs.iter().sum();
            let s = SourceId::new("s");
            let p = update_precision(&s, &data, std::slice::from_ref(&r)).unwrap();
            let rc = update_recall(&s, &data, std::slice::from_ref(&r)).unwrap();
            prop_assert!(p * rc <= 1.0 + 1e-12);
            if p == 1.0 && rc == 1.0 {
                prop_assert!((mass - k as f64).abs() < 1e-9);
            }
        }
    }
}
