//! Domain types shared by every fusion method, plus the prior machinery
//! (false-positive rate derivation and the stop-probability schedule).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::approx::StepTrace;
use crate::error::{FusionError, Result};

/// Qualities are clamped into `[QUALITY_EPS, 1 - QUALITY_EPS]` before they
/// enter vote counts; the closed forms have poles at 0 and 1.
pub const QUALITY_EPS: f64 = 1e-6;

/// Upper cap on the stop probability so the prior odds stay finite.
pub const BETA_CAP: f64 = 1.0 - 1e-9;

macro_rules! token_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(from = "String", into = "String")]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(raw: &str) -> Self {
                let normalized: String = raw.trim().nfc().collect();
                $name(Arc::from(normalized))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl From<&str> for $name {
            fn from(raw: &str) -> Self {
                $name::new(raw)
            }
        }

        impl From<String> for $name {
            fn from(raw: String) -> Self {
                $name::new(&raw)
            }
        }

        impl From<$name> for String {
            fn from(token: $name) -> String {
                token.0.to_string()
            }
        }
    };
}

token_type!(
    /// Opaque source identifier.
    SourceId
);
token_type!(
    /// Opaque data-item identifier (an entity/attribute pair in practice).
    ItemId
);
token_type!(
    /// A claimed value. Compared by exact equality after trimming and NFC
    /// normalization.
    Value
);

/// One observation: `source` asserts `value` for `item`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Claim {
    pub source: SourceId,
    pub item: ItemId,
    pub value: Value,
}

impl Claim {
    pub fn new(source: impl Into<SourceId>, item: impl Into<ItemId>, value: impl Into<Value>) -> Self {
        Claim {
            source: source.into(),
            item: item.into(),
            value: value.into(),
        }
    }
}

/// All observations made on one data item.
///
/// Candidates keep first-seen order; sources are indexed in lexicographic
/// order. `per_source` and `providers` are two views of the same relation.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimSet {
    item: ItemId,
    candidates: Vec<Value>,
    index: HashMap<Value, usize>,
    per_source: BTreeMap<SourceId, Vec<usize>>,
    providers: Vec<Vec<SourceId>>,
}

impl ClaimSet {
    /// Builds the claim set from `(source, value)` pairs. Duplicate pairs are
    /// dropped; the number dropped is returned alongside.
    pub fn from_pairs<I>(item: ItemId, pairs: I) -> (Self, usize)
    where
        I: IntoIterator<Item = (SourceId, Value)>,
    {
        let mut candidates = Vec::new();
        let mut index: HashMap<Value, usize> = HashMap::new();
        let mut per_source: BTreeMap<SourceId, BTreeSet<usize>> = BTreeMap::new();
        let mut duplicates = 0;
        for (source, value) in pairs {
            let next = candidates.len();
            let idx = *index.entry(value.clone()).or_insert_with(|| {
                candidates.push(value);
                next
            });
            if !per_source.entry(source).or_default().insert(idx) {
                duplicates += 1;
            }
        }
        let mut providers = vec![Vec::new(); candidates.len()];
        for (source, values) in &per_source {
            for &v in values {
                providers[v].push(source.clone());
            }
        }
        let per_source = per_source
            .into_iter()
            .map(|(s, vals)| (s, vals.into_iter().collect()))
            .collect();
        (
            ClaimSet {
                item,
                candidates,
                index,
                per_source,
                providers,
            },
            duplicates,
        )
    }

    /// Convenience constructor: `(source, [values])` rows.
    pub fn from_sources<S, V>(item: &str, rows: &[(S, &[V])]) -> Self
    where
        S: AsRef<str>,
        V: AsRef<str>,
    {
        let pairs = rows.iter().flat_map(|(s, vals)| {
            vals.iter()
                .map(move |v| (SourceId::new(s.as_ref()), Value::new(v.as_ref())))
        });
        ClaimSet::from_pairs(ItemId::new(item), pairs).0
    }

    pub fn item(&self) -> &ItemId {
        &self.item
    }

    pub fn candidates(&self) -> &[Value] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn index_of(&self, value: &Value) -> Option<usize> {
        self.index.get(value).copied()
    }

    /// Candidate indices provided by `source`, sorted.
    pub fn provided(&self, source: &SourceId) -> Option<&[usize]> {
        self.per_source.get(source).map(Vec::as_slice)
    }

    /// Sources with their provided candidate indices, in source order.
    pub fn sources(&self) -> impl Iterator<Item = (&SourceId, &[usize])> {
        self.per_source.iter().map(|(s, v)| (s, v.as_slice()))
    }

    pub fn source_count(&self) -> usize {
        self.per_source.len()
    }

    /// Sources providing candidate `idx` (S_v), sorted.
    pub fn providers(&self, idx: usize) -> &[SourceId] {
        &self.providers[idx]
    }

    pub fn provided_values(&self, source: &SourceId) -> Vec<&Value> {
        self.provided(source)
            .map(|idx| idx.iter().map(|&i| &self.candidates[i]).collect())
            .unwrap_or_default()
    }
}

/// Claim sets for every item, ordered by item id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    items: Vec<ClaimSet>,
}

impl Dataset {
    /// Groups claims by item. Returns the dataset and the number of duplicate
    /// claims removed.
    pub fn from_claims<I>(claims: I) -> (Self, usize)
    where
        I: IntoIterator<Item = Claim>,
    {
        let mut grouped: BTreeMap<ItemId, Vec<(SourceId, Value)>> = BTreeMap::new();
        for claim in claims {
            grouped
                .entry(claim.item)
                .or_default()
                .push((claim.source, claim.value));
        }
        let mut duplicates = 0;
        let items = grouped
            .into_iter()
            .map(|(item, pairs)| {
                let (set, dups) = ClaimSet::from_pairs(item, pairs);
                duplicates += dups;
                set
            })
            .collect();
        (Dataset { items }, duplicates)
    }

    pub fn from_items(mut items: Vec<ClaimSet>) -> Self {
        items.sort_by(|a, b| a.item.cmp(&b.item));
        Dataset { items }
    }

    pub fn items(&self) -> &[ClaimSet] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item: &ItemId) -> Option<&ClaimSet> {
        self.items
            .binary_search_by(|c| c.item.cmp(item))
            .ok()
            .map(|i| &self.items[i])
    }

    pub fn sources(&self) -> BTreeSet<SourceId> {
        self.items
            .iter()
            .flat_map(|c| c.per_source.keys().cloned())
            .collect()
    }

    pub fn claim_count(&self) -> usize {
        self.items
            .iter()
            .map(|c| c.per_source.values().map(Vec::len).sum::<usize>())
            .sum()
    }
}

/// Per-source quality: accuracy, recall, false-positive rate, precision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceQuality {
    pub accuracy: f64,
    pub recall: f64,
    pub false_positive_rate: f64,
    pub precision: f64,
}

impl SourceQuality {
    pub fn new(accuracy: f64, recall: f64, false_positive_rate: f64, precision: f64) -> Result<Self> {
        for (name, x) in [
            ("accuracy", accuracy),
            ("recall", recall),
            ("false_positive_rate", false_positive_rate),
            ("precision", precision),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(FusionError::invalid(name, format!("{x} not in [0, 1]")));
            }
        }
        Ok(SourceQuality {
            accuracy,
            recall,
            false_positive_rate,
            precision,
        })
    }

    /// Builds a quality from (A, R, Q); precision is the value implied by
    /// inverting the false-positive relation under prior `alpha`.
    pub fn from_arq(accuracy: f64, recall: f64, false_positive_rate: f64, alpha: f64) -> Result<Self> {
        let odds = alpha / (1.0 - alpha);
        let denom = false_positive_rate + odds * recall;
        let precision = if denom > 0.0 { odds * recall / denom } else { 1.0 };
        SourceQuality::new(accuracy, recall, false_positive_rate, precision)
    }

    /// Builds a quality from (A, P, R), deriving Q.
    pub fn from_apr(accuracy: f64, precision: f64, recall: f64, alpha: f64) -> Result<Self> {
        let q = derive_q(precision, recall, alpha)?;
        SourceQuality::new(accuracy, recall, q, precision)
    }

    /// Copy with every field clamped into `[QUALITY_EPS, 1 - QUALITY_EPS]`.
    pub fn clamped(&self) -> Self {
        SourceQuality {
            accuracy: clamp_quality(self.accuracy),
            recall: clamp_quality(self.recall),
            false_positive_rate: clamp_quality(self.false_positive_rate),
            precision: clamp_quality(self.precision),
        }
    }
}

pub fn clamp_quality(x: f64) -> f64 {
    x.clamp(QUALITY_EPS, 1.0 - QUALITY_EPS)
}

/// False-positive rate from precision and recall:
/// `Q = alpha/(1-alpha) * (1-P)/P * R`, clamped to `[0, 1]`.
pub fn derive_q(precision: f64, recall: f64, alpha: f64) -> Result<f64> {
    if !(precision > 0.0 && precision <= 1.0) {
        if precision == 0.0 {
            return Err(FusionError::UndefinedFalsePositiveRate);
        }
        return Err(FusionError::invalid("precision", format!("{precision} not in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&recall) {
        return Err(FusionError::invalid("recall", format!("{recall} not in [0, 1]")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FusionError::invalid("alpha", format!("{alpha} not in (0, 1)")));
    }
    let q = alpha / (1.0 - alpha) * (1.0 - precision) / precision * recall;
    if q > 1.0 {
        log::debug!("false-positive rate {q:.6} clamped to 1 (P={precision}, R={recall}, alpha={alpha})");
    }
    Ok(q.clamp(0.0, 1.0))
}

/// Distribution over the number of truths per item, finite support in `[1, K]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, f64>", into = "BTreeMap<u32, f64>")]
pub struct TruthCountDist {
    mass: BTreeMap<u32, f64>,
}

impl TruthCountDist {
    pub fn new(mass: BTreeMap<u32, f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(FusionError::invalid("truth_count_dist", "empty support"));
        }
        if mass.contains_key(&0) {
            return Err(FusionError::invalid("truth_count_dist", "support must start at 1"));
        }
        if mass.values().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FusionError::invalid("truth_count_dist", "probabilities must lie in [0, 1]"));
        }
        let total: f64 = mass.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(FusionError::invalid(
                "truth_count_dist",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        Ok(TruthCountDist { mass })
    }

    pub fn from_pairs(pairs: &[(u32, f64)]) -> Result<Self> {
        TruthCountDist::new(pairs.iter().copied().collect())
    }

    pub fn uniform(lo: u32, hi: u32) -> Result<Self> {
        if lo == 0 || hi < lo {
            return Err(FusionError::invalid("truth_count_dist", format!("bad range [{lo}, {hi}]")));
        }
        let p = 1.0 / f64::from(hi - lo + 1);
        TruthCountDist::new((lo..=hi).map(|k| (k, p)).collect())
    }

    /// `P(K < i)`.
    pub fn cdf_below(&self, i: u32) -> f64 {
        self.mass.range(..i).map(|(_, p)| p).sum()
    }

    pub fn mass(&self) -> &BTreeMap<u32, f64> {
        &self.mass
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().map(|(&k, &p)| f64::from(k) * p).sum()
    }
}

impl TryFrom<BTreeMap<u32, f64>> for TruthCountDist {
    type Error = FusionError;
    fn try_from(mass: BTreeMap<u32, f64>) -> Result<Self> {
        TruthCountDist::new(mass)
    }
}

impl From<TruthCountDist> for BTreeMap<u32, f64> {
    fn from(d: TruthCountDist) -> Self {
        d.mass
    }
}

/// Where the stop probabilities come from.
#[derive(Clone, Debug, PartialEq)]
pub enum StopPrior {
    /// `beta_i = P(K < i)`.
    TruthCounts(TruthCountDist),
    /// Explicit schedule, `schedule[i - 1] = beta_i`; the last entry repeats.
    Explicit(Vec<f64>),
}

/// How the per-value prior is normalized at step `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// `(1 - beta_i) / (|V| - i + 1)`.
    #[default]
    Literal,
    /// `(1 - beta_i) / (|V| - i + 2)`, the arithmetic of the worked
    /// conditional-probability example.
    ExampleCompatible,
}

impl FromStr for PriorMode {
    type Err = FusionError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(PriorMode::Literal),
            "example-compatible" => Ok(PriorMode::ExampleCompatible),
            other => Err(FusionError::Config(format!("unknown prior_mode `{other}`"))),
        }
    }
}

/// Prior knowledge: false-domain size, slot prior, and the stop schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorConfig {
    /// Number of false values in each item's domain.
    pub n: u32,
    /// A-priori probability that a provided value corresponds to a truth slot.
    pub alpha: f64,
    pub stop: StopPrior,
    pub mode: PriorMode,
    /// Never offer "no more truths" before the first truth is chosen.
    pub at_least_one_truth: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            n: 10,
            alpha: 0.25,
            stop: StopPrior::TruthCounts(TruthCountDist::uniform(1, 5).expect("static range")),
            mode: PriorMode::Literal,
            at_least_one_truth: true,
        }
    }
}

impl PriorConfig {
    pub fn new(n: u32, alpha: f64, dist: TruthCountDist) -> Result<Self> {
        let prior = PriorConfig {
            n,
            alpha,
            stop: StopPrior::TruthCounts(dist),
            ..PriorConfig::default()
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn with_explicit_betas(mut self, betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(FusionError::invalid("beta", "explicit schedule needs values in [0, 1]"));
        }
        self.stop = StopPrior::Explicit(betas);
        Ok(self)
    }

    pub fn with_mode(mut self, mode: PriorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FusionError::invalid("n", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FusionError::invalid("alpha", format!("{} not in (0, 1)", self.alpha)));
        }
        Ok(())
    }

    /// Stop probability when looking for the `i`-th truth, capped at
    /// [`BETA_CAP`].
    pub fn beta_at(&self, i: usize) -> f64 {
        assert!(i >= 1, "truth steps are 1-based");
        let raw = match &self.stop {
            StopPrior::TruthCounts(dist) => dist.cdf_below(u32::try_from(i).unwrap_or(u32::MAX)),
            StopPrior::Explicit(betas) => betas[(i - 1).min(betas.len() - 1)],
        };
        raw.min(BETA_CAP)
    }

    /// Prior of each unselected value at step `i` (`i = |O| + 1`).
    pub fn value_prior(&self, candidate_count: usize, i: usize) -> f64 {
        assert!(i >= 1 && i <= candidate_count, "step {i} outside [1, {candidate_count}]");
        let remaining = (candidate_count - i + 1) as f64;
        let denom = match self.mode {
            PriorMode::Literal => remaining,
            PriorMode::ExampleCompatible => remaining + 1.0,
        };
        (1.0 - self.beta_at(i)) / denom
    }

    /// `p(stop | O) / p(v | O)` at step `i`.
    pub fn stop_odds(&self, candidate_count: usize, i: usize) -> f64 {
        self.beta_at(i) / self.value_prior(candidate_count, i)
    }
}

/// Free-function form of [`PriorConfig::beta_at`].
pub fn beta_at(prior: &PriorConfig, i: usize) -> f64 {
    prior.beta_at(i)
}

/// Free-function form of [`PriorConfig::value_prior`].
pub fn value_prior(prior: &PriorConfig, candidate_count: usize, i: usize) -> f64 {
    prior.value_prior(candidate_count, i)
}

/// Quality per source, plus the set of sources currently excluded from
/// likelihoods (their claims stay as candidates).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QualityTable {
    qualities: BTreeMap<SourceId, SourceQuality>,
    excluded: BTreeSet<SourceId>,
}

impl QualityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn uniform<'a, I>(sources: I, quality: SourceQuality) -> Self
    where
        I: IntoIterator<Item = &'a SourceId>,
    {
        QualityTable {
            qualities: sources.into_iter().map(|s| (s.clone(), quality)).collect(),
            excluded: BTreeSet::new(),
        }
    }

    pub fn insert(&mut self, source: SourceId, quality: SourceQuality) {
        self.qualities.insert(source, quality);
    }

    pub fn get(&self, source: &SourceId) -> Option<&SourceQuality> {
        self.qualities.get(source)
    }

    pub fn exclude(&mut self, source: SourceId) {
        self.excluded.insert(source);
    }

    pub fn set_excluded(&mut self, excluded: BTreeSet<SourceId>) {
        self.excluded = excluded;
    }

    pub fn excluded(&self) -> &BTreeSet<SourceId> {
        &self.excluded
    }

    pub fn is_excluded(&self, source: &SourceId) -> bool {
        self.excluded.contains(source)
    }

    /// `Ok(None)` for an excluded source, an error for an unknown one.
    pub fn lookup(&self, source: &SourceId) -> Result<Option<&SourceQuality>> {
        if self.excluded.contains(source) {
            return Ok(None);
        }
        self.qualities
            .get(source)
            .map(Some)
            .ok_or_else(|| FusionError::UnknownSource(source.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SourceId, &SourceQuality)> {
        self.qualities.iter()
    }

    pub fn len(&self) -> usize {
        self.qualities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qualities.is_empty()
    }
}

/// Fusion methods available to the engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Vote-count approximation of the hybrid model.
    Hybrid,
    /// Possible-world enumeration of the hybrid model.
    HybridExact,
    Accu,
    #[serde(rename = "precrec")]
    PrecRec,
    #[serde(rename = "twostep")]
    TwoStep,
    Majority,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Hybrid,
        Method::HybridExact,
        Method::Accu,
        Method::PrecRec,
        Method::TwoStep,
        Method::Majority,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Hybrid => "hybrid",
            Method::HybridExact => "hybrid-exact",
            Method::Accu => "accu",
            Method::PrecRec => "precrec",
            Method::TwoStep => "twostep",
            Method::Majority => "majority",
        }
    }

    /// Single-truth methods produce probabilities that sum to one.
    pub fn is_single_truth(self) -> bool {
        matches!(self, Method::Accu)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = FusionError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s.trim())
            .ok_or_else(|| FusionError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Stop vote counts per step (approximation only).
    pub bot_votes: Vec<f64>,
    /// Step at which the approximation stopped, if it did.
    pub termination_step: Option<usize>,
    pub steps: Vec<StepTrace>,
    pub notes: Vec<String>,
}

/// Output of one fusion method on one item.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FusionResult {
    pub item: ItemId,
    pub method: Method,
    /// Candidate values, in the claim set's order.
    pub values: Vec<Value>,
    /// `p(v | observations)`, aligned with `values`.
    pub probabilities: Vec<f64>,
    pub selected: Vec<Value>,
    pub diagnostics: Diagnostics,
}

impl FusionResult {
    pub fn probability(&self, value: &Value) -> Option<f64> {
        self.values
            .iter()
            .position(|v| v == value)
            .map(|i| self.probabilities[i])
    }

    pub fn probability_of(&self, value: &str) -> Option<f64> {
        self.probability(&Value::new(value))
    }

    /// Expected number of truths, `sum_v p(v)`.
    pub fn mass(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn is_selected(&self, value: &Value) -> bool {
        self.selected.contains(value)
    }
}

/// Orders candidate indices by descending score, ties by value token.
pub(crate) fn rank_desc(values: &[Value], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| values[a].cmp(&values[b]))
    });
    order
}
