//! Synthetic claim generation, precision/recall evaluation and the
//! multi-method comparison harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::engine::FusionEngine;
use crate::error::{FusionError, Result};
use crate::model::{Claim, Dataset, FusionResult, ItemId, Method, PriorConfig, TruthCountDist, Value};
use crate::quality::{iterate, IterationConfig};

/// How many true values each generated item has.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TruthCountSpec {
    /// Normal draw, rounded half-up, clipped to `[min, max]`.
    Gaussian { mean: f64, std: f64, min: u32, max: u32 },
    Table(TruthCountDist),
}

impl Default for TruthCountSpec {
    fn default() -> Self {
        TruthCountSpec::Gaussian {
            mean: 6.0,
            std: 1.0,
            min: 1,
            max: 10,
        }
    }
}

impl TruthCountSpec {
    /// The distribution of the sampled count.
    pub fn distribution(&self) -> Result<TruthCountDist> {
        match self {
            TruthCountSpec::Table(d) => Ok(d.clone()),
            &TruthCountSpec::Gaussian { mean, std, min, max } => {
                let normal = NormalCdf::new(mean, std).map_err(|e| FusionError::invalid("truth_count", e.to_string()))?;
                let mass: BTreeMap<u32, f64> = (min..=max)
                    .map(|k| {
                        let lo = if k == min { 0.0 } else { normal.cdf(f64::from(k) - 0.5) };
                        let hi = if k == max { 1.0 } else { normal.cdf(f64::from(k) + 0.5) };
                        (k, hi - lo)
                    })
                    .filter(|&(_, p)| p > 0.0)
                    .collect();
                // Renormalise away floating-point drift so the sum check passes.
                let total: f64 = mass.values().sum();
                TruthCountDist::new(mass.into_iter().map(|(k, p)| (k, p / total)).collect())
            }
        }
    }

    fn max_count(&self) -> u32 {
        match self {
            TruthCountSpec::Gaussian { max, .. } => *max,
            TruthCountSpec::Table(d) => d.mass().keys().next_back().copied().unwrap_or(1),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            &TruthCountSpec::Gaussian { mean, std, min, max } => {
                if min == 0 || min > max {
                    return Err(FusionError::invalid("truth_count", format!("bad range [{min}, {max}]")));
                }
                if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(FusionError::invalid("truth_count", "mean and std must be finite, std > 0"));
                }
                Ok(())
            }
            TruthCountSpec::Table(_) => Ok(()),
        }
    }
}

enum CountSampler {
    Gaussian { normal: Normal<f64>, min: u32, max: u32 },
    Table { counts: Vec<u32>, index: WeightedIndex<f64> },
}

impl CountSampler {
    fn new(spec: &TruthCountSpec) -> Result<Self> {
        Ok(match spec {
            &TruthCountSpec::Gaussian { mean, std, min, max } => CountSampler::Gaussian {
                normal: Normal::new(mean, std).map_err(|e| FusionError::invalid("truth_count", e.to_string()))?,
                min,
                max,
            },
            TruthCountSpec::Table(d) => {
                let (counts, weights): (Vec<u32>, Vec<f64>) = d.mass().iter().map(|(&k, &p)| (k, p)).unzip();
                CountSampler::Table {
                    counts,
                    index: WeightedIndex::new(weights).map_err(|e| FusionError::invalid("truth_count", e.to_string()))?,
                }
            }
        })
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        match self {
            CountSampler::Gaussian { normal, min, max } => {
                let k = (normal.sample(rng) + 0.5).floor();
                k.clamp(f64::from(*min), f64::from(*max)) as usize
            }
            CountSampler::Table { counts, index } => counts[index.sample(rng)] as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_sources: usize,
    pub num_items: usize,
    pub false_domain_size: usize,
    pub truth_count: TruthCountSpec,
    pub source_accuracy: f64,
    pub source_recall: f64,
    /// Extra values per source and item, as a fraction of covered truth slots.
    pub extra_ratio: f64,
    pub repetitions: usize,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_sources: 10,
            num_items: 100,
            false_domain_size: 100,
            truth_count: TruthCountSpec::default(),
            source_accuracy: 0.7,
            source_recall: 0.7,
            extra_ratio: 0.2,
            repetitions: 100,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("source_accuracy", self.source_accuracy), ("source_recall", self.source_recall)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(FusionError::invalid(name, format!("{x} not in [0, 1]")));
            }
        }
        if !(self.extra_ratio >= 0.0 && self.extra_ratio.is_finite()) {
            return Err(FusionError::invalid("extra_ratio", "must be finite and >= 0"));
        }
        if self.false_domain_size == 0 {
            return Err(FusionError::invalid("false_domain_size", "must be at least 1"));
        }
        if self.num_sources == 0 || self.num_items == 0 {
            return Err(FusionError::invalid("num_sources/num_items", "must be at least 1"));
        }
        self.truth_count.validate()?;
        // Worst case: every slot covered and filled wrong, plus the extras.
        let k = self.truth_count.max_count() as usize;
        let needed = k + extra_count(self.extra_ratio, k);
        if needed > self.false_domain_size {
            return Err(FusionError::FalseDomainTooSmall {
                needed,
                domain: self.false_domain_size,
            });
        }
        Ok(())
    }

    /// The prior over truth counts that matches this generator.
    pub fn truth_count_prior(&self) -> Result<TruthCountDist> {
        self.truth_count.distribution()
    }
}

fn extra_count(ratio: f64, covered: usize) -> usize {
    (ratio * covered as f64 + 0.5).floor() as usize
}

/// True values per item.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GoldStandard {
    items: BTreeMap<ItemId, BTreeSet<Value>>,
}

impl GoldStandard {
    pub fn new(items: BTreeMap<ItemId, BTreeSet<Value>>) -> Result<Self> {
        if let Some((item, _)) = items.iter().find(|(_, v)| v.is_empty()) {
            return Err(FusionError::invalid("gold", format!("item `{item}` has no true values")));
        }
        Ok(GoldStandard { items })
    }

    pub fn items(&self) -> &BTreeMap<ItemId, BTreeSet<Value>> {
        &self.items
    }

    pub fn get(&self, item: &ItemId) -> Option<&BTreeSet<Value>> {
        self.items.get(item)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn pick_false(rng: &mut impl Rng, domain: usize, taken: &mut BTreeSet<usize>) -> usize {
    loop {
        let f = rng.gen_range(0..domain);
        if taken.insert(f) {
            return f;
        }
    }
}

/// Generates claims and their gold standard. Deterministic in `rng_seed`.
pub fn generate(config: &SynthConfig) -> Result<(Dataset, GoldStandard)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let counts = CountSampler::new(&config.truth_count)?;
    let width = (config.num_items.max(2) - 1).to_string().len();
    let mut claims = Vec::new();
    let mut gold = BTreeMap::new();
    for d in 0..config.num_items {
        let item = ItemId::new(&format!("d{d:0width$}"));
        let k = counts.sample(&mut rng);
        let truths: Vec<Value> = (0..k).map(|j| Value::new(&format!("t{j}"))).collect();
        for s in 0..config.num_sources {
            let source = format!("s{s}");
            let mut taken = BTreeSet::new();
            let mut covered = 0;
            for truth in &truths {
                if !rng.gen_bool(config.source_recall) {
                    continue;
                }
                covered += 1;
                let value = if rng.gen_bool(config.source_accuracy) {
                    truth.clone()
                } else {
                    Value::new(&format!("f{}", pick_false(&mut rng, config.false_domain_size, &mut taken)))
                };
                claims.push(Claim::new(source.as_str(), item.clone(), value));
            }
            for _ in 0..extra_count(config.extra_ratio, covered) {
                let f = pick_false(&mut rng, config.false_domain_size, &mut taken);
                claims.push(Claim::new(source.as_str(), item.clone(), format!("f{f}")));
            }
        }
        gold.insert(item, truths.into_iter().collect());
    }
    let (dataset, dups) = Dataset::from_claims(claims);
    debug_assert_eq!(dups, 0);
    Ok((dataset, GoldStandard::new(gold)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Selected values per item.
pub fn predictions(results: &[FusionResult]) -> BTreeMap<ItemId, BTreeSet<Value>> {
    results
        .iter()
        .map(|r| (r.item.clone(), r.selected.iter().cloned().collect()))
        .collect()
}

/// Pooled precision and recall over all (item, value) observations. An
/// empty prediction has precision 1 by convention.
pub fn evaluate(predicted: &BTreeMap<ItemId, BTreeSet<Value>>, gold: &GoldStandard) -> Metrics {
    let unknown = predicted.keys().filter(|i| gold.get(i).is_none()).count();
    if unknown > 0 {
        log::warn!("{unknown} predicted items are not in the gold standard; ignored");
    }
    let (mut hits, mut predicted_count, mut gold_count) = (0usize, 0usize, 0usize);
    for (item, truths) in gold.items() {
        gold_count += truths.len();
        if let Some(pred) = predicted.get(item) {
            predicted_count += pred.len();
            hits += pred.intersection(truths).count();
        }
    }
    let precision = if predicted_count == 0 {
        log::info!("empty prediction; precision defined as 1");
        1.0
    } else {
        hits as f64 / predicted_count as f64
    };
    let recall = if gold_count == 0 { 0.0 } else { hits as f64 / gold_count as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics { precision, recall, f1 }
}

/// Which generator knob a grid varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridParam {
    TruthMean,
    Accuracy,
    Recall,
    ExtraRatio,
}

impl GridParam {
    pub fn label(self) -> &'static str {
        match self {
            GridParam::TruthMean => "truth-mean",
            GridParam::Accuracy => "accuracy",
            GridParam::Recall => "recall",
            GridParam::ExtraRatio => "extra-ratio",
        }
    }

    fn apply(self, config: &mut SynthConfig, x: f64) -> Result<()> {
        match self {
            GridParam::TruthMean => match &mut config.truth_count {
                TruthCountSpec::Gaussian { mean, .. } => *mean = x,
                TruthCountSpec::Table(_) => {
                    return Err(FusionError::Config("truth-mean grid needs a gaussian truth count".into()))
                }
            },
            GridParam::Accuracy => config.source_accuracy = x,
            GridParam::Recall => config.source_recall = x,
            GridParam::ExtraRatio => config.extra_ratio = x,
        }
        Ok(())
    }
}

impl FromStr for GridParam {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        [GridParam::TruthMean, GridParam::Accuracy, GridParam::Recall, GridParam::ExtraRatio]
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| FusionError::Config(format!("unknown grid parameter `{s}`")))
    }
}

/// One generator knob and the values it takes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub param: GridParam,
    pub values: Vec<f64>,
}

impl Grid {
    /// The parameter sweeps behind the four benchmark figures.
    pub fn figure(figure: u8) -> Result<Self> {
        let steps = |lo: f64, hi: f64, step: f64| {
            let n = ((hi - lo) / step).round() as usize;
            (0..=n).map(|i| ((lo + i as f64 * step) * 1e6).round() / 1e6).collect::<Vec<_>>()
        };
        let (param, values) = match figure {
            1 => (GridParam::TruthMean, steps(1.0, 10.0, 1.0)),
            2 => (GridParam::Accuracy, steps(0.2, 1.0, 0.1)),
            3 => (GridParam::Recall, steps(0.2, 1.0, 0.1)),
            4 => (GridParam::ExtraRatio, steps(0.2, 1.0, 0.1)),
            other => return Err(FusionError::Config(format!("no sweep for figure {other} (1-4)"))),
        };
        Ok(Grid { param, values })
    }
}

/// Parses `param=v1,v2,...`.
impl FromStr for Grid {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        let (param, values) = s
            .split_once('=')
            .ok_or_else(|| FusionError::Config(format!("grid `{s}` is not `param=v1,v2,...`")))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| FusionError::Config(format!("grid value `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Grid {
            param: param.trim().parse()?,
            values,
        })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let values: Vec<String> = self.values.iter().map(f64::to_string).collect();
        write!(f, "{}={}", self.param.label(), values.join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: Method,
    pub grid_param: String,
    pub grid_value: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_reps: usize,
}

/// Settings shared by every fusion run in a comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareSettings {
    pub n: u32,
    pub alpha: f64,
    pub iteration: IterationConfig,
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings {
            n: 10,
            alpha: 0.25,
            iteration: IterationConfig::default(),
        }
    }
}

/// Generates, fuses and scores one repetition for every method.
fn run_rep(methods: &[Method], config: &SynthConfig, settings: &CompareSettings) -> Result<Vec<Metrics>> {
    let (dataset, gold) = generate(config)?;
    let prior = PriorConfig::new(settings.n, settings.alpha, config.truth_count_prior()?)?;
    methods
        .iter()
        .map(|&method| {
            let engine = FusionEngine::new(method, prior.clone()).without_trace();
            let out = iterate(&dataset, &engine, &settings.iteration)?;
            Ok(evaluate(&predictions(&out.results), &gold))
        })
        .collect()
}

/// Mean precision/recall/F1 per method (and grid point) over `config.repetitions`
/// generated datasets, seeded `rng_seed + rep`. Results do not depend on the
/// thread count.
pub fn compare(
    methods: &[Method],
    config: &SynthConfig,
    grid: Option<&Grid>,
    settings: &CompareSettings,
) -> Result<Vec<CompareRow>> {
    if methods.is_empty() {
        return Err(FusionError::invalid("methods", "at least one method is required"));
    }
    if config.repetitions == 0 {
        return Err(FusionError::invalid("repetitions", "must be at least 1"));
    }
    let points: Vec<Option<f64>> = match grid {
        Some(g) => g.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut rows = Vec::new();
    for point in points {
        let mut base = config.clone();
        if let (Some(g), Some(x)) = (grid, point) {
            g.param.apply(&mut base, x)?;
        }
        base.validate()?;
        let per_rep: Vec<Vec<Metrics>> = (0..base.repetitions)
            .into_par_iter()
            .map(|rep| {
                let mut c = base.clone();
                c.rng_seed = base.rng_seed.wrapping_add(rep as u64);
                run_rep(methods, &c, settings)
            })
            .collect::<Result<_>>()?;
        let reps = per_rep.len() as f64;
        for (m, &method) in methods.iter().enumerate() {
            // Summed in repetition order so the mean is bit-stable.
            let sum = per_rep.iter().fold(Metrics::default(), |acc, r| Metrics {
                precision: acc.precision + r[m].precision,
                recall: acc.recall + r[m].recall,
                f1: acc.f1 + r[m].f1,
            });
            rows.push(CompareRow {
                method,
                grid_param: grid.map_or("none", |g| g.param.label()).to_string(),
                grid_value: point,
                precision: sum.precision / reps,
                recall: sum.recall / reps,
                f1: sum.f1 / reps,
                n_reps: per_rep.len(),
            });
        }
    }
    Ok(rows)
}
