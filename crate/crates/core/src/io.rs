//! File formats: claims, gold standards, probability tables, run configs
//! and summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::exact::ExactOptions;
use crate::model::{
    Claim, Dataset, FusionResult, ItemId, Method, PriorConfig, PriorMode, QualityTable, SourceId, TruthCountDist,
    Value,
};
use crate::quality::{AccuracyMode, IterationConfig, IterationOutcome};
use crate::synth::{CompareRow, GoldStandard, SynthConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClaimFormat {
    Csv,
    JsonLines,
}

impl ClaimFormat {
    /// `.jsonl` / `.ndjson` / `.json` are JSON lines, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => ClaimFormat::JsonLines,
            _ => ClaimFormat::Csv,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub rows: usize,
    pub duplicates: usize,
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> FusionError {
    FusionError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        FusionError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Reads a CSV with the exact `header`, returning each row with its line number.
fn read_csv_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(open(path)?);
    let found: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if found.is_empty() || found.iter().all(String::is_empty) {
        return Err(FusionError::EmptyInput(format!("{} is empty", path.display())));
    }
    if found != header {
        return Err(parse_err(path, 1, format!("expected header `{}`, found `{}`", header.join(","), found.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let fields: Vec<String> = record.iter().map(|f| f.trim().to_string()).collect();
        if let Some(i) = fields.iter().position(String::is_empty) {
            return Err(parse_err(path, line, format!("empty `{}`", header[i])));
        }
        rows.push((line, fields));
    }
    Ok(rows)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonClaim {
    source: String,
    item: String,
    value: String,
}

/// Loads claims from CSV (`source_id,item_id,value`) or JSON lines
/// (`{"source", "item", "value"}`); duplicate rows are dropped and counted.
pub fn load_claims(path: &Path, format: ClaimFormat) -> Result<LoadReport> {
    let mut claims = Vec::new();
    match format {
        ClaimFormat::Csv => {
            for (_, f) in read_csv_rows(path, &["source_id", "item_id", "value"])? {
                claims.push(Claim::new(f[0].as_str(), f[1].as_str(), f[2].as_str()));
            }
        }
        ClaimFormat::JsonLines => {
            for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let c: JsonClaim =
                    serde_json::from_str(&line).map_err(|e| parse_err(path, i as u64 + 1, e.to_string()))?;
                if [&c.source, &c.item, &c.value].iter().any(|s| s.trim().is_empty()) {
                    return Err(parse_err(path, i as u64 + 1, "empty field"));
                }
                claims.push(Claim::new(c.source, c.item, c.value));
            }
        }
    }
    if claims.is_empty() {
        return Err(FusionError::EmptyInput(format!("{} has no claims", path.display())));
    }
    let rows = claims.len();
    let (dataset, duplicates) = Dataset::from_claims(claims);
    if duplicates > 0 {
        log::warn!("{}: dropped {duplicates} duplicate claims", path.display());
    }
    Ok(LoadReport {
        dataset,
        rows,
        duplicates,
    })
}

/// Loads `item_id,value` rows. Items or values the claims never mention are
/// kept (they still count against recall) but logged.
pub fn load_gold(path: &Path, claims: Option<&Dataset>) -> Result<GoldStandard> {
    let mut items: BTreeMap<ItemId, BTreeSet<Value>> = BTreeMap::new();
    for (_, f) in read_csv_rows(path, &["item_id", "value"])? {
        items.entry(ItemId::new(&f[0])).or_default().insert(Value::new(&f[1]));
    }
    if items.is_empty() {
        return Err(FusionError::EmptyInput(format!("{} has no gold rows", path.display())));
    }
    if let Some(data) = claims {
        for (item, values) in &items {
            match data.get(item) {
                None => log::warn!("gold item `{item}` has no claims"),
                Some(c) => {
                    for v in values.iter().filter(|v| c.index_of(v).is_none()) {
                        log::warn!("gold value `{v}` for item `{item}` is never claimed");
                    }
                }
            }
        }
    }
    GoldStandard::new(items)
}

/// Selected values per item from a probabilities CSV.
pub fn load_predictions(path: &Path) -> Result<BTreeMap<ItemId, BTreeSet<Value>>> {
    let mut out: BTreeMap<ItemId, BTreeSet<Value>> = BTreeMap::new();
    for (line, f) in read_csv_rows(path, &["item_id", "value", "probability", "selected"])? {
        let selected: bool = f[3]
            .parse()
            .map_err(|_| parse_err(path, line, format!("`selected` must be true/false, found `{}`", f[3])))?;
        let entry = out.entry(ItemId::new(&f[0])).or_default();
        if selected {
            entry.insert(Value::new(&f[1]));
        }
    }
    Ok(out)
}

/// Formats with six significant digits, switching to exponent notation for
/// very small or large magnitudes.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if !(-4..6).contains(&exp) {
        return sci;
    }
    let decimals = (5 - exp).max(0) as usize;
    let fixed = format!("{x:.decimals$}");
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

pub fn write_probabilities<W: Write>(out: W, results: &[FusionResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["item_id", "value", "probability", "selected"])?;
    for r in results {
        for (v, p) in r.values.iter().zip(&r.probabilities) {
            let selected = if r.is_selected(v) { "true" } else { "false" };
            w.write_record([r.item.as_str(), v.as_str(), &format_sig6(*p), selected])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_claims<W: Write>(out: W, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["source_id", "item_id", "value"])?;
    for claims in dataset.items() {
        for (s, provided) in claims.sources() {
            for &v in provided {
                w.write_record([s.as_str(), claims.item().as_str(), claims.candidates()[v].as_str()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_gold<W: Write>(out: W, gold: &GoldStandard) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["item_id", "value"])?;
    for (item, values) in gold.items() {
        for v in values {
            w.write_record([item.as_str(), v.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_compare<W: Write>(out: W, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "grid_param", "grid_value", "precision", "recall", "f1", "n_reps"])?;
    for r in rows {
        w.write_record([
            r.method.label(),
            &r.grid_param,
            &r.grid_value.map(format_sig6).unwrap_or_default(),
            &format_sig6(r.precision),
            &format_sig6(r.recall),
            &format_sig6(r.f1),
            &r.n_reps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Starting qualities, keyed the way the config file spells them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitQuality {
    #[serde(rename = "A")]
    pub accuracy: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "Q")]
    pub false_positive_rate: f64,
}

impl Default for InitQuality {
    fn default() -> Self {
        InitQuality {
            accuracy: 0.8,
            recall: 0.8,
            false_positive_rate: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: u32,
    pub alpha: f64,
    pub truth_count_dist: TruthCountDist,
    pub init_quality: InitQuality,
    pub max_iterations: usize,
    pub prior_mode: PriorMode,
    pub accuracy_mode: AccuracyMode,
    pub exact_candidate_cap: usize,
    pub synth: Option<SynthConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prior = PriorConfig::default();
        RunConfig {
            n: prior.n,
            alpha: prior.alpha,
            truth_count_dist: TruthCountDist::uniform(1, 5).expect("static range"),
            init_quality: InitQuality::default(),
            max_iterations: 5,
            prior_mode: PriorMode::default(),
            accuracy_mode: AccuracyMode::default(),
            exact_candidate_cap: ExactOptions::default().max_candidates,
            synth: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FusionError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| FusionError::Config(format!("{}: {e}", path.display())))?;
        config.prior()?;
        Ok(config)
    }

    pub fn prior(&self) -> Result<PriorConfig> {
        Ok(PriorConfig::new(self.n, self.alpha, self.truth_count_dist.clone())?.with_mode(self.prior_mode))
    }

    pub fn iteration(&self) -> IterationConfig {
        IterationConfig {
            init_accuracy: self.init_quality.accuracy,
            init_recall: self.init_quality.recall,
            init_false_positive_rate: self.init_quality.false_positive_rate,
            max_iterations: self.max_iterations,
            accuracy_mode: self.accuracy_mode,
            ..IterationConfig::default()
        }
    }

    pub fn exact(&self) -> ExactOptions {
        ExactOptions {
            max_candidates: self.exact_candidate_cap,
            ..ExactOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceSummary {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub false_positive_rate: f64,
    pub good: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: Method,
    pub items: usize,
    pub claims: usize,
    pub duplicates: usize,
    pub iterations: usize,
    pub converged: bool,
    pub sources: BTreeMap<SourceId, SourceSummary>,
}

impl RunSummary {
    pub fn new(method: Method, report: &LoadReport, outcome: &IterationOutcome) -> Self {
        RunSummary {
            method,
            items: report.dataset.len(),
            claims: report.dataset.claim_count(),
            duplicates: report.duplicates,
            iterations: outcome.iterations,
            converged: outcome.converged,
            sources: summarize(&outcome.qualities),
        }
    }
}

fn summarize(table: &QualityTable) -> BTreeMap<SourceId, SourceSummary> {
    table
        .iter()
        .map(|(s, q)| {
            (
                s.clone(),
                SourceSummary {
                    precision: q.precision,
                    recall: q.recall,
                    accuracy: q.accuracy,
                    false_positive_rate: q.false_positive_rate,
                    good: !table.is_excluded(s),
                },
            )
        })
        .collect()
}
