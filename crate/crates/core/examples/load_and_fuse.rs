// File-to-file pipeline: read a claims CSV, iterate fusion with a JSON run
// config, write the probability table and a run summary.

use std::error::Error;
use std::fs::File;
use std::path::Path;

use truthfuse::io::{load_claims, write_probabilities, ClaimFormat, RunConfig, RunSummary};
use truthfuse::quality::iterate;
use truthfuse::{FusionEngine, Method};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let claims = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_books.csv");
    let report = load_claims(&claims, ClaimFormat::from_path(&claims))?;
    println!("{} claims on {} books", report.rows, report.dataset.len());

    let config: RunConfig = serde_json::from_str(r#"{"truth_count_dist": {"1": 0.3, "2": 0.3, "3": 0.2, "4": 0.2}}"#)?;
    let engine = FusionEngine::new(Method::Hybrid, config.prior()?);
    let outcome = iterate(&report.dataset, &engine, &config.iteration())?;

    let out_dir = std::env::temp_dir().join("truthfuse-example");
    std::fs::create_dir_all(&out_dir)?;
    let out = out_dir.join("toy_books_probabilities.csv");
    write_probabilities(File::create(&out)?, &outcome.results)?;
    print!("{}", std::fs::read_to_string(&out)?);

    let summary = RunSummary::new(Method::Hybrid, &report, &outcome);
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
