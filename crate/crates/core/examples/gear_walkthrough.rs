// The six-claim winter-sports example: how single-truth, independent
// multi-truth and hybrid fusion score the same four equipment values.

use std::error::Error;
use std::path::Path;

use truthfuse::io::{load_claims, ClaimFormat};
use truthfuse::{
    accu_fuse, approx_fuse, exact_fuse, precrec_fuse, ApproxOptions, ExactOptions, FusionResult, PriorConfig,
    QualityTable, SourceQuality, TruthCountDist,
};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/gear.csv");
    let report = load_claims(&path, ClaimFormat::Csv)?;
    let d1 = &report.dataset.items()[0];

    let quality = SourceQuality::from_arq(0.6, 0.9, 0.1, 0.25)?;
    let table = QualityTable::uniform(&report.dataset.sources(), quality);
    let prior = PriorConfig::new(10, 0.25, TruthCountDist::uniform(1, 4)?)?;

    let rows: Vec<(&str, FusionResult)> = vec![
        ("accu", accu_fuse(d1, &table, prior.n)?),
        ("precrec", precrec_fuse(d1, &table, &prior)?),
        ("hybrid-exact", exact_fuse(d1, &table, &prior, &ExactOptions::default())?),
        ("hybrid", approx_fuse(d1, &table, &prior, &ApproxOptions::default())?),
    ];

    print!("{:<14}", "");
    for v in d1.candidates() {
        print!("{:>9}", v.as_str());
    }
    println!();
    for (name, r) in &rows {
        print!("{name:<14}");
        for p in &r.probabilities {
            print!("{p:>9.3}");
        }
        let selected: Vec<&str> = r.selected.iter().map(|v| v.as_str()).collect();
        println!("   -> {selected:?}");
    }

    let accu = &rows[0].1;
    assert!((accu.mass() - 1.0).abs() < 1e-9, "single-truth probabilities sum to one");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
