// Items with one truth and items with several: single-truth methods stop
// at one value, TwoStep guesses a count, the hybrid model decides both
// jointly.

use std::error::Error;

use truthfuse::{Claim, Dataset, FusionEngine, Method, PriorConfig, QualityTable, SourceQuality, TruthCountDist};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let rows = [
        // A film with one director, one source disagreeing.
        ("s1", "film:director", "Kubrick"),
        ("s2", "film:director", "Kubrick"),
        ("s3", "film:director", "Spielberg"),
        ("s4", "film:director", "Kubrick"),
        // An article with three authors; sources list subsets.
        ("s1", "article:authors", "Ada"),
        ("s1", "article:authors", "Brian"),
        ("s2", "article:authors", "Ada"),
        ("s2", "article:authors", "Brian"),
        ("s2", "article:authors", "Chen"),
        ("s3", "article:authors", "Ada"),
        ("s3", "article:authors", "Chen"),
        ("s4", "article:authors", "Brian"),
        ("s4", "article:authors", "Dora"),
    ];
    let (data, _) = Dataset::from_claims(rows.iter().map(|&(s, d, v)| Claim::new(s, d, v)));
    let table = QualityTable::uniform(&data.sources(), SourceQuality::from_arq(0.8, 0.7, 0.05, 0.25)?);
    // Most items have one or two truths.
    let counts = TruthCountDist::from_pairs(&[(1, 0.5), (2, 0.25), (3, 0.15), (4, 0.1)])?;
    let prior = PriorConfig::new(10, 0.25, counts)?;

    for method in [Method::Majority, Method::Accu, Method::TwoStep, Method::PrecRec, Method::Hybrid] {
        let engine = FusionEngine::new(method, prior.clone());
        let results = engine.fuse_dataset(&data, &table)?;
        print!("{:<10}", method.label());
        for r in &results {
            let selected: Vec<&str> = r.selected.iter().map(|v| v.as_str()).collect();
            print!("  {}: {:<24}", r.item, format!("{selected:?}"));
        }
        println!();
    }

    let hybrid = FusionEngine::new(Method::Hybrid, prior).fuse_dataset(&data, &table)?;
    let authors = hybrid.iter().find(|r| r.item.as_str() == "article:authors").unwrap();
    assert!(authors.selected.len() >= 2, "hybrid keeps several authors");
    let director = hybrid.iter().find(|r| r.item.as_str() == "film:director").unwrap();
    assert_eq!(director.selected.len(), 1, "and a single director");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
