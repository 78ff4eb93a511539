// Estimating source quality without ground truth: alternate fusion and
// quality updates on a generated dataset with one deliberately poor source.

use std::error::Error;

use truthfuse::quality::{iterate, IterationConfig};
use truthfuse::synth::{evaluate, generate, predictions, SynthConfig};
use truthfuse::{Claim, Dataset, FusionEngine, Method, PriorConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let config = SynthConfig {
        num_items: 60,
        rng_seed: 42,
        ..SynthConfig::default()
    };
    let (clean, gold) = generate(&config)?;

    // A spammer that asserts three made-up values on every item.
    let mut claims: Vec<Claim> = Vec::new();
    for item in clean.items() {
        for (s, provided) in item.sources() {
            for &v in provided {
                claims.push(Claim::new(s.clone(), item.item().clone(), item.candidates()[v].clone()));
            }
        }
        for j in 0..3 {
            claims.push(Claim::new("spam", item.item().clone(), format!("junk{j}")));
        }
    }
    let (data, _) = Dataset::from_claims(claims);

    let prior = PriorConfig::new(10, 0.25, config.truth_count_prior()?)?;
    let engine = FusionEngine::new(Method::Hybrid, prior).without_trace();
    let out = iterate(&data, &engine, &IterationConfig::default())?;

    println!("{} iterations, converged: {}", out.iterations, out.converged);
    println!("source  precision  recall  accuracy  good");
    for (s, q) in out.qualities.iter() {
        println!(
            "{:<7} {:>9.3} {:>7.3} {:>9.3}  {}",
            s.as_str(),
            q.precision,
            q.recall,
            q.accuracy,
            !out.qualities.is_excluded(s)
        );
    }
    let m = evaluate(&predictions(&out.results), &gold);
    println!("precision {:.3}  recall {:.3}  f1 {:.3}", m.precision, m.recall, m.f1);

    let spam = out.qualities.get(&"spam".into()).unwrap();
    let honest = out.qualities.get(&"s0".into()).unwrap();
    assert!(spam.accuracy < honest.accuracy, "the spammer is recognised as worse");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
