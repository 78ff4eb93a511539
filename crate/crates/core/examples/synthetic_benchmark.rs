// A miniature method comparison over a sweep of source accuracy. Pass
// `--full` for the default-size benchmark (slower).

use std::error::Error;

use truthfuse::io::write_compare;
use truthfuse::synth::{compare, CompareSettings, Grid, SynthConfig};
use truthfuse::Method;

fn run(full: bool) -> Result<(), Box<dyn Error>> {
    let config = SynthConfig {
        num_items: if full { 100 } else { 30 },
        repetitions: if full { 20 } else { 2 },
        rng_seed: 7,
        ..SynthConfig::default()
    };
    let grid: Grid = "accuracy=0.4,0.7,1.0".parse()?;
    let methods = [Method::Hybrid, Method::Accu, Method::PrecRec, Method::TwoStep];
    let rows = compare(&methods, &config, Some(&grid), &CompareSettings::default())?;
    write_compare(std::io::stdout().lock(), &rows)?;
    assert_eq!(rows.len(), methods.len() * grid.values.len());
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    run(false)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run(std::env::args().any(|a| a == "--full"))
}
