// Exact possible-world enumeration versus the vote-count approximation on
// injected vote counts, including the fixtures that push the approximation
// towards its worst case.

use std::error::Error;

use truthfuse::approx::{approx_fuse_from_votes, verify_bound};
use truthfuse::{exact_fuse_from_votes, ApproxOptions, VoteCountFixture, APPROXIMATION_BOUND};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fixture = VoteCountFixture::new(vec![225.0, 225.0, 15.0, 15.0], vec![0.1, 0.24, 18033.0, 18033.0])?;
    let exact = exact_fuse_from_votes(&fixture)?;
    let approx = approx_fuse_from_votes(&fixture, &ApproxOptions::default())?;
    println!("value   exact   approx");
    for (i, v) in exact.values.iter().enumerate() {
        println!("{:<6} {:>6.4} {:>8.4}", v.as_str(), exact.probabilities[i], approx.probabilities[i]);
    }
    for step in &approx.diagnostics.steps {
        println!(
            "step {}: stop vote {:>8.2}, increments {:?}{}",
            step.step,
            step.bot_vote,
            step.increments.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>(),
            if step.terminated { " (stop)" } else { "" }
        );
    }

    println!("\nearly-stop fixtures, deviation on v3 vs closed form:");
    for gamma in [1.0, 2.0, 5.0, 10.0] {
        let f = VoteCountFixture::early_stop_case(gamma, 1.0, 1e-9)?;
        let check = verify_bound(&exact_fuse_from_votes(&f)?, &approx_fuse_from_votes(&f, &ApproxOptions::default())?)?;
        let closed = (gamma + 1.0) / (6.0 * (gamma + 2.0));
        println!("gamma {gamma:>4}: {:.6} (closed form {closed:.6})", check.max_deviation);
        assert!(check.max_deviation < APPROXIMATION_BOUND);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
