//! Quadratic-time approximation of the hybrid model.
//!
//! Each value gets a vote count `L(v) = prod_{s provides v} n*A(s)/(1-A(s))`;
//! the stop decision gets a per-step vote `L_i(stop)` combining the prior
//! odds with how many values each source provided. Values are sorted by
//! decreasing vote and, at step `i`, every value's running probability is
//! raised by `(1 - p(v)) * min(L(v) / (sum_{j>=i} L(v_j) + L_i(stop)), 1)`.
//! The loop stops at the first step where the stop vote beats `L(v_i)`;
//! the values ranked before that step are the selected truths.

use serde::Serialize;

use crate::error::{FusionError, Result};
use crate::exact::VoteCountFixture;
use crate::model::{
    rank_desc, ClaimSet, Diagnostics, FusionResult, ItemId, Method, PriorConfig, QualityTable, SourceQuality, Value,
};

/// Maximum absolute gap between approximate and exact probabilities
/// claimed for the approximation.
pub const APPROXIMATION_BOUND: f64 = 1.0 / 6.0;

/// What happened at one step of the approximation loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepTrace {
    pub step: usize,
    pub bot_vote: f64,
    /// `sum_{j >= step} L(v_j)` over the sorted list.
    pub tail_votes: f64,
    /// `p_i(v)` per candidate, aligned with the result's values.
    pub increments: Vec<f64>,
    pub terminated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ApproxOptions {
    /// Stop at the first step where the stop vote wins.
    pub terminate: bool,
    pub record_trace: bool,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            terminate: true,
            record_trace: true,
        }
    }
}

fn check_accuracy(q: &SourceQuality) -> Result<()> {
    if q.accuracy >= 1.0 {
        return Err(FusionError::InfiniteVoteCount);
    }
    Ok(())
}

/// `ln L(v)` for the given providers.
pub fn ln_vote_count<'a, I>(providers: I, n: u32) -> Result<f64>
where
    I: IntoIterator<Item = &'a SourceQuality>,
{
    let n = f64::from(n);
    let mut ln = 0.0;
    for q in providers {
        check_accuracy(q)?;
        ln += (n * q.accuracy / (1.0 - q.accuracy)).ln();
    }
    Ok(ln)
}

pub fn vote_count<'a, I>(providers: I, n: u32) -> Result<f64>
where
    I: IntoIterator<Item = &'a SourceQuality>,
{
    ln_vote_count(providers, n).map(f64::exp)
}

fn ln_bot_vote(
    claims: &ClaimSet,
    qualities: &QualityTable,
    prior: &PriorConfig,
    step: usize,
) -> Result<f64> {
    let beta = prior.beta_at(step);
    if beta <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut ln = prior.stop_odds(claims.len(), step).ln();
    for (source, provided) in claims.sources() {
        let Some(q) = qualities.lookup(source)? else {
            continue;
        };
        if provided.len() > step - 1 {
            check_accuracy(q)?;
            ln += (q.false_positive_rate / (q.recall * (1.0 - q.accuracy))).ln();
        } else {
            if q.recall >= 1.0 {
                return Err(FusionError::InfiniteStopVote);
            }
            ln += ((1.0 - q.false_positive_rate) / (1.0 - q.recall)).ln();
        }
    }
    Ok(ln)
}

/// `L_i(stop)` at step `i`, after `selected_count = i - 1` truths.
pub fn bot_vote_count(
    claims: &ClaimSet,
    qualities: &QualityTable,
    prior: &PriorConfig,
    step: usize,
    selected_count: usize,
) -> Result<f64> {
    if step == 0 || selected_count + 1 != step {
        return Err(FusionError::invalid("step", format!("step {step} after {selected_count} truths")));
    }
    if step > claims.len() {
        return Err(FusionError::invalid("step", format!("step {step} beyond {} candidates", claims.len())));
    }
    ln_bot_vote(claims, qualities, prior, step).map(f64::exp)
}

/// `min(L(v) / (sum_{j >= i} L(v_j) + L_i(stop)), 1)` over a list sorted in
/// decreasing order.
pub fn approx_conditional(sorted_votes: &[f64], step: usize, bot_vote: f64, value_vote: f64) -> Result<f64> {
    if step == 0 || step > sorted_votes.len() {
        return Err(FusionError::invalid("step", format!("{step} outside [1, {}]", sorted_votes.len())));
    }
    let denom: f64 = sorted_votes[step - 1..].iter().sum::<f64>() + bot_vote;
    if denom <= 0.0 {
        return Err(FusionError::DegenerateVotes);
    }
    Ok((value_vote / denom).min(1.0))
}

fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

struct LoopOutput {
    probabilities: Vec<f64>,
    selected: Vec<Value>,
    diagnostics: Diagnostics,
}

/// The approximation loop over log votes. `ln_bot(i)` yields `ln L_i(stop)`.
fn run_loop<F>(
    values: &[Value],
    ln_votes: &[f64],
    mut ln_bot: F,
    options: &ApproxOptions,
    at_least_one_truth: bool,
) -> Result<LoopOutput>
where
    F: FnMut(usize) -> Result<f64>,
{
    let m = values.len();
    let order = rank_desc(values, ln_votes);
    let mut suffix = vec![f64::NEG_INFINITY; m + 1];
    for j in (0..m).rev() {
        suffix[j] = ln_add(suffix[j + 1], ln_votes[order[j]]);
    }

    let mut probabilities = vec![0.0; m];
    let mut diagnostics = Diagnostics::default();
    let mut cut = m;
    for step in 1..=m {
        let ln_b = ln_bot(step)?;
        let ln_denom = ln_add(suffix[step - 1], ln_b);
        if !ln_denom.is_finite() {
            return Err(FusionError::DegenerateVotes);
        }
        let mut increments = if options.record_trace { vec![0.0; m] } else { Vec::new() };
        for v in 0..m {
            let cond = (ln_votes[v] - ln_denom).exp().min(1.0);
            let inc = (1.0 - probabilities[v]) * cond;
            probabilities[v] = (probabilities[v] + inc).min(1.0);
            if options.record_trace {
                increments[v] = inc;
            }
        }
        let stop = options.terminate && ln_b > ln_votes[order[step - 1]];
        diagnostics.bot_votes.push(ln_b.exp());
        if options.record_trace {
            diagnostics.steps.push(StepTrace {
                step,
                bot_vote: ln_b.exp(),
                tail_votes: suffix[step - 1].exp(),
                increments,
                terminated: stop,
            });
        }
        if stop {
            diagnostics.termination_step = Some(step);
            cut = step - 1;
            break;
        }
    }

    // A vote tie straddling the cut is decided as a group by the stop vote
    // that triggered termination, which the group lost.
    if cut > 0 && cut < m && ln_votes[order[cut - 1]] == ln_votes[order[cut]] {
        let tied = ln_votes[order[cut]];
        let group_start = (0..cut).find(|&j| ln_votes[order[j]] == tied).unwrap_or(cut);
        if group_start == 0 && at_least_one_truth {
            let group_end = (cut..m).find(|&j| ln_votes[order[j]] != tied).unwrap_or(m);
            diagnostics.notes.push(format!(
                "vote tie across the cut: kept all {} tied values to retain at least one truth",
                group_end
            ));
            cut = group_end;
        } else {
            diagnostics.notes.push(format!(
                "vote tie across the cut: dropped {} tied values",
                cut - group_start
            ));
            cut = group_start;
        }
    }
    let selected = order[..cut].iter().map(|&i| values[i].clone()).collect();
    Ok(LoopOutput {
        probabilities,
        selected,
        diagnostics,
    })
}

/// Approximate hybrid fusion for one item. Qualities are clamped into
/// `[1e-6, 1 - 1e-6]` before any vote is computed.
pub fn approx_fuse(
    claims: &ClaimSet,
    qualities: &QualityTable,
    prior: &PriorConfig,
    options: &ApproxOptions,
) -> Result<FusionResult> {
    if claims.is_empty() {
        return Err(FusionError::EmptyInput(format!("item `{}` has no candidates", claims.item())));
    }
    let mut ln_votes = vec![0.0; claims.len()];
    for (source, provided) in claims.sources() {
        let Some(q) = qualities.lookup(source)? else {
            continue;
        };
        let ln = ln_vote_count([&q.clamped()], prior.n)?;
        for &v in provided {
            ln_votes[v] += ln;
        }
    }
    let clamped = clamped_table(claims, qualities)?;
    let out = run_loop(
        claims.candidates(),
        &ln_votes,
        |step| {
            if step == 1 && prior.at_least_one_truth {
                Ok(f64::NEG_INFINITY)
            } else {
                ln_bot_vote(claims, &clamped, prior, step)
            }
        },
        options,
        prior.at_least_one_truth,
    )?;
    Ok(FusionResult {
        item: claims.item().clone(),
        method: Method::Hybrid,
        values: claims.candidates().to_vec(),
        probabilities: out.probabilities,
        selected: out.selected,
        diagnostics: out.diagnostics,
    })
}

fn clamped_table(claims: &ClaimSet, qualities: &QualityTable) -> Result<QualityTable> {
    let mut table = QualityTable::new();
    for (source, _) in claims.sources() {
        match qualities.lookup(source)? {
            Some(q) => table.insert(source.clone(), q.clamped()),
            None => table.exclude(source.clone()),
        }
    }
    Ok(table)
}

/// The approximation loop run directly on injected vote counts.
pub fn approx_fuse_from_votes(fixture: &VoteCountFixture, options: &ApproxOptions) -> Result<FusionResult> {
    fixture.validate()?;
    let ln_votes: Vec<f64> = fixture.votes.iter().map(|l| l.ln()).collect();
    let out = run_loop(
        &fixture.values,
        &ln_votes,
        |step| Ok(fixture.bot_vote(step).ln()),
        options,
        fixture.at_least_one_truth,
    )?;
    Ok(FusionResult {
        item: ItemId::new("fixture"),
        method: Method::Hybrid,
        values: fixture.values.clone(),
        probabilities: out.probabilities,
        selected: out.selected,
        diagnostics: out.diagnostics,
    })
}

/// Vote counts and per-step stop votes computed from qualities, for the
/// vote-count enumeration backend.
pub fn vote_fixture(claims: &ClaimSet, qualities: &QualityTable, prior: &PriorConfig) -> Result<VoteCountFixture> {
    let m = claims.len();
    let mut votes = Vec::with_capacity(m);
    for v in 0..m {
        let mut providers = Vec::new();
        for s in claims.providers(v) {
            if let Some(q) = qualities.lookup(s)? {
                providers.push(*q);
            }
        }
        votes.push(vote_count(&providers, prior.n)?);
    }
    let mut bot_votes = Vec::with_capacity(m);
    for step in 1..=m {
        bot_votes.push(ln_bot_vote(claims, qualities, prior, step)?.exp());
    }
    let mut fixture = VoteCountFixture::with_values(claims.candidates().to_vec(), votes, bot_votes)?;
    fixture.at_least_one_truth = prior.at_least_one_truth;
    Ok(fixture)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub max_deviation: f64,
    pub worst_value: Value,
    pub within_bound: bool,
}

/// Largest `|p_exact(v) - p_approx(v)|` over the shared candidates.
pub fn verify_bound(exact: &FusionResult, approx: &FusionResult) -> Result<BoundCheck> {
    if exact.item != approx.item || exact.values.len() != approx.values.len() {
        return Err(FusionError::MismatchedCandidates(exact.item.to_string()));
    }
    let mut worst = (0.0, exact.values.first().cloned().unwrap_or_else(|| Value::new("")));
    for (value, p_exact) in exact.values.iter().zip(&exact.probabilities) {
        let p_approx = approx
            .probability(value)
            .ok_or_else(|| FusionError::MismatchedCandidates(exact.item.to_string()))?;
        let gap = (p_exact - p_approx).abs();
        if gap > worst.0 {
            worst = (gap, value.clone());
        }
    }
    Ok(BoundCheck {
        max_deviation: worst.0,
        worst_value: worst.1,
        within_bound: worst.0 < APPROXIMATION_BOUND,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_fuse_from_votes;
    use crate::model::TruthCountDist;
    use approx::assert_abs_diff_eq;

    fn q(a: f64, r: f64, fpr: f64) -> SourceQuality {
        SourceQuality::from_arq(a, r, fpr, 0.25).unwrap()
    }

    fn gear_item() -> ClaimSet {
        ClaimSet::from_sources(
            "ice hockey/equipments",
            &[
                ("s1", &["helmet", "stick"][..]),
                ("s2", &["stick", "boots"][..]),
                ("s3", &["helmet", "skis"][..]),
            ],
        )
    }

    fn example_table() -> QualityTable {
        QualityTable::uniform(&["s1".into(), "s2".into(), "s3".into()], q(0.6, 0.9, 0.1))
    }

    #[test]
    fn vote_count_examples() {
        assert_abs_diff_eq!(vote_count(&[q(0.6, 0.9, 0.1); 2], 10).unwrap(), 225.0, epsilon = 1e-9);
        assert_abs_diff_eq!(vote_count(&[q(0.5, 0.9, 0.1)], 1).unwrap(), 1.0, epsilon = 1e-12);
        let three = [q(0.9, 0.9, 0.1), q(0.8, 0.9, 0.1), q(0.6, 0.9, 0.1)];
        assert_abs_diff_eq!(vote_count(&three, 10).unwrap(), 54000.0, epsilon = 1e-6);
        let perfect = SourceQuality::new(1.0, 0.9, 0.1, 1.0).unwrap();
        assert!(matches!(vote_count(&[perfect], 10), Err(FusionError::InfiniteVoteCount)));
    }

    #[test]
    fn bot_vote_examples() {
        let claims = gear_item();
        let table = example_table();
        let zero_stop = PriorConfig::default().with_explicit_betas(vec![0.0]).unwrap();
        assert_eq!(bot_vote_count(&claims, &table, &zero_stop, 2, 1).unwrap(), 0.0);

        // With beta fixed at 0.5 the prior factor is (|V| - i + 1).
        let half = PriorConfig::default().with_explicit_betas(vec![0.5]).unwrap();
        let l3 = bot_vote_count(&claims, &table, &half, 3, 2).unwrap();
        assert_abs_diff_eq!(l3 / 2.0, 729.0, epsilon = 1e-6);
        let l1 = bot_vote_count(&claims, &table, &half, 1, 0).unwrap();
        assert_abs_diff_eq!(l1 / 4.0, (0.1f64 / 0.36).powi(3), epsilon = 1e-12);
        assert_abs_diff_eq!((0.1f64 / 0.36).powi(3), 0.02143, epsilon = 1e-5);
    }

    #[test]
    fn bot_vote_rejects_perfect_recall_when_source_stopped() {
        let claims = gear_item();
        let mut table = example_table();
        table.insert("s1".into(), SourceQuality::new(0.6, 1.0, 0.1, 0.5).unwrap());
        let half = PriorConfig::default().with_explicit_betas(vec![0.5]).unwrap();
        assert!(matches!(
            bot_vote_count(&claims, &table, &half, 3, 2),
            Err(FusionError::InfiniteStopVote)
        ));
        assert!(bot_vote_count(&claims, &table, &half, 3, 1).is_err());
    }

    #[test]
    fn conditional_examples() {
        let sorted = [225.0, 225.0, 15.0, 15.0];
        assert_abs_diff_eq!(approx_conditional(&sorted, 1, 0.1, 225.0).unwrap(), 0.4687, epsilon = 1e-4);
        assert_abs_diff_eq!(approx_conditional(&sorted, 2, 0.24, 225.0).unwrap(), 0.8817, epsilon = 2e-4);
        assert_eq!(approx_conditional(&[20.0, 5.0], 2, 0.0, 10.0).unwrap(), 1.0);
        assert!(matches!(
            approx_conditional(&[0.0], 1, 0.0, 1.0),
            Err(FusionError::DegenerateVotes)
        ));
    }

    #[test]
    fn worked_example_steps() {
        let fixture =
            VoteCountFixture::new(vec![225.0, 225.0, 15.0, 15.0], vec![0.1, 0.24, 18033.0, 18033.0]).unwrap();
        let r = approx_fuse_from_votes(&fixture, &ApproxOptions::default()).unwrap();
        let steps = &r.diagnostics.steps;
        assert_eq!(steps.len(), 3);
        assert_abs_diff_eq!(steps[0].increments[1], 0.4687, epsilon = 1e-4);
        assert_abs_diff_eq!(steps[1].increments[1], 0.4685, epsilon = 2e-4);
        assert_abs_diff_eq!(steps[2].increments[1], 0.0008, epsilon = 1e-4);
        assert_abs_diff_eq!(r.probabilities[1], 0.938, epsilon = 0.002);
        assert_eq!(r.diagnostics.termination_step, Some(3));
        assert_eq!(r.selected, vec![Value::new("v1"), Value::new("v2")]);
    }

    #[test]
    fn single_value_with_certain_stop() {
        let fixture = VoteCountFixture::new(vec![50.0], vec![2.0]).unwrap();
        let mut fixture = fixture;
        fixture.at_least_one_truth = false;
        let r = approx_fuse_from_votes(&fixture, &ApproxOptions::default()).unwrap();
        assert_abs_diff_eq!(r.probabilities[0], 50.0 / 52.0, epsilon = 1e-12);
        assert_eq!(r.selected, vec![Value::new("v1")]);
    }

    #[test]
    fn early_stop_case_matches_closed_form() {
        let fixture = VoteCountFixture::early_stop_case(1.0, 1.0, 1e-9).unwrap();
        let r = approx_fuse_from_votes(&fixture, &ApproxOptions::default()).unwrap();
        assert_abs_diff_eq!(r.probabilities[2], 1.0 / 3.0 + 2.0 / 9.0, epsilon = 1e-8);
        assert_eq!(r.diagnostics.termination_step, Some(2));
    }

    #[test]
    fn over_count_case_matches_closed_form() {
        for gamma in [1.0, 3.0, 7.0] {
            let fixture = VoteCountFixture::over_count_case(gamma, 1.0).unwrap();
            let approx = approx_fuse_from_votes(&fixture, &ApproxOptions::default()).unwrap();
            let exact = exact_fuse_from_votes(&fixture).unwrap();
            let want = 1.0 / (gamma + 2.0) + 2.0 * (gamma + 1.0) / (3.0 * (gamma + 2.0));
            assert_abs_diff_eq!(approx.probabilities[2], want, epsilon = 1e-12);
            let gap = approx.probabilities[2] - exact.probabilities[2];
            assert_abs_diff_eq!(gap, (gamma + 1.0) / (6.0 * (gamma + 2.0)), epsilon = 1e-12);
        }
    }

    #[test]
    fn verify_bound_examples() {
        let fixture = VoteCountFixture::early_stop_case(1.0, 1.0, 1e-9).unwrap();
        let exact = exact_fuse_from_votes(&fixture).unwrap();
        let approx = approx_fuse_from_votes(&fixture, &ApproxOptions::default()).unwrap();
        let check = verify_bound(&exact, &approx).unwrap();
        assert_abs_diff_eq!(check.max_deviation, 2.0 / 18.0, epsilon = 1e-6);
        assert!(check.within_bound);
        assert_eq!(verify_bound(&exact, &exact).unwrap().max_deviation, 0.0);

        let mut other = approx.clone();
        other.values[0] = Value::new("elsewhere");
        assert!(verify_bound(&exact, &other).is_err());
    }

    #[test]
    fn vote_fixture_matches_direct_vote_counts() {
        let claims = gear_item();
        let prior = PriorConfig::new(10, 0.25, TruthCountDist::from_pairs(&[(1, 0.3), (2, 0.4), (3, 0.3)]).unwrap())
            .unwrap();
        let fixture = vote_fixture(&claims, &example_table(), &prior).unwrap();
        for (v, want) in fixture.votes.iter().zip([225.0, 225.0, 15.0, 15.0]) {
            assert_abs_diff_eq!(*v, want, epsilon = 1e-9);
        }
        assert_eq!(fixture.bot_votes[0], 0.0);
        // beta_3 = 0.7, two values left: 0.7 * 2 / 0.3 * 729.
        assert_abs_diff_eq!(fixture.bot_votes[2], 0.7 * 2.0 / 0.3 * 729.0, epsilon = 1e-6);
    }

    #[test]
    fn running_probabilities_are_monotone_and_bounded() {
        let fixture = VoteCountFixture::new(vec![4.0, 9.0, 1.0, 7.0, 7.0], vec![0.0, 0.5, 3.0, 8.0, 20.0]).unwrap();
        let r = approx_fuse_from_votes(
            &fixture,
            &ApproxOptions {
                terminate: false,
                record_trace: true,
            },
        )
        .unwrap();
        let mut running = vec![0.0; 5];
        for step in &r.diagnostics.steps {
            for (p, inc) in running.iter_mut().zip(&step.increments) {
                assert!(*inc >= 0.0);
                *p += inc;
                assert!(*p <= 1.0 + 1e-12);
            }
        }
        assert_eq!(r.diagnostics.steps.len(), 5);
        assert_eq!(r.selected.len(), 5);
    }

    #[test]
    fn tie_across_cut_is_resolved_as_a_group() {
        // Sorted: 225, 15, 15; the stop vote at step 3 beats 15, so the cut
        // would split the tied pair. Both are dropped.
        let fixture = VoteCountFixture::new(vec![225.0, 15.0, 15.0], vec![0.0, 1.0, 100.0]).unwrap();
        let r = approx_fuse_from_votes(&fixture, &ApproxOptions::default()).unwrap();
        assert_eq!(r.selected, vec![Value::new("v1")]);
        assert_eq!(r.diagnostics.notes.len(), 1);

        // Everything tied: keeping at least one truth keeps the whole group.
        let fixture = VoteCountFixture::new(vec![1.0, 1.0, 1.0], vec![0.0, 1.5, 1.5]).unwrap();
        let r = approx_fuse_from_votes(&fixture, &ApproxOptions::default()).unwrap();
        assert_eq!(r.selected.len(), 3);
    }

    #[test]
    fn approx_fuse_on_gear() {
        let claims = gear_item();
        let prior = PriorConfig::new(10, 0.25, TruthCountDist::from_pairs(&[(1, 0.3), (2, 0.4), (3, 0.3)]).unwrap())
            .unwrap();
        let r = approx_fuse(&claims, &example_table(), &prior, &ApproxOptions::default()).unwrap();
        let mut selected: Vec<_> = r.selected.iter().map(Value::as_str).collect();
        selected.sort_unstable();
        assert_eq!(selected, ["helmet", "stick"]);
        assert!(r.probability_of("helmet").unwrap() > 0.9);
        assert!(r.probability_of("boots").unwrap() < 0.1);
    }
}
