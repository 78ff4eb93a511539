//! Exact hybrid inference by enumerating possible worlds.
//!
//! A possible world is an ordered sequence `O` of values already committed
//! as truths. From each world the model either picks one of the remaining
//! values as the next truth or stops; `p(v)` sums `p(v | O) * p(O)` over
//! every world `O` that does not contain `v`, with `p(O)` the product of
//! the conditionals along the sequence.
//!
//! Two conditional models drive the same depth-first enumeration: the full
//! Bayes form over source qualities, and the vote-count form used to inject
//! hand-built instances.

use crate::error::{FusionError, Result};
use crate::likelihood::{LikelihoodContext, Next};
use crate::model::{ClaimSet, Diagnostics, FusionResult, Method, PriorConfig, QualityTable, Value};

/// Worlds whose probability drops below this are not expanded further.
pub const PRUNE_BELOW: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactOptions {
    /// Refuse instances with more candidates than this.
    pub max_candidates: usize,
    pub prune_below: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            max_candidates: 8,
            prune_below: PRUNE_BELOW,
        }
    }
}

/// A node in the enumeration tree.
#[derive(Clone, Debug, PartialEq)]
pub struct PossibleWorld {
    pub selected: Vec<usize>,
    pub probability: f64,
}

/// Injected vote counts: `votes[v]` is `L(v)`, `bot_votes[i - 1]` is the stop
/// vote at step `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteCountFixture {
    pub values: Vec<Value>,
    pub votes: Vec<f64>,
    pub bot_votes: Vec<f64>,
    pub at_least_one_truth: bool,
}

impl VoteCountFixture {
    /// Values are named `v1 .. vN`.
    pub fn new(votes: Vec<f64>, bot_votes: Vec<f64>) -> Result<Self> {
        let values = (1..=votes.len()).map(|i| Value::new(&format!("v{i}"))).collect();
        VoteCountFixture::with_values(values, votes, bot_votes)
    }

    pub fn with_values(values: Vec<Value>, votes: Vec<f64>, bot_votes: Vec<f64>) -> Result<Self> {
        let fixture = VoteCountFixture {
            values,
            votes,
            bot_votes,
            at_least_one_truth: true,
        };
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.votes.len() || self.votes.is_empty() {
            return Err(FusionError::invalid("votes", "one vote per value, at least one value"));
        }
        if self.votes.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(FusionError::invalid("votes", "vote counts must be finite and positive"));
        }
        if self.bot_votes.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(FusionError::invalid("bot_votes", "stop votes must be finite and non-negative"));
        }
        if self.bot_votes.len() < self.votes.len() {
            return Err(FusionError::invalid("bot_votes", "need one stop vote per step"));
        }
        Ok(())
    }

    /// Stop vote at step `i` (1-based).
    pub fn bot_vote(&self, i: usize) -> f64 {
        self.bot_votes[i - 1]
    }

    /// Three values where the approximation stops one step too early:
    /// `L = (γa, a, a)`, stop votes `(0, a + ε, a + ε)`.
    pub fn early_stop_case(gamma: f64, a: f64, epsilon: f64) -> Result<Self> {
        VoteCountFixture::new(vec![gamma * a, a, a], vec![0.0, a + epsilon, a + epsilon])
    }

    /// Three values where the approximation keeps going and over-counts the
    /// last value: `L = (γa, a, a)`, stop votes `(0, a, a)`.
    pub fn over_count_case(gamma: f64, a: f64) -> Result<Self> {
        VoteCountFixture::new(vec![gamma * a, a, a], vec![0.0, a, a])
    }
}

/// The conditional distribution over the next decision, given a world.
trait NextTruthModel {
    fn candidate_count(&self) -> usize;

    /// Fills `out[v]` with `p(v | O)` for unselected `v` (zero for selected)
    /// and returns `p(stop | O)`.
    fn conditionals(&self, mask: &[bool], selected_len: usize, out: &mut [f64]) -> Result<f64>;
}

struct QualityModel<'a> {
    ctx: LikelihoodContext<'a>,
    prior: &'a PriorConfig,
    m: usize,
}

impl NextTruthModel for QualityModel<'_> {
    fn candidate_count(&self) -> usize {
        self.m
    }

    fn conditionals(&self, mask: &[bool], selected_len: usize, out: &mut [f64]) -> Result<f64> {
        let step = selected_len + 1;
        let ln_value_prior = self.prior.value_prior(self.m, step).ln();
        let mut max = f64::NEG_INFINITY;
        for v in 0..self.m {
            out[v] = if mask[v] {
                f64::NEG_INFINITY
            } else {
                self.ctx.joint(mask, selected_len, Next::Value(v)) + ln_value_prior
            };
            max = max.max(out[v]);
        }
        let ln_stop = if selected_len == 0 && self.prior.at_least_one_truth {
            f64::NEG_INFINITY
        } else {
            self.ctx.joint(mask, selected_len, Next::Stop) + self.prior.beta_at(step).ln()
        };
        max = max.max(ln_stop);
        if max == f64::NEG_INFINITY {
            return Err(FusionError::DegenerateEvidence);
        }
        let mut z = (ln_stop - max).exp();
        for w in out.iter_mut() {
            *w = (*w - max).exp();
            z += *w;
        }
        for w in out.iter_mut() {
            *w /= z;
        }
        Ok((ln_stop - max).exp() / z)
    }
}

struct VoteModel<'a> {
    fixture: &'a VoteCountFixture,
}

impl NextTruthModel for VoteModel<'_> {
    fn candidate_count(&self) -> usize {
        self.fixture.votes.len()
    }

    fn conditionals(&self, mask: &[bool], selected_len: usize, out: &mut [f64]) -> Result<f64> {
        let stop = if selected_len == 0 && self.fixture.at_least_one_truth {
            0.0
        } else {
            self.fixture.bot_vote(selected_len + 1)
        };
        let mut z = stop;
        for (v, &l) in self.fixture.votes.iter().enumerate() {
            out[v] = if mask[v] { 0.0 } else { l };
            z += out[v];
        }
        if z <= 0.0 {
            return Err(FusionError::DegenerateVotes);
        }
        for w in out.iter_mut() {
            *w /= z;
        }
        Ok(stop / z)
    }
}

struct Enumerator<'a, M> {
    model: &'a M,
    prune_below: f64,
    totals: Vec<f64>,
    mask: Vec<bool>,
    worlds: usize,
}

impl<M: NextTruthModel> Enumerator<'_, M> {
    fn expand(&mut self, depth: usize, weight: f64) -> Result<()> {
        let m = self.model.candidate_count();
        if depth == m {
            return Ok(());
        }
        self.worlds += 1;
        let mut cond = vec![0.0; m];
        self.model.conditionals(&self.mask, depth, &mut cond)?;
        for v in 0..m {
            if self.mask[v] || cond[v] == 0.0 {
                continue;
            }
            let reach = weight * cond[v];
            self.totals[v] += reach;
            if reach >= self.prune_below {
                self.mask[v] = true;
                self.expand(depth + 1, reach)?;
                self.mask[v] = false;
            }
        }
        Ok(())
    }
}

fn enumerate<M: NextTruthModel>(model: &M, prune_below: f64) -> Result<(Vec<f64>, usize)> {
    let m = model.candidate_count();
    let mut e = Enumerator {
        model,
        prune_below,
        totals: vec![0.0; m],
        mask: vec![false; m],
        worlds: 0,
    };
    e.expand(0, 1.0)?;
    let totals = e.totals.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
    Ok((totals, e.worlds))
}

/// `p(candidate | selected, observations)` from the full Bayes form.
pub fn conditional_prob(
    claims: &ClaimSet,
    qualities: &QualityTable,
    prior: &PriorConfig,
    selected: &[Value],
    candidate: Next<&Value>,
) -> Result<f64> {
    let m = claims.len();
    let mut mask = vec![false; m];
    for v in selected {
        let i = claims
            .index_of(v)
            .ok_or_else(|| FusionError::invalid("selected", format!("`{v}` is not a candidate")))?;
        mask[i] = true;
    }
    let candidate = match candidate {
        Next::Value(v) => {
            let i = claims
                .index_of(v)
                .ok_or_else(|| FusionError::invalid("candidate", format!("`{v}` is not a candidate")))?;
            if mask[i] {
                return Err(FusionError::AlreadySelected(v.to_string()));
            }
            Next::Value(i)
        }
        Next::Stop => Next::Stop,
    };
    if selected.len() == m {
        return Ok(if candidate == Next::Stop { 1.0 } else { 0.0 });
    }
    let model = QualityModel {
        ctx: LikelihoodContext::new(claims, qualities, prior.n)?,
        prior,
        m,
    };
    let mut out = vec![0.0; m];
    let stop = model.conditionals(&mask, selected.len(), &mut out)?;
    Ok(match candidate {
        Next::Value(i) => out[i],
        Next::Stop => stop,
    })
}

/// Every `p(v | O)` plus `p(stop | O)` at one world; sums to one.
pub fn conditional_distribution(
    claims: &ClaimSet,
    qualities: &QualityTable,
    prior: &PriorConfig,
    world: &PossibleWorld,
) -> Result<(Vec<f64>, f64)> {
    let m = claims.len();
    let mut mask = vec![false; m];
    for &i in &world.selected {
        mask[i] = true;
    }
    let model = QualityModel {
        ctx: LikelihoodContext::new(claims, qualities, prior.n)?,
        prior,
        m,
    };
    let mut out = vec![0.0; m];
    let stop = model.conditionals(&mask, world.selected.len(), &mut out)?;
    Ok((out, stop))
}

fn finish(
    item: crate::model::ItemId,
    method: Method,
    values: Vec<Value>,
    probabilities: Vec<f64>,
    worlds: usize,
) -> FusionResult {
    let order = crate::model::rank_desc(&values, &probabilities);
    let selected = order
        .into_iter()
        .filter(|&i| probabilities[i] > 0.5)
        .map(|i| values[i].clone())
        .collect();
    FusionResult {
        item,
        method,
        values,
        probabilities,
        selected,
        diagnostics: Diagnostics {
            notes: vec![format!("expanded {worlds} possible worlds")],
            ..Diagnostics::default()
        },
    }
}

/// Exact value probabilities by possible-world enumeration; values with
/// probability above 0.5 are selected.
pub fn exact_fuse(
    claims: &ClaimSet,
    qualities: &QualityTable,
    prior: &PriorConfig,
    options: &ExactOptions,
) -> Result<FusionResult> {
    let m = claims.len();
    if m > options.max_candidates {
        return Err(FusionError::InstanceTooLarge {
            candidates: m,
            cap: options.max_candidates,
        });
    }
    if m == 0 {
        return Err(FusionError::EmptyInput(format!("item `{}` has no candidates", claims.item())));
    }
    let model = QualityModel {
        ctx: LikelihoodContext::new(claims, qualities, prior.n)?,
        prior,
        m,
    };
    let (probabilities, worlds) = enumerate(&model, options.prune_below)?;
    Ok(finish(
        claims.item().clone(),
        Method::HybridExact,
        claims.candidates().to_vec(),
        probabilities,
        worlds,
    ))
}

/// Exact enumeration where each conditional is
/// `L(v) / (sum of unselected L + stop vote at this step)`.
pub fn exact_fuse_from_votes(fixture: &VoteCountFixture) -> Result<FusionResult> {
    fixture.validate()?;
    let model = VoteModel { fixture };
    let (probabilities, worlds) = enumerate(&model, PRUNE_BELOW)?;
    Ok(finish(
        crate::model::ItemId::new("fixture"),
        Method::HybridExact,
        fixture.values.clone(),
        probabilities,
        worlds,
    ))
}
