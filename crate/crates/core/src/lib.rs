//! Multi-truth discovery: decide which of the values claimed by a set of
//! sources are true, when an item may have any number of true values.
//!
//! The [`approx`] module holds the fast vote-count fusion, [`exact`] the
//! possible-world enumeration it approximates, and [`quality`] the iterative
//! source-quality estimation that ties them to a dataset.

pub mod approx;
pub mod baselines;
pub mod cli;
pub mod engine;
pub mod error;
pub mod exact;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod quality;
pub mod synth;

pub use approx::{approx_fuse, approx_fuse_from_votes, ApproxOptions, APPROXIMATION_BOUND};
pub use baselines::{accu_fuse, majority_vote, precrec_fuse, twostep_fuse};
pub use engine::{with_threads, FusionEngine};
pub use error::{FusionError, Result};
pub use exact::{exact_fuse, exact_fuse_from_votes, ExactOptions, VoteCountFixture};
pub use model::{
    Claim, ClaimSet, Dataset, FusionResult, ItemId, Method, PriorConfig, PriorMode, QualityTable, SourceId,
    SourceQuality, TruthCountDist, Value,
};
