//! Method dispatch and item-parallel execution.

use rayon::prelude::*;

use crate::approx::{approx_fuse, ApproxOptions};
use crate::baselines::{accu_fuse, majority_vote, precrec_fuse, twostep_fuse};
use crate::error::{FusionError, Result};
use crate::exact::{exact_fuse, ExactOptions};
use crate::model::{ClaimSet, Dataset, FusionResult, Method, PriorConfig, QualityTable};

#[derive(Clone, Debug)]
pub struct FusionEngine {
    pub method: Method,
    pub prior: PriorConfig,
    pub exact: ExactOptions,
    pub approx: ApproxOptions,
}

impl FusionEngine {
    pub fn new(method: Method, prior: PriorConfig) -> Self {
        FusionEngine {
            method,
            prior,
            exact: ExactOptions::default(),
            approx: ApproxOptions::default(),
        }
    }

    /// Per-step traces cost memory on large runs; turn them off for benchmarks.
    pub fn without_trace(mut self) -> Self {
        self.approx.record_trace = false;
        self
    }

    pub fn fuse_item(&self, claims: &ClaimSet, qualities: &QualityTable) -> Result<FusionResult> {
        match self.method {
            Method::Hybrid => approx_fuse(claims, qualities, &self.prior, &self.approx),
            Method::HybridExact => exact_fuse(claims, qualities, &self.prior, &self.exact),
            Method::Accu => accu_fuse(claims, qualities, self.prior.n),
            Method::PrecRec => precrec_fuse(claims, qualities, &self.prior),
            Method::TwoStep => twostep_fuse(claims, qualities, &self.prior),
            Method::Majority => Ok(majority_vote(claims)),
        }
    }

    /// Fuses every item in parallel; output order follows the dataset.
    pub fn fuse_dataset(&self, dataset: &Dataset, qualities: &QualityTable) -> Result<Vec<FusionResult>> {
        dataset
            .items()
            .par_iter()
            .map(|claims| self.fuse_item(claims, qualities))
            .collect()
    }
}

/// Runs `f` on a dedicated pool with `threads` workers (`None` = the global pool).
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(FusionError::invalid("threads", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| FusionError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}
