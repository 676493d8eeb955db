//! Estimators that recover the global-rank distribution `P(R)` (and from it,
//! any top-K metric) from sampled ranks.
//!
//! - [`mle_em`] / [`wmle_em`]: (weighted) maximum likelihood of a mixture of
//!   the conditional rank distributions, fitted by EM.
//! - [`mes_optimize`]: maximum entropy penalized by the squared distance
//!   between the model-implied and observed sampled-rank distributions.
//! - [`bv_metric`] / [`bv_pmf`]: the closed-form bias-variance least-squares
//!   metric correction, and the rank distribution obtained by differencing its
//!   Recall curve.
//!
//! Estimators are deterministic: the same inputs always give bit-identical
//! output.

mod bv;
mod em;
mod mes;

pub use bv::{bv_metric, bv_pmf, BvConfig, BvPmfEstimate, BvSolver};
pub use em::{mle_em, weighted_log_likelihood, wmle_em, EmConfig, EmInit, WeightKind, WeightSpec};
pub use mes::{mes_objective, mes_optimize, MesConfig};

use crate::error::{Error, Result};
use crate::model::ConditionalModel;
use crate::types::{RankPmf, SampledRanks};

/// Output of one estimator run.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub pmf_estimate: Option<RankPmf>,
    /// Objective value at each iterate, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Set when negative mass had to be clamped before renormalizing.
    pub negative_mass_repaired: bool,
}

impl EstimatorReport {
    /// The estimated pmf; every estimator in this module except the
    /// metric-only BV mode fills it.
    pub fn pmf(&self) -> &RankPmf {
        self.pmf_estimate
            .as_ref()
            .expect("estimator report carries a pmf")
    }
}

pub(crate) fn check_compatible(sr: &SampledRanks, model: &ConditionalModel) -> Result<()> {
    if sr.num_items() != model.num_items() {
        return Err(Error::SupportMismatch {
            expected: model.num_items(),
            actual: sr.num_items(),
        });
    }
    if sr.pool_size() != model.pool_size() {
        return Err(Error::SupportMismatch {
            expected: model.pool_size(),
            actual: sr.pool_size(),
        });
    }
    Ok(())
}

/// Observed sampled ranks with their empirical frequency; unobserved ranks
/// contribute nothing to any of the objectives here.
pub(crate) fn observed_frequencies(sr: &SampledRanks) -> Vec<(usize, f64)> {
    let m = sr.num_users() as f64;
    sr.counts()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, c)| (i + 1, c as f64 / m))
        .collect()
}

/// `ln sum_j exp(x_j)`, negative infinity for an all `-inf` input.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
