//! Estimating top-K recommender metrics from sampled evaluation.
//!
//! When each test user's relevant item is ranked only against `n - 1`
//! randomly sampled items instead of the full catalog of `N` items, the
//! resulting sampled ranks are a biased view of the global ranks. This crate
//! models the sampled rank as a binomial (or hypergeometric) draw conditioned
//! on the global rank, learns the distribution of global ranks from the
//! sampled ones, and derives any top-K metric from that distribution.
//!
//! Module map:
//! - [`types`] and [`metrics`]: rank containers, pmfs, metric weights.
//! - [`model`]: the conditional table `P(r | R)` and mixtures over it.
//! - [`estimators`]: EM (plain and weighted), max-entropy, and the
//!   bias-variance least-squares estimators.
//! - [`simulate`]: synthetic global ranks and item-level negative sampling.
//! - [`ingest`]: rank files, run configuration, CSV reports.
//! - [`harness`]: repeated-sampling experiments and their tables.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use estimators::{
    bv_metric, bv_pmf, mes_objective, mes_optimize, mle_em, wmle_em, BvConfig, EmConfig, EmInit,
    EstimatorReport, MesConfig, WeightKind, WeightSpec,
};
pub use metrics::{empirical_pmf, exact_metric, metric_from_pmf, sampled_metric, weight};
pub use model::{assemble_ls_system, conditional, log_conditional, mixture_pmf, ConditionalModel};
pub use types::{MetricKind, MetricSpec, RankDataset, RankPmf, SampledRanks, SamplingScheme};
