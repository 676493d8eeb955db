//! Bias-variance least-squares metric correction.
//!
//! For a prior `P(R)`, the per-sampled-rank correction `M^(r)` minimizes
//! `sum_R P(R) [ (E[M^(r) | R] - M^K(R))^2 + gamma Var[M^(r) | R] ]`,
//! whose solution is `((1 - gamma) A'A + gamma diag(c))^-1 A'b` with
//! `A`, `b`, `c` as in [`assemble_ls_system`](crate::model::assemble_ls_system).
//! The Gram matrix depends only on the prior, the model and `gamma`, so it is
//! factored once and reused for every metric and every sample.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::estimators::{check_compatible, EstimatorReport};
use crate::metrics::weight_vector;
use crate::model::{design_matrix, ConditionalModel};
use crate::types::{MetricSpec, RankPmf, SampledRanks};

/// Diagonal jitter, relative to the largest diagonal entry, added when the
/// Gram matrix is not numerically positive definite.
const RIDGE_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BvConfig {
    /// Trade-off in `[0, 1]`; zero minimizes bias only.
    pub gamma: f64,
    /// Prior over global ranks; uniform when `None`.
    pub prior: Option<RankPmf>,
}

impl BvConfig {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, prior: None }
    }
}

impl Default for BvConfig {
    fn default() -> Self {
        Self::new(0.1)
    }
}

/// Factored BV system for one (prior, model, gamma).
#[derive(Debug, Clone)]
pub struct BvSolver {
    prior: RankPmf,
    a: DMatrix<f64>,
    gram: Cholesky<f64, Dyn>,
    num_items: usize,
    pool_size: usize,
}

impl BvSolver {
    pub fn new(model: &ConditionalModel, cfg: &BvConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return Err(Error::domain(format!("gamma={} outside [0, 1]", cfg.gamma)));
        }
        let big = model.num_items();
        let prior = match &cfg.prior {
            Some(p) if p.support_size() != big => {
                return Err(Error::SupportMismatch {
                    expected: big,
                    actual: p.support_size(),
                })
            }
            Some(p) => p.clone(),
            None => RankPmf::uniform(big)?,
        };
        let a = design_matrix(&prior, model);
        // c_r is the column sum of diag(sqrt P) A.
        let sqrt_prior = DVector::from_iterator(big, prior.masses().iter().map(|p| p.sqrt()));
        let c = a.tr_mul(&sqrt_prior);
        let mut gram = a.tr_mul(&a) * (1.0 - cfg.gamma);
        for (j, cj) in c.iter().enumerate() {
            gram[(j, j)] += cfg.gamma * cj;
        }
        let gram = factor(gram)?;
        Ok(Self {
            prior,
            a,
            gram,
            num_items: big,
            pool_size: model.pool_size(),
        })
    }

    pub fn prior(&self) -> &RankPmf {
        &self.prior
    }

    /// Corrected per-sampled-rank values `M^(r)`, index `r - 1`.
    pub fn rank_estimates(&self, spec: MetricSpec) -> Result<Vec<f64>> {
        spec.check_support(self.num_items)?;
        let weights = weight_vector(spec, self.num_items);
        let b = DVector::from_iterator(
            self.num_items,
            self.prior
                .masses()
                .iter()
                .zip(&weights)
                .map(|(p, w)| p.sqrt() * w),
        );
        let rhs = self.a.tr_mul(&b);
        Ok(self.gram.solve(&rhs).iter().copied().collect())
    }

    /// `sum_r P~(r) M^(r)`.
    pub fn metric(&self, sr: &SampledRanks, spec: MetricSpec) -> Result<f64> {
        self.check(sr)?;
        let est = self.rank_estimates(spec)?;
        let freq = sr.empirical_pmf();
        Ok(freq.masses().iter().zip(&est).map(|(p, m)| p * m).sum())
    }

    /// Differences of the corrected Recall@K curve, `K = 1..=N`.
    pub fn pmf(&self, sr: &SampledRanks) -> Result<BvPmfEstimate> {
        self.check(sr)?;
        // Recall_BV(K) = P~' G^-1 A' b_K, and b_K - b_{K-1} = sqrt(P(K)) e_K, so
        // the K-th difference is sqrt(P(K)) (A G^-1 P~)_K.
        let freq = DVector::from_vec(sr.empirical_pmf().into_masses());
        let y = self.gram.solve(&freq);
        let ay = &self.a * y;
        let raw: Vec<f64> = self
            .prior
            .masses()
            .iter()
            .zip(ay.iter())
            .map(|(p, v)| p.sqrt() * v)
            .collect();
        let raw_total: f64 = raw.iter().sum();
        let negative = raw.iter().any(|&x| x < 0.0);
        let clamped: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
        let pmf = RankPmf::from_weights(clamped)?;
        Ok(BvPmfEstimate {
            pmf,
            raw_differences: raw,
            raw_total,
            negative_mass_clamped: negative,
        })
    }

    fn check(&self, sr: &SampledRanks) -> Result<()> {
        if sr.num_items() != self.num_items || sr.pool_size() != self.pool_size {
            return Err(Error::SupportMismatch {
                expected: self.pool_size,
                actual: sr.pool_size(),
            });
        }
        Ok(())
    }
}

fn factor(gram: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(gram.clone()) {
        return Ok(ch);
    }
    let scale = gram.diagonal().iter().copied().fold(0.0, f64::max).max(1.0);
    let mut jittered = gram;
    for j in 0..jittered.nrows() {
        jittered[(j, j)] += RIDGE_JITTER * scale;
    }
    Cholesky::new(jittered).ok_or_else(|| {
        Error::Solver("bias-variance Gram matrix is singular even after ridge jitter".into())
    })
}

/// Rank distribution derived from the BV Recall curve.
#[derive(Debug, Clone)]
pub struct BvPmfEstimate {
    /// Clamped and renormalized.
    pub pmf: RankPmf,
    /// Differences before repair; `raw_differences[K - 1]` is
    /// `Recall_BV(K) - Recall_BV(K - 1)`.
    pub raw_differences: Vec<f64>,
    /// `Recall_BV(N)`, the telescoped sum of the raw differences.
    pub raw_total: f64,
    pub negative_mass_clamped: bool,
}

impl From<BvPmfEstimate> for EstimatorReport {
    fn from(est: BvPmfEstimate) -> Self {
        EstimatorReport {
            pmf_estimate: Some(est.pmf),
            objective_trace: Vec::new(),
            iterations_used: 0,
            converged: true,
            negative_mass_repaired: est.negative_mass_clamped,
        }
    }
}

/// BV-corrected estimate of `spec` from sampled ranks.
pub fn bv_metric(
    sr: &SampledRanks,
    model: &ConditionalModel,
    spec: MetricSpec,
    cfg: &BvConfig,
) -> Result<f64> {
    check_compatible(sr, model)?;
    BvSolver::new(model, cfg)?.metric(sr, spec)
}

/// Rank distribution obtained by differencing BV Recall@K over `K = 1..=N`.
pub fn bv_pmf(
    sr: &SampledRanks,
    model: &ConditionalModel,
    cfg: &BvConfig,
) -> Result<BvPmfEstimate> {
    check_compatible(sr, model)?;
    BvSolver::new(model, cfg)?.pmf(sr)
}
