//! The conditional rank model `P(r | R)`.
//!
//! With `N` catalog items and a pool of `n` (the relevant item plus `n - 1`
//! sampled competitors), an item at global rank `R` is outranked by a
//! uniformly drawn competitor with probability `theta_R = (R - 1) / (N - 1)`.
//! Its sampled rank `r` is one plus the number of competitors that outrank
//! it: binomial when competitors are drawn with replacement, hypergeometric
//! when they are distinct.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::metrics::weight_vector;
use crate::types::{MetricSpec, RankPmf, SamplingScheme};

/// Tables up to this many entries are materialized; larger ones are
/// evaluated row by row.
pub const DENSE_ENTRY_LIMIT: usize = 10_000_000;

/// Probabilities below this are reported as exactly zero. The log-space value
/// stays finite.
pub const FLUSH_TO_ZERO: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Materialization {
    /// Dense when `N * n <= DENSE_ENTRY_LIMIT`.
    #[default]
    Auto,
    Dense,
    OnDemand,
}

#[derive(Debug, Clone)]
enum Kernel {
    Sampling {
        scheme: SamplingScheme,
        /// `ln k!` for `k = 0..=N`.
        ln_fact: Vec<f64>,
    },
    /// A caller-supplied row-stochastic table.
    Explicit,
}

#[derive(Debug, Clone)]
struct Table {
    prob: Vec<f64>,
    log_prob: Vec<f64>,
}

/// `P(r | R)` for `R in 1..=N`, `r in 1..=n`.
#[derive(Debug, Clone)]
pub struct ConditionalModel {
    num_items: usize,
    pool_size: usize,
    kernel: Kernel,
    table: Option<Table>,
}

fn check_sizes(num_items: usize, pool_size: usize) -> Result<()> {
    if num_items < 2 {
        return Err(Error::domain(format!(
            "catalog size N={num_items} must be >= 2"
        )));
    }
    if pool_size < 2 || pool_size > num_items {
        return Err(Error::domain(format!(
            "pool size n={pool_size} must satisfy 2 <= n <= N={num_items}"
        )));
    }
    Ok(())
}

fn flush(log_p: f64) -> f64 {
    let p = log_p.exp();
    if p < FLUSH_TO_ZERO {
        0.0
    } else {
        p
    }
}

impl ConditionalModel {
    pub fn new(num_items: usize, pool_size: usize, scheme: SamplingScheme) -> Result<Self> {
        Self::with_materialization(num_items, pool_size, scheme, Materialization::Auto)
    }

    pub fn with_materialization(
        num_items: usize,
        pool_size: usize,
        scheme: SamplingScheme,
        materialization: Materialization,
    ) -> Result<Self> {
        check_sizes(num_items, pool_size)?;
        let ln_fact = (0..=num_items as u64).map(ln_factorial).collect();
        let mut model = Self {
            num_items,
            pool_size,
            kernel: Kernel::Sampling { scheme, ln_fact },
            table: None,
        };
        let dense = match materialization {
            Materialization::Auto => num_items.saturating_mul(pool_size) <= DENSE_ENTRY_LIMIT,
            Materialization::Dense => true,
            Materialization::OnDemand => false,
        };
        if dense {
            let mut log_prob = Vec::with_capacity(num_items * pool_size);
            for rank in 1..=num_items {
                log_prob.extend(model.compute_log_row(rank));
            }
            let prob = log_prob.iter().map(|&l| flush(l)).collect();
            model.table = Some(Table { prob, log_prob });
        }
        Ok(model)
    }

    /// Builds a model from explicit rows; `rows[R - 1][r - 1] = P(r | R)`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_items = rows.len();
        let pool_size = rows.first().map_or(0, Vec::len);
        check_sizes(num_items, pool_size)?;
        let mut prob = Vec::with_capacity(num_items * pool_size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != pool_size {
                return Err(Error::SupportMismatch {
                    expected: pool_size,
                    actual: row.len(),
                });
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::domain(format!("row {} has a negative entry", i + 1)));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::domain(format!("row {} sums to {total}", i + 1)));
            }
            prob.extend_from_slice(row);
        }
        let log_prob = prob.iter().map(|p| p.ln()).collect();
        Ok(Self {
            num_items,
            pool_size,
            kernel: Kernel::Explicit,
            table: Some(Table { prob, log_prob }),
        })
    }

    /// The degenerate model with `n = N` and `r = R` surely.
    pub fn identity(num_items: usize) -> Result<Self> {
        let rows = (0..num_items)
            .map(|i| {
                let mut row = vec![0.0; num_items];
                row[i] = 1.0;
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    /// `None` for models built from explicit rows.
    pub fn scheme(&self) -> Option<SamplingScheme> {
        match self.kernel {
            Kernel::Sampling { scheme, .. } => Some(scheme),
            Kernel::Explicit => None,
        }
    }

    pub fn is_dense(&self) -> bool {
        self.table.is_some()
    }

    fn check_indices(&self, rank: usize, sampled: usize) -> Result<()> {
        if rank == 0 || rank > self.num_items {
            return Err(Error::domain(format!(
                "rank R={rank} outside [1, {}]",
                self.num_items
            )));
        }
        if sampled == 0 || sampled > self.pool_size {
            return Err(Error::domain(format!(
                "sampled rank r={sampled} outside [1, {}]",
                self.pool_size
            )));
        }
        Ok(())
    }

    pub fn prob(&self, rank: usize, sampled: usize) -> Result<f64> {
        self.check_indices(rank, sampled)?;
        Ok(self.row(rank)[sampled - 1])
    }

    pub fn log_prob(&self, rank: usize, sampled: usize) -> Result<f64> {
        self.check_indices(rank, sampled)?;
        Ok(self.log_row(rank)[sampled - 1])
    }

    /// `P(. | R)` over `r = 1..=n`. `rank` must be in `1..=N`.
    pub fn row(&self, rank: usize) -> Cow<'_, [f64]> {
        match &self.table {
            Some(t) => Cow::Borrowed(&t.prob[self.row_range(rank)]),
            None => Cow::Owned(self.compute_log_row(rank).into_iter().map(flush).collect()),
        }
    }

    pub fn log_row(&self, rank: usize) -> Cow<'_, [f64]> {
        match &self.table {
            Some(t) => Cow::Borrowed(&t.log_prob[self.row_range(rank)]),
            None => Cow::Owned(self.compute_log_row(rank)),
        }
    }

    /// `ln P(r | R)` for `R = 1..=N` at a fixed sampled rank `r`.
    pub fn log_column(&self, sampled: usize) -> Vec<f64> {
        match &self.table {
            Some(t) => (0..self.num_items)
                .map(|i| t.log_prob[i * self.pool_size + sampled - 1])
                .collect(),
            None => (1..=self.num_items)
                .map(|rank| self.compute_log_entry(rank, sampled))
                .collect(),
        }
    }

    /// `P(r | R)` for `R = 1..=N` at a fixed sampled rank `r`.
    pub fn column(&self, sampled: usize) -> Vec<f64> {
        match &self.table {
            Some(t) => (0..self.num_items)
                .map(|i| t.prob[i * self.pool_size + sampled - 1])
                .collect(),
            None => self.log_column(sampled).into_iter().map(flush).collect(),
        }
    }

    fn row_range(&self, rank: usize) -> std::ops::Range<usize> {
        let start = (rank - 1) * self.pool_size;
        start..start + self.pool_size
    }

    fn compute_log_row(&self, rank: usize) -> Vec<f64> {
        (1..=self.pool_size)
            .map(|r| self.compute_log_entry(rank, r))
            .collect()
    }

    fn compute_log_entry(&self, rank: usize, sampled: usize) -> f64 {
        let (scheme, ln_fact) = match &self.kernel {
            Kernel::Sampling { scheme, ln_fact } => (*scheme, ln_fact),
            Kernel::Explicit => {
                let t = self.table.as_ref().expect("explicit models are dense");
                return t.log_prob[(rank - 1) * self.pool_size + sampled - 1];
            }
        };
        let ln_choose = |n: usize, k: usize| ln_fact[n] - ln_fact[k] - ln_fact[n - k];
        let (big, draws) = (self.num_items, self.pool_size - 1);
        let above = rank - 1; // competitors that outrank the item
        let below = big - rank;
        let k = sampled - 1;
        match scheme {
            SamplingScheme::WithReplacement => {
                if above == 0 {
                    return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
                }
                if below == 0 {
                    return if k == draws { 0.0 } else { f64::NEG_INFINITY };
                }
                let ln_theta = (above as f64 / (big - 1) as f64).ln();
                let ln_rest = (below as f64 / (big - 1) as f64).ln();
                ln_choose(draws, k) + k as f64 * ln_theta + (draws - k) as f64 * ln_rest
            }
            SamplingScheme::WithoutReplacement => {
                if k > above || draws - k > below {
                    return f64::NEG_INFINITY;
                }
                ln_choose(above, k) + ln_choose(below, draws - k) - ln_choose(big - 1, draws)
            }
        }
    }
}

/// `P(r | R)` under the given sampling scheme.
pub fn conditional(
    rank: usize,
    sampled: usize,
    num_items: usize,
    pool_size: usize,
    scheme: SamplingScheme,
) -> Result<f64> {
    Ok(flush(log_conditional(
        rank, sampled, num_items, pool_size, scheme,
    )?))
}

/// `ln P(r | R)`; negative infinity where the event is impossible.
pub fn log_conditional(
    rank: usize,
    sampled: usize,
    num_items: usize,
    pool_size: usize,
    scheme: SamplingScheme,
) -> Result<f64> {
    let model = ConditionalModel::with_materialization(
        num_items,
        pool_size,
        scheme,
        Materialization::OnDemand,
    )?;
    model.check_indices(rank, sampled)?;
    Ok(model.compute_log_entry(rank, sampled))
}

/// Distribution of the sampled rank when global ranks follow `pi`.
pub fn mixture_pmf(pi: &RankPmf, model: &ConditionalModel) -> Result<RankPmf> {
    if pi.support_size() != model.num_items() {
        return Err(Error::SupportMismatch {
            expected: model.num_items(),
            actual: pi.support_size(),
        });
    }
    let mut q = vec![0.0; model.pool_size()];
    for (i, &p) in pi.masses().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (qr, &c) in q.iter_mut().zip(model.row(i + 1).iter()) {
            *qr += p * c;
        }
    }
    RankPmf::new(q)
}

/// Arrays of the bias-variance least-squares problem for one metric.
#[derive(Debug, Clone)]
pub struct LsSystem {
    /// `N x n`, `A[R, r] = sqrt(P(R)) P(r | R)`.
    pub a: DMatrix<f64>,
    /// `b[R] = sqrt(P(R)) M^K(R)`.
    pub b: DVector<f64>,
    /// `c[r] = sum_R P(R) P(r | R)`.
    pub c: DVector<f64>,
}

pub fn assemble_ls_system(
    prior: &RankPmf,
    model: &ConditionalModel,
    spec: MetricSpec,
) -> Result<LsSystem> {
    let big = model.num_items();
    let pool = model.pool_size();
    if prior.support_size() != big {
        return Err(Error::SupportMismatch {
            expected: big,
            actual: prior.support_size(),
        });
    }
    spec.check_support(big)?;
    let a = design_matrix(prior, model);
    let weights = weight_vector(spec, big);
    let b = DVector::from_iterator(
        big,
        prior
            .masses()
            .iter()
            .zip(&weights)
            .map(|(p, w)| p.sqrt() * w),
    );
    let mut c = DVector::zeros(pool);
    for (i, &p) in prior.masses().iter().enumerate() {
        for (cr, &x) in c.iter_mut().zip(model.row(i + 1).iter()) {
            *cr += p * x;
        }
    }
    Ok(LsSystem { a, b, c })
}

pub(crate) fn design_matrix(prior: &RankPmf, model: &ConditionalModel) -> DMatrix<f64> {
    let (big, pool) = (model.num_items(), model.pool_size());
    let mut a = DMatrix::zeros(big, pool);
    for (i, &p) in prior.masses().iter().enumerate() {
        let s = p.sqrt();
        for (j, &x) in model.row(i + 1).iter().enumerate() {
            a[(i, j)] = s * x;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MetricKind;

    const WR: SamplingScheme = SamplingScheme::WithReplacement;
    const WOR: SamplingScheme = SamplingScheme::WithoutReplacement;

    /// Binomial pmf by direct multiplication, independent of the log-space path.
    fn binomial_direct(draws: usize, k: usize, theta: f64) -> f64 {
        let mut coef = 1.0;
        for i in 0..k {
            coef *= (draws - i) as f64 / (i + 1) as f64;
        }
        coef * theta.powi(k as i32) * (1.0 - theta).powi((draws - k) as i32)
    }

    #[test]
    fn top_rank_is_point_mass() {
        for scheme in [WR, WOR] {
            assert_eq!(conditional(1, 1, 50, 7, scheme).unwrap(), 1.0);
            for r in 2..=7 {
                assert_eq!(conditional(1, r, 50, 7, scheme).unwrap(), 0.0);
            }
            assert_eq!(log_conditional(1, 1, 50, 7, scheme).unwrap(), 0.0);
            assert_eq!(
                log_conditional(1, 2, 50, 7, scheme).unwrap(),
                f64::NEG_INFINITY
            );
        }
    }

    #[test]
    fn single_bernoulli_draw() {
        assert_eq!(conditional(51, 1, 101, 2, WR).unwrap(), 0.5);
        assert_eq!(conditional(51, 2, 101, 2, WR).unwrap(), 0.5);
    }

    #[test]
    fn half_theta_row() {
        let expected = [0.25, 0.5, 0.25];
        for (r, e) in expected.iter().enumerate() {
            let p = conditional(6, r + 1, 11, 3, WR).unwrap();
            assert!((p - e).abs() < 1e-14, "r={} p={p}", r + 1);
        }
        let l = log_conditional(6, 2, 11, 3, WR).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn binomial_matches_direct_product() {
        let (big, pool) = (101, 10);
        for rank in [2, 17, 50, 99] {
            let theta = (rank - 1) as f64 / (big - 1) as f64;
            for r in 1..=pool {
                let p = conditional(rank, r, big, pool, WR).unwrap();
                let q = binomial_direct(pool - 1, r - 1, theta);
                assert!((p - q).abs() <= 1e-12 * q.max(1e-300), "R={rank} r={r}");
            }
        }
    }

    #[test]
    fn hypergeometric_small_case_by_enumeration() {
        // N=6, n=3: draw 2 distinct of the 5 competitors; R=3 has 2 above.
        // Pairs: C(5,2)=10. k=0: C(3,2)=3, k=1: 2*3=6, k=2: 1.
        let expected = [0.3, 0.6, 0.1];
        for (r, e) in expected.iter().enumerate() {
            let p = conditional(3, r + 1, 6, 3, WOR).unwrap();
            assert!((p - e).abs() < 1e-14);
        }
    }

    #[test]
    fn without_replacement_last_rank_is_point_mass() {
        for r in 1..5 {
            assert_eq!(conditional(30, r, 30, 5, WOR).unwrap(), 0.0);
        }
        assert_eq!(conditional(30, 5, 30, 5, WOR).unwrap(), 1.0);
    }

    #[test]
    fn rows_are_stochastic() {
        for scheme in [WR, WOR] {
            for (big, pool) in [(11, 3), (101, 10), (1001, 100), (3706, 100)] {
                let m = ConditionalModel::new(big, pool, scheme).unwrap();
                for rank in 1..=big {
                    let s: f64 = m.row(rank).iter().sum();
                    assert!(
                        (s - 1.0).abs() <= 1e-10,
                        "{scheme} N={big} R={rank} sum={s}"
                    );
                }
            }
        }
    }

    #[test]
    fn with_replacement_symmetry() {
        let (big, pool) = (201, 20);
        let m = ConditionalModel::new(big, pool, WR).unwrap();
        for rank in 1..=big {
            for r in 1..=pool {
                let a = m.prob(rank, r).unwrap();
                let b = m.prob(big + 1 - rank, pool + 1 - r).unwrap();
                assert!(
                    (a - b).abs() <= 1e-12 * a.max(b).max(1e-300),
                    "R={rank} r={r}"
                );
            }
        }
    }

    #[test]
    fn without_replacement_row_means() {
        let (big, pool) = (301, 25);
        let m = ConditionalModel::new(big, pool, WOR).unwrap();
        for rank in 1..=big {
            let mean: f64 = m
                .row(rank)
                .iter()
                .enumerate()
                .map(|(k, p)| k as f64 * p)
                .sum();
            let expected = (pool - 1) as f64 * (rank - 1) as f64 / (big - 1) as f64;
            assert!((mean - expected).abs() < 1e-9, "R={rank}");
        }
    }

    #[test]
    fn log_and_prob_agree() {
        for scheme in [WR, WOR] {
            let m = ConditionalModel::new(500, 40, scheme).unwrap();
            for rank in (1..=500).step_by(7) {
                for r in 1..=40 {
                    let p = m.prob(rank, r).unwrap();
                    let l = m.log_prob(rank, r).unwrap();
                    if p > 0.0 {
                        assert!((l.exp() - p).abs() <= 1e-12 * p);
                    } else {
                        assert!(l.exp() < FLUSH_TO_ZERO);
                    }
                }
            }
        }
    }

    #[test]
    fn dense_and_on_demand_agree() {
        for scheme in [WR, WOR] {
            let d = ConditionalModel::with_materialization(400, 30, scheme, Materialization::Dense)
                .unwrap();
            let o =
                ConditionalModel::with_materialization(400, 30, scheme, Materialization::OnDemand)
                    .unwrap();
            assert!(d.is_dense() && !o.is_dense());
            for rank in 1..=400 {
                for (a, b) in d.row(rank).iter().zip(o.row(rank).iter()) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
            for r in [1, 15, 30] {
                assert_eq!(d.column(r), o.column(r));
                assert_eq!(d.log_column(r), o.log_column(r));
            }
        }
    }

    #[test]
    fn out_of_range_indices() {
        assert!(conditional(0, 1, 10, 3, WR).is_err());
        assert!(conditional(11, 1, 10, 3, WR).is_err());
        assert!(conditional(1, 4, 10, 3, WR).is_err());
        assert!(ConditionalModel::new(10, 11, WR).is_err());
        assert!(ConditionalModel::new(10, 1, WR).is_err());
    }

    #[test]
    fn mixture_of_point_masses() {
        let m = ConditionalModel::new(40, 6, WR).unwrap();
        let q = mixture_pmf(&RankPmf::point_mass(40, 1).unwrap(), &m).unwrap();
        assert_eq!(q.masses(), RankPmf::point_mass(6, 1).unwrap().masses());
        let q = mixture_pmf(&RankPmf::point_mass(40, 40).unwrap(), &m).unwrap();
        assert_eq!(q.masses(), RankPmf::point_mass(6, 6).unwrap().masses());
        assert!(mixture_pmf(&RankPmf::uniform(39).unwrap(), &m).is_err());
    }

    #[test]
    fn uniform_mixture_by_double_loop() {
        let (big, pool) = (11, 3);
        let m = ConditionalModel::new(big, pool, WR).unwrap();
        let q = mixture_pmf(&RankPmf::uniform(big).unwrap(), &m).unwrap();
        for r in 1..=pool {
            let mut brute = 0.0;
            for rank in 1..=big {
                let theta = (rank - 1) as f64 / (big - 1) as f64;
                brute += binomial_direct(pool - 1, r - 1, theta) / big as f64;
            }
            assert!((q.mass(r) - brute).abs() < 1e-14);
        }
    }

    #[test]
    fn ls_system_examples() {
        let m = ConditionalModel::new(4, 2, WR).unwrap();
        let prior = RankPmf::uniform(4).unwrap();
        let sys = assemble_ls_system(&prior, &m, MetricSpec::new(MetricKind::Recall, 2).unwrap())
            .unwrap();
        assert_eq!(sys.b.as_slice(), &[0.5, 0.5, 0.0, 0.0]);
        assert!((sys.c.sum() - 1.0).abs() < 1e-15);

        let m = ConditionalModel::new(11, 3, WR).unwrap();
        let prior = RankPmf::uniform(11).unwrap();
        let sys =
            assemble_ls_system(&prior, &m, MetricSpec::new(MetricKind::Ndcg, 5).unwrap()).unwrap();
        let s = (1.0f64 / 11.0).sqrt();
        for (j, e) in [0.25, 0.5, 0.25].iter().enumerate() {
            assert!((sys.a[(5, j)] - s * e).abs() < 1e-15);
        }
        // c is the column sum of diag(sqrt(P)) A.
        for j in 0..3 {
            let col: f64 = (0..11).map(|i| s * sys.a[(i, j)]).sum();
            assert!((col - sys.c[j]).abs() < 1e-15);
        }
    }
}
