//! Rank containers and probability mass functions over ranks.
//!
//! Ranks are 1-based at every public boundary. Internally, a pmf over
//! `1..=L` is stored in a `Vec` whose index `i` holds the mass of rank `i + 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative entries down to this magnitude are treated as round-off and
/// clamped to zero when a pmf is built.
pub const NEGATIVE_MASS_SLACK: f64 = 1e-12;

/// Allowed deviation of the total mass from one.
pub const MASS_SUM_SLACK: f64 = 1e-9;

/// How the `n - 1` irrelevant items are drawn from the `N - 1` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Independent uniform draws; the sampled rank is binomial given `R`.
    #[default]
    WithReplacement,
    /// Distinct items; the sampled rank is hypergeometric given `R`.
    WithoutReplacement,
}

impl SamplingScheme {
    /// Short tag used in rank files (`wr` / `wor`).
    pub fn tag(self) -> &'static str {
        match self {
            SamplingScheme::WithReplacement => "wr",
            SamplingScheme::WithoutReplacement => "wor",
        }
    }
}

impl fmt::Display for SamplingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wr" | "with_replacement" => Ok(SamplingScheme::WithReplacement),
            "wor" | "without_replacement" => Ok(SamplingScheme::WithoutReplacement),
            other => Err(Error::domain(format!("unknown sampling scheme `{other}`"))),
        }
    }
}

/// Global ranks of each user's relevant item among all `N` catalog items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankDataset {
    num_items: usize,
    ranks: Vec<usize>,
}

impl RankDataset {
    pub fn new(num_items: usize, ranks: Vec<usize>) -> Result<Self> {
        if num_items < 2 {
            return Err(Error::domain(format!(
                "catalog size N={num_items} must be >= 2"
            )));
        }
        if ranks.is_empty() {
            return Err(Error::domain("a rank dataset needs at least one user"));
        }
        check_ranks(&ranks, num_items, "N")?;
        Ok(Self { num_items, ranks })
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_users(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Empirical `P(R)` over `1..=N`.
    pub fn empirical_pmf(&self) -> RankPmf {
        RankPmf::from_counts(&self.ranks, self.num_items)
    }
}

/// Ranks of each user's relevant item among itself plus `n - 1` sampled items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledRanks {
    num_items: usize,
    pool_size: usize,
    scheme: SamplingScheme,
    ranks: Vec<usize>,
}

impl SampledRanks {
    pub fn new(
        num_items: usize,
        pool_size: usize,
        scheme: SamplingScheme,
        ranks: Vec<usize>,
    ) -> Result<Self> {
        if pool_size < 2 || pool_size > num_items {
            return Err(Error::domain(format!(
                "sample pool size n={pool_size} must satisfy 2 <= n <= N={num_items}"
            )));
        }
        if ranks.is_empty() {
            return Err(Error::domain("sampled ranks need at least one user"));
        }
        check_ranks(&ranks, pool_size, "n")?;
        Ok(Self {
            num_items,
            pool_size,
            scheme,
            ranks,
        })
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn scheme(&self) -> SamplingScheme {
        self.scheme
    }

    pub fn num_users(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Empirical `P~(r)` over `1..=n`.
    pub fn empirical_pmf(&self) -> RankPmf {
        RankPmf::from_counts(&self.ranks, self.pool_size)
    }

    /// Number of users observed at each sampled rank; index `r - 1`.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.pool_size];
        for &r in &self.ranks {
            counts[r - 1] += 1;
        }
        counts
    }
}

fn check_ranks(ranks: &[usize], bound: usize, name: &str) -> Result<()> {
    if let Some((i, &r)) = ranks.iter().enumerate().find(|(_, &r)| r == 0 || r > bound) {
        return Err(Error::domain(format!(
            "rank {r} of user {i} outside [1, {name}={bound}]"
        )));
    }
    Ok(())
}

/// Probability mass function over ranks `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPmf {
    mass: Vec<f64>,
}

impl RankPmf {
    /// Validates `mass` as a pmf. Entries in `[-1e-12, 0)` are clamped to zero;
    /// the total must be within `1e-9` of one.
    pub fn new(mut mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::domain("a pmf needs a non-empty support"));
        }
        for (i, m) in mass.iter_mut().enumerate() {
            if !m.is_finite() || *m < -NEGATIVE_MASS_SLACK {
                return Err(Error::domain(format!(
                    "mass {m} at rank {} is invalid",
                    i + 1
                )));
            }
            if *m < 0.0 {
                *m = 0.0;
            }
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_SLACK {
            return Err(Error::domain(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self { mass })
    }

    /// Scales non-negative weights to unit mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("weights sum to zero"));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(support: usize) -> Result<Self> {
        if support == 0 {
            return Err(Error::domain("a pmf needs a non-empty support"));
        }
        Ok(Self {
            mass: vec![1.0 / support as f64; support],
        })
    }

    pub fn point_mass(support: usize, rank: usize) -> Result<Self> {
        if rank == 0 || rank > support {
            return Err(Error::domain(format!("rank {rank} outside [1, {support}]")));
        }
        let mut mass = vec![0.0; support];
        mass[rank - 1] = 1.0;
        Ok(Self { mass })
    }

    /// Counts already validated to lie in `1..=support`.
    pub(crate) fn from_counts(values: &[usize], support: usize) -> Self {
        let mut mass = vec![0.0; support];
        for &v in values {
            mass[v - 1] += 1.0;
        }
        let m = values.len() as f64;
        for x in &mut mass {
            *x /= m;
        }
        Self { mass }
    }

    pub fn support_size(&self) -> usize {
        self.mass.len()
    }

    /// Mass at the 1-based rank `rank`.
    pub fn mass(&self, rank: usize) -> f64 {
        self.mass[rank - 1]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_masses(self) -> Vec<f64> {
        self.mass
    }

    /// `P(rank <= K)` for `K = 1..=L`.
    pub fn cdf(&self) -> Vec<f64> {
        self.mass
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    /// Probability that a uniformly drawn competitor outranks an item at
    /// global rank `rank`: `(rank - 1) / (L - 1)`.
    pub fn theta(&self, rank: usize) -> f64 {
        (rank - 1) as f64 / (self.mass.len() - 1) as f64
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .mass
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Which top-K metric a [`MetricSpec`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Recall,
    Precision,
    #[serde(rename = "ndcg")]
    Ndcg,
    #[serde(rename = "ap")]
    Ap,
    #[serde(rename = "auc")]
    Auc,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Recall,
        MetricKind::Precision,
        MetricKind::Ndcg,
        MetricKind::Ap,
        MetricKind::Auc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Recall => "Recall",
            MetricKind::Precision => "Precision",
            MetricKind::Ndcg => "NDCG",
            MetricKind::Ap => "AP",
            MetricKind::Auc => "AUC",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recall" => Ok(MetricKind::Recall),
            "precision" => Ok(MetricKind::Precision),
            "ndcg" => Ok(MetricKind::Ndcg),
            "ap" | "map" => Ok(MetricKind::Ap),
            "auc" => Ok(MetricKind::Auc),
            other => Err(Error::domain(format!("unknown metric `{other}`"))),
        }
    }
}

/// A metric together with its cutoff `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub cutoff: usize,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::domain("cutoff K must be >= 1"));
        }
        Ok(Self { kind, cutoff })
    }

    pub(crate) fn check_support(&self, support: usize) -> Result<()> {
        if self.cutoff > support {
            return Err(Error::domain(format!(
                "cutoff K={} exceeds rank support {support}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.cutoff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_out_of_range_ranks() {
        assert!(RankDataset::new(10, vec![1, 11]).is_err());
        assert!(RankDataset::new(10, vec![0]).is_err());
        assert!(RankDataset::new(1, vec![1]).is_err());
        assert!(RankDataset::new(10, vec![]).is_err());
        assert!(RankDataset::new(10, vec![1, 10]).is_ok());
    }

    #[test]
    fn sampled_ranks_check_pool_bounds() {
        let wr = SamplingScheme::WithReplacement;
        assert!(SampledRanks::new(10, 1, wr, vec![1]).is_err());
        assert!(SampledRanks::new(10, 11, wr, vec![1]).is_err());
        assert!(SampledRanks::new(10, 5, wr, vec![6]).is_err());
        let sr = SampledRanks::new(10, 5, wr, vec![1, 1, 5]).unwrap();
        assert_eq!(sr.counts(), vec![2, 0, 0, 0, 1]);
    }

    #[test]
    fn pmf_validation() {
        assert!(RankPmf::new(vec![0.5, 0.5]).is_ok());
        assert!(RankPmf::new(vec![0.6, 0.5]).is_err());
        assert!(RankPmf::new(vec![1.0 + 1e-13, -1e-13]).is_ok());
        assert!(RankPmf::new(vec![1.1, -0.1]).is_err());
        assert!(RankPmf::new(vec![]).is_err());
        let p = RankPmf::new(vec![1.0 + 1e-13, -1e-13]).unwrap();
        assert_eq!(p.mass(2), 0.0);
    }

    #[test]
    fn cdf_and_theta() {
        let p = RankPmf::new(vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(p.cdf(), vec![0.25, 0.5, 1.0]);
        assert_eq!(p.theta(1), 0.0);
        assert_eq!(p.theta(3), 1.0);
        assert_eq!(p.theta(2), 0.5);
    }

    #[test]
    fn metric_kind_parsing() {
        assert_eq!("NDCG".parse::<MetricKind>().unwrap(), MetricKind::Ndcg);
        assert_eq!("ap".parse::<MetricKind>().unwrap(), MetricKind::Ap);
        assert!("mrr".parse::<MetricKind>().is_err());
        assert_eq!(
            MetricSpec::new(MetricKind::Recall, 10).unwrap().to_string(),
            "Recall@10"
        );
        assert!(MetricSpec::new(MetricKind::Recall, 0).is_err());
    }
}
