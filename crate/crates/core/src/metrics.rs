//! Top-K metric weights and the three ways of evaluating a metric: from
//! global ranks, naively from sampled ranks, and from a rank distribution.

use crate::error::{Error, Result};
use crate::types::{MetricKind, MetricSpec, RankDataset, RankPmf, SampledRanks};

/// Importance of a hit at `rank` without the top-K indicator.
///
/// `rank` may be fractional; that extension is used for decaying weights.
pub(crate) fn importance(kind: MetricKind, rank: f64, support: usize, cutoff: usize) -> f64 {
    match kind {
        MetricKind::Recall => 1.0,
        MetricKind::Precision => 1.0 / cutoff as f64,
        MetricKind::Ndcg => 1.0 / (rank + 1.0).log2(),
        MetricKind::Ap => 1.0 / rank,
        MetricKind::Auc => (support as f64 - rank) / (support as f64 - 1.0),
    }
}

#[inline]
pub(crate) fn weight_unchecked(
    kind: MetricKind,
    rank: usize,
    support: usize,
    cutoff: usize,
) -> f64 {
    if rank > cutoff {
        0.0
    } else {
        importance(kind, rank as f64, support, cutoff)
    }
}

/// Top-K weight of a hit at global rank `rank` in a catalog of `num_items`.
pub fn weight(kind: MetricKind, rank: usize, num_items: usize, cutoff: usize) -> Result<f64> {
    if num_items < 2 {
        return Err(Error::domain(format!(
            "catalog size {num_items} must be >= 2"
        )));
    }
    if rank == 0 || rank > num_items {
        return Err(Error::domain(format!(
            "rank {rank} outside [1, {num_items}]"
        )));
    }
    if cutoff == 0 || cutoff > num_items {
        return Err(Error::domain(format!(
            "cutoff {cutoff} outside [1, {num_items}]"
        )));
    }
    Ok(weight_unchecked(kind, rank, num_items, cutoff))
}

/// Weight of each rank `1..=support`, index `R - 1`.
pub(crate) fn weight_vector(spec: MetricSpec, support: usize) -> Vec<f64> {
    (1..=support)
        .map(|r| weight_unchecked(spec.kind, r, support, spec.cutoff))
        .collect()
}

fn mean_weight(ranks: &[usize], spec: MetricSpec, support: usize) -> f64 {
    let total: f64 = ranks
        .iter()
        .map(|&r| weight_unchecked(spec.kind, r, support, spec.cutoff))
        .sum();
    total / ranks.len() as f64
}

/// Metric@K over the full catalog.
pub fn exact_metric(ds: &RankDataset, spec: MetricSpec) -> Result<f64> {
    spec.check_support(ds.num_items())?;
    Ok(mean_weight(ds.ranks(), spec, ds.num_items()))
}

/// Metric@K computed as if the sampled ranks were global ranks over `n` items.
///
/// This is biased whenever `n < N`; it is kept as a reference point.
pub fn sampled_metric(sr: &SampledRanks, spec: MetricSpec) -> Result<f64> {
    spec.check_support(sr.pool_size())?;
    Ok(mean_weight(sr.ranks(), spec, sr.pool_size()))
}

/// `sum_{R <= K} pmf(R) * M(R)`.
pub fn metric_from_pmf(pmf: &RankPmf, spec: MetricSpec) -> Result<f64> {
    let support = pmf.support_size();
    if support < 2 {
        return Err(Error::domain("a metric pmf needs support >= 2"));
    }
    spec.check_support(support)?;
    Ok(pmf.masses()[..spec.cutoff]
        .iter()
        .enumerate()
        .map(|(i, &p)| p * weight_unchecked(spec.kind, i + 1, support, spec.cutoff))
        .sum())
}

/// Like [`metric_from_pmf`], but insists the pmf lives on `1..=num_items`.
pub fn metric_from_pmf_checked(pmf: &RankPmf, num_items: usize, spec: MetricSpec) -> Result<f64> {
    if pmf.support_size() != num_items {
        return Err(Error::SupportMismatch {
            expected: num_items,
            actual: pmf.support_size(),
        });
    }
    metric_from_pmf(pmf, spec)
}

/// Fraction of `values` equal to each rank in `1..=support`.
pub fn empirical_pmf(values: &[usize], support: usize) -> Result<RankPmf> {
    if values.is_empty() {
        return Err(Error::domain("empirical pmf of an empty sample"));
    }
    if support == 0 {
        return Err(Error::domain("empirical pmf needs a non-empty support"));
    }
    if let Some(&v) = values.iter().find(|&&v| v == 0 || v > support) {
        return Err(Error::domain(format!("value {v} outside [1, {support}]")));
    }
    Ok(RankPmf::from_counts(values, support))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: MetricKind, k: usize) -> MetricSpec {
        MetricSpec::new(kind, k).unwrap()
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight(MetricKind::Ndcg, 1, 100, 10).unwrap(), 1.0);
        assert_eq!(weight(MetricKind::Ap, 4, 100, 10).unwrap(), 0.25);
        assert_eq!(weight(MetricKind::Ap, 11, 100, 10).unwrap(), 0.0);
        for n in [2, 7, 1000] {
            assert_eq!(weight(MetricKind::Auc, 1, n, n).unwrap(), 1.0);
        }
        assert_eq!(weight(MetricKind::Precision, 3, 100, 4).unwrap(), 0.25);
        assert_eq!(weight(MetricKind::Recall, 10, 100, 10).unwrap(), 1.0);
    }

    #[test]
    fn weight_domain_errors() {
        assert!(weight(MetricKind::Recall, 0, 10, 5).is_err());
        assert!(weight(MetricKind::Recall, 11, 10, 5).is_err());
        assert!(weight(MetricKind::Recall, 1, 10, 0).is_err());
        assert!(weight(MetricKind::Recall, 1, 10, 11).is_err());
    }

    #[test]
    fn exact_metric_examples() {
        let ds = RankDataset::new(100, vec![1, 3, 20]).unwrap();
        let v = exact_metric(&ds, spec(MetricKind::Recall, 10)).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);

        let ds = RankDataset::new(100, vec![1]).unwrap();
        assert_eq!(exact_metric(&ds, spec(MetricKind::Ndcg, 10)).unwrap(), 1.0);

        let ds = RankDataset::new(100, vec![2, 2]).unwrap();
        assert_eq!(exact_metric(&ds, spec(MetricKind::Ap, 10)).unwrap(), 0.5);
    }

    #[test]
    fn recall_at_full_cutoff_is_one() {
        let ds = RankDataset::new(50, vec![1, 17, 50, 33]).unwrap();
        assert_eq!(
            exact_metric(&ds, spec(MetricKind::Recall, 50)).unwrap(),
            1.0
        );
    }

    #[test]
    fn sampled_metric_examples() {
        let wr = crate::SamplingScheme::WithReplacement;
        let sr = SampledRanks::new(1000, 100, wr, vec![1, 1]).unwrap();
        assert_eq!(
            sampled_metric(&sr, spec(MetricKind::Recall, 10)).unwrap(),
            1.0
        );
        let sr = SampledRanks::new(1000, 100, wr, vec![50]).unwrap();
        assert_eq!(
            sampled_metric(&sr, spec(MetricKind::Recall, 10)).unwrap(),
            0.0
        );
        let sr = SampledRanks::new(1000, 100, wr, vec![1, 2]).unwrap();
        assert_eq!(sampled_metric(&sr, spec(MetricKind::Ap, 10)).unwrap(), 0.75);
        assert!(sampled_metric(&sr, spec(MetricKind::Ap, 101)).is_err());
    }

    #[test]
    fn metric_from_pmf_examples() {
        let p = empirical_pmf(&[1, 3, 20], 100).unwrap();
        let v = metric_from_pmf(&p, spec(MetricKind::Recall, 10)).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);

        let p = RankPmf::point_mass(100, 1).unwrap();
        for k in [1, 5, 100] {
            assert_eq!(metric_from_pmf(&p, spec(MetricKind::Ndcg, k)).unwrap(), 1.0);
        }

        let p = RankPmf::uniform(40).unwrap();
        let v = metric_from_pmf(&p, spec(MetricKind::Recall, 10)).unwrap();
        assert!((v - 0.25).abs() < 1e-15);

        assert!(matches!(
            metric_from_pmf_checked(&p, 41, spec(MetricKind::Recall, 10)),
            Err(Error::SupportMismatch { .. })
        ));
    }

    #[test]
    fn empirical_pmf_examples() {
        let p = empirical_pmf(&[1, 1, 2], 3).unwrap();
        assert_eq!(p.masses(), &[2.0 / 3.0, 1.0 / 3.0, 0.0]);
        let p = empirical_pmf(&[5], 5).unwrap();
        assert_eq!(p.masses(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        let p = empirical_pmf(&[1, 2, 3, 4], 4).unwrap();
        assert_eq!(p.masses(), &[0.25; 4]);
        assert!(empirical_pmf(&[], 4).is_err());
        assert!(empirical_pmf(&[5], 4).is_err());
    }

    fn any_kind() -> impl Strategy<Value = MetricKind> {
        prop::sample::select(MetricKind::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn pmf_route_matches_exact(
            n in 2usize..300,
            raw in prop::collection::vec(0usize..10_000, 1..200),
            kind in any_kind(),
            k_frac in 0.0f64..1.0,
        ) {
            let ranks: Vec<usize> = raw.iter().map(|x| x % n + 1).collect();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let s = spec(kind, k);
            let ds = RankDataset::new(n, ranks.clone()).unwrap();
            let exact = exact_metric(&ds, s).unwrap();
            let via_pmf = metric_from_pmf(&empirical_pmf(&ranks, n).unwrap(), s).unwrap();
            prop_assert!((exact - via_pmf).abs() <= 1e-12);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&exact));
        }

        #[test]
        fn weight_is_non_increasing(n in 2usize..500, kind in any_kind(), k_frac in 0.0f64..1.0) {
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let w: Vec<f64> = (1..=n).map(|r| weight(kind, r, n, k).unwrap()).collect();
            prop_assert!(w.windows(2).all(|p| p[1] <= p[0]));
        }
    }
}
