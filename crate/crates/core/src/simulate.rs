//! Synthetic ground truth and negative sampling.
//!
//! All randomness comes from ChaCha8 seeded through
//! `ChaCha8Rng::seed_from_u64(seed)`; for a fixed seed every output here is
//! reproducible bit for bit.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RankDataset, RankPmf, SampledRanks, SamplingScheme};

/// Shape of the global-rank distribution to draw users from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RankFamily {
    Uniform,
    /// `P(R) ∝ R^-s`.
    Zipf {
        s: f64,
    },
    /// `P(R) ∝ (1 - p)^(R - 1)`.
    Geometric {
        p: f64,
    },
    #[serde(skip)]
    Custom(RankPmf),
}

impl RankFamily {
    /// The family's pmf over `1..=num_items`.
    pub fn pmf(&self, num_items: usize) -> Result<RankPmf> {
        match self {
            RankFamily::Uniform => RankPmf::uniform(num_items),
            RankFamily::Zipf { s } => {
                if !(*s > 0.0 && s.is_finite()) {
                    return Err(Error::domain(format!("Zipf exponent s={s} must be > 0")));
                }
                RankPmf::from_weights((1..=num_items).map(|r| (r as f64).powf(-s)).collect())
            }
            RankFamily::Geometric { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::domain(format!("geometric p={p} must be in (0, 1)")));
                }
                let q = 1.0 - p;
                RankPmf::from_weights((0..num_items).map(|k| q.powi(k as i32)).collect())
            }
            RankFamily::Custom(pmf) => {
                if pmf.support_size() != num_items {
                    return Err(Error::SupportMismatch {
                        expected: num_items,
                        actual: pmf.support_size(),
                    });
                }
                Ok(pmf.clone())
            }
        }
    }
}

impl std::str::FromStr for RankFamily {
    type Err = Error;

    /// `uniform`, `zipf:<s>`, or `geometric:<p>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let param = |what: &str| {
            arg.parse::<f64>()
                .map_err(|_| Error::domain(format!("`{s}`: expected {what} after `:`")))
        };
        match name {
            "uniform" => Ok(RankFamily::Uniform),
            "zipf" => Ok(RankFamily::Zipf {
                s: param("an exponent")?,
            }),
            "geometric" => Ok(RankFamily::Geometric {
                p: param("a probability")?,
            }),
            _ => Err(Error::domain(format!("unknown rank family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub num_items: usize,
    pub num_users: usize,
    pub family: RankFamily,
    pub seed: u64,
}

/// `num_users` i.i.d. global ranks from the family pmf.
pub fn generate_truth(spec: &TruthSpec) -> Result<RankDataset> {
    if spec.num_users == 0 {
        return Err(Error::domain("need at least one user"));
    }
    if spec.num_items < 2 {
        return Err(Error::domain("catalog size must be >= 2"));
    }
    let pmf = spec.family.pmf(spec.num_items)?;
    let dist = WeightedIndex::new(pmf.masses()).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ranks = (0..spec.num_users)
        .map(|_| dist.sample(&mut rng) + 1)
        .collect();
    RankDataset::new(spec.num_items, ranks)
}

/// Ranks each user's relevant item against `pool_size - 1` competitors drawn
/// uniformly from the other `N - 1` items.
///
/// Competitors are identified with `0..N-1`, where ids below `R_u - 1` are
/// exactly the items ranked above the relevant one, so the sampled rank is
/// one plus the number of drawn ids below `R_u - 1`.
pub fn sample_ranks(
    ds: &RankDataset,
    pool_size: usize,
    scheme: SamplingScheme,
    seed: u64,
) -> Result<SampledRanks> {
    let big = ds.num_items();
    if pool_size < 2 || pool_size > big {
        return Err(Error::domain(format!(
            "pool size n={pool_size} must satisfy 2 <= n <= N={big}"
        )));
    }
    let draws = pool_size - 1;
    let candidates = big - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks = ds
        .ranks()
        .iter()
        .map(|&rank| {
            let above = rank - 1;
            let outranked = match scheme {
                SamplingScheme::WithoutReplacement => index::sample(&mut rng, candidates, draws)
                    .iter()
                    .filter(|&id| id < above)
                    .count(),
                SamplingScheme::WithReplacement => (0..draws)
                    .filter(|_| rng.random_range(0..candidates) < above)
                    .count(),
            };
            outranked + 1
        })
        .collect();
    SampledRanks::new(big, pool_size, scheme, ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::empirical_pmf;
    use crate::model::{mixture_pmf, ConditionalModel};

    #[test]
    fn point_mass_truth() {
        let spec = TruthSpec {
            num_items: 50,
            num_users: 5,
            family: RankFamily::Custom(RankPmf::point_mass(50, 1).unwrap()),
            seed: 1,
        };
        assert_eq!(generate_truth(&spec).unwrap().ranks(), &[1, 1, 1, 1, 1]);
    }

    #[test]
    fn uniform_truth_law_of_large_numbers() {
        let spec = TruthSpec {
            num_items: 10,
            num_users: 1_000_000,
            family: RankFamily::Uniform,
            seed: 7,
        };
        let ds = generate_truth(&spec).unwrap();
        let p = ds.empirical_pmf();
        assert!(p.masses().iter().all(|m| (m - 0.1).abs() < 0.005));
    }

    #[test]
    fn zipf_head_ratio() {
        let spec = TruthSpec {
            num_items: 100,
            num_users: 1_000_000,
            family: RankFamily::Zipf { s: 1.0 },
            seed: 9,
        };
        let p = generate_truth(&spec).unwrap().empirical_pmf();
        let ratio = p.mass(1) / p.mass(2);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn truth_is_reproducible() {
        let spec = TruthSpec {
            num_items: 300,
            num_users: 1000,
            family: RankFamily::Geometric { p: 0.05 },
            seed: 42,
        };
        assert_eq!(
            generate_truth(&spec).unwrap(),
            generate_truth(&spec).unwrap()
        );
        let other = TruthSpec {
            seed: 43,
            ..spec.clone()
        };
        assert_ne!(
            generate_truth(&spec).unwrap(),
            generate_truth(&other).unwrap()
        );
    }

    #[test]
    fn extreme_ranks_are_deterministic() {
        let ds = RankDataset::new(40, vec![1, 40, 1, 40]).unwrap();
        for scheme in [
            SamplingScheme::WithReplacement,
            SamplingScheme::WithoutReplacement,
        ] {
            let sr = sample_ranks(&ds, 8, scheme, 3).unwrap();
            assert_eq!(sr.ranks()[0], 1);
            assert_eq!(sr.ranks()[2], 1);
            if scheme == SamplingScheme::WithoutReplacement {
                assert_eq!(sr.ranks()[1], 8);
            }
        }
        // Every competitor outranks the last item, with or without replacement.
        let sr = sample_ranks(&ds, 8, SamplingScheme::WithReplacement, 3).unwrap();
        assert_eq!(sr.ranks()[1], 8);
    }

    #[test]
    fn bernoulli_concentration() {
        let ds = RankDataset::new(101, vec![51; 1_000_000]).unwrap();
        let sr = sample_ranks(&ds, 2, SamplingScheme::WithReplacement, 5).unwrap();
        let frac = sr.ranks().iter().filter(|&&r| r == 1).count() as f64 / 1e6;
        assert!((frac - 0.5).abs() < 0.002, "{frac}");
    }

    #[test]
    fn sampled_pmf_matches_model_mixture() {
        let spec = TruthSpec {
            num_items: 200,
            num_users: 1_000_000,
            family: RankFamily::Zipf { s: 0.8 },
            seed: 1,
        };
        let ds = generate_truth(&spec).unwrap();
        for scheme in [
            SamplingScheme::WithReplacement,
            SamplingScheme::WithoutReplacement,
        ] {
            let sr = sample_ranks(&ds, 10, scheme, 2).unwrap();
            let model = ConditionalModel::new(200, 10, scheme).unwrap();
            let q = mixture_pmf(&ds.empirical_pmf(), &model).unwrap();
            let observed = empirical_pmf(sr.ranks(), 10).unwrap();
            for r in 1..=10 {
                assert!(
                    (q.mass(r) - observed.mass(r)).abs() < 0.01,
                    "{scheme} r={r}"
                );
            }
        }
    }

    #[test]
    fn pool_size_bounds() {
        let ds = RankDataset::new(10, vec![3]).unwrap();
        assert!(sample_ranks(&ds, 1, SamplingScheme::WithReplacement, 0).is_err());
        assert!(sample_ranks(&ds, 11, SamplingScheme::WithReplacement, 0).is_err());
        assert!(sample_ranks(&ds, 10, SamplingScheme::WithoutReplacement, 0).is_ok());
    }

    #[test]
    fn family_parsing() {
        assert_eq!(
            "zipf:1.2".parse::<RankFamily>().unwrap(),
            RankFamily::Zipf { s: 1.2 }
        );
        assert_eq!(
            "uniform".parse::<RankFamily>().unwrap(),
            RankFamily::Uniform
        );
        assert!("zipf".parse::<RankFamily>().is_err());
        assert!("poisson:3".parse::<RankFamily>().is_err());
        assert!(RankFamily::Geometric { p: 1.5 }.pmf(10).is_err());
    }
}
