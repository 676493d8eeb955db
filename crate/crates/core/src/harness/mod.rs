//! Repeated-sampling experiments.
//!
//! Each algorithm is represented by its fixed global ranks. A repeat draws
//! fresh negatives for every user (the same draws for every algorithm within
//! a repeat, so algorithms share the user population), runs every estimator
//! on the resulting sampled ranks, and records the estimated metrics and
//! rank distributions. Repeats run in parallel; each repeat's seed is derived
//! from the plan seed and the repeat index, and results are aggregated in
//! repeat order, so outputs are identical for any thread count.

mod distribution;
mod plot;
mod tables;

pub use distribution::{
    run_distribution_accuracy, run_sample_size_sweep, write_distribution_files, write_sweep_files,
    DistributionCurves, EstimatorCurve, SweepRow,
};
pub use plot::line_chart_svg;
pub use tables::{
    run_estimation_table, run_winner_prediction, CellStat, EstimationTable, TableRow, WinnerRow,
    WinnerTable,
};

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{
    mes_optimize, mle_em, wmle_em, BvConfig, BvSolver, EmConfig, MesConfig, WeightKind, WeightSpec,
};
use crate::ingest::{read_ranks, RunConfig};
use crate::metrics::{metric_from_pmf, sampled_metric};
use crate::model::ConditionalModel;
use crate::simulate::{generate_truth, sample_ranks, RankFamily, TruthSpec};
use crate::types::{MetricKind, MetricSpec, RankDataset, RankPmf, SampledRanks, SamplingScheme};

/// One estimator column of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorChoice {
    /// Sampled ranks read as if they were global ranks.
    Sampled,
    Bv {
        gamma: f64,
    },
    Mle,
    Wmle(WeightSpec),
    Mes {
        eta: f64,
    },
}

impl EstimatorChoice {
    /// The default column set: BV 0.1, BV 0.01, MLE, WMLE (NDCG decay, C=10), MES (eta=0.001).
    pub fn standard() -> Vec<Self> {
        vec![
            EstimatorChoice::Bv { gamma: 0.1 },
            EstimatorChoice::Bv { gamma: 0.01 },
            EstimatorChoice::Mle,
            EstimatorChoice::Wmle(WeightSpec::ndcg(10.0)),
            EstimatorChoice::Mes { eta: 0.001 },
        ]
    }

    pub fn label(&self) -> String {
        match self {
            EstimatorChoice::Sampled => "Sampled".into(),
            EstimatorChoice::Bv { gamma } => format!("BV {gamma}"),
            EstimatorChoice::Mle => "MLE".into(),
            EstimatorChoice::Wmle(w) => match w.kind {
                WeightKind::NdcgDecay if w.scale == 10.0 => "WMLE".into(),
                WeightKind::NdcgDecay => format!("WMLE ndcg:{}", w.scale),
                WeightKind::ApDecay => format!("WMLE ap:{}", w.scale),
                WeightKind::None => "WMLE none".into(),
            },
            EstimatorChoice::Mes { eta } if *eta == 0.001 => "MES".into(),
            EstimatorChoice::Mes { eta } => format!("MES {eta}"),
        }
    }

    pub fn yields_pmf(&self) -> bool {
        !matches!(self, EstimatorChoice::Sampled)
    }
}

impl fmt::Display for EstimatorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for EstimatorChoice {
    type Err = Error;

    /// `sampled`, `bv:<gamma>`, `mle`, `wmle[:ndcg|ap[:<C>]]`, `mes[:<eta>]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("estimator `{s}`: `{v}` is not a number")))
        };
        let choice = match parts.as_slice() {
            ["sampled"] => EstimatorChoice::Sampled,
            ["bv", g] => EstimatorChoice::Bv { gamma: num(g)? },
            ["mle"] => EstimatorChoice::Mle,
            ["wmle"] => EstimatorChoice::Wmle(WeightSpec::ndcg(10.0)),
            ["wmle", kind] | ["wmle", kind, _] => {
                let scale = match parts.get(2) {
                    Some(c) => num(c)?,
                    None => 10.0,
                };
                match *kind {
                    "ndcg" => EstimatorChoice::Wmle(WeightSpec::ndcg(scale)),
                    "ap" => EstimatorChoice::Wmle(WeightSpec::ap(scale)),
                    other => return Err(Error::Config(format!("unknown WMLE weight `{other}`"))),
                }
            }
            ["mes"] => EstimatorChoice::Mes { eta: 0.001 },
            ["mes", eta] => EstimatorChoice::Mes { eta: num(eta)? },
            _ => return Err(Error::Config(format!("unknown estimator `{s}`"))),
        };
        Ok(choice)
    }
}

/// A named algorithm and its fixed global ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct Algorithm {
    pub name: String,
    pub truth: RankDataset,
}

impl Algorithm {
    pub fn new(name: impl Into<String>, truth: RankDataset) -> Self {
        Self {
            name: name.into(),
            truth,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub algorithms: Vec<Algorithm>,
    pub estimators: Vec<EstimatorChoice>,
    pub metrics: Vec<MetricKind>,
    pub ks: Vec<usize>,
    pub repeats: usize,
    /// Sample pool size `n` (the relevant item plus `n - 1` negatives).
    pub pool_size: usize,
    pub seed: u64,
    /// How negatives are drawn when simulating a repeat.
    pub sampling_scheme: SamplingScheme,
    /// Which conditional model the estimators assume.
    pub model_scheme: SamplingScheme,
    /// Largest rank emitted in distribution curves.
    pub r_max: usize,
    pub sweep_sizes: Vec<usize>,
    pub em: EmConfig,
    pub mes: MesConfig,
}

impl ExperimentPlan {
    pub fn new(algorithms: Vec<Algorithm>) -> Self {
        Self {
            algorithms,
            estimators: EstimatorChoice::standard(),
            metrics: vec![MetricKind::Recall, MetricKind::Ndcg, MetricKind::Ap],
            ks: vec![1, 5, 10, 20],
            repeats: 100,
            pool_size: 100,
            seed: 0,
            sampling_scheme: SamplingScheme::WithoutReplacement,
            model_scheme: SamplingScheme::WithReplacement,
            r_max: 200,
            sweep_sizes: vec![100, 500],
            em: EmConfig::default(),
            mes: MesConfig::default(),
        }
    }

    /// Builds a plan from a run configuration, loading or generating inputs.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let mut algorithms = Vec::with_capacity(cfg.inputs.len());
        for input in &cfg.inputs {
            let truth = match (&input.path, &input.family) {
                (Some(path), None) => read_ranks(path)?.into_global()?,
                (None, Some(family)) => {
                    let missing = |what: &str| {
                        Error::Config(format!("input `{}` needs `{what}`", input.name))
                    };
                    generate_truth(&TruthSpec {
                        num_items: input.num_items.ok_or_else(|| missing("num_items"))?,
                        num_users: input.num_users.ok_or_else(|| missing("num_users"))?,
                        family: family.parse::<RankFamily>()?,
                        seed: input.seed.unwrap_or(cfg.seed),
                    })?
                }
                _ => {
                    return Err(Error::Config(format!(
                        "input `{}` needs exactly one of `path` or `family`",
                        input.name
                    )))
                }
            };
            algorithms.push(Algorithm::new(input.name.clone(), truth));
        }
        let mut plan = Self::new(algorithms);
        plan.estimators = cfg
            .estimators
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        plan.metrics = cfg
            .metrics
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        plan.ks = cfg.ks.clone();
        plan.repeats = cfg.repeats;
        plan.pool_size = cfg.n;
        plan.seed = cfg.seed;
        plan.sampling_scheme = cfg.sampling_scheme.parse()?;
        plan.model_scheme = cfg.model_scheme.parse()?;
        plan.r_max = cfg.r_max;
        plan.sweep_sizes = cfg.sweep_sizes.clone();
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.algorithms.is_empty() {
            return bad("the plan has no algorithms".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1".into());
        }
        if self.estimators.is_empty() {
            return bad("the plan has no estimators".into());
        }
        let mut labels: Vec<String> = self.estimators.iter().map(|e| e.label()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("estimator columns must be distinct".into());
        }
        for e in &self.estimators {
            match e {
                EstimatorChoice::Bv { gamma } if !(0.0..=1.0).contains(gamma) => {
                    return bad(format!("BV gamma {gamma} outside [0, 1]"))
                }
                EstimatorChoice::Mes { eta } if eta.is_nan() || *eta < 0.0 => {
                    return bad(format!("MES eta {eta} must be >= 0"))
                }
                EstimatorChoice::Wmle(w)
                    if w.kind != WeightKind::None && (w.scale.is_nan() || w.scale <= 1.0) =>
                {
                    return bad(format!("WMLE scale {} must be > 1", w.scale))
                }
                _ => {}
            }
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("the K list must be non-empty with every K >= 1".into());
        }
        for a in &self.algorithms {
            let big = a.truth.num_items();
            if self.pool_size < 2 || self.pool_size > big {
                return bad(format!(
                    "n={} must satisfy 2 <= n <= N={big} for `{}`",
                    self.pool_size, a.name
                ));
            }
            if let Some(k) = self.ks.iter().find(|&&k| k > big) {
                return bad(format!("K={k} exceeds N={big} for `{}`", a.name));
            }
        }
        Ok(())
    }

    pub(crate) fn metric_specs(&self) -> Vec<MetricSpec> {
        let mut ks = self.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        ks.iter()
            .flat_map(|&k| {
                self.metrics
                    .iter()
                    .map(move |&kind| MetricSpec { kind, cutoff: k })
            })
            .collect()
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the negative draws in `repeat`, shared by all algorithms.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    mix64(seed ^ mix64(repeat as u64))
}

/// Sum in a fixed binary tree; the result depends only on the input order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0)).sqrt())
}

/// What one estimator produced on one sampled dataset.
#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    /// One value per requested metric spec, in request order.
    pub metrics: Vec<f64>,
    pub pmf: Option<RankPmf>,
}

/// Per-`(N, n)` state reused across repeats: the conditional model and the
/// factored BV systems with their per-metric corrections.
pub struct Estimation {
    estimators: Vec<EstimatorChoice>,
    specs: Vec<MetricSpec>,
    model: ConditionalModel,
    bv: BTreeMap<usize, (BvSolver, Vec<Vec<f64>>)>,
    em: EmConfig,
    mes: MesConfig,
}

impl Estimation {
    pub fn new(
        num_items: usize,
        pool_size: usize,
        model_scheme: SamplingScheme,
        estimators: &[EstimatorChoice],
        specs: &[MetricSpec],
        em: &EmConfig,
        mes: &MesConfig,
    ) -> Result<Self> {
        let model = ConditionalModel::new(num_items, pool_size, model_scheme)?;
        let mut bv = BTreeMap::new();
        for (i, e) in estimators.iter().enumerate() {
            if let EstimatorChoice::Bv { gamma } = e {
                let solver = BvSolver::new(&model, &BvConfig::new(*gamma))?;
                let per_spec = specs
                    .iter()
                    .map(|&s| solver.rank_estimates(s))
                    .collect::<Result<Vec<_>>>()?;
                bv.insert(i, (solver, per_spec));
            }
        }
        Ok(Self {
            estimators: estimators.to_vec(),
            specs: specs.to_vec(),
            model,
            bv,
            em: em.clone(),
            mes: *mes,
        })
    }

    pub fn model(&self) -> &ConditionalModel {
        &self.model
    }

    /// Runs every estimator; a failing estimator yields `Err` in its slot only.
    pub fn run(&self, sr: &SampledRanks, need_pmf: bool) -> Vec<Result<EstimateOutcome>> {
        (0..self.estimators.len())
            .map(|i| self.run_one(i, sr, need_pmf))
            .collect()
    }

    fn run_one(&self, idx: usize, sr: &SampledRanks, need_pmf: bool) -> Result<EstimateOutcome> {
        let from_pmf = |pmf: RankPmf| -> Result<EstimateOutcome> {
            let metrics = self
                .specs
                .iter()
                .map(|&s| metric_from_pmf(&pmf, s))
                .collect::<Result<_>>()?;
            Ok(EstimateOutcome {
                metrics,
                pmf: Some(pmf),
            })
        };
        match &self.estimators[idx] {
            EstimatorChoice::Sampled => {
                let metrics = self
                    .specs
                    .iter()
                    .map(|&s| sampled_metric(sr, s))
                    .collect::<Result<_>>()?;
                Ok(EstimateOutcome { metrics, pmf: None })
            }
            EstimatorChoice::Bv { .. } => {
                let (solver, per_spec) = &self.bv[&idx];
                let freq = sr.empirical_pmf();
                let metrics = per_spec
                    .iter()
                    .map(|est| pairwise_dot(freq.masses(), est))
                    .collect();
                let pmf = if need_pmf {
                    Some(solver.pmf(sr)?.pmf)
                } else {
                    None
                };
                Ok(EstimateOutcome { metrics, pmf })
            }
            EstimatorChoice::Mle => from_pmf(mle_em(sr, &self.model, &self.em)?.pmf().clone()),
            EstimatorChoice::Wmle(w) => {
                let cfg = EmConfig {
                    weight: *w,
                    ..self.em.clone()
                };
                from_pmf(wmle_em(sr, &self.model, &cfg)?.pmf().clone())
            }
            EstimatorChoice::Mes { eta } => {
                let cfg = MesConfig {
                    eta: *eta,
                    ..self.mes
                };
                from_pmf(mes_optimize(sr, &self.model, &cfg)?.pmf().clone())
            }
        }
    }
}

fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prods)
}

/// Results of one repeat: `[algorithm][estimator]`.
pub(crate) type RepeatResults = Vec<Vec<Result<EstimateOutcome>>>;

/// Runs all repeats at pool size `pool_size`, in parallel, returning results
/// in repeat order.
pub(crate) fn run_repeats(
    plan: &ExperimentPlan,
    pool_size: usize,
    need_pmf: bool,
) -> Result<Vec<RepeatResults>> {
    let specs = plan.metric_specs();
    let mut engines: BTreeMap<usize, Estimation> = BTreeMap::new();
    for a in &plan.algorithms {
        let big = a.truth.num_items();
        if let Entry::Vacant(slot) = engines.entry(big) {
            slot.insert(Estimation::new(
                big,
                pool_size,
                plan.model_scheme,
                &plan.estimators,
                &specs,
                &plan.em,
                &plan.mes,
            )?);
        }
    }
    (0..plan.repeats)
        .into_par_iter()
        .map(|rep| {
            let seed = repeat_seed(plan.seed, rep);
            plan.algorithms
                .iter()
                .map(|a| {
                    let sr = sample_ranks(&a.truth, pool_size, plan.sampling_scheme, seed)?;
                    Ok(engines[&a.truth.num_items()].run(&sr, need_pmf))
                })
                .collect::<Result<RepeatResults>>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_parsing_and_labels() {
        let cases = [
            ("bv:0.1", "BV 0.1"),
            ("bv:0.01", "BV 0.01"),
            ("mle", "MLE"),
            ("wmle", "WMLE"),
            ("wmle:ap:5", "WMLE ap:5"),
            ("mes", "MES"),
            ("mes:0.01", "MES 0.01"),
            ("sampled", "Sampled"),
        ];
        for (text, label) in cases {
            assert_eq!(text.parse::<EstimatorChoice>().unwrap().label(), label);
        }
        assert!("em".parse::<EstimatorChoice>().is_err());
        assert!("bv".parse::<EstimatorChoice>().is_err());
        assert!("bv:x".parse::<EstimatorChoice>().is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn repeat_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|r| repeat_seed(7, r)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_eq!(repeat_seed(7, 3), repeat_seed(7, 3));
    }

    #[test]
    fn plan_validation() {
        let ds = RankDataset::new(50, vec![1, 2, 3]).unwrap();
        let mut plan = ExperimentPlan::new(vec![Algorithm::new("a", ds)]);
        plan.pool_size = 10;
        assert!(plan.validate().is_ok());
        plan.ks = vec![60];
        assert!(plan.validate().is_err());
        plan.ks = vec![5];
        plan.pool_size = 51;
        assert!(plan.validate().is_err());
        plan.pool_size = 10;
        plan.repeats = 0;
        assert!(plan.validate().is_err());
        plan.repeats = 1;
        plan.estimators.push(EstimatorChoice::Mle);
        assert!(plan.validate().is_err());
    }
}
