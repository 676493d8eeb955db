use crate::error::{Error, Result};
use crate::estimators::{check_compatible, observed_frequencies, EstimatorReport};
use crate::metrics::importance;
use crate::model::ConditionalModel;
use crate::types::{MetricKind, RankPmf, SampledRanks};

/// Decaying per-observation weight for weighted maximum likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightKind {
    #[default]
    None,
    /// `w(r) = C / r`.
    ApDecay,
    /// `w(r) = 1 / log2(r / C + 1)`.
    NdcgDecay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    /// Stretch factor `C > 1`; larger values flatten the decay.
    pub scale: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            kind: WeightKind::None,
            scale: 10.0,
        }
    }
}

impl WeightSpec {
    pub fn ndcg(scale: f64) -> Self {
        Self {
            kind: WeightKind::NdcgDecay,
            scale,
        }
    }

    pub fn ap(scale: f64) -> Self {
        Self {
            kind: WeightKind::ApDecay,
            scale,
        }
    }

    /// Weight of an observation at sampled rank `r`.
    pub fn weight(&self, sampled: usize) -> f64 {
        let x = sampled as f64 / self.scale;
        match self.kind {
            WeightKind::None => 1.0,
            WeightKind::ApDecay => importance(MetricKind::Ap, x, 2, 1),
            WeightKind::NdcgDecay => importance(MetricKind::Ndcg, x, 2, 1),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kind != WeightKind::None && !(self.scale > 1.0 && self.scale.is_finite()) {
            return Err(Error::domain(format!(
                "weight scale C={} must be finite and > 1",
                self.scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum EmInit {
    #[default]
    Uniform,
    Custom(RankPmf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once no coordinate of `pi` moves by more than this.
    pub tolerance: f64,
    pub init: EmInit,
    pub weight: WeightSpec,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-8,
            init: EmInit::Uniform,
            weight: WeightSpec::default(),
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be >= 1"));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::domain("EM tolerance must be > 0"));
        }
        self.weight.validate()
    }
}

/// Maximum-likelihood mixture weights over global ranks.
///
/// `cfg.weight` is ignored; see [`wmle_em`] for the weighted variant.
pub fn mle_em(
    sr: &SampledRanks,
    model: &ConditionalModel,
    cfg: &EmConfig,
) -> Result<EstimatorReport> {
    let cfg = EmConfig {
        weight: WeightSpec::default(),
        ..cfg.clone()
    };
    wmle_em(sr, model, &cfg)
}

/// Weighted maximum likelihood: observation `u` contributes
/// `w(r_u) * ln p(r_u | pi)`, with weights normalized to sum to one.
///
/// With [`WeightKind::None`] the iterates are those of [`mle_em`].
pub fn wmle_em(
    sr: &SampledRanks,
    model: &ConditionalModel,
    cfg: &EmConfig,
) -> Result<EstimatorReport> {
    check_compatible(sr, model)?;
    cfg.validate()?;
    let big = model.num_items();
    let mut pi = match &cfg.init {
        EmInit::Uniform => vec![1.0 / big as f64; big],
        EmInit::Custom(p) => {
            if p.support_size() != big {
                return Err(Error::SupportMismatch {
                    expected: big,
                    actual: p.support_size(),
                });
            }
            p.masses().to_vec()
        }
    };

    let groups = observation_groups(sr, model, cfg.weight);
    let mut scratch = vec![0.0; big];
    let mut next = vec![0.0; big];
    let mut trace = Vec::with_capacity(cfg.max_iterations.min(10_000) + 1);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        let ll = em_update(&groups, &pi, &mut next, &mut scratch)?;
        trace.push(ll);
        iterations += 1;
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if delta <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    trace.push(log_likelihood(&groups, &pi, &mut scratch)?);

    Ok(EstimatorReport {
        pmf_estimate: Some(RankPmf::new(pi)?),
        objective_trace: trace,
        iterations_used: iterations,
        converged,
        negative_mass_repaired: false,
    })
}

/// Normalized weighted log-likelihood `sum_r omega_r ln sum_R pi_R P(r|R)`
/// where `omega_r` is the normalized weighted frequency of sampled rank `r`.
pub fn weighted_log_likelihood(
    pi: &RankPmf,
    sr: &SampledRanks,
    model: &ConditionalModel,
    weight: WeightSpec,
) -> Result<f64> {
    check_compatible(sr, model)?;
    weight.validate()?;
    if pi.support_size() != model.num_items() {
        return Err(Error::SupportMismatch {
            expected: model.num_items(),
            actual: pi.support_size(),
        });
    }
    let groups = observation_groups(sr, model, weight);
    let mut scratch = vec![0.0; model.num_items()];
    log_likelihood(&groups, pi.masses(), &mut scratch)
}

/// One observed sampled rank: its normalized weight and `ln P(r | R)` over R.
struct Group {
    sampled: usize,
    omega: f64,
    log_col: Vec<f64>,
    /// `exp(log_col - shift)`, with `shift` the column maximum.
    col: Vec<f64>,
    shift: f64,
}

/// Below this the linear-space mixture sum is recomputed in log space.
const LINEAR_FLOOR: f64 = 1e-200;

fn observation_groups(
    sr: &SampledRanks,
    model: &ConditionalModel,
    weight: WeightSpec,
) -> Vec<Group> {
    let freq = observed_frequencies(sr);
    let omegas: Vec<f64> = match weight.kind {
        WeightKind::None => freq.iter().map(|&(_, p)| p).collect(),
        _ => {
            let raw: Vec<f64> = freq.iter().map(|&(r, p)| p * weight.weight(r)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        }
    };
    freq.iter()
        .zip(omegas)
        .map(|(&(r, _), omega)| {
            let log_col = model.log_column(r);
            let shift = log_col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let col = log_col.iter().map(|l| (l - shift).exp()).collect();
            Group {
                sampled: r,
                omega,
                log_col,
                col,
                shift,
            }
        })
        .collect()
}

/// Writes `exp(ln pi_j + ln P(r | j) - max)` into `buf`; returns
/// `(max, sum)` so that `ln p(r | pi) = max + ln sum`.
#[inline]
fn shifted_terms(log_pi: &[f64], log_col: &[f64], buf: &mut [f64]) -> (f64, f64) {
    let mut max = f64::NEG_INFINITY;
    for ((b, lp), lc) in buf.iter_mut().zip(log_pi).zip(log_col) {
        *b = lp + lc;
        if *b > max {
            max = *b;
        }
    }
    if max == f64::NEG_INFINITY {
        return (max, 0.0);
    }
    let mut sum = 0.0;
    for b in buf.iter_mut() {
        *b = (*b - max).exp();
        sum += *b;
    }
    (max, sum)
}

/// Fills `buf` with terms proportional to `pi_j P(r | j)`; returns
/// `(offset, sum)` so that `ln p(r | pi) = offset + ln sum`.
fn mixture_terms(
    g: &Group,
    pi: &[f64],
    log_pi: &mut Option<Vec<f64>>,
    buf: &mut [f64],
) -> (f64, f64) {
    let mut sum = 0.0;
    for ((b, p), c) in buf.iter_mut().zip(pi).zip(&g.col) {
        *b = p * c;
        sum += *b;
    }
    if sum > LINEAR_FLOOR {
        return (g.shift, sum);
    }
    let log_pi = log_pi.get_or_insert_with(|| pi.iter().map(|p| p.ln()).collect());
    shifted_terms(log_pi, &g.log_col, buf)
}

/// Grouped EM step; returns the log-likelihood of `pi`.
fn em_update(groups: &[Group], pi: &[f64], next: &mut [f64], buf: &mut [f64]) -> Result<f64> {
    let mut log_pi = None;
    next.iter_mut().for_each(|x| *x = 0.0);
    let mut ll = 0.0;
    for g in groups {
        let (offset, sum) = mixture_terms(g, pi, &mut log_pi, buf);
        if sum == 0.0 {
            return Err(zero_likelihood(g.sampled));
        }
        ll += g.omega * (offset + sum.ln());
        let scale = g.omega / sum;
        for (n, b) in next.iter_mut().zip(buf.iter()) {
            *n += b * scale;
        }
    }
    Ok(ll)
}

fn log_likelihood(groups: &[Group], pi: &[f64], buf: &mut [f64]) -> Result<f64> {
    let mut log_pi = None;
    let mut ll = 0.0;
    for g in groups {
        let (offset, sum) = mixture_terms(g, pi, &mut log_pi, buf);
        if sum == 0.0 {
            return Err(zero_likelihood(g.sampled));
        }
        ll += g.omega * (offset + sum.ln());
    }
    Ok(ll)
}

fn zero_likelihood(sampled: usize) -> Error {
    Error::domain(format!(
        "observed sampled rank {sampled} has zero probability under the current mixture"
    ))
}
