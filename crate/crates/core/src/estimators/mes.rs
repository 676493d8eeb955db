//! Maximum entropy with a squared distribution-distance penalty.
//!
//! Maximizes `eta * H(pi) - E(pi)` over the simplex, where
//! `E(pi) = sum_r P~(r) (sum_R P(r|R) pi_R - P~(r))^2`.
//!
//! The solver is entropic mirror descent with the entropy term handled in
//! closed form inside the proximal step:
//!
//! `ln pi'_R = (ln pi_R - t g_R) / (1 + t eta) - Z`
//!
//! with `g` the gradient of `E`. A step is accepted when `E` satisfies the
//! relative-smoothness bound `E(pi') <= E(pi) + <g, pi' - pi> + KL(pi' || pi) / t`,
//! which makes the objective monotone. The step doubles after every accepted
//! iterate and halves on rejection. Iterates stay strictly inside the simplex.

use crate::error::{Error, Result};
use crate::estimators::{check_compatible, log_sum_exp, observed_frequencies, EstimatorReport};
use crate::model::ConditionalModel;
use crate::types::{RankPmf, SampledRanks};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MesConfig {
    /// Entropy weight `eta >= 0`.
    pub eta: f64,
    /// Stop when the objective changes by at most this fraction.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MesConfig {
    fn default() -> Self {
        Self {
            eta: 0.001,
            tolerance: 1e-9,
            max_iterations: 50_000,
        }
    }
}

impl MesConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::domain(format!(
                "entropy weight eta={} must be >= 0",
                self.eta
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::domain("MES tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Objective changes below this are treated as converged regardless of scale.
const ABSOLUTE_FLOOR: f64 = 1e-15;

/// Observed sampled ranks: frequency and the column `P(r | R)` over `R`.
struct Problem {
    freq: Vec<f64>,
    cols: Vec<Vec<f64>>,
    eta: f64,
}

impl Problem {
    fn new(sr: &SampledRanks, model: &ConditionalModel, eta: f64) -> Self {
        let (freq, cols) = observed_frequencies(sr)
            .into_iter()
            .map(|(r, p)| (p, model.column(r)))
            .unzip();
        Self { freq, cols, eta }
    }

    /// Squared-distance penalty and, optionally, its gradient.
    fn penalty(&self, pi: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let resid: Vec<f64> = self
            .cols
            .iter()
            .zip(&self.freq)
            .map(|(col, p)| dot(col, pi) - p)
            .collect();
        let value = resid.iter().zip(&self.freq).map(|(e, p)| p * e * e).sum();
        if let Some(g) = grad {
            g.iter_mut().for_each(|x| *x = 0.0);
            for ((col, p), e) in self.cols.iter().zip(&self.freq).zip(&resid) {
                let s = 2.0 * p * e;
                for (gi, c) in g.iter_mut().zip(col) {
                    *gi += s * c;
                }
            }
        }
        value
    }

    /// Largest diagonal entry of the penalty's Hessian; bounds every entry.
    fn curvature(&self, big: usize) -> f64 {
        let mut diag = vec![0.0; big];
        for (col, p) in self.cols.iter().zip(&self.freq) {
            for (d, c) in diag.iter_mut().zip(col) {
                *d += 2.0 * p * c * c;
            }
        }
        diag.into_iter().fold(0.0, f64::max)
    }

    fn objective(&self, pi: &[f64], log_pi: &[f64]) -> f64 {
        self.eta * entropy(pi, log_pi) - self.penalty(pi, None)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn entropy(pi: &[f64], log_pi: &[f64]) -> f64 {
    -pi.iter()
        .zip(log_pi)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| p * l)
        .sum::<f64>()
}

/// `eta * H(pi) - E(pi)`, the quantity [`mes_optimize`] maximizes.
pub fn mes_objective(
    pi: &RankPmf,
    sr: &SampledRanks,
    model: &ConditionalModel,
    eta: f64,
) -> Result<f64> {
    check_compatible(sr, model)?;
    if pi.support_size() != model.num_items() {
        return Err(Error::SupportMismatch {
            expected: model.num_items(),
            actual: pi.support_size(),
        });
    }
    let problem = Problem::new(sr, model, eta);
    let log_pi: Vec<f64> = pi.masses().iter().map(|p| p.ln()).collect();
    Ok(problem.objective(pi.masses(), &log_pi))
}

pub fn mes_optimize(
    sr: &SampledRanks,
    model: &ConditionalModel,
    cfg: &MesConfig,
) -> Result<EstimatorReport> {
    check_compatible(sr, model)?;
    cfg.validate()?;
    let big = model.num_items();
    let problem = Problem::new(sr, model, cfg.eta);

    let mut log_pi = vec![-(big as f64).ln(); big];
    let mut pi = vec![1.0 / big as f64; big];
    let mut grad = vec![0.0; big];
    let mut penalty = problem.penalty(&pi, Some(&mut grad));
    let mut objective = cfg.eta * entropy(&pi, &log_pi) - penalty;

    let curvature = problem.curvature(big);
    let base_step = if curvature > 0.0 {
        1.0 / curvature
    } else {
        1.0
    };
    let mut step = base_step;

    let mut trace = vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    let mut trial_log = vec![0.0; big];
    let mut trial = vec![0.0; big];

    while iterations < cfg.max_iterations {
        iterations += 1;
        let trial_penalty = loop {
            let shrink = 1.0 / (1.0 + step * cfg.eta);
            for ((tl, l), g) in trial_log.iter_mut().zip(&log_pi).zip(&grad) {
                *tl = (l - step * g) * shrink;
            }
            let z = log_sum_exp(&trial_log);
            for (t, tl) in trial.iter_mut().zip(trial_log.iter_mut()) {
                *tl -= z;
                *t = tl.exp();
            }
            let value = problem.penalty(&trial, None);
            let linear: f64 = grad
                .iter()
                .zip(trial.iter().zip(&pi))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            let kl: f64 = trial
                .iter()
                .zip(trial_log.iter().zip(&log_pi))
                .map(|(p, (a, b))| p * (a - b))
                .sum();
            let bound = penalty + linear + kl.max(0.0) / step;
            if value <= bound + 1e-15 * penalty.abs().max(1e-300) || step <= base_step * 1e-3 {
                break value;
            }
            step *= 0.5;
        };

        std::mem::swap(&mut pi, &mut trial);
        std::mem::swap(&mut log_pi, &mut trial_log);
        let new_objective = cfg.eta * entropy(&pi, &log_pi) - trial_penalty;
        penalty = problem.penalty(&pi, Some(&mut grad));
        let change = (new_objective - objective).abs();
        objective = new_objective;
        trace.push(objective);
        step *= 2.0;
        if change <= cfg.tolerance * objective.abs() || change <= ABSOLUTE_FLOOR {
            converged = true;
            break;
        }
    }

    // Iterates are strictly positive; normalize once more against drift.
    let total: f64 = pi.iter().sum();
    let pmf = RankPmf::new(pi.into_iter().map(|p| p / total).collect())?;
    Ok(EstimatorReport {
        pmf_estimate: Some(pmf),
        objective_trace: trace,
        iterations_used: iterations,
        converged,
        negative_mass_repaired: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{mle_em, EmConfig};
    use crate::types::SamplingScheme;

    const WR: SamplingScheme = SamplingScheme::WithReplacement;

    #[test]
    fn degenerate_model_recovers_observed_pmf() {
        let model = ConditionalModel::new(2, 2, WR).unwrap();
        let ranks = [vec![1; 3], vec![2; 7]].concat();
        let sr = SampledRanks::new(2, 2, WR, ranks).unwrap();
        let cfg = MesConfig {
            eta: 0.0,
            ..Default::default()
        };
        let rep = mes_optimize(&sr, &model, &cfg).unwrap();
        assert!((rep.pmf().mass(1) - 0.3).abs() < 1e-6, "{:?}", rep.pmf());
        assert!((rep.pmf().mass(2) - 0.7).abs() < 1e-6);
    }

    #[test]
    fn huge_eta_gives_uniform() {
        let model = ConditionalModel::new(200, 20, WR).unwrap();
        let ranks = (0..500).map(|i| 1 + i % 4).collect();
        let sr = SampledRanks::new(200, 20, WR, ranks).unwrap();
        let cfg = MesConfig {
            eta: 1e6,
            ..Default::default()
        };
        let rep = mes_optimize(&sr, &model, &cfg).unwrap();
        let u = 1.0 / 200.0;
        assert!(rep.pmf().masses().iter().all(|p| (p - u).abs() < 1e-4));
    }

    #[test]
    fn objective_is_monotone_and_dominates() {
        let model = ConditionalModel::new(300, 25, WR).unwrap();
        let ranks: Vec<usize> = (0..3000).map(|i| 1 + (i * i + 3 * i) % 7).collect();
        let sr = SampledRanks::new(300, 25, WR, ranks).unwrap();
        let cfg = MesConfig::default();
        let rep = mes_optimize(&sr, &model, &cfg).unwrap();
        assert!(rep.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        let best = mes_objective(rep.pmf(), &sr, &model, cfg.eta).unwrap();
        let uniform = mes_objective(&RankPmf::uniform(300).unwrap(), &sr, &model, cfg.eta).unwrap();
        let mle = mle_em(&sr, &model, &EmConfig::default()).unwrap();
        let at_mle = mes_objective(mle.pmf(), &sr, &model, cfg.eta).unwrap();
        assert!(best >= uniform - 1e-9);
        assert!(best >= at_mle - 1e-9, "best={best} mle={at_mle}");
    }

    #[test]
    fn rejects_negative_eta() {
        let model = ConditionalModel::new(10, 3, WR).unwrap();
        let sr = SampledRanks::new(10, 3, WR, vec![1]).unwrap();
        let cfg = MesConfig {
            eta: -1.0,
            ..Default::default()
        };
        assert!(mes_optimize(&sr, &model, &cfg).is_err());
    }
}
