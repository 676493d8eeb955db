use std::path::Path;

use crate::error::Result;
use crate::harness::{line_chart_svg, pairwise_sum, run_repeats, ExperimentPlan};
use crate::ingest::{write_csv_table, write_text};

/// Repeat-averaged pmf of one estimator, over `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorCurve {
    pub estimator: String,
    pub mean_pmf: Vec<f64>,
    pub repeats: usize,
}

impl EstimatorCurve {
    pub fn mean_cdf(&self) -> Vec<f64> {
        cumulative(&self.mean_pmf)
    }
}

/// Learned versus true rank distribution for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionCurves {
    pub algorithm: String,
    pub pool_size: usize,
    pub true_pmf: Vec<f64>,
    pub estimators: Vec<EstimatorCurve>,
}

fn cumulative(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

impl DistributionCurves {
    pub fn true_cdf(&self) -> Vec<f64> {
        cumulative(&self.true_pmf)
    }

    /// `sum_{K <= k_max} |CDF_est(K) - CDF_true(K)|` for the named estimator.
    pub fn l1_cdf_error(&self, estimator: &str, k_max: usize) -> Option<f64> {
        let curve = self.estimators.iter().find(|c| c.estimator == estimator)?;
        let k = k_max.min(self.true_pmf.len());
        let est = curve.mean_cdf();
        let truth = self.true_cdf();
        Some(
            est[..k]
                .iter()
                .zip(&truth[..k])
                .map(|(a, b)| (a - b).abs())
                .sum(),
        )
    }

    /// Columns `R, empirical_pmf, empirical_cdf, <est>_pmf, <est>_cdf, ...`
    /// for `R <= r_max`.
    pub fn table(&self, r_max: usize) -> (Vec<String>, Vec<Vec<String>>) {
        let rows_n = r_max.min(self.true_pmf.len());
        let mut header = vec![
            "R".to_string(),
            "empirical_pmf".into(),
            "empirical_cdf".into(),
        ];
        let mut columns = vec![self.true_pmf.clone(), self.true_cdf()];
        for c in &self.estimators {
            header.push(format!("{}_pmf", c.estimator));
            header.push(format!("{}_cdf", c.estimator));
            columns.push(c.mean_pmf.clone());
            columns.push(c.mean_cdf());
        }
        let rows = (0..rows_n)
            .map(|i| {
                let mut row = vec![(i + 1).to_string()];
                row.extend(columns.iter().map(|col| format!("{:.10e}", col[i])));
                row
            })
            .collect();
        (header, rows)
    }
}

/// Averages every pmf-producing estimator's learned distribution over the
/// repeats, for each algorithm, at pool size `pool_size`.
pub fn run_distribution_accuracy(plan: &ExperimentPlan) -> Result<Vec<DistributionCurves>> {
    distribution_at(plan, plan.pool_size)
}

fn distribution_at(plan: &ExperimentPlan, pool_size: usize) -> Result<Vec<DistributionCurves>> {
    let mut sized = plan.clone();
    sized.pool_size = pool_size;
    sized.validate()?;
    let results = run_repeats(&sized, pool_size, true)?;
    let mut out = Vec::new();
    for (ai, algo) in plan.algorithms.iter().enumerate() {
        let big = algo.truth.num_items();
        let mut curves = Vec::new();
        for (ei, est) in plan.estimators.iter().enumerate() {
            if !est.yields_pmf() {
                continue;
            }
            let pmfs: Vec<&[f64]> = results
                .iter()
                .filter_map(|rep| rep[ai][ei].as_ref().ok())
                .filter_map(|o| o.pmf.as_ref().map(|p| p.masses()))
                .collect();
            let mean_pmf = (0..big)
                .map(|i| {
                    let col: Vec<f64> = pmfs.iter().map(|p| p[i]).collect();
                    if col.is_empty() {
                        f64::NAN
                    } else {
                        pairwise_sum(&col) / col.len() as f64
                    }
                })
                .collect();
            curves.push(EstimatorCurve {
                estimator: est.label(),
                mean_pmf,
                repeats: pmfs.len(),
            });
        }
        out.push(DistributionCurves {
            algorithm: algo.name.clone(),
            pool_size,
            true_pmf: algo.truth.empirical_pmf().into_masses(),
            estimators: curves,
        });
    }
    Ok(out)
}

/// L1 CDF error on `K <= 100` for one (pool size, algorithm, estimator).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub pool_size: usize,
    pub algorithm: String,
    pub estimator: String,
    pub l1_cdf_error: f64,
}

/// Cutoff range of the sweep's CDF error.
pub const SWEEP_K_MAX: usize = 100;

/// Distribution accuracy at every pool size in `plan.sweep_sizes`.
pub fn run_sample_size_sweep(
    plan: &ExperimentPlan,
) -> Result<(Vec<Vec<DistributionCurves>>, Vec<SweepRow>)> {
    let mut all = Vec::new();
    let mut summary = Vec::new();
    for &n in &plan.sweep_sizes {
        let curves = distribution_at(plan, n)?;
        for c in &curves {
            for e in &c.estimators {
                summary.push(SweepRow {
                    pool_size: n,
                    algorithm: c.algorithm.clone(),
                    estimator: e.estimator.clone(),
                    l1_cdf_error: c
                        .l1_cdf_error(&e.estimator, SWEEP_K_MAX)
                        .unwrap_or(f64::NAN),
                });
            }
        }
        all.push(curves);
    }
    Ok((all, summary))
}

fn file_stem(algorithm: &str) -> String {
    algorithm
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `dist_<algo>_n<n>.csv` and, when `svg` is set, a CDF chart next to it.
pub fn write_distribution_files(
    curves: &[DistributionCurves],
    r_max: usize,
    dir: &Path,
    svg: bool,
) -> Result<()> {
    for c in curves {
        let stem = format!("dist_{}_n{}", file_stem(&c.algorithm), c.pool_size);
        let (header, rows) = c.table(r_max);
        write_csv_table(&header, &rows, dir.join(format!("{stem}.csv")))?;
        if svg {
            let k = r_max.min(c.true_pmf.len());
            let mut series = vec![("empirical".to_string(), c.true_cdf()[..k].to_vec())];
            series.extend(
                c.estimators
                    .iter()
                    .map(|e| (e.estimator.clone(), e.mean_cdf()[..k].to_vec())),
            );
            let title = format!("{}: CDF of global rank (n={})", c.algorithm, c.pool_size);
            write_text(
                dir.join(format!("{stem}.svg")),
                &line_chart_svg(&title, &series),
            )?;
        }
    }
    Ok(())
}

/// Writes `sweep.csv` plus every pool size's distribution files.
pub fn write_sweep_files(
    all: &[Vec<DistributionCurves>],
    summary: &[SweepRow],
    r_max: usize,
    dir: &Path,
    svg: bool,
) -> Result<()> {
    for curves in all {
        write_distribution_files(curves, r_max, dir, svg)?;
    }
    let header = ["n", "algorithm", "estimator", "l1_cdf_error_k100"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|r| {
            vec![
                r.pool_size.to_string(),
                r.algorithm.clone(),
                r.estimator.clone(),
                format!("{:.10e}", r.l1_cdf_error),
            ]
        })
        .collect();
    write_csv_table(&header, &rows, dir.join("sweep.csv"))
}
