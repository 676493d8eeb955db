use std::path::Path;

use crate::error::Result;
use crate::harness::{mean_std, run_repeats, ExperimentPlan};
use crate::ingest::{write_csv_table, write_report, ReportRow};
use crate::metrics::exact_metric;
use crate::types::MetricSpec;

/// Aggregate of one estimator over the repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStat {
    pub estimator: String,
    pub mean: f64,
    pub std: f64,
    /// Repeats in which the estimator succeeded.
    pub repeats: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub algorithm: String,
    pub metric: MetricSpec,
    pub exact: f64,
    pub cells: Vec<CellStat>,
}

/// Estimated metrics (mean and std over repeats) next to the exact values.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTable {
    pub estimators: Vec<String>,
    pub repeats: usize,
    pub rows: Vec<TableRow>,
}

pub fn run_estimation_table(plan: &ExperimentPlan) -> Result<EstimationTable> {
    plan.validate()?;
    let specs = plan.metric_specs();
    let results = run_repeats(plan, plan.pool_size, false)?;
    let mut rows = Vec::new();
    for (ai, algo) in plan.algorithms.iter().enumerate() {
        for (si, &spec) in specs.iter().enumerate() {
            let exact = exact_metric(&algo.truth, spec)?;
            let cells = plan
                .estimators
                .iter()
                .enumerate()
                .map(|(ei, est)| {
                    let values: Vec<f64> = results
                        .iter()
                        .filter_map(|rep| rep[ai][ei].as_ref().ok().map(|o| o.metrics[si]))
                        .collect();
                    let (mean, std) = mean_std(&values);
                    CellStat {
                        estimator: est.label(),
                        mean,
                        std,
                        repeats: values.len(),
                        failed: plan.repeats - values.len(),
                    }
                })
                .collect();
            rows.push(TableRow {
                algorithm: algo.name.clone(),
                metric: spec,
                exact,
                cells,
            });
        }
    }
    Ok(EstimationTable {
        estimators: plan.estimators.iter().map(|e| e.label()).collect(),
        repeats: plan.repeats,
        rows,
    })
}

fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

impl EstimationTable {
    /// Long-format rows; the exact value appears as estimator `Exact`.
    pub fn report_rows(&self) -> Vec<ReportRow> {
        let mut out = Vec::new();
        for row in &self.rows {
            let base = |estimator: String, mean, std, repeats| ReportRow {
                algorithm: row.algorithm.clone(),
                metric: row.metric.kind.name().to_string(),
                k: row.metric.cutoff,
                estimator,
                mean,
                std,
                repeats,
            };
            out.push(base("Exact".into(), row.exact, 0.0, self.repeats));
            for c in &row.cells {
                out.push(base(c.estimator.clone(), c.mean, c.std, c.repeats));
            }
        }
        out
    }

    /// Wide layout: `Model, Metric, Exact, <estimators...>`, values in
    /// percent, estimator cells as `mean±std`.
    pub fn wide(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["Model".to_string(), "Metric".into(), "Exact".into()];
        header.extend(self.estimators.iter().cloned());
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![
                    row.algorithm.clone(),
                    row.metric.to_string(),
                    percent(row.exact),
                ];
                cells.extend(row.cells.iter().map(|c| {
                    if c.repeats == 0 {
                        "failed".to_string()
                    } else if c.failed > 0 {
                        format!(
                            "{}±{} ({} failed)",
                            percent(c.mean),
                            percent(c.std),
                            c.failed
                        )
                    } else {
                        format!("{}±{}", percent(c.mean), percent(c.std))
                    }
                }));
                cells
            })
            .collect();
        (header, rows)
    }

    /// Writes `estimates.csv` (long) and `table.csv` (wide) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_report(&self.report_rows(), dir.join("estimates.csv"))?;
        let (header, rows) = self.wide();
        write_csv_table(&header, &rows, dir.join("table.csv"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinnerRow {
    pub metric: MetricSpec,
    /// Successes per estimator, in plan order.
    pub counts: Vec<usize>,
}

/// How often each estimator's best algorithm matches the exact best.
#[derive(Debug, Clone, PartialEq)]
pub struct WinnerTable {
    pub algorithms: Vec<String>,
    pub estimators: Vec<String>,
    pub repeats: usize,
    pub rows: Vec<WinnerRow>,
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn run_winner_prediction(plan: &ExperimentPlan) -> Result<WinnerTable> {
    plan.validate()?;
    if plan.algorithms.len() < 2 {
        return Err(crate::Error::Config(
            "winner prediction needs at least two algorithms".into(),
        ));
    }
    let users = plan.algorithms[0].truth.num_users();
    if plan.algorithms.iter().any(|a| a.truth.num_users() != users) {
        return Err(crate::Error::Config(
            "winner prediction needs algorithms evaluated on the same users".into(),
        ));
    }
    let specs = plan.metric_specs();
    let results = run_repeats(plan, plan.pool_size, false)?;
    let mut rows = Vec::new();
    for (si, &spec) in specs.iter().enumerate() {
        let exact: Vec<f64> = plan
            .algorithms
            .iter()
            .map(|a| exact_metric(&a.truth, spec))
            .collect::<Result<_>>()?;
        let winner = argmax(&exact);
        let counts = (0..plan.estimators.len())
            .map(|ei| {
                results
                    .iter()
                    .filter(|rep| {
                        let est: Option<Vec<f64>> = rep
                            .iter()
                            .map(|per_algo| per_algo[ei].as_ref().ok().map(|o| o.metrics[si]))
                            .collect();
                        est.is_some_and(|v| argmax(&v) == winner)
                    })
                    .count()
            })
            .collect();
        rows.push(WinnerRow {
            metric: spec,
            counts,
        });
    }
    Ok(WinnerTable {
        algorithms: plan.algorithms.iter().map(|a| a.name.clone()).collect(),
        estimators: plan.estimators.iter().map(|e| e.label()).collect(),
        repeats: plan.repeats,
        rows,
    })
}

impl WinnerTable {
    /// `K, Metric, <estimators...>` with success counts out of `repeats`.
    pub fn wide(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["K".to_string(), "Metric".into()];
        header.extend(self.estimators.iter().cloned());
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![
                    row.metric.cutoff.to_string(),
                    row.metric.kind.name().to_string(),
                ];
                cells.extend(row.counts.iter().map(|c| c.to_string()));
                cells
            })
            .collect();
        (header, rows)
    }

    /// Writes `winners.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let (header, rows) = self.wide();
        write_csv_table(&header, &rows, dir.join("winners.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[0.0, -1.0, 5.0]), 2);
    }
}
