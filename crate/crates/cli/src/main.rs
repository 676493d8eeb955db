use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rankest_core::harness::{
    run_distribution_accuracy, run_estimation_table, run_sample_size_sweep, run_winner_prediction,
    write_distribution_files, write_sweep_files, Estimation, EstimatorChoice, ExperimentPlan,
};
use rankest_core::ingest::{
    read_ranks, write_csv_table, write_ranks, InputConfig, RankData, RankFile, RunConfig,
};
use rankest_core::simulate::{generate_truth, sample_ranks, RankFamily, TruthSpec};
use rankest_core::{
    exact_metric, EmConfig, Error, MesConfig, MetricKind, MetricSpec, SamplingScheme,
};

#[derive(Parser)]
#[command(
    name = "rankest",
    version,
    about = "Estimate top-K metrics from sampled ranks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic global rank file, optionally followed by one sampling pass.
    Simulate(SimulateArgs),
    /// Estimate metrics and the global rank distribution from one rank file.
    Estimate(EstimateArgs),
    /// Repeated-sampling estimation table: mean and std per estimator.
    Table(PlanArgs),
    /// Count how often each estimator picks the exact best algorithm.
    Winners(PlanArgs),
    /// Averaged learned rank distributions against the true one.
    Distaccuracy(PlanArgs),
    /// Distribution accuracy at each pool size of the sweep.
    Sweep(PlanArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Rank family: `uniform`, `zipf:<s>` or `geometric:<p>`.
    #[arg(long, default_value = "zipf:1.2")]
    family: String,
    /// Catalog size N.
    #[arg(long = "num-items", default_value_t = 1000)]
    num_items: usize,
    /// Number of test users M.
    #[arg(long = "num-users", default_value_t = 10_000)]
    num_users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Algorithm name stored in the header.
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// Also sample the truth with pool size n and write the sampled file instead.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "wor")]
    scheme: SamplingScheme,
    /// Output rank file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// A sampled rank file, or a global one together with `--n`.
    #[arg(long)]
    input: PathBuf,
    /// Pool size used to sample a global input.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampling scheme for a global input.
    #[arg(long, default_value = "wor")]
    scheme: SamplingScheme,
    /// Conditional model; defaults to the scheme of the sampled ranks.
    #[arg(long = "model-scheme")]
    model_scheme: Option<SamplingScheme>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "recall,ndcg,ap")]
    metrics: Vec<MetricKind>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "bv:0.1,bv:0.01,mle,wmle,mes"
    )]
    estimators: Vec<String>,
    /// Largest rank written to `pmf.csv`.
    #[arg(long = "r-max", default_value_t = 200)]
    r_max: usize,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global rank file of one algorithm; repeatable.
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Pool sizes of the sweep.
    #[arg(long = "sweep", value_delimiter = ',')]
    sweep_sizes: Option<Vec<usize>>,
    #[arg(long = "r-max")]
    r_max: Option<usize>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Also render SVG charts.
    #[arg(long)]
    svg: bool,
}

impl PlanArgs {
    fn resolve(&self) -> Result<(ExperimentPlan, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        for path in &self.input {
            let header = read_ranks(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.inputs.push(InputConfig {
                name: header.algorithm,
                path: Some(path.clone()),
                family: None,
                num_items: None,
                num_users: None,
                seed: None,
            });
        }
        if cfg.inputs.is_empty() {
            return Err(config_error(
                "no inputs: pass --config or at least one --input".into(),
            ));
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = &self.k {
            cfg.ks = v.clone();
        }
        if let Some(v) = &self.metrics {
            cfg.metrics = v.clone();
        }
        if let Some(v) = &self.estimators {
            cfg.estimators = v.clone();
        }
        if let Some(v) = &self.sweep_sizes {
            cfg.sweep_sizes = v.clone();
        }
        if let Some(v) = self.r_max {
            cfg.r_max = v;
        }
        let out_dir = self
            .out_dir
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let plan = ExperimentPlan::from_config(&cfg)?;
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        Ok((plan, out_dir))
    }
}

fn config_error(msg: String) -> anyhow::Error {
    Error::Config(msg).into()
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let family: RankFamily = args.family.parse()?;
    let truth = generate_truth(&TruthSpec {
        num_items: args.num_items,
        num_users: args.num_users,
        family,
        seed: args.seed,
    })?;
    let file = match args.n {
        Some(n) => {
            let sr = sample_ranks(&truth, n, args.scheme, args.seed)?;
            RankFile::sampled(&args.name, &args.dataset, sr)
        }
        None => RankFile::global(&args.name, &args.dataset, truth),
    };
    write_ranks(&file, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let file =
        read_ranks(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let (sr, truth) = match file.data {
        RankData::Sampled(sr) => {
            if args.n.is_some() {
                return Err(config_error("--n applies to global rank files only".into()));
            }
            (sr, None)
        }
        RankData::Global(ds) => {
            let Some(n) = args.n else {
                let msg = format!(
                    "{} holds global ranks; pass --n to sample them",
                    args.input.display()
                );
                return Err(config_error(msg));
            };
            (sample_ranks(&ds, n, args.scheme, args.seed)?, Some(ds))
        }
    };
    let estimators: Vec<EstimatorChoice> = args
        .estimators
        .iter()
        .map(|s| s.parse())
        .collect::<rankest_core::Result<_>>()?;
    let mut ks = args.k.clone();
    ks.sort_unstable();
    ks.dedup();
    let specs: Vec<MetricSpec> = ks
        .iter()
        .flat_map(|&k| {
            args.metrics
                .iter()
                .map(move |&kind| MetricSpec::new(kind, k))
        })
        .collect::<rankest_core::Result<_>>()?;
    let model_scheme = args.model_scheme.unwrap_or(sr.scheme());
    let engine = Estimation::new(
        sr.num_items(),
        sr.pool_size(),
        model_scheme,
        &estimators,
        &specs,
        &EmConfig::default(),
        &MesConfig::default(),
    )?;
    let outcomes = engine.run(&sr, true);

    let mut header = vec!["Metric".to_string()];
    if truth.is_some() {
        header.push("Exact".into());
    }
    header.extend(estimators.iter().map(|e| e.label()));
    let mut rows = Vec::with_capacity(specs.len());
    for (si, spec) in specs.iter().enumerate() {
        let mut row = vec![spec.to_string()];
        if let Some(ds) = &truth {
            row.push(format!("{:.10e}", exact_metric(ds, *spec)?));
        }
        row.extend(outcomes.iter().map(|o| match o {
            Ok(o) => format!("{:.10e}", o.metrics[si]),
            Err(_) => "failed".into(),
        }));
        rows.push(row);
    }
    for (e, o) in estimators.iter().zip(&outcomes) {
        if let Err(err) = o {
            eprintln!("{}: {err}", e.label());
        }
    }
    print_table(&header, &rows);

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        write_csv_table(&header, &rows, dir.join("estimates.csv"))?;
        write_pmf_table(&estimators, &outcomes, args.r_max.min(sr.num_items()), dir)?;
    }
    Ok(())
}

fn write_pmf_table(
    estimators: &[EstimatorChoice],
    outcomes: &[rankest_core::Result<rankest_core::harness::EstimateOutcome>],
    r_max: usize,
    dir: &Path,
) -> Result<()> {
    let mut header = vec!["R".to_string()];
    let mut columns = Vec::new();
    for (e, o) in estimators.iter().zip(outcomes) {
        if let Ok(rankest_core::harness::EstimateOutcome { pmf: Some(pmf), .. }) = o {
            header.push(format!("{}_pmf", e.label()));
            columns.push(pmf.masses());
        }
    }
    let rows: Vec<Vec<String>> = (0..r_max)
        .map(|i| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(columns.iter().map(|c| format!("{:.10e}", c[i])));
            row
        })
        .collect();
    write_csv_table(&header, &rows, dir.join("pmf.csv"))?;
    Ok(())
}

fn print_table(header: &[String], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(header));
    for row in rows {
        println!("{}", line(row));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Estimate(args) => estimate(&args),
        Command::Table(args) => {
            let (plan, dir) = args.resolve()?;
            let table = run_estimation_table(&plan)?;
            table.write(&dir)?;
            let (header, rows) = table.wide();
            print_table(&header, &rows);
            Ok(())
        }
        Command::Winners(args) => {
            let (plan, dir) = args.resolve()?;
            let table = run_winner_prediction(&plan)?;
            table.write(&dir)?;
            let (header, rows) = table.wide();
            println!("successes out of {} repeats", table.repeats);
            print_table(&header, &rows);
            Ok(())
        }
        Command::Distaccuracy(args) => {
            let (plan, dir) = args.resolve()?;
            let curves = run_distribution_accuracy(&plan)?;
            write_distribution_files(&curves, plan.r_max, &dir, args.svg)?;
            println!(
                "wrote {} distribution files to {}",
                curves.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let (plan, dir) = args.resolve()?;
            let (all, summary) = run_sample_size_sweep(&plan)?;
            write_sweep_files(&all, &summary, plan.r_max, &dir, args.svg)?;
            let header = ["n", "algorithm", "estimator", "l1_cdf_error_k100"].map(String::from);
            let rows: Vec<Vec<String>> = summary
                .iter()
                .map(|r| {
                    vec![
                        r.pool_size.to_string(),
                        r.algorithm.clone(),
                        r.estimator.clone(),
                        format!("{:.6}", r.l1_cdf_error),
                    ]
                })
                .collect();
            print_table(&header, &rows);
            Ok(())
        }
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": message, "kind": kind }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("usage", e.to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err
                .chain()
                .find_map(|e| e.downcast_ref::<rankest_core::Error>())
                .map_or("runtime", |e| e.kind());
            eprintln!("{}", error_json(kind, &format!("{err:#}")));
            ExitCode::FAILURE
        }
    }
}
