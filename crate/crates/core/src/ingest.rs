//! On-disk formats: rank files, CSV reports and the TOML run configuration.
//!
//! # Rank files
//!
//! UTF-8 text. The first line is a header with fields in this exact order,
//! separated by single spaces:
//!
//! ```text
//! #rankfile v1 kind=<global|sampled> N=<int> n=<int> scheme=<wr|wor> algo=<str> dataset=<str>
//! ```
//!
//! Each following line holds one user's rank as a decimal integer. Global
//! files hold ranks in `[1, N]`, sampled files ranks in `[1, n]`. `algo` and
//! `dataset` may not contain whitespace. Global files still carry `n` and
//! `scheme`; the writer emits `n=N scheme=wor`, under which the sampled rank
//! equals the global rank.
//!
//! # Reports
//!
//! CSV with header `algorithm,metric,k,estimator,mean,std,repeats`, one row
//! per (algorithm, metric, K, estimator).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RankDataset, SampledRanks, SamplingScheme};

pub const RANKFILE_MAGIC: &str = "#rankfile";
pub const RANKFILE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankFileKind {
    Global,
    Sampled,
}

impl RankFileKind {
    fn tag(self) -> &'static str {
        match self {
            RankFileKind::Global => "global",
            RankFileKind::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFileHeader {
    pub kind: RankFileKind,
    pub num_items: usize,
    pub pool_size: usize,
    pub scheme: SamplingScheme,
    pub algorithm: String,
    pub dataset: String,
}

impl RankFileHeader {
    pub fn render(&self) -> String {
        format!(
            "{RANKFILE_MAGIC} {RANKFILE_VERSION} kind={} N={} n={} scheme={} algo={} dataset={}",
            self.kind.tag(),
            self.num_items,
            self.pool_size,
            self.scheme.tag(),
            self.algorithm,
            self.dataset
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankData {
    Global(RankDataset),
    Sampled(SampledRanks),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankFile {
    pub algorithm: String,
    pub dataset: String,
    pub data: RankData,
}

impl RankFile {
    pub fn global(
        algorithm: impl Into<String>,
        dataset: impl Into<String>,
        ds: RankDataset,
    ) -> Self {
        Self {
            algorithm: algorithm.into(),
            dataset: dataset.into(),
            data: RankData::Global(ds),
        }
    }

    pub fn sampled(
        algorithm: impl Into<String>,
        dataset: impl Into<String>,
        sr: SampledRanks,
    ) -> Self {
        Self {
            algorithm: algorithm.into(),
            dataset: dataset.into(),
            data: RankData::Sampled(sr),
        }
    }

    pub fn header(&self) -> RankFileHeader {
        let (kind, num_items, pool_size, scheme) = match &self.data {
            RankData::Global(ds) => (
                RankFileKind::Global,
                ds.num_items(),
                ds.num_items(),
                SamplingScheme::WithoutReplacement,
            ),
            RankData::Sampled(sr) => (
                RankFileKind::Sampled,
                sr.num_items(),
                sr.pool_size(),
                sr.scheme(),
            ),
        };
        RankFileHeader {
            kind,
            num_items,
            pool_size,
            scheme,
            algorithm: self.algorithm.clone(),
            dataset: self.dataset.clone(),
        }
    }

    pub fn ranks(&self) -> &[usize] {
        match &self.data {
            RankData::Global(ds) => ds.ranks(),
            RankData::Sampled(sr) => sr.ranks(),
        }
    }

    pub fn into_global(self) -> Result<RankDataset> {
        match self.data {
            RankData::Global(ds) => Ok(ds),
            RankData::Sampled(_) => Err(Error::Config(format!(
                "`{}` holds sampled ranks where global ranks are required",
                self.algorithm
            ))),
        }
    }

    pub fn into_sampled(self) -> Result<SampledRanks> {
        match self.data {
            RankData::Sampled(sr) => Ok(sr),
            RankData::Global(_) => Err(Error::Config(format!(
                "`{}` holds global ranks where sampled ranks are required",
                self.algorithm
            ))),
        }
    }

    /// Serialized file contents.
    pub fn render(&self) -> Result<String> {
        for (what, s) in [("algo", &self.algorithm), ("dataset", &self.dataset)] {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::domain(format!(
                    "{what} name `{s}` must be non-empty without whitespace"
                )));
            }
        }
        let mut out = self.header().render();
        out.push('\n');
        for r in self.ranks() {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn write_ranks(file: &RankFile, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, file.render()?)?;
    Ok(())
}

pub fn read_ranks(path: impl AsRef<Path>) -> Result<RankFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_ranks(&text, path)
}

/// Parses rank-file text; `path` is only used in error messages.
pub fn parse_ranks(text: &str, path: &Path) -> Result<RankFile> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let (_, header_line) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header = parse_header(header_line).map_err(|m| err(1, m))?;

    let bound = match header.kind {
        RankFileKind::Global => header.num_items,
        RankFileKind::Sampled => header.pool_size,
    };
    let mut ranks = Vec::new();
    let mut last_line = 1;
    let mut rest = lines.peekable();
    while let Some((lineno, line)) = rest.next() {
        last_line = lineno;
        if line.is_empty() && rest.peek().is_none() {
            break; // terminating newline
        }
        let rank: usize = line
            .parse()
            .map_err(|_| err(lineno, format!("expected a rank, found `{line}`")))?;
        if rank == 0 || rank > bound {
            return Err(err(lineno, format!("rank {rank} outside [1, {bound}]")));
        }
        ranks.push(rank);
    }
    if ranks.is_empty() {
        return Err(err(
            last_line,
            "truncated file: no rank records after the header".into(),
        ));
    }

    let data = match header.kind {
        RankFileKind::Global => RankData::Global(RankDataset::new(header.num_items, ranks)?),
        RankFileKind::Sampled => RankData::Sampled(SampledRanks::new(
            header.num_items,
            header.pool_size,
            header.scheme,
            ranks,
        )?),
    };
    Ok(RankFile {
        algorithm: header.algorithm,
        dataset: header.dataset,
        data,
    })
}

fn parse_header(line: &str) -> std::result::Result<RankFileHeader, String> {
    let tokens: Vec<&str> = line.split(' ').collect();
    if tokens.len() != 8 {
        return Err(format!(
            "malformed header: expected 8 space-separated fields, found {}",
            tokens.len()
        ));
    }
    if tokens[0] != RANKFILE_MAGIC {
        return Err(format!(
            "malformed header: expected `{RANKFILE_MAGIC}`, found `{}`",
            tokens[0]
        ));
    }
    if tokens[1] != RANKFILE_VERSION {
        return Err(format!("unsupported rank file version `{}`", tokens[1]));
    }
    let field = |idx: usize, key: &str| -> std::result::Result<&str, String> {
        tokens[idx]
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .ok_or_else(|| format!("malformed header: expected `{key}=` at field {}", idx + 1))
    };
    let int = |idx: usize, key: &str| -> std::result::Result<usize, String> {
        let v = field(idx, key)?;
        v.parse()
            .map_err(|_| format!("malformed header: `{key}={v}` is not an integer"))
    };
    let kind = match field(2, "kind")? {
        "global" => RankFileKind::Global,
        "sampled" => RankFileKind::Sampled,
        other => return Err(format!("malformed header: unknown kind `{other}`")),
    };
    let num_items = int(3, "N")?;
    let pool_size = int(4, "n")?;
    let scheme = match field(5, "scheme")? {
        "wr" => SamplingScheme::WithReplacement,
        "wor" => SamplingScheme::WithoutReplacement,
        other => return Err(format!("malformed header: unknown scheme `{other}`")),
    };
    let algorithm = field(6, "algo")?.to_string();
    let dataset = field(7, "dataset")?.to_string();
    if num_items < 2 {
        return Err(format!("malformed header: N={num_items} must be >= 2"));
    }
    if pool_size < 2 || pool_size > num_items {
        return Err(format!(
            "malformed header: n={pool_size} must satisfy 2 <= n <= N"
        ));
    }
    if algorithm.is_empty() || dataset.is_empty() {
        return Err("malformed header: empty algo or dataset name".into());
    }
    Ok(RankFileHeader {
        kind,
        num_items,
        pool_size,
        scheme,
        algorithm,
        dataset,
    })
}

/// One aggregated estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algorithm: String,
    pub metric: String,
    pub k: usize,
    pub estimator: String,
    pub mean: f64,
    pub std: f64,
    pub repeats: usize,
}

pub fn write_report(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()?;
    Ok(rows)
}

/// Writes `rows` (already formatted cells) as CSV under `header`.
pub fn write_csv_table(
    header: &[String],
    rows: &[Vec<String>],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub(crate) fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Where an algorithm's global ranks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub name: String,
    /// A global rank file; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    /// Synthetic family such as `zipf:1.2`, used when `path` is absent.
    pub family: Option<String>,
    pub num_items: Option<usize>,
    pub num_users: Option<usize>,
    pub seed: Option<u64>,
}

/// The run configuration file (TOML).
///
/// ```toml
/// seed = 42
/// repeats = 100
/// n = 100
/// ks = [1, 5, 10, 20]
/// metrics = ["recall", "ndcg", "ap"]
/// estimators = ["bv:0.1", "bv:0.01", "mle", "wmle", "mes"]
/// sampling_scheme = "wor"
/// model_scheme = "wr"
/// r_max = 200
/// sweep_sizes = [100, 500]
/// out_dir = "out"
///
/// [[inputs]]
/// name = "EASE"
/// path = "ease.rank"
///
/// [[inputs]]
/// name = "zipf"
/// family = "zipf:1.2"
/// num_items = 1000
/// num_users = 10000
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub repeats: usize,
    pub n: usize,
    pub ks: Vec<usize>,
    pub metrics: Vec<String>,
    pub estimators: Vec<String>,
    pub sampling_scheme: String,
    pub model_scheme: String,
    pub r_max: usize,
    pub sweep_sizes: Vec<usize>,
    pub out_dir: Option<PathBuf>,
    pub inputs: Vec<InputConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repeats: 100,
            n: 100,
            ks: vec![1, 5, 10, 20],
            metrics: vec!["recall".into(), "ndcg".into(), "ap".into()],
            estimators: ["bv:0.1", "bv:0.01", "mle", "wmle", "mes"]
                .map(String::from)
                .to_vec(),
            sampling_scheme: "wor".into(),
            model_scheme: "wr".into(),
            r_max: 200,
            sweep_sizes: vec![100, 500],
            out_dir: None,
            inputs: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, resolving relative input paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for input in &mut cfg.inputs {
            if let Some(p) = &input.path {
                if p.is_relative() {
                    input.path = Some(base.join(p));
                }
            }
        }
        Ok(cfg)
    }
}
