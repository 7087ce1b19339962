//! Batch front end for the closed-loop simulator: `run`, `sweep` and
//! `validate`, plus the summary and sweep table writers.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use overtake_core::trace::{write_trace_file, TraceHeader};
use overtake_core::{
    load_config, run_scenario, RunResult, RunSummary, ScenarioConfig, SWEEPABLE, VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(overtake_core::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Io(_) | Self::Run(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub collisions: usize,
    pub mean_min_gap: f64,
    pub infeasible_cycles_total: usize,
    pub infeasible_cycles_mean: f64,
    pub failures: usize,
}

impl Aggregate {
    pub fn from_runs(runs: &[RunSummary]) -> Self {
        let n = runs.len();
        let nf = n.max(1) as f64;
        let successes = runs.iter().filter(|r| r.overtake_success).count();
        let infeasible: usize = runs.iter().map(|r| r.infeasible_cycles).sum();
        Self {
            runs: n,
            successes,
            success_rate: successes as f64 / nf,
            collisions: runs.iter().filter(|r| r.collision).count(),
            mean_min_gap: runs.iter().map(|r| r.min_gap).sum::<f64>() / nf,
            infeasible_cycles_total: infeasible,
            infeasible_cycles_mean: infeasible as f64 / nf,
            failures: runs.iter().filter(|r| r.failure.is_some()).count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config_hash: String,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

/// Parse `"a,b,c"`; an empty list is a usage error.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(CliError::Usage(format!("empty {what} list")));
    }
    items
        .iter()
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Usage(format!("cannot parse {what} value {s:?}")))
        })
        .collect()
}

fn load(path: &Path) -> CliResult<ScenarioConfig> {
    load_config(path).map_err(CliError::Config)
}

fn pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    builder
        .build()
        .map_err(|e| CliError::Run(format!("cannot start worker pool: {e}")))
}

fn prepare_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))
}

/// Write through a temporary file so a failed write leaves nothing behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    res.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::Io(format!("cannot write {}: {e}", path.display()))
    })
}

pub fn run_seeds(
    cfg: &ScenarioConfig,
    seeds: &[u64],
    jobs: Option<usize>,
) -> CliResult<Vec<RunResult>> {
    let pool = pool(jobs)?;
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_scenario(cfg, s))
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(CliError::Config)
}

pub fn trace_path(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("trace_{seed}.csv"))
}

/// `race run`: one trace per seed plus `summary.json`.
pub fn run_command(
    config: &Path,
    seeds: Option<&[u64]>,
    out: &Path,
    jobs: Option<usize>,
) -> CliResult<Summary> {
    let cfg = load(config)?;
    let seeds = seeds.map_or_else(|| cfg.sim.seeds.clone(), <[u64]>::to_vec);
    if seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    prepare_dir(out)?;
    let results = run_seeds(&cfg, &seeds, jobs)?;
    let hash = cfg.hash();
    for r in &results {
        let header = TraceHeader {
            version: VERSION.to_string(),
            config_hash: hash.clone(),
            seed: r.seed,
        };
        let path = trace_path(out, r.seed);
        write_trace_file(&path, &header, &r.records)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    let runs: Vec<RunSummary> = results.iter().map(RunResult::summary).collect();
    let summary = Summary {
        version: VERSION.to_string(),
        config_hash: hash,
        aggregate: Aggregate::from_runs(&runs),
        runs,
    };
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| CliError::Run(e.to_string()))?;
    write_atomic(&out.join("summary.json"), &json)?;
    let failed: Vec<String> = summary
        .runs
        .iter()
        .filter_map(|r| r.failure.clone())
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Run(format!(
            "{} run(s) failed: {}",
            failed.len(),
            failed.join("; ")
        )));
    }
    Ok(summary)
}

pub const SWEEP_COLUMNS: [&str; 5] = ["value", "seed", "success", "min_gap", "infeasible_cycles"];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub success: bool,
    pub min_gap: f64,
    pub infeasible_cycles: usize,
}

/// `race sweep`: runs the cross product of `values` and seeds `0..seeds`.
pub fn sweep_command(
    config: &Path,
    param: &str,
    values: &[f64],
    seeds: u64,
    out: &Path,
    jobs: Option<usize>,
) -> CliResult<Vec<SweepRow>> {
    if !ScenarioConfig::is_sweepable(param) {
        return Err(CliError::Usage(format!(
            "unknown parameter {param:?}; sweepable: {}",
            SWEEPABLE.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(CliError::Usage("empty value list".into()));
    }
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let base = load(config)?;
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|&v| base.with_param(param, v))
        .collect::<Result<_, _>>()
        .map_err(CliError::Config)?;
    prepare_dir(out)?;
    let jobs_list: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|i| (0..seeds).map(move |s| (i, s)))
        .collect();
    let pool = pool(jobs)?;
    let results = pool
        .install(|| {
            jobs_list
                .par_iter()
                .map(|&(i, s)| run_scenario(&configs[i], s).map(|r| (i, r)))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(CliError::Config)?;
    let rows: Vec<SweepRow> = results
        .iter()
        .map(|(i, r)| SweepRow {
            value: values[*i],
            seed: r.seed,
            success: r.overtake_success,
            min_gap: r.min_gap,
            infeasible_cycles: r.infeasible_cycles,
        })
        .collect();
    let mut text = SWEEP_COLUMNS.join(",");
    text.push('\n');
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            overtake_core::trace::fmt_f64(r.value),
            r.seed,
            u8::from(r.success),
            overtake_core::trace::fmt_f64(r.min_gap),
            r.infeasible_cycles
        ));
    }
    write_atomic(&out.join("sweep.csv"), text.as_bytes())?;
    let failed = results.iter().filter(|(_, r)| r.failure.is_some()).count();
    if failed > 0 {
        return Err(CliError::Run(format!("{failed} sweep run(s) failed")));
    }
    Ok(rows)
}

/// Parse a `sweep.csv` written by [`sweep_command`].
pub fn read_sweep(path: &Path) -> CliResult<Vec<SweepRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let bad = |line: usize| CliError::Run(format!("{}: malformed line {line}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_COLUMNS.join(",").as_str()) {
        return Err(bad(1));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != SWEEP_COLUMNS.len() {
                return Err(bad(i + 2));
            }
            Ok(SweepRow {
                value: f[0].parse().map_err(|_| bad(i + 2))?,
                seed: f[1].parse().map_err(|_| bad(i + 2))?,
                success: f[2] == "1",
                min_gap: f[3].parse().map_err(|_| bad(i + 2))?,
                infeasible_cycles: f[4].parse().map_err(|_| bad(i + 2))?,
            })
        })
        .collect()
}

/// `race validate`: returns the config hash.
pub fn validate_command(config: &Path) -> CliResult<String> {
    Ok(load(config)?.hash())
}
