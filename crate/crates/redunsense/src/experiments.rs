//! Seeded Monte Carlo sweeps comparing architectures and strategies.
//!
//! Trials are paired: trial `t` uses seed `base_seed + t` for *every*
//! architecture, so all designs see statistically matched mismatch draws and
//! improvement ratios are low-variance paired statistics. A degenerate draw
//! (nonpositive realized weight) is re-seeded with a fixed `2^32` offset and
//! counted, keeping the sweep deterministic despite rejection.
//!
//! Trials may execute in parallel; rows are sorted before aggregation so the
//! exported tables are identical to a sequential run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{self, ComponentSet, MismatchModel, RealizedSet};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricMode};
use crate::selection::SelectionStrategy;

/// Re-seed offset applied when a realization draws a nonpositive weight.
pub const RESEED_OFFSET: u64 = 1 << 32;

/// Guard on `trials * |sigma_list| * |n_list| * |architectures|`.
const MAX_WORK_ITEMS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ArchSpec {
    Cos,
    Crs { replicas: u32 },
    Res,
    Custom { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub architectures: Vec<ArchSpec>,
    pub strategies: Vec<SelectionStrategy>,
    pub sigma_list: Vec<f64>,
    pub n_list: Vec<u32>,
    pub trials: u64,
    pub base_seed: u64,
    pub mode: MetricMode,
}

impl ExperimentConfig {
    /// Parses a JSON config file; unknown keys are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            serde_json::from_str(&body).map_err(|e| Error::SchemaViolation {
                field: e.to_string(),
                message: format!("cannot parse {}", path.display()),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::SchemaViolation {
                field: "trials".into(),
                message: "must be >= 1".into(),
            });
        }
        for (name, empty) in [
            ("architectures", self.architectures.is_empty()),
            ("strategies", self.strategies.is_empty()),
            ("sigma_list", self.sigma_list.is_empty()),
            ("n_list", self.n_list.is_empty()),
        ] {
            if empty {
                return Err(Error::SchemaViolation {
                    field: name.into(),
                    message: "must be non-empty".into(),
                });
            }
        }
        for (i, s) in self.sigma_list.iter().enumerate() {
            if !(*s >= 0.0) || !s.is_finite() {
                return Err(Error::SchemaViolation {
                    field: format!("sigma_list[{i}]"),
                    message: "sigma must be a finite nonnegative real".into(),
                });
            }
        }
        let work = self.trials as u128
            * self.sigma_list.len() as u128
            * self.n_list.len() as u128
            * self.architectures.len() as u128;
        if work > MAX_WORK_ITEMS as u128 {
            return Err(Error::SchemaViolation {
                field: "trials".into(),
                message: format!("sweep size {work} exceeds the guard {MAX_WORK_ITEMS}"),
            });
        }
        // every (architecture, strategy) pair must be admissible
        for (set, _) in self.instantiate_sets()? {
            for strategy in &self.strategies {
                strategy.check_admissible(&set)?;
            }
        }
        Ok(())
    }

    /// Builds the concrete component sets for this sweep. Generator
    /// architectures expand over `n_list`; a custom set is loaded once and
    /// labelled with its own resolution.
    fn instantiate_sets(&self) -> Result<Vec<(ComponentSet, u32)>> {
        let mut out = Vec::new();
        for spec in &self.architectures {
            match spec {
                ArchSpec::Custom { path } => {
                    let set = components::load_custom(path)?;
                    let n = set.resolution_bits;
                    out.push((set, n));
                }
                _ => {
                    for &n in &self.n_list {
                        let set = match spec {
                            ArchSpec::Cos => components::gen_binary(n)?,
                            ArchSpec::Crs { replicas } => components::gen_replicated(n, *replicas)?,
                            ArchSpec::Res => components::gen_dual_binary(n)?,
                            ArchSpec::Custom { .. } => unreachable!(),
                        };
                        out.push((set, n));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One (architecture, strategy, trial) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub arch: String,
    pub strategy: String,
    #[serde(rename = "N")]
    pub n: u32,
    pub sigma: f64,
    pub trial: u64,
    pub max_inl: f64,
    pub rms_inl: f64,
    pub max_dnl: f64,
}

/// Per-(arch, strategy, N, sigma) summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub arch: String,
    pub strategy: String,
    #[serde(rename = "N")]
    pub n: u32,
    pub sigma: f64,
    pub mean_max_inl: f64,
    pub std_max_inl: f64,
    pub p95_max_inl: f64,
    /// Mean max-INL of the COS/canonical baseline at the same (N, sigma)
    /// divided by this cell's mean; absent when no baseline ran.
    pub improvement_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    /// Number of degenerate realizations that were re-seeded.
    pub reseeds: u64,
}

/// Realizes the set at the trial's paired seed, re-seeding on degenerate
/// draws. Returns the realization and the number of re-seeds taken.
fn realize_with_reseed(
    set: &ComponentSet,
    model: &MismatchModel,
    base_seed: u64,
    trial: u64,
) -> Result<(RealizedSet, u64)> {
    let mut seed = base_seed.wrapping_add(trial);
    let mut reseeds = 0u64;
    loop {
        match components::realize(set, model, seed) {
            Ok(r) => return Ok((r, reseeds)),
            Err(Error::DegenerateRealization { .. }) => {
                seed = seed.wrapping_add(RESEED_OFFSET);
                reseeds += 1;
                if reseeds > 1000 {
                    return Err(Error::ResourceLimit(
                        "more than 1000 re-seeds for one trial; sigma is likely far too large"
                            .into(),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs the full sweep. The result is a pure function of the config,
/// regardless of the execution schedule.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let sets = config.instantiate_sets()?;

    let mut work: Vec<(usize, f64, u64)> = Vec::new();
    for set_idx in 0..sets.len() {
        for &sigma in &config.sigma_list {
            for trial in 0..config.trials {
                work.push((set_idx, sigma, trial));
            }
        }
    }

    let results: Vec<Result<(Vec<Row>, u64)>> = work
        .par_iter()
        .map(|&(set_idx, sigma, trial)| {
            let (set, n) = &sets[set_idx];
            let model = MismatchModel::new(sigma)?;
            let (realized, reseeds) =
                realize_with_reseed(set, &model, config.base_seed, trial)?;
            let mut rows = Vec::with_capacity(config.strategies.len());
            for &strategy in &config.strategies {
                let tf = metrics::transfer_function(&realized, strategy)?;
                let report = metrics::summary(&tf, config.mode);
                rows.push(Row {
                    arch: set.arch.to_string(),
                    strategy: strategy.label().to_string(),
                    n: *n,
                    sigma,
                    trial,
                    max_inl: report.max_inl,
                    rms_inl: report.rms_inl,
                    max_dnl: report.max_dnl,
                });
            }
            Ok((rows, reseeds))
        })
        .collect();

    let mut rows = Vec::new();
    let mut reseeds = 0u64;
    for r in results {
        let (mut batch, re) = r?;
        rows.append(&mut batch);
        reseeds += re;
    }
    // sort-before-reduce: parallel execution cannot change the export
    rows.sort_by(|a, b| {
        (&a.arch, &a.strategy, a.n)
            .cmp(&(&b.arch, &b.strategy, b.n))
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.trial.cmp(&b.trial))
    });
    let aggregates = aggregate(&rows);
    Ok(ResultTable {
        rows,
        aggregates,
        reseeds,
    })
}

fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, String, u32, u64), Vec<f64>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((
                row.arch.clone(),
                row.strategy.clone(),
                row.n,
                row.sigma.to_bits(),
            ))
            .or_default()
            .push(row.max_inl);
    }
    let mean_of = |values: &[f64]| values.iter().sum::<f64>() / values.len() as f64;
    // baseline per (N, sigma): COS under the canonical strategy
    let mut baselines: BTreeMap<(u32, u64), f64> = BTreeMap::new();
    for ((arch, strategy, n, sigma_bits), values) in &groups {
        if arch == "COS" && strategy == "canonical" {
            baselines.insert((*n, *sigma_bits), mean_of(values));
        }
    }
    groups
        .into_iter()
        .map(|((arch, strategy, n, sigma_bits), mut values)| {
            let mean = mean_of(&values);
            let std = if values.len() < 2 {
                0.0
            } else {
                let m = mean;
                (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
                    / (values.len() - 1) as f64)
                    .sqrt()
            };
            values.sort_by(|a, b| a.total_cmp(b));
            let rank = ((0.95 * values.len() as f64).ceil() as usize).clamp(1, values.len());
            let p95 = values[rank - 1];
            let improvement_ratio = baselines.get(&(n, sigma_bits)).and_then(|&b| {
                if mean > 0.0 {
                    Some(b / mean)
                } else if b == 0.0 {
                    Some(1.0)
                } else {
                    None
                }
            });
            Aggregate {
                arch,
                strategy,
                n,
                sigma: f64::from_bits(sigma_bits),
                mean_max_inl: mean,
                std_max_inl: std,
                p95_max_inl: p95,
                improvement_ratio,
            }
        })
        .collect()
}

/// Merges result tables (from separate runs) and recomputes the aggregates.
pub fn merge(tables: Vec<ResultTable>) -> ResultTable {
    let mut rows = Vec::new();
    let mut reseeds = 0;
    for t in tables {
        rows.extend(t.rows);
        reseeds += t.reseeds;
    }
    rows.sort_by(|a, b| {
        (&a.arch, &a.strategy, a.n)
            .cmp(&(&b.arch, &b.strategy, b.n))
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.trial.cmp(&b.trial))
    });
    let aggregates = aggregate(&rows);
    ResultTable {
        rows,
        aggregates,
        reseeds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ResultTable {
    /// Writes the table. CSV form: `rows.csv` and `aggregates.csv` in
    /// `out_dir` (the re-seed count rides in a `#` comment on `rows.csv`);
    /// JSON form: `results.json`. Returns the written paths.
    pub fn write(&self, format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        match format {
            ReportFormat::Json => {
                let path = out_dir.join("results.json");
                let body = serde_json::to_string_pretty(self).expect("table serialization");
                std::fs::write(&path, body + "\n").map_err(io_err(&path))?;
                Ok(vec![path])
            }
            ReportFormat::Csv => {
                let rows_path = out_dir.join("rows.csv");
                let mut w = csv::WriterBuilder::new()
                    .from_writer(format!("# reseeds={}\n", self.reseeds).into_bytes());
                if self.rows.is_empty() {
                    w.write_record([
                        "arch", "strategy", "N", "sigma", "trial", "max_inl", "rms_inl",
                        "max_dnl",
                    ])
                    .map_err(|e| Error::Parse {
                        path: rows_path.clone(),
                        message: e.to_string(),
                    })?;
                }
                for row in &self.rows {
                    w.serialize(row).map_err(|e| Error::Parse {
                        path: rows_path.clone(),
                        message: e.to_string(),
                    })?;
                }
                let buf = w.into_inner().map_err(|e| Error::Parse {
                    path: rows_path.clone(),
                    message: e.to_string(),
                })?;
                std::fs::write(&rows_path, buf).map_err(io_err(&rows_path))?;

                let agg_path = out_dir.join("aggregates.csv");
                let mut w = csv::Writer::from_writer(Vec::new());
                if self.aggregates.is_empty() {
                    w.write_record([
                        "arch",
                        "strategy",
                        "N",
                        "sigma",
                        "mean_max_inl",
                        "std_max_inl",
                        "p95_max_inl",
                        "improvement_ratio",
                    ])
                    .map_err(|e| Error::Parse {
                        path: agg_path.clone(),
                        message: e.to_string(),
                    })?;
                }
                for agg in &self.aggregates {
                    w.serialize(agg).map_err(|e| Error::Parse {
                        path: agg_path.clone(),
                        message: e.to_string(),
                    })?;
                }
                let buf = w.into_inner().map_err(|e| Error::Parse {
                    path: agg_path.clone(),
                    message: e.to_string(),
                })?;
                std::fs::write(&agg_path, buf).map_err(io_err(&agg_path))?;
                Ok(vec![rows_path, agg_path])
            }
        }
    }

    pub fn read_json(path: &Path) -> Result<ResultTable> {
        let body = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads the CSV pair back into a table.
    pub fn read_csv(rows_path: &Path, aggregates_path: &Path) -> Result<ResultTable> {
        let body = std::fs::read_to_string(rows_path).map_err(io_err(rows_path))?;
        let mut reseeds = 0u64;
        if let Some(line) = body.lines().next() {
            if let Some(v) = line.strip_prefix("# reseeds=") {
                reseeds = v.trim().parse().map_err(|_| Error::Parse {
                    path: rows_path.to_path_buf(),
                    message: "bad reseed comment".into(),
                })?;
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(body.as_bytes());
        let rows: Vec<Row> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: rows_path.to_path_buf(),
                message: e.to_string(),
            })?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(aggregates_path)
            .map_err(|e| Error::Parse {
                path: aggregates_path.to_path_buf(),
                message: e.to_string(),
            })?;
        let aggregates: Vec<Aggregate> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: aggregates_path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(ResultTable {
            rows,
            aggregates,
            reseeds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            architectures: vec![ArchSpec::Cos, ArchSpec::Res, ArchSpec::Crs { replicas: 2 }],
            strategies: vec![SelectionStrategy::Canonical],
            sigma_list: vec![0.0, 0.02],
            n_list: vec![4],
            trials: 3,
            base_seed: 1,
            mode: MetricMode::GainNormalized,
        }
    }

    #[test]
    fn zero_sigma_rows_are_all_zero() {
        let mut config = small_config();
        config.sigma_list = vec![0.0];
        config.trials = 1;
        let table = run_sweep(&config).unwrap();
        assert!(!table.rows.is_empty());
        for row in &table.rows {
            assert_eq!(row.max_inl, 0.0);
            assert_eq!(row.rms_inl, 0.0);
            assert_eq!(row.max_dnl, 0.0);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let config = small_config();
        let a = run_sweep(&config).unwrap();
        let b = run_sweep(&config).unwrap();
        assert_eq!(a, b);
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn aggregates_match_recomputation_from_rows() {
        let config = small_config();
        let table = run_sweep(&config).unwrap();
        for agg in &table.aggregates {
            let values: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| {
                    r.arch == agg.arch
                        && r.strategy == agg.strategy
                        && r.n == agg.n
                        && r.sigma == agg.sigma
                })
                .map(|r| r.max_inl)
                .collect();
            assert!(!values.is_empty());
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            assert_eq!(agg.mean_max_inl, mean);
        }
    }

    #[test]
    fn json_csv_json_round_trip_is_lossless() {
        let config = small_config();
        let table = run_sweep(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        table.write(ReportFormat::Json, dir.path()).unwrap();
        let from_json = ResultTable::read_json(&dir.path().join("results.json")).unwrap();
        assert_eq!(from_json, table);
        from_json.write(ReportFormat::Csv, dir.path()).unwrap();
        let from_csv = ResultTable::read_csv(
            &dir.path().join("rows.csv"),
            &dir.path().join("aggregates.csv"),
        )
        .unwrap();
        assert_eq!(from_csv, table);
    }

    #[test]
    fn empty_table_writes_header_only() {
        let table = ResultTable {
            rows: vec![],
            aggregates: vec![],
            reseeds: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        table.write(ReportFormat::Csv, dir.path()).unwrap();
        let body = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        assert_eq!(
            body,
            "# reseeds=0\narch,strategy,N,sigma,trial,max_inl,rms_inl,max_dnl\n"
        );
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(
            &path,
            r#"{"architectures":[{"kind":"cos"}],"strategies":[{"kind":"canonical"}],
               "sigma_list":[0.0],"n_list":[3],"trials":1,"base_seed":0,
               "mode":"gain_normalized","bogus":1}"#,
        )
        .unwrap();
        assert!(matches!(
            ExperimentConfig::load(&path),
            Err(Error::SchemaViolation { .. })
        ));
    }

    #[test]
    fn inadmissible_pairs_are_rejected() {
        let mut config = small_config();
        config.strategies = vec![SelectionStrategy::ReplicaBest];
        assert!(matches!(
            run_sweep(&config),
            Err(Error::StrategyMismatch { .. })
        ));
    }

    #[test]
    fn paired_ordering_emerges_at_n8() {
        // smaller cousin of the flagship comparison to keep unit tests fast
        let config = ExperimentConfig {
            architectures: vec![ArchSpec::Cos, ArchSpec::Res, ArchSpec::Crs { replicas: 2 }],
            strategies: vec![
                SelectionStrategy::Canonical,
                SelectionStrategy::SplitDp,
                SelectionStrategy::ReplicaBest,
            ],
            sigma_list: vec![0.02],
            n_list: vec![6],
            trials: 60,
            base_seed: 7,
            mode: MetricMode::GainNormalized,
        };
        // canonical-only strategies per arch keeps pairs admissible; instead
        // run per-arch configs and merge
        let cos = ExperimentConfig {
            architectures: vec![ArchSpec::Cos],
            strategies: vec![SelectionStrategy::Canonical],
            ..config.clone()
        };
        let res = ExperimentConfig {
            architectures: vec![ArchSpec::Res],
            strategies: vec![SelectionStrategy::SplitDp],
            ..config.clone()
        };
        let crs = ExperimentConfig {
            architectures: vec![ArchSpec::Crs { replicas: 2 }],
            strategies: vec![SelectionStrategy::ReplicaBest],
            ..config.clone()
        };
        let merged = merge(vec![
            run_sweep(&cos).unwrap(),
            run_sweep(&res).unwrap(),
            run_sweep(&crs).unwrap(),
        ]);
        let mean = |arch: &str| {
            merged
                .aggregates
                .iter()
                .find(|a| a.arch == arch)
                .unwrap()
                .mean_max_inl
        };
        assert!(mean("RES") < mean("CRS"));
        assert!(mean("CRS") < mean("COS"));
    }
}
