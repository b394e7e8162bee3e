//! Replicated runs over parameter grids.
//!
//! A cell is one fully specified [`SimConfig`]; replicate `r` of a cell runs
//! on random stream `(seed, r)`. Per-run statistics are means over the run's
//! measurements, and a cell's row averages those over replicates.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{EffectiveLoad, TailDistribution, TailKind};
use crate::engine::{run_replicate, RecoveryReport, RunResult};
use crate::error::{Error, Result};
use crate::model::SimConfig;
use crate::report::{csv_text, fmt_num, CsvRow};
use crate::scheduler::StrategyKind;

pub const DEFAULT_REPLICATES: usize = 30;
pub const REDUCED_JUMPS: u64 = 2_000_000;
pub const REDUCED_REPLICATES: usize = 5;
pub const WORKERS_ENV: &str = "BAL_ALLOC_WORKERS";

/// Values to sweep; an empty list keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Axes {
    pub lambda: Vec<f64>,
    pub priority_mix: Vec<Vec<f64>>,
    pub strategy: Vec<StrategyKind>,
    pub burst_count: Vec<usize>,
    pub lag: Vec<u64>,
    pub fuzz: Vec<u32>,
    pub d: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: SimConfig,
    pub axes: Axes,
    pub replicates: usize,
    /// Shrinks runs to CI scale.
    pub reduced: bool,
    /// Concurrent runs; falls back to the environment, then to the core
    /// count.
    pub workers: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            base: SimConfig::default(),
            axes: Axes::default(),
            replicates: DEFAULT_REPLICATES,
            reduced: false,
            workers: None,
        }
    }
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl ExperimentSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn effective_replicates(&self) -> usize {
        if self.reduced {
            REDUCED_REPLICATES
        } else {
            self.replicates
        }
    }

    pub fn effective_base(&self) -> SimConfig {
        let mut base = self.base.clone();
        if self.reduced {
            base.total_jumps = REDUCED_JUMPS;
        }
        base
    }

    /// Cross product of the axes, `d` varying fastest.
    pub fn cells(&self) -> Vec<SimConfig> {
        let base = self.effective_base();
        let a = &self.axes;
        let mut out = Vec::new();
        for lambda in axis(&a.lambda, base.lambda) {
            for mix in axis(&a.priority_mix, base.priority_mix.clone()) {
                for strategy in axis(&a.strategy, base.strategy) {
                    for burst_count in axis(&a.burst_count, base.burst_count) {
                        for lag in axis(&a.lag, base.lag) {
                            for fuzz in axis(&a.fuzz, base.fuzz) {
                                for d in axis(&a.d, base.d) {
                                    out.push(SimConfig {
                                        lambda,
                                        priority_mix: mix.clone(),
                                        strategy,
                                        burst_count,
                                        lag,
                                        fuzz,
                                        d,
                                        ..base.clone()
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// The swept coordinates of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCoords {
    pub lambda: f64,
    pub d: usize,
    pub burst_count: usize,
    pub strategy: StrategyKind,
    pub lag: u64,
    pub fuzz: u32,
    pub priority_mix: Vec<f64>,
}

impl CellCoords {
    pub fn of(c: &SimConfig) -> Self {
        CellCoords {
            lambda: c.lambda,
            d: c.d,
            burst_count: c.burst_count,
            strategy: c.strategy,
            lag: c.lag,
            fuzz: c.fuzz,
            priority_mix: c.priority_mix.clone(),
        }
    }

    pub fn label(&self) -> String {
        format!(
            "lambda={} d={} bursts={} strategy={} lag={} fuzz={} mix={}",
            fmt_num(self.lambda),
            self.d,
            self.burst_count,
            self.strategy,
            self.lag,
            self.fuzz,
            fmt_mix(&self.priority_mix)
        )
    }
}

fn fmt_mix(mix: &[f64]) -> String {
    mix.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(";")
}

/// The statistics kept from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub replicate: u64,
    pub avg_depth: f64,
    pub max_depth: f64,
    pub avg_depth_by_priority: Vec<f64>,
    pub max_depth_by_priority: Vec<f64>,
    pub final_tail: Vec<f64>,
    pub recovery: Vec<RecoveryReport>,
    pub finite: bool,
}

impl RunStats {
    pub fn of(r: &RunResult) -> Self {
        let finite = r.time_series.iter().all(|p| p.avg_depth.is_finite())
            && r.summary.avg_depth.is_finite();
        RunStats {
            replicate: r.replicate,
            avg_depth: r.summary.avg_depth,
            max_depth: r.summary.max_depth,
            avg_depth_by_priority: r.summary.avg_depth_by_priority.clone(),
            max_depth_by_priority: r.summary.max_depth_by_priority.clone(),
            final_tail: r.final_measurement().normalized_tail(),
            recovery: r.recovery.clone(),
            finite,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    /// Runs that had at least one burst.
    pub runs_with_bursts: usize,
    pub first_burst_within_first_window: usize,
    pub first_burst_recovered: usize,
    pub last_burst_recovered: usize,
    pub mean_jumps_after_optimal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub coords: CellCoords,
    pub replicates: usize,
    pub mean_avg_depth: f64,
    pub sd_avg_depth: f64,
    pub mean_max_depth: f64,
    pub sd_max_depth: f64,
    pub mean_avg_depth_by_priority: Vec<f64>,
    pub mean_max_depth_by_priority: Vec<f64>,
    pub recovery: RecoveryStats,
    /// Mean over replicates of the final measurement's normalized tail.
    pub mean_final_tail: Vec<f64>,
    pub all_finite: bool,
    pub runs: Vec<RunStats>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Lag-1 autocorrelation of a sequence.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    cov / var
}

impl AggregateRow {
    pub fn of(config: &SimConfig, runs: Vec<RunStats>) -> Self {
        let levels = config.levels();
        let avg: Vec<f64> = runs.iter().map(|r| r.avg_depth).collect();
        let max: Vec<f64> = runs.iter().map(|r| r.max_depth).collect();
        let by = |f: &dyn Fn(&RunStats) -> &Vec<f64>| -> Vec<f64> {
            (0..levels)
                .map(|k| mean(&runs.iter().map(|r| f(r)[k]).collect::<Vec<_>>()))
                .collect()
        };
        let tail_len = runs.iter().map(|r| r.final_tail.len()).max().unwrap_or(0);
        let mut tail = vec![0.0; tail_len];
        for r in &runs {
            for (acc, v) in tail.iter_mut().zip(&r.final_tail) {
                *acc += v;
            }
        }
        tail.iter_mut().for_each(|v| *v /= runs.len().max(1) as f64);

        let mut recovery = RecoveryStats::default();
        let mut waits = Vec::new();
        for r in &runs {
            let (Some(first), Some(last)) = (r.recovery.first(), r.recovery.last()) else {
                continue;
            };
            recovery.runs_with_bursts += 1;
            recovery.first_burst_within_first_window += first.within_first_window() as usize;
            recovery.first_burst_recovered += first.recovered() as usize;
            recovery.last_burst_recovered += last.recovered() as usize;
            waits.extend(first.jumps_after_optimal().map(|j| j as f64));
        }
        if !waits.is_empty() {
            recovery.mean_jumps_after_optimal = Some(mean(&waits));
        }

        AggregateRow {
            coords: CellCoords::of(config),
            replicates: runs.len(),
            mean_avg_depth: mean(&avg),
            sd_avg_depth: sample_sd(&avg),
            mean_max_depth: mean(&max),
            sd_max_depth: sample_sd(&max),
            mean_avg_depth_by_priority: by(&|r| &r.avg_depth_by_priority),
            mean_max_depth_by_priority: by(&|r| &r.max_depth_by_priority),
            recovery,
            mean_final_tail: tail,
            all_finite: runs.iter().all(|r| r.finite),
            runs,
        }
    }

    pub fn run_avg_depths(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.avg_depth).collect()
    }
}

/// Worker count: explicit value, else the environment, else the core count.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok()?.parse().ok())
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1)
}

/// Runs `replicates` replicates of every config and aggregates per cell.
pub fn run_cells(
    configs: &[SimConfig],
    replicates: usize,
    workers: Option<usize>,
) -> Result<Vec<AggregateRow>> {
    if replicates == 0 {
        return Err(Error::contract("need at least one replicate"));
    }
    for c in configs {
        c.validate().map_err(|e| cell_error(c, e))?;
    }
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| (0..replicates as u64).map(move |r| (c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(workers))
        .build()
        .map_err(|e| Error::contract(format!("worker pool: {e}")))?;
    let stats: Vec<Result<RunStats>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| {
                run_replicate(&configs[c], r)
                    .map(|res| RunStats::of(&res))
                    .map_err(|e| cell_error(&configs[c], e))
            })
            .collect()
    });
    let mut stats = stats.into_iter();
    configs
        .iter()
        .map(|c| {
            let runs = stats.by_ref().take(replicates).collect::<Result<Vec<_>>>()?;
            Ok(AggregateRow::of(c, runs))
        })
        .collect()
}

fn cell_error(c: &SimConfig, e: Error) -> Error {
    Error::Cell {
        cell: CellCoords::of(c).label(),
        source: Box::new(e),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<AggregateRow>> {
    run_cells(&spec.cells(), spec.effective_replicates(), spec.workers)
}

pub const RESULTS_HEADER: &[&str] = &[
    "lambda",
    "d",
    "burst_count",
    "strategy",
    "lag",
    "fuzz",
    "priority_mix",
    "replicates",
    "mean_avg_depth",
    "sd_avg_depth",
    "mean_max_depth",
    "sd_max_depth",
    "mean_avg_depth_p0",
    "mean_avg_depth_p1",
    "mean_avg_depth_p2",
    "mean_max_depth_p0",
    "mean_max_depth_p1",
    "mean_max_depth_p2",
    "runs_with_bursts",
    "first_burst_within_first_window",
    "first_burst_recovered",
    "last_burst_recovered",
    "mean_jumps_after_optimal",
];

/// One row per cell; per-priority columns beyond the cell's levels are
/// empty.
pub fn results_csv(rows: &[AggregateRow]) -> Result<String> {
    csv_text(
        RESULTS_HEADER,
        rows.iter().map(|r| {
            let c = &r.coords;
            let mut row = CsvRow::new()
                .num(c.lambda)
                .int(c.d)
                .int(c.burst_count)
                .text(c.strategy.name())
                .int(c.lag)
                .int(c.fuzz)
                .text(fmt_mix(&c.priority_mix))
                .int(r.replicates)
                .num(r.mean_avg_depth)
                .num(r.sd_avg_depth)
                .num(r.mean_max_depth)
                .num(r.sd_max_depth);
            for k in 0..3 {
                row = row.opt(r.mean_avg_depth_by_priority.get(k).copied());
            }
            for k in 0..3 {
                row = row.opt(r.mean_max_depth_by_priority.get(k).copied());
            }
            let rec = &r.recovery;
            row.int(rec.runs_with_bursts)
                .int(rec.first_burst_within_first_window)
                .int(rec.first_burst_recovered)
                .int(rec.last_burst_recovered)
                .opt(rec.mean_jumps_after_optimal)
        }),
    )
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    spec: &'a ExperimentSpec,
    rows: &'a [AggregateRow],
}

/// Writes `<name>.results.csv` and `<name>.summary.json` into `dir`.
pub fn write_outputs(
    spec: &ExperimentSpec,
    rows: &[AggregateRow],
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.results.csv", spec.name));
    let json = dir.join(format!("{}.summary.json", spec.name));
    fs::write(&csv, results_csv(rows)?)?;
    let summary = Summary {
        name: &spec.name,
        spec,
        rows,
    };
    fs::write(&json, serde_json::to_string_pretty(&summary)?)?;
    Ok((csv, json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda: f64,
    pub d: usize,
    pub lag: u64,
    pub mean_avg_depth: f64,
}

/// Interpolated lag at which `higher_d` stops beating `lower_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub lambda: f64,
    pub lower_d: usize,
    pub higher_d: usize,
    pub lag: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub crossovers: Vec<Crossover>,
    pub rows: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn depth(&self, lambda: f64, d: usize, lag: u64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.lambda == lambda && c.d == d && c.lag == lag)
            .map(|c| c.mean_avg_depth)
    }
}

/// Smallest `x` where `diff` turns positive, interpolating linearly between
/// samples. `None` if it never does.
pub fn first_crossing(xs: &[f64], diff: &[f64]) -> Option<f64> {
    let first = *diff.first()?;
    if first > 0.0 {
        return Some(xs[0]);
    }
    for i in 1..xs.len() {
        let (a, b) = (diff[i - 1], diff[i]);
        if b > 0.0 {
            let t = if b == a { 0.0 } else { -a / (b - a) };
            return Some(xs[i - 1] + t * (xs[i] - xs[i - 1]));
        }
    }
    None
}

/// Mean average depth over a `(lambda, d, lag)` grid, with the crossover
/// lag for every pair of probe counts.
pub fn sweep_d_vs_lag(
    lambdas: &[f64],
    ds: &[usize],
    lags: &[u64],
    spec: &ExperimentSpec,
) -> Result<SweepResult> {
    let interval = spec.base.snapshot_interval;
    if let Some(bad) = lags.iter().find(|&&l| interval == 0 || l % interval != 0) {
        return Err(Error::config(
            "lag",
            format!("{bad} is not a multiple of snapshot_interval {interval}"),
        ));
    }
    let mut lags = lags.to_vec();
    lags.sort_unstable();
    let mut spec = spec.clone();
    spec.axes.lambda = lambdas.to_vec();
    spec.axes.d = ds.to_vec();
    spec.axes.lag = lags.clone();
    let rows = run_experiment(&spec)?;
    let cells: Vec<SweepCell> = rows
        .iter()
        .map(|r| SweepCell {
            lambda: r.coords.lambda,
            d: r.coords.d,
            lag: r.coords.lag,
            mean_avg_depth: r.mean_avg_depth,
        })
        .collect();
    let mut result = SweepResult {
        cells,
        crossovers: Vec::new(),
        rows,
    };
    let mut ds = ds.to_vec();
    ds.sort_unstable();
    ds.dedup();
    let xs: Vec<f64> = lags.iter().map(|&l| l as f64).collect();
    for &lambda in lambdas {
        for (i, &lo) in ds.iter().enumerate() {
            for &hi in &ds[i + 1..] {
                let diff: Vec<f64> = lags
                    .iter()
                    .map(|&l| {
                        result.depth(lambda, hi, l).unwrap_or(f64::NAN)
                            - result.depth(lambda, lo, l).unwrap_or(f64::NAN)
                    })
                    .collect();
                result.crossovers.push(Crossover {
                    lambda,
                    lower_d: lo,
                    higher_d: hi,
                    lag: first_crossing(&xs, &diff),
                });
            }
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryComparison {
    pub coords: CellCoords,
    pub priority: Option<usize>,
    pub simulated: f64,
    pub analytic: f64,
    pub relative_error: f64,
    /// Sup distance between the simulated and analytic tails, when the
    /// simulation recorded a comparable tail.
    pub tail_sup_distance: Option<f64>,
}

pub fn relative_error(simulated: f64, analytic: f64) -> f64 {
    if simulated == analytic {
        0.0
    } else {
        (simulated - analytic).abs() / analytic.abs()
    }
}

pub fn tail_sup_distance(empirical: &[f64], analytic: &TailDistribution) -> f64 {
    let len = empirical.len().max(analytic.s.len());
    (0..len)
        .map(|i| (empirical.get(i).copied().unwrap_or(0.0) - analytic.at(i)).abs())
        .fold(0.0, f64::max)
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Pairs `rows[i]` with `tails[i]` and reports the discrepancy; every pair
/// must describe the same coordinates.
pub fn compare_to_theory(
    rows: &[AggregateRow],
    tails: &[TailDistribution],
) -> Result<Vec<TheoryComparison>> {
    if rows.len() != tails.len() {
        return Err(Error::Mismatch(format!(
            "{} simulated cells but {} analytic tails",
            rows.len(),
            tails.len()
        )));
    }
    rows.iter()
        .zip(tails)
        .map(|(row, tail)| {
            let c = &row.coords;
            let p = &tail.params;
            let mismatch = |what: &str| Error::Mismatch(format!("{what} differs for {}", c.label()));
            if p.d != c.d {
                return Err(mismatch("d"));
            }
            let expected_fuzz = match p.kind {
                TailKind::Baseline | TailKind::Priority => 0,
                TailKind::FuzzClosedForm | TailKind::FuzzRecurrence => p.fuzz.unwrap_or(0),
            };
            if c.fuzz != expected_fuzz {
                return Err(mismatch("fuzz"));
            }
            let (simulated, tail_distance) = match p.priority {
                None => {
                    if !same(p.lambda, c.lambda) {
                        return Err(mismatch("lambda"));
                    }
                    (row.mean_avg_depth, Some(tail_sup_distance(&row.mean_final_tail, tail)))
                }
                Some(k) => {
                    let rates: Vec<f64> = c.priority_mix.iter().map(|m| m * c.lambda).collect();
                    let load = EffectiveLoad::new(&rates).map_err(|_| mismatch("priority rates"))?;
                    match load.rho.get(k) {
                        Some(&rho) if same(rho, p.lambda) => {}
                        _ => return Err(mismatch("priority load")),
                    }
                    (row.mean_avg_depth_by_priority[k], None)
                }
            };
            Ok(TheoryComparison {
                coords: c.clone(),
                priority: p.priority,
                simulated,
                analytic: tail.expected_depth,
                relative_error: relative_error(simulated, tail.expected_depth),
                tail_sup_distance: tail_distance,
            })
        })
        .collect()
}
