//! Regenerates the published tables and sets each measured value beside its
//! published counterpart.

use serde::{Deserialize, Serialize};

use crate::analysis::{fuzz_beta, fuzz_tail, max_depth_estimate, priority_tail, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::experiments::{
    run_cells, AggregateRow, DEFAULT_REPLICATES, REDUCED_JUMPS, REDUCED_REPLICATES,
};
use crate::published::{self, PublishedTable};
use crate::report::{csv_text, CsvRow};
use crate::scheduler::StrategyKind;
use crate::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub reduced: bool,
    /// Overrides the replicate count implied by `reduced`.
    pub replicates: Option<usize>,
    pub seed: u64,
    pub workers: Option<usize>,
    /// Load used for the fuzz table's expected-size column.
    pub fuzz_lambda: f64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions {
            reduced: false,
            replicates: None,
            seed: 0,
            workers: None,
            fuzz_lambda: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproducedCell {
    pub table: String,
    pub row: String,
    pub column: String,
    pub published: f64,
    pub measured: f64,
    pub relative_deviation: f64,
}

pub const REPRODUCE_HEADER: &[&str] =
    &["table", "row", "column", "published", "measured", "relative_deviation"];

pub fn reproduce_csv(cells: &[ReproducedCell]) -> Result<String> {
    csv_text(
        REPRODUCE_HEADER,
        cells.iter().map(|c| {
            CsvRow::new()
                .text(c.table.as_str())
                .text(c.row.as_str())
                .text(c.column.as_str())
                .num(c.published)
                .num(c.measured)
                .num(c.relative_deviation)
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Metric {
    Avg,
    Max,
    AvgPriority(usize),
    MaxPriority(usize),
}

impl Metric {
    fn read(self, row: &AggregateRow) -> f64 {
        match self {
            Metric::Avg => row.mean_avg_depth,
            Metric::Max => row.mean_max_depth,
            Metric::AvgPriority(k) => row.mean_avg_depth_by_priority[k],
            Metric::MaxPriority(k) => row.mean_max_depth_by_priority[k],
        }
    }
}

fn priority_suffix(col: &str) -> Result<usize> {
    col.rsplit_once("_p")
        .and_then(|(_, k)| k.parse().ok())
        .ok_or_else(|| Error::contract(format!("column {col} names no priority")))
}

fn number_after<'a>(col: &'a str, prefix: &str) -> Option<&'a str> {
    col.strip_prefix(prefix)
}

/// Config and metric behind one simulated table cell.
fn simulated_cell(
    table: &PublishedTable,
    base: &SimConfig,
    row: &str,
    col: &str,
) -> Result<(SimConfig, Metric)> {
    let d: usize = row
        .parse()
        .map_err(|_| Error::contract(format!("row {row} is not a probe count")))?;
    let mut c = SimConfig { d, ..base.clone() };
    let bad = || Error::contract(format!("unknown column {col} in {}", table.id));
    let metric = match table.id {
        "t1" | "a1" => match col {
            "avg" => Metric::Avg,
            "max" => Metric::Max,
            _ => return Err(bad()),
        },
        "t2" | "a2" => {
            let (metric, count) = if let Some(k) = number_after(col, "avg_bursts_") {
                (Metric::Avg, k)
            } else if let Some(k) = number_after(col, "max_bursts_") {
                (Metric::Max, k)
            } else {
                return Err(bad());
            };
            c.burst_count = count.parse().map_err(|_| bad())?;
            metric
        }
        "t3" | "t7" | "a5" | "a6" => {
            if let Some(lag) = number_after(col, "lag_") {
                c.lag = lag.parse().map_err(|_| bad())?;
            } else if let Some(b) = number_after(col, "fuzz_") {
                c.fuzz = b.parse().map_err(|_| bad())?;
            } else if col != "baseline" {
                return Err(bad());
            }
            if matches!(table.id, "t3" | "a5") {
                Metric::Avg
            } else {
                Metric::Max
            }
        }
        "t4" | "t5" | "a3" | "a4" => {
            let (strategy, _) = col.rsplit_once("_p").ok_or_else(bad)?;
            c.strategy = strategy.parse::<StrategyKind>().map_err(|_| bad())?;
            c.priority_mix = SimConfig::uniform_three_priorities();
            let k = priority_suffix(col)?;
            if matches!(table.id, "t4" | "a3") {
                Metric::AvgPriority(k)
            } else {
                Metric::MaxPriority(k)
            }
        }
        "t9" => {
            let (kind, rest) = col.split_once("_lag_").ok_or_else(bad)?;
            let (lag, _) = rest.split_once("_p").ok_or_else(bad)?;
            c.burst_count = 4;
            c.strategy = StrategyKind::MineThenTotal;
            c.priority_mix = SimConfig::uniform_three_priorities();
            c.lag = lag.parse().map_err(|_| bad())?;
            let k = priority_suffix(col)?;
            match kind {
                "avg" => Metric::AvgPriority(k),
                "max" => Metric::MaxPriority(k),
                _ => return Err(bad()),
            }
        }
        other => return Err(Error::contract(format!("table {other} is not simulated"))),
    };
    Ok((c, metric))
}

fn deviation(measured: f64, published: f64) -> f64 {
    crate::experiments::relative_error(measured, published)
}

fn cell(table: &PublishedTable, row: &str, col: &str, published: f64, measured: f64) -> ReproducedCell {
    ReproducedCell {
        table: table.id.into(),
        row: row.into(),
        column: col.into(),
        published,
        measured,
        relative_deviation: deviation(measured, published),
    }
}

fn computed_priority(table: &PublishedTable) -> Result<Vec<ReproducedCell>> {
    let rates = [table.lambda / 3.0; 3];
    let mut out = Vec::new();
    for (row, col, published) in table.cells() {
        let d: usize = row.parse().map_err(|_| Error::contract("bad row"))?;
        let k = priority_suffix(col)?;
        let tail = priority_tail(&rates, &[d; 3], k, DEFAULT_EPSILON)?;
        let measured = if col.starts_with("expected") {
            tail.expected_depth
        } else {
            max_depth_estimate(&tail, SimConfig::default().n)? as f64
        };
        out.push(cell(table, row, col, published, measured));
    }
    Ok(out)
}

fn fuzz_roots(table: &PublishedTable, lambda: f64) -> Result<Vec<ReproducedCell>> {
    let mut out = Vec::new();
    for (row, col, published) in table.cells() {
        let (b, d) = row
            .split_once('/')
            .and_then(|(b, d)| Some((b.parse::<u32>().ok()?, d.parse::<usize>().ok()?)))
            .ok_or_else(|| Error::contract(format!("bad row {row}")))?;
        let measured = match col {
            "beta" => fuzz_beta(b, d)?,
            _ => fuzz_tail(lambda, d, b, DEFAULT_EPSILON)?.expected_depth,
        };
        out.push(cell(table, row, col, published, measured));
    }
    Ok(out)
}

pub fn table_ids() -> Vec<&'static str> {
    published::ALL.iter().map(|t| t.id).collect()
}

/// Reproduces table `id`; simulated tables run every distinct cell once.
pub fn reproduce(id: &str, opts: &ReproduceOptions) -> Result<Vec<ReproducedCell>> {
    let table = published::table(id).ok_or_else(|| {
        Error::contract(format!(
            "unknown table id {id}; expected one of {}",
            table_ids().join(", ")
        ))
    })?;
    match table.id {
        "t6" => return computed_priority(table),
        "t8" => return fuzz_roots(table, opts.fuzz_lambda),
        _ => {}
    }
    let mut base = SimConfig {
        lambda: table.lambda,
        seed: opts.seed,
        ..SimConfig::default()
    };
    let mut replicates = DEFAULT_REPLICATES;
    if opts.reduced {
        base.total_jumps = REDUCED_JUMPS;
        replicates = REDUCED_REPLICATES;
    }
    let replicates = opts.replicates.unwrap_or(replicates);

    let mut configs: Vec<SimConfig> = Vec::new();
    let mut plan = Vec::new();
    for (row, col, published) in table.cells() {
        let (config, metric) = simulated_cell(table, &base, row, col)?;
        let index = match configs.iter().position(|c| *c == config) {
            Some(i) => i,
            None => {
                configs.push(config);
                configs.len() - 1
            }
        };
        plan.push((row, col, published, index, metric));
    }
    let rows = run_cells(&configs, replicates, opts.workers)?;
    Ok(plan
        .into_iter()
        .map(|(row, col, published, index, metric)| {
            cell(table, row, col, published, metric.read(&rows[index]))
        })
        .collect())
}
