//! Command-line front end: `simulate`, `analyze`, `sweep` and `reproduce`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{
    baseline_tail, fuzz_beta, fuzz_tail_recurrence, fuzz_tail_with, max_depth_estimate,
    priority_tail, FuzzExponent, TailDistribution, DEFAULT_EPSILON,
};
use crate::engine::run_replicate;
use crate::error::{Error, Result};
use crate::experiments::{
    results_csv, run_experiment, sweep_d_vs_lag, write_outputs, ExperimentSpec,
};
use crate::report::{csv_text, fmt_num, write_time_series, CsvRow};
use crate::reproduce::{reproduce, reproduce_csv, ReproduceOptions};
use crate::scheduler::StrategyKind;
use crate::SimConfig;

#[derive(Debug, Parser)]
#[command(name = "balalloc", version, about = "Balanced allocation simulator and tail analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Simulate(SimulateArgs),
    /// Compute closed-form tails.
    Analyze(AnalyzeArgs),
    /// Run an experiment grid, or a d-versus-lag sweep when lags are given.
    Sweep(SweepArgs),
    /// Regenerate a published table next to its published values.
    Reproduce(ReproduceArgs),
}

/// Simulation parameters; each flag overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct SimFlags {
    /// JSON file with a base configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub jumps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bursts: Option<usize>,
    #[arg(long)]
    pub burst_factor: Option<f64>,
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Comma-separated per-priority arrival rates; their sum becomes the load.
    #[arg(long, value_delimiter = ',', conflicts_with = "lambda")]
    pub priorities: Option<Vec<f64>>,
    #[arg(long)]
    pub lag: Option<u64>,
    #[arg(long)]
    pub snapshot_interval: Option<u64>,
    #[arg(long)]
    pub fuzz: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputFlags {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimFlags,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value_t = 0.95, conflicts_with = "priorities")]
    pub lambda: f64,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long)]
    pub fuzz: Option<u32>,
    /// Comma-separated per-priority arrival rates.
    #[arg(long, value_delimiter = ',')]
    pub priorities: Option<Vec<f64>>,
    /// Queue count for the maximum-depth estimate.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Use the shifted exponent in the fuzzed closed form.
    #[arg(long)]
    pub shifted_exponent: bool,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Experiment spec JSON; simulation flags override its base config.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    /// Loads to sweep.
    #[arg(long = "lambdas", value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    /// Probe counts to sweep.
    #[arg(long = "ds", value_delimiter = ',')]
    pub ds: Vec<usize>,
    /// Lags to sweep; selects the d-versus-lag study.
    #[arg(long = "lags", value_delimiter = ',')]
    pub lags: Vec<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub reduced: bool,
    #[command(flatten)]
    pub sim: SimFlags,
    #[command(flatten)]
    pub output: OutputFlags,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Table id: t1..t9 or a1..a6.
    pub table: String,
    #[arg(long)]
    pub reduced: bool,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Load for the fuzz table's expected-size column.
    #[arg(long, default_value_t = 0.95)]
    pub fuzz_lambda: f64,
    #[command(flatten)]
    pub output: OutputFlags,
}

fn entropy_seed() -> u64 {
    rand::random()
}

/// Builds a config from an optional file plus flag overrides. Returns the
/// config and whether the seed was drawn from entropy.
pub fn build_config(flags: &SimFlags) -> Result<(SimConfig, bool)> {
    let (base, has_seed) = match &flags.config {
        Some(path) => {
            let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            let has_seed = value.get("seed").is_some();
            (serde_json::from_value(value)?, has_seed)
        }
        None => (SimConfig::default(), false),
    };
    apply_flags(base, has_seed, flags)
}

/// Applies flag overrides to `c`; draws a seed unless one is already set.
pub fn apply_flags(mut c: SimConfig, has_seed: bool, flags: &SimFlags) -> Result<(SimConfig, bool)> {
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = flags.$flag.clone() { c.$field = v; })*
        };
    }
    set!(lambda => lambda, mu => mu, n => n, d => d, jumps => total_jumps,
         bursts => burst_count, burst_factor => burst_factor, warmup => warmup_fraction,
         strategy => strategy, lag => lag, snapshot_interval => snapshot_interval,
         fuzz => fuzz, seed => seed);
    if let Some(rates) = &flags.priorities {
        let total: f64 = rates.iter().sum();
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("priority_mix", "priority rates must be positive"));
        }
        c.lambda = total;
        c.priority_mix = rates.iter().map(|r| r / total).collect();
    }
    let drawn = !has_seed && flags.seed.is_none();
    if drawn {
        c.seed = entropy_seed();
    }
    c.validate()?;
    Ok((c, drawn))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let (config, drawn) = build_config(&args.sim)?;
    if drawn {
        writeln!(out, "seed: {} (drawn from entropy)", config.seed)?;
    }
    let result = run_replicate(&config, 0)?;
    let mut series = Vec::new();
    write_time_series(&mut series, &result.time_series, config.levels())?;
    let dir = &args.output.out;
    let csv = write_file(dir, "time_series.csv", &series)?;
    let json_path = write_file(dir, "run.json", serde_json::to_string_pretty(&result)?.as_bytes())?;
    let s = &result.summary;
    match args.output.format {
        Format::Csv => {
            writeln!(out, "avg_depth,max_depth")?;
            writeln!(out, "{},{}", fmt_num(s.avg_depth), fmt_num(s.max_depth))?;
            for (k, (a, m)) in s
                .avg_depth_by_priority
                .iter()
                .zip(&s.max_depth_by_priority)
                .enumerate()
                .filter(|_| config.levels() > 1)
            {
                writeln!(out, "p{k}: avg {} max {}", fmt_num(*a), fmt_num(*m))?;
            }
            for r in &result.recovery {
                writeln!(
                    out,
                    "burst {}: recovered_at {}",
                    r.burst,
                    r.recovered_at.map_or("never".to_string(), |j| j.to_string())
                )?;
            }
        }
        Format::Json => {
            let summary = json!({
                "seed": config.seed,
                "summary": s,
                "recovery": result.recovery,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
    }
    writeln!(out, "wrote {} and {}", csv.display(), json_path.display())?;
    Ok(())
}

fn tail_file(tail: &TailDistribution, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    tail.write_csv(&mut buf, Some(n))?;
    Ok(buf)
}

fn print_tail(out: &mut dyn Write, label: &str, tail: &TailDistribution, n: usize) -> Result<()> {
    writeln!(
        out,
        "{label}: expected_depth {} max_depth_estimate {} terms {}",
        fmt_num(tail.expected_depth),
        max_depth_estimate(tail, n)?,
        tail.s.len()
    )?;
    for (i, v) in tail.s.iter().enumerate().take(12) {
        writeln!(out, "  s[{i}] = {}", fmt_num(*v))?;
    }
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let eps = args.epsilon;
    let dir = &args.output.out;
    let mut report = serde_json::Map::new();
    if let Some(rates) = &args.priorities {
        let ds = vec![args.d; rates.len()];
        let mut expected = Vec::new();
        for k in 0..rates.len() {
            let tail = priority_tail(rates, &ds, k, eps)?;
            if args.output.format == Format::Csv {
                print_tail(out, &format!("p{k}"), &tail, args.n)?;
            }
            write_file(dir, &format!("tail_p{k}.csv"), &tail_file(&tail, args.n)?)?;
            expected.push(tail.expected_depth);
        }
        writeln!(
            out,
            "expected_depth_by_priority {}",
            expected.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(",")
        )?;
        report.insert("expected_depth_by_priority".into(), json!(expected));
    } else if let Some(b) = args.fuzz {
        let beta = fuzz_beta(b, args.d)?;
        let exponent = if args.shifted_exponent {
            FuzzExponent::Shifted
        } else {
            FuzzExponent::Continuous
        };
        let closed = fuzz_tail_with(args.lambda, args.d, b, eps, exponent)?;
        let rec = fuzz_tail_recurrence(args.lambda, args.d, b, eps)?;
        writeln!(out, "beta {}", fmt_num(beta))?;
        if args.output.format == Format::Csv {
            print_tail(out, "closed form", &closed, args.n)?;
            print_tail(out, "recurrence", &rec, args.n)?;
        }
        write_file(dir, "tail.csv", &tail_file(&closed, args.n)?)?;
        write_file(dir, "tail_recurrence.csv", &tail_file(&rec, args.n)?)?;
        report.insert("beta".into(), json!(beta));
        report.insert("expected_depth".into(), json!(closed.expected_depth));
        report.insert("expected_depth_recurrence".into(), json!(rec.expected_depth));
    } else {
        let tail = baseline_tail(args.lambda, args.d, eps)?;
        if args.output.format == Format::Csv {
            print_tail(out, "tail", &tail, args.n)?;
        }
        writeln!(out, "expected_depth {}", fmt_num(tail.expected_depth))?;
        write_file(dir, "tail.csv", &tail_file(&tail, args.n)?)?;
        report.insert("expected_depth".into(), json!(tail.expected_depth));
        report.insert("s".into(), json!(tail.s));
    }
    if args.output.format == Format::Json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

pub const CROSSOVER_HEADER: &[&str] = &["lambda", "lower_d", "higher_d", "crossover_lag"];

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::from_json_file(path)?,
        None => ExperimentSpec::default(),
    };
    // a spec file pins its own seed; flags apply on top of its base config
    let (base, drawn) = match (&args.spec, &args.sim.config) {
        (_, Some(_)) => build_config(&args.sim)?,
        (Some(_), None) => apply_flags(spec.base.clone(), true, &args.sim)?,
        (None, None) => apply_flags(SimConfig::default(), false, &args.sim)?,
    };
    if drawn {
        writeln!(out, "seed: {} (drawn from entropy)", base.seed)?;
    }
    spec.base = base;
    if let Some(name) = &args.name {
        spec.name = name.clone();
    }
    if let Some(r) = args.replicates {
        spec.replicates = r;
    }
    spec.reduced |= args.reduced;
    let dir = &args.output.out;
    if args.lags.is_empty() {
        if !args.lambdas.is_empty() {
            spec.axes.lambda = args.lambdas.clone();
        }
        if !args.ds.is_empty() {
            spec.axes.d = args.ds.clone();
        }
        let rows = run_experiment(&spec)?;
        let (csv, json_path) = write_outputs(&spec, &rows, dir)?;
        emit_rows(out, args.output.format, &results_csv(&rows)?, &rows)?;
        writeln!(out, "wrote {} and {}", csv.display(), json_path.display())?;
        return Ok(());
    }
    let lambdas = if args.lambdas.is_empty() {
        vec![spec.base.lambda]
    } else {
        args.lambdas.clone()
    };
    let ds = if args.ds.is_empty() {
        vec![1, 2, 3, 4]
    } else {
        args.ds.clone()
    };
    let sweep = sweep_d_vs_lag(&lambdas, &ds, &args.lags, &spec)?;
    let (csv, json_path) = write_outputs(&spec, &sweep.rows, dir)?;
    let cross = csv_text(
        CROSSOVER_HEADER,
        sweep.crossovers.iter().map(|c| {
            CsvRow::new()
                .num(c.lambda)
                .int(c.lower_d)
                .int(c.higher_d)
                .opt(c.lag)
        }),
    )?;
    let cross_path = write_file(dir, &format!("{}.crossovers.csv", spec.name), cross.as_bytes())?;
    match args.output.format {
        Format::Csv => {
            writeln!(out, "lambda,d,lag,mean_avg_depth")?;
            for c in &sweep.cells {
                writeln!(out, "{},{},{},{}", fmt_num(c.lambda), c.d, c.lag, fmt_num(c.mean_avg_depth))?;
            }
            write!(out, "{cross}")?;
        }
        Format::Json => {
            let v = json!({ "cells": sweep.cells, "crossovers": sweep.crossovers });
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
    }
    writeln!(
        out,
        "wrote {}, {} and {}",
        csv.display(),
        json_path.display(),
        cross_path.display()
    )?;
    Ok(())
}

fn emit_rows(
    out: &mut dyn Write,
    format: Format,
    csv: &str,
    rows: &[crate::experiments::AggregateRow],
) -> Result<()> {
    match format {
        Format::Csv => write!(out, "{csv}")?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(rows)?)?,
    }
    Ok(())
}

pub fn cmd_reproduce(args: &ReproduceArgs, out: &mut dyn Write) -> Result<()> {
    let seed = match args.seed {
        Some(s) => s,
        None => {
            let s = entropy_seed();
            writeln!(out, "seed: {s} (drawn from entropy)")?;
            s
        }
    };
    let opts = ReproduceOptions {
        reduced: args.reduced,
        replicates: args.replicates,
        seed,
        workers: None,
        fuzz_lambda: args.fuzz_lambda,
    };
    let cells = reproduce(&args.table, &opts)?;
    let csv = reproduce_csv(&cells)?;
    let path = write_file(&args.output.out, &format!("{}.reproduce.csv", args.table), csv.as_bytes())?;
    match args.output.format {
        Format::Csv => write!(out, "{csv}")?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&cells)?)?,
    }
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Reproduce(a) => cmd_reproduce(a, out),
    }
}
