//! Discrete-time jump simulator.
//!
//! Every jump is, with probability 1/2, an arrival jump or a departure jump.
//! An arrival jump brings a Poisson number of jobs (rate `lambda`, or
//! `lambda * burst_factor` inside a burst window) that are dispatched one at a
//! time. A departure jump picks a queue uniformly and, with probability `mu`,
//! retires its highest-priority job.
//!
//! Runs with bursts follow the cycle burst, optimal recovery period, buffer,
//! measurement. The engine records a [`Measurement`] just before every burst
//! after the first and at the end of the run, and samples the system average
//! depth every `snapshot_interval` jumps for recovery detection and plotting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PoissonSampler, Priority, QueueState, RngStream, SimConfig, MAX_PRIORITIES};
use crate::scheduler::{probe_into, select_unchecked, view_for_jump, SnapshotStore};

/// Width of the sliding window used to detect recovery, in jumps.
pub const DEFAULT_RECOVERY_WINDOW: u64 = 10_000;

/// Minimum number of jumps, as a multiple of the burst length, a perfectly
/// informed scheduler needs to drain a burst. Bursts that stay below capacity
/// need none.
pub fn optimal_recovery_ratio(lambda: f64, burst_factor: f64) -> Result<f64> {
    if !(lambda < 1.0) {
        return Err(Error::contract(format!("lambda {lambda} must be below 1")));
    }
    let ratio = (lambda * burst_factor - 1.0) / (1.0 - lambda);
    Ok(ratio.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstWindow {
    /// First jump of the burst.
    pub start: u64,
    /// One past the last jump of the burst.
    pub end: u64,
    pub rate: f64,
    pub optimal_recovery_jumps: u64,
}

impl BurstWindow {
    pub fn recovery_end(&self) -> u64 {
        self.end + self.optimal_recovery_jumps
    }

    #[inline]
    pub fn contains(&self, jump: u64) -> bool {
        (self.start..self.end).contains(&jump)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstSchedule {
    pub total_jumps: u64,
    pub windows: Vec<BurstWindow>,
    /// Jumps at which the full queue state is inspected, in order.
    pub measurement_jumps: Vec<u64>,
}

impl BurstSchedule {
    pub fn first_burst_start(&self) -> Option<u64> {
        self.windows.first().map(|w| w.start)
    }

    /// End of the scan region following burst `i`: the next burst's start or
    /// the end of the run.
    pub fn cycle_end(&self, i: usize) -> u64 {
        self.windows
            .get(i + 1)
            .map_or(self.total_jumps, |w| w.start)
    }
}

/// Equidistant burst windows over the post-warmup region, each with its
/// optimal recovery period and a measurement point at the end of its cycle.
pub fn build_burst_schedule(config: &SimConfig) -> Result<BurstSchedule> {
    config.validate()?;
    let total = config.total_jumps;
    if config.burst_count == 0 {
        return Ok(BurstSchedule {
            total_jumps: total,
            windows: Vec::new(),
            measurement_jumps: vec![total],
        });
    }
    let warmup = (config.warmup_fraction * total as f64).round() as u64;
    let length = (config.burst_length_fraction * total as f64).round() as u64;
    if length == 0 {
        return Err(Error::config(
            "burst_length_fraction",
            "bursts shorter than one jump",
        ));
    }
    let ratio = optimal_recovery_ratio(config.lambda, config.burst_factor)?;
    let recovery = (ratio * length as f64).round() as u64;
    let region = (total - warmup) as f64;
    let k = config.burst_count;
    let mut windows = Vec::with_capacity(k);
    for i in 0..k {
        let start = warmup + (region * i as f64 / k as f64).round() as u64;
        let next = if i + 1 < k {
            warmup + (region * (i + 1) as f64 / k as f64).round() as u64
        } else {
            total
        };
        if start + length > next {
            return Err(Error::config(
                "burst_count",
                format!(
                    "{k} bursts of {length} jumps do not fit after warmup jump {warmup} of {total}"
                ),
            ));
        }
        windows.push(BurstWindow {
            start,
            end: start + length,
            rate: config.burst_rate(),
            optimal_recovery_jumps: recovery,
        });
    }
    let mut measurement_jumps: Vec<u64> = windows.iter().skip(1).map(|w| w.start).collect();
    measurement_jumps.push(total);
    Ok(BurstSchedule {
        total_jumps: total,
        windows,
        measurement_jumps,
    })
}

/// Full inspection of all queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub jump: u64,
    pub total_jobs: u64,
    pub avg_depth: f64,
    pub max_depth: u32,
    pub avg_depth_by_priority: Vec<f64>,
    pub max_depth_by_priority: Vec<u32>,
    /// Entry `i` counts queues holding at least `i` jobs.
    pub tail_histogram: Vec<u32>,
}

impl Measurement {
    pub fn of(queues: &[QueueState], levels: usize, jump: u64) -> Self {
        let n = queues.len();
        let mut exact: Vec<u32> = Vec::new();
        let mut per_level = [0u64; MAX_PRIORITIES];
        let mut max_level = [0u32; MAX_PRIORITIES];
        let mut total = 0u64;
        for q in queues {
            let depth = q.total() as usize;
            if depth >= exact.len() {
                exact.resize(depth + 1, 0);
            }
            exact[depth] += 1;
            total += depth as u64;
            for (l, &c) in q.counts.iter().enumerate() {
                per_level[l] += c as u64;
                max_level[l] = max_level[l].max(c);
            }
        }
        let mut tail = vec![0u32; exact.len()];
        let mut acc = 0u32;
        for i in (0..exact.len()).rev() {
            acc += exact[i];
            tail[i] = acc;
        }
        Measurement {
            jump,
            total_jobs: total,
            avg_depth: total as f64 / n as f64,
            max_depth: exact.len().saturating_sub(1) as u32,
            avg_depth_by_priority: per_level[..levels]
                .iter()
                .map(|&c| c as f64 / n as f64)
                .collect(),
            max_depth_by_priority: max_level[..levels].to_vec(),
            tail_histogram: tail,
        }
    }

    /// Fraction of queues with at least `i` jobs, for `i = 0..=max_depth`.
    pub fn normalized_tail(&self) -> Vec<f64> {
        let n = self.tail_histogram.first().copied().unwrap_or(0).max(1) as f64;
        self.tail_histogram.iter().map(|&c| c as f64 / n).collect()
    }
}

/// One row of the periodic time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub jump: u64,
    pub avg_depth: f64,
    pub max_depth: u32,
    pub avg_depth_by_priority: [f64; MAX_PRIORITIES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub burst: usize,
    /// Average depth just before the first burst.
    pub baseline: f64,
    /// First jump after the optimal recovery period.
    pub scan_start: u64,
    pub scan_end: u64,
    /// Start of the first window whose mean depth fell to the baseline.
    pub recovered_at: Option<u64>,
}

impl RecoveryReport {
    pub fn recovered(&self) -> bool {
        self.recovered_at.is_some()
    }

    /// Recovery was seen in the very first window after the optimal period.
    pub fn within_first_window(&self) -> bool {
        self.recovered_at == Some(self.scan_start)
    }

    pub fn jumps_after_optimal(&self) -> Option<u64> {
        self.recovered_at.map(|r| r - self.scan_start)
    }
}

/// Per-run aggregate: mean over the run's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub avg_depth: f64,
    pub max_depth: f64,
    pub avg_depth_by_priority: Vec<f64>,
    pub max_depth_by_priority: Vec<f64>,
}

impl RunSummary {
    pub fn of(measurements: &[Measurement], levels: usize) -> Self {
        let m = measurements.len().max(1) as f64;
        let mean = |f: &dyn Fn(&Measurement) -> f64| measurements.iter().map(f).sum::<f64>() / m;
        RunSummary {
            avg_depth: mean(&|x| x.avg_depth),
            max_depth: mean(&|x| x.max_depth as f64),
            avg_depth_by_priority: (0..levels)
                .map(|l| mean(&|x| x.avg_depth_by_priority[l]))
                .collect(),
            max_depth_by_priority: (0..levels)
                .map(|l| mean(&|x| x.max_depth_by_priority[l] as f64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: SimConfig,
    pub replicate: u64,
    pub schedule: BurstSchedule,
    pub measurements: Vec<Measurement>,
    pub time_series: Vec<TimePoint>,
    pub pre_burst_avg_depth: Option<f64>,
    pub recovery: Vec<RecoveryReport>,
    pub arrivals: u64,
    pub departures: u64,
    pub summary: RunSummary,
}

impl RunResult {
    pub fn final_measurement(&self) -> &Measurement {
        self.measurements.last().expect("every run ends with a measurement")
    }
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    schedule: BurstSchedule,
    queues: Vec<QueueState>,
    rng: RngStream,
    store: SnapshotStore,
    ambient: PoissonSampler,
    burst: PoissonSampler,
    mix_cdf: Vec<f64>,
    jump: u64,
    arrivals: u64,
    departures: u64,
    jobs_by_level: [u64; MAX_PRIORITIES],
    probes: Vec<usize>,
    next_snapshot: u64,
}

impl Simulation {
    pub fn new(config: SimConfig, replicate: u64) -> Result<Self> {
        let schedule = build_burst_schedule(&config)?;
        let store = SnapshotStore::new(config.lag, config.snapshot_interval)?;
        let ambient = PoissonSampler::new(config.lambda)?;
        let burst = PoissonSampler::new(config.burst_rate())?;
        let mut acc = 0.0;
        let mix_cdf = config
            .priority_mix
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Simulation {
            rng: RngStream::new(config.seed, replicate),
            queues: vec![QueueState::default(); config.n],
            probes: Vec::with_capacity(config.d),
            schedule,
            store,
            ambient,
            burst,
            mix_cdf,
            jump: 0,
            arrivals: 0,
            departures: 0,
            jobs_by_level: [0; MAX_PRIORITIES],
            next_snapshot: 0,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn schedule(&self) -> &BurstSchedule {
        &self.schedule
    }

    pub fn queues(&self) -> &[QueueState] {
        &self.queues
    }

    /// Index of the next jump to execute.
    pub fn jump(&self) -> u64 {
        self.jump
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn departures(&self) -> u64 {
        self.departures
    }

    pub fn jobs_in_system(&self) -> u64 {
        self.jobs_by_level.iter().sum()
    }

    pub fn avg_depth(&self) -> f64 {
        self.jobs_in_system() as f64 / self.config.n as f64
    }

    pub fn measure(&self) -> Measurement {
        let m = Measurement::of(&self.queues, self.config.levels(), self.jump);
        assert_eq!(
            m.total_jobs,
            self.arrivals - self.departures,
            "job conservation violated at jump {}",
            self.jump
        );
        m
    }

    fn time_point(&self) -> TimePoint {
        let n = self.config.n as f64;
        let mut by_level = [0.0; MAX_PRIORITIES];
        for (dst, &c) in by_level.iter_mut().zip(&self.jobs_by_level) {
            *dst = c as f64 / n;
        }
        TimePoint {
            jump: self.jump,
            avg_depth: self.avg_depth(),
            max_depth: self.queues.iter().map(QueueState::total).max().unwrap_or(0),
            avg_depth_by_priority: by_level,
        }
    }

    #[inline]
    fn arrival_sampler(&self) -> PoissonSampler {
        if self.schedule.windows.iter().any(|w| w.contains(self.jump)) {
            self.burst
        } else {
            self.ambient
        }
    }

    #[inline]
    fn draw_priority(&mut self) -> Priority {
        if self.mix_cdf.len() == 1 {
            return Priority::HIGHEST;
        }
        let u = self.rng.unit();
        let level = self
            .mix_cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.mix_cdf.len() - 1);
        Priority::new(level).expect("mix length checked by validate")
    }

    /// Places one job of priority `p` using the configured view and strategy.
    pub fn place_job(&mut self, p: Priority) -> usize {
        let cfg = &self.config;
        probe_into(&mut self.rng, cfg.n, cfg.d, &mut self.probes);
        let view = view_for_jump(
            self.jump,
            cfg.lag,
            cfg.snapshot_interval,
            &self.store,
            &self.queues,
            cfg.levels(),
        );
        let q = select_unchecked(&view, &self.probes, cfg.strategy, p, cfg.fuzz, &mut self.rng);
        self.queues[q].push(p);
        self.jobs_by_level[p.level()] += 1;
        self.arrivals += 1;
        q
    }

    /// Departure attempt at queue `q`; returns the retired job's priority.
    pub fn depart_from(&mut self, q: usize) -> Option<Priority> {
        let p = self.queues[q].pop_highest()?;
        self.jobs_by_level[p.level()] -= 1;
        self.departures += 1;
        Some(p)
    }

    /// Executes one jump.
    pub fn step(&mut self) {
        if self.config.lag > 0 && self.jump == self.next_snapshot {
            self.store
                .record(&self.queues, self.config.levels(), self.jump);
            self.next_snapshot += self.config.snapshot_interval;
        }
        if self.rng.coin() {
            let jobs = self.arrival_sampler().sample(&mut self.rng);
            for _ in 0..jobs {
                let p = self.draw_priority();
                self.place_job(p);
            }
        } else {
            let q = self.rng.index(self.config.n);
            if self.config.mu >= 1.0 || self.rng.unit() < self.config.mu {
                self.depart_from(q);
            }
        }
        self.jump += 1;
    }

    /// Runs all remaining jumps and collects the result.
    pub fn run_to_end(mut self, replicate: u64) -> RunResult {
        let total = self.config.total_jumps;
        let interval = self.config.snapshot_interval;
        let first_burst = self.schedule.first_burst_start();
        let measurement_jumps = self.schedule.measurement_jumps.clone();
        let mut measurements = Vec::with_capacity(measurement_jumps.len());
        let mut series = Vec::with_capacity((total / interval + 2) as usize);
        let mut next_measure = 0usize;
        let mut pre_burst = None;
        loop {
            let t = self.jump;
            if t % interval == 0 || t == total {
                series.push(self.time_point());
            }
            if first_burst == Some(t) {
                pre_burst = Some(self.avg_depth());
            }
            while measurement_jumps.get(next_measure) == Some(&t) {
                measurements.push(self.measure());
                next_measure += 1;
            }
            if t >= total {
                break;
            }
            // advance to the next jump that needs observing
            let mut until = (t / interval + 1) * interval;
            until = until.min(total);
            if let Some(&m) = measurement_jumps.get(next_measure) {
                until = until.min(m);
            }
            if let Some(b) = first_burst.filter(|&b| b > t) {
                until = until.min(b);
            }
            while self.jump < until {
                self.step();
            }
        }

        let summary = RunSummary::of(&measurements, self.config.levels());
        let mut result = RunResult {
            replicate,
            schedule: self.schedule.clone(),
            measurements,
            time_series: series,
            pre_burst_avg_depth: pre_burst,
            recovery: Vec::new(),
            arrivals: self.arrivals,
            departures: self.departures,
            summary,
            config: self.config,
        };
        result.recovery = detect_recovery(&result, &result.schedule, DEFAULT_RECOVERY_WINDOW);
        result
    }
}

/// Runs replicate 0 of `config`.
pub fn run(config: &SimConfig) -> Result<RunResult> {
    run_replicate(config, 0)
}

/// Runs `config` on the random stream `(config.seed, replicate)`.
pub fn run_replicate(config: &SimConfig, replicate: u64) -> Result<RunResult> {
    Ok(Simulation::new(config.clone(), replicate)?.run_to_end(replicate))
}

/// For each burst, scans windows of `window` jumps sliding by the sampling
/// cadence, starting right after the burst's optimal recovery period. A burst
/// has recovered at the first window whose mean system depth is at most the
/// depth just before the first burst. Windows must end before the next burst
/// starts (or the run ends).
pub fn detect_recovery(
    result: &RunResult,
    schedule: &BurstSchedule,
    window: u64,
) -> Vec<RecoveryReport> {
    let Some(baseline) = result.pre_burst_avg_depth else {
        return Vec::new();
    };
    let step = result.config.snapshot_interval.max(1);
    let series = &result.time_series;
    schedule
        .windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let scan_start = w.recovery_end();
            let scan_end = schedule.cycle_end(i);
            let mut recovered_at = None;
            let mut start = scan_start;
            while start + window <= scan_end {
                let lo = series.partition_point(|p| p.jump < start);
                let hi = series.partition_point(|p| p.jump < start + window);
                let pts = &series[lo..hi];
                if !pts.is_empty() {
                    let mean = pts.iter().map(|p| p.avg_depth).sum::<f64>() / pts.len() as f64;
                    if mean <= baseline {
                        recovered_at = Some(start);
                        break;
                    }
                }
                start += step;
            }
            RecoveryReport {
                burst: i,
                baseline,
                scan_start,
                scan_end,
                recovered_at,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(d: usize) -> SimConfig {
        SimConfig {
            n: 50,
            lambda: 0.8,
            total_jumps: 200_000,
            d,
            seed: 9,
            ..SimConfig::default()
        }
    }

    #[test]
    fn recovery_ratio_examples() {
        assert!((optimal_recovery_ratio(0.95, 1.2).unwrap() - 2.8).abs() < 1e-12);
        assert_eq!(optimal_recovery_ratio(0.75, 1.2).unwrap(), 0.0);
        assert_eq!(optimal_recovery_ratio(0.8, 1.0 / 0.8).unwrap().abs(), 0.0);
        assert!(optimal_recovery_ratio(1.0, 1.2).is_err());
    }

    #[test]
    fn schedule_without_bursts() {
        let s = build_burst_schedule(&SimConfig::default()).unwrap();
        assert!(s.windows.is_empty());
        assert_eq!(s.measurement_jumps, vec![12_000_000]);
    }

    #[test]
    fn schedule_single_burst() {
        let cfg = SimConfig {
            burst_count: 1,
            ..SimConfig::default()
        };
        let s = build_burst_schedule(&cfg).unwrap();
        assert_eq!(s.windows[0].start, 7_200_000);
        assert_eq!(s.windows[0].end, 7_440_000);
        // 5.6% of the run
        assert_eq!(s.windows[0].optimal_recovery_jumps, 672_000);
        assert!((s.windows[0].rate - 1.14).abs() < 1e-12);
        assert_eq!(s.measurement_jumps, vec![12_000_000]);
    }

    #[test]
    fn schedule_four_bursts() {
        let cfg = SimConfig {
            burst_count: 4,
            ..SimConfig::default()
        };
        let s = build_burst_schedule(&cfg).unwrap();
        let starts: Vec<u64> = s.windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![7_200_000, 8_400_000, 9_600_000, 10_800_000]);
        assert_eq!(
            s.measurement_jumps,
            vec![8_400_000, 9_600_000, 10_800_000, 12_000_000]
        );
        for pair in s.windows.windows(2) {
            assert!(pair[0].recovery_end() < pair[1].start);
        }
    }

    #[test]
    fn schedule_overflow_rejected() {
        let cfg = SimConfig {
            burst_count: 30,
            ..SimConfig::default()
        };
        assert!(matches!(
            build_burst_schedule(&cfg),
            Err(Error::Config { field: "burst_count", .. })
        ));
    }

    #[test]
    fn departure_semantics() {
        let mut sim = Simulation::new(small(1), 0).unwrap();
        assert_eq!(sim.depart_from(3), None);
        assert_eq!(sim.departures(), 0);
        sim.place_job(Priority::new(0).unwrap());
        assert_eq!(sim.jobs_in_system(), 1);
        let q = sim
            .queues()
            .iter()
            .position(|q| q.total() == 1)
            .unwrap();
        assert_eq!(sim.depart_from(q), Some(Priority::HIGHEST));
        assert_eq!(sim.jobs_in_system(), 0);
    }

    #[test]
    fn zero_arrivals_stay_empty() {
        let cfg = SimConfig {
            lambda: 0.0,
            n: 1000,
            total_jumps: 50_000,
            d: 3,
            ..SimConfig::default()
        };
        let r = run(&cfg).unwrap();
        assert_eq!(r.arrivals, 0);
        assert!(r.measurements.iter().all(|m| m.avg_depth == 0.0 && m.max_depth == 0));
        assert!(r.time_series.iter().all(|p| p.avg_depth == 0.0));
    }

    #[test]
    fn measurement_invariants() {
        let r = run(&small(2)).unwrap();
        let m = r.final_measurement();
        assert_eq!(m.tail_histogram[0], 50);
        assert!(m.tail_histogram.windows(2).all(|w| w[0] >= w[1]));
        assert!(m.max_depth as f64 >= m.avg_depth);
        let exact_sum: u64 = (1..m.tail_histogram.len())
            .map(|i| m.tail_histogram[i] as u64)
            .sum();
        assert_eq!(exact_sum, m.total_jobs);
        assert!((m.avg_depth * 50.0 - m.total_jobs as f64).abs() < 1e-9);
        assert_eq!(m.total_jobs, r.arrivals - r.departures);
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = SimConfig {
            burst_count: 2,
            priority_mix: SimConfig::uniform_three_priorities(),
            strategy: crate::scheduler::StrategyKind::MineThenTotal,
            lag: 4000,
            fuzz: 1,
            ..small(3)
        };
        let a = run_replicate(&cfg, 2).unwrap();
        let b = run_replicate(&cfg, 2).unwrap();
        let c = run_replicate(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.measurements, c.measurements);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn measurement_jumps_match_schedule() {
        let cfg = SimConfig {
            burst_count: 3,
            ..small(2)
        };
        let r = run(&cfg).unwrap();
        let jumps: Vec<u64> = r.measurements.iter().map(|m| m.jump).collect();
        assert_eq!(jumps, r.schedule.measurement_jumps);
        assert_eq!(r.recovery.len(), 3);
        assert!(r.pre_burst_avg_depth.is_some());
    }

    #[test]
    fn no_bursts_no_recovery_report() {
        let r = run(&small(2)).unwrap();
        assert!(r.recovery.is_empty());
        assert!(detect_recovery(&r, &r.schedule, DEFAULT_RECOVERY_WINDOW).is_empty());
    }

    #[test]
    fn departures_follow_priority_order() {
        let cfg = SimConfig {
            n: 1,
            d: 1,
            priority_mix: SimConfig::uniform_three_priorities(),
            ..small(1)
        };
        let mut sim = Simulation::new(cfg, 0).unwrap();
        for l in [2, 1, 2, 0] {
            sim.place_job(Priority::new(l).unwrap());
        }
        assert_eq!(sim.queues()[0].counts, [1, 1, 2]);
        let order: Vec<usize> = (0..4).filter_map(|_| sim.depart_from(0)).map(|p| p.level()).collect();
        assert_eq!(order, vec![0, 1, 2, 2]);
    }
}
