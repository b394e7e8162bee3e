//! Destination selection for arriving jobs.
//!
//! An arrival probes `d` queues uniformly with replacement and picks one of
//! them according to a [`StrategyKind`]. Depth information comes from a
//! [`DepthView`], which is either the live queue state or a periodic
//! [`Snapshot`] that lags the live state by a fixed number of jumps.
//!
//! Comparisons on the primary key may be fuzzed: with fuzz `b`, every probe
//! whose key is within `b` of the smallest observed key is a candidate.
//! Secondary keys are always compared exactly, and residual ties are broken
//! uniformly at random from the stream, never by probe order.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Priority, QueueState, RngStream};

/// How the `d` probed queues are ranked for a job of priority `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Fewest jobs of priority `p`.
    #[default]
    Independent,
    /// Fewest jobs of priority `p`, then fewest jobs in total.
    MineThenTotal,
    /// Fewest jobs in total, then fewest jobs of priority `p`.
    TotalThenMine,
    /// Fewest jobs of priority `p` or higher, then fewest jobs in total.
    CumulativeThenTotal,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Independent,
        StrategyKind::MineThenTotal,
        StrategyKind::TotalThenMine,
        StrategyKind::CumulativeThenTotal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Independent => "independent",
            StrategyKind::MineThenTotal => "mine-then-total",
            StrategyKind::TotalThenMine => "total-then-mine",
            StrategyKind::CumulativeThenTotal => "cumulative-then-total",
        }
    }

    /// `(primary, secondary)` ranking keys of a queue.
    #[inline]
    fn keys(self, q: &QueueState, p: Priority) -> (u32, u32) {
        match self {
            StrategyKind::Independent => (q.count(p), 0),
            StrategyKind::MineThenTotal => (q.count(p), q.total()),
            StrategyKind::TotalThenMine => (q.total(), q.count(p)),
            StrategyKind::CumulativeThenTotal => (q.cumulative(p), q.total()),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewSource {
    Live,
    Snapshot,
}

/// Read-only depth information used for one scheduling decision.
#[derive(Debug, Clone, Copy)]
pub struct DepthView<'a> {
    pub source: ViewSource,
    pub as_of_jump: u64,
    queues: &'a [QueueState],
    levels: usize,
}

impl<'a> DepthView<'a> {
    pub fn live(queues: &'a [QueueState], levels: usize, jump: u64) -> Self {
        DepthView {
            source: ViewSource::Live,
            as_of_jump: jump,
            queues,
            levels,
        }
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    /// Number of configured priority levels.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn queue(&self, index: usize) -> &QueueState {
        &self.queues[index]
    }

    pub fn count(&self, index: usize, p: Priority) -> u32 {
        self.queues[index].count(p)
    }
}

/// Immutable copy of every queue's per-priority counts at the start of jump
/// `jump`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub jump: u64,
    pub levels: usize,
    queues: Vec<QueueState>,
}

impl Snapshot {
    pub fn queues(&self) -> &[QueueState] {
        &self.queues
    }

    pub fn view(&self) -> DepthView<'_> {
        DepthView {
            source: ViewSource::Snapshot,
            as_of_jump: self.jump,
            queues: &self.queues,
            levels: self.levels,
        }
    }
}

pub fn make_snapshot(queues: &[QueueState], levels: usize, jump: u64) -> Snapshot {
    Snapshot {
        jump,
        levels,
        queues: queues.to_vec(),
    }
}

/// Ring of the most recent snapshots, one every `interval` jumps.
///
/// Holds `lag / interval + 1` entries, which is exactly what a lagged reader
/// can reach.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    interval: u64,
    capacity: usize,
    ring: VecDeque<Snapshot>,
}

impl SnapshotStore {
    pub fn new(lag: u64, interval: u64) -> Result<Self> {
        if interval == 0 {
            return Err(Error::contract("snapshot interval must be positive"));
        }
        if lag % interval != 0 {
            return Err(Error::contract(format!(
                "lag {lag} is not a multiple of snapshot interval {interval}"
            )));
        }
        let capacity = (lag / interval) as usize + 1;
        Ok(SnapshotStore {
            interval,
            capacity,
            ring: VecDeque::with_capacity(capacity),
        })
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn oldest(&self) -> Option<&Snapshot> {
        self.ring.front()
    }

    /// Stores a new snapshot, evicting the oldest once full. Snapshots must be
    /// pushed in jump order.
    pub fn push(&mut self, snap: Snapshot) {
        if self.ring.len() == self.capacity {
            self.ring.pop_front();
        }
        debug_assert!(self.ring.back().map_or(true, |b| b.jump < snap.jump));
        self.ring.push_back(snap);
    }

    /// Records the live state as the snapshot for `jump`.
    pub fn record(&mut self, queues: &[QueueState], levels: usize, jump: u64) {
        if self.ring.len() == self.capacity {
            // reuse the evicted buffer
            let mut old = self.ring.pop_front().expect("nonempty ring");
            old.jump = jump;
            old.levels = levels;
            old.queues.clear();
            old.queues.extend_from_slice(queues);
            self.ring.push_back(old);
        } else {
            self.ring.push_back(make_snapshot(queues, levels, jump));
        }
    }

    /// Latest stored snapshot taken at or before `jump`, clamped to the
    /// oldest one held.
    pub fn at_or_before(&self, jump: u64) -> Option<&Snapshot> {
        let oldest = self.ring.front()?;
        if jump <= oldest.jump {
            return Some(oldest);
        }
        let idx = ((jump - oldest.jump) / self.interval) as usize;
        let idx = idx.min(self.ring.len() - 1);
        self.ring.get(idx)
    }
}

/// Jump index of the snapshot a reader at jump `t` uses under `lag`.
pub fn lagged_snapshot_jump(t: u64, lag: u64, interval: u64) -> u64 {
    t.saturating_sub(lag) / interval * interval
}

/// Depth view for a decision made at jump `t`.
///
/// With `lag == 0` this is the live state. Otherwise it is the snapshot taken
/// at `floor((t - lag) / interval) * interval`, clamped to the oldest stored
/// snapshot.
pub fn view_for_jump<'a>(
    t: u64,
    lag: u64,
    interval: u64,
    store: &'a SnapshotStore,
    live: &'a [QueueState],
    levels: usize,
) -> DepthView<'a> {
    if lag == 0 {
        return DepthView::live(live, levels, t);
    }
    match store.at_or_before(lagged_snapshot_jump(t, lag, interval)) {
        Some(snap) => snap.view(),
        None => DepthView::live(live, levels, t),
    }
}

/// Fills `out` with `d` queue indices drawn uniformly with replacement.
#[inline]
pub fn probe_into(rng: &mut RngStream, n: usize, d: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..d).map(|_| rng.index(n)));
}

pub fn probe(rng: &mut RngStream, n: usize, d: usize) -> Result<Vec<usize>> {
    if d < 1 {
        return Err(Error::contract("probe count d must be at least 1"));
    }
    if n < 1 {
        return Err(Error::contract("need at least one queue to probe"));
    }
    let mut out = Vec::with_capacity(d);
    probe_into(rng, n, d, &mut out);
    Ok(out)
}

/// Fuzzed two-key minimum over `(index, primary, secondary)` triples.
///
/// Candidates are entries with `primary <= min_primary + fuzz`; among them the
/// smallest secondary wins and any remaining tie is resolved by reservoir
/// sampling. Returns `None` for an empty input.
#[inline]
fn select_by_keys(entries: &[(usize, u32, u32)], fuzz: u32, rng: &mut RngStream) -> Option<usize> {
    let min_primary = entries.iter().map(|&(_, k, _)| k).min()?;
    let band = min_primary.saturating_add(fuzz);
    let mut chosen = 0usize;
    let mut best = u32::MAX;
    let mut ties = 0u32;
    for &(idx, primary, secondary) in entries {
        if primary > band {
            continue;
        }
        if secondary < best {
            best = secondary;
            chosen = idx;
            ties = 1;
        } else if secondary == best {
            ties += 1;
            if rng.index(ties as usize) == 0 {
                chosen = idx;
            }
        }
    }
    Some(chosen)
}

/// Picks uniformly among the entries whose key is within `fuzz` of the
/// minimum key. With `fuzz == 0` this is an exact minimum with uniform
/// tie-breaking.
pub fn fuzzy_select(values: &[(usize, u32)], fuzz: u32, rng: &mut RngStream) -> Result<usize> {
    let entries: Vec<(usize, u32, u32)> = values.iter().map(|&(i, k)| (i, k, 0)).collect();
    select_by_keys(&entries, fuzz, rng)
        .ok_or_else(|| Error::contract("fuzzy_select needs at least one value"))
}

/// Unchecked core of [`select_queue`]; probes must be in range and nonempty.
#[inline]
pub(crate) fn select_unchecked(
    view: &DepthView<'_>,
    probes: &[usize],
    strategy: StrategyKind,
    p: Priority,
    fuzz: u32,
    rng: &mut RngStream,
) -> usize {
    // With one level every key is the total depth, so the strategies collapse
    // to a single fuzzed key.
    let strategy = if view.levels <= 1 {
        StrategyKind::Independent
    } else {
        strategy
    };
    let key = |&q: &usize| {
        let (a, b) = strategy.keys(&view.queues[q], p);
        (q, a, b)
    };
    const INLINE: usize = 8;
    if probes.len() <= INLINE {
        let mut buf = [(0usize, 0u32, 0u32); INLINE];
        for (slot, q) in buf.iter_mut().zip(probes) {
            *slot = key(q);
        }
        select_by_keys(&buf[..probes.len()], fuzz, rng)
    } else {
        let entries: Vec<_> = probes.iter().map(key).collect();
        select_by_keys(&entries, fuzz, rng)
    }
    .expect("nonempty probes")
}

/// Destination queue for a job of priority `p` among `probes`.
pub fn select_queue(
    view: &DepthView<'_>,
    probes: &[usize],
    strategy: StrategyKind,
    p: Priority,
    fuzz: u32,
    rng: &mut RngStream,
) -> Result<usize> {
    if probes.is_empty() {
        return Err(Error::contract("select_queue needs at least one probe"));
    }
    if let Some(&bad) = probes.iter().find(|&&q| q >= view.len()) {
        return Err(Error::contract(format!(
            "probe index {bad} out of range for {} queues",
            view.len()
        )));
    }
    Ok(select_unchecked(view, probes, strategy, p, fuzz, rng))
}
