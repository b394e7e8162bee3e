//! Closed-form steady-state queue-length tails.
//!
//! Every function returns a [`TailDistribution`] whose entry `s[i]` is the
//! fraction of queues holding at least `i` jobs. Series stop at the first
//! term below `truncation_epsilon`; since all tails here decay at least
//! geometrically, the dropped mass is bounded by a small multiple of epsilon.
//!
//! - d-way balanced allocation: `s[i] = lambda^((d^i - 1)/(d - 1))`, with the
//!   `d = 1` limit `lambda^i` (the M/M/1 tail).
//! - Priority class `k` under the Independent strategy behaves like a
//!   balanced allocation process at effective load
//!   `rho_k = lambda_k / (1 - sum_{j<k} lambda_j)`.
//! - With fuzz `b`, `s[i] = lambda^i` up to `i = b + 1`, then a double
//!   exponential with base `beta`, the root above 1 of `r^(b+1) - r^b - (d-1)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{csv_text, CsvRow};

pub const DEFAULT_EPSILON: f64 = 1e-12;
/// Runaway guard on series length.
pub const MAX_TERMS: usize = 10_000;
pub const TAIL_HEADER: &[&str] = &["i", "s_i", "n_times_s_i"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    Baseline,
    Priority,
    FuzzClosedForm,
    FuzzRecurrence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailParams {
    pub kind: TailKind,
    /// Load the tail was evaluated at (the effective load for a priority
    /// class).
    pub lambda: f64,
    pub d: usize,
    pub fuzz: Option<u32>,
    pub priority: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDistribution {
    /// `s[i]` = fraction of queues with at least `i` jobs; `s[0] = 1`.
    pub s: Vec<f64>,
    pub expected_depth: f64,
    /// Probability that a queue is empty, `1 - s[1]`.
    pub empty_fraction: f64,
    pub truncation_epsilon: f64,
    pub params: TailParams,
}

impl TailDistribution {
    fn from_terms(s: Vec<f64>, eps: f64, params: TailParams) -> Self {
        let expected_depth = s.iter().skip(1).sum();
        let empty_fraction = 1.0 - s.get(1).copied().unwrap_or(0.0);
        TailDistribution {
            s,
            expected_depth,
            empty_fraction,
            truncation_epsilon: eps,
            params,
        }
    }

    /// `s[i]`, zero past the truncation point.
    pub fn at(&self, i: usize) -> f64 {
        self.s.get(i).copied().unwrap_or(0.0)
    }

    /// Last index kept before truncation.
    pub fn i_max(&self) -> usize {
        self.s.len() - 1
    }

    /// Writes `i,s_i,n_times_s_i`; the last column is empty without `n`.
    pub fn write_csv<W: Write>(&self, mut out: W, n: Option<usize>) -> Result<()> {
        let rows = self.s.iter().enumerate().map(|(i, &v)| {
            CsvRow::new()
                .int(i)
                .num(v)
                .opt(n.map(|n| v * n as f64))
        });
        out.write_all(csv_text(TAIL_HEADER, rows)?.as_bytes())?;
        Ok(())
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::contract(format!("truncation epsilon {eps} not in (0, 1)")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 1.0 {
        return Err(Error::Unstable(format!("load {lambda} must be below 1")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::contract(format!("load {lambda} must be non-negative")));
    }
    Ok(())
}

/// Pushes terms from `next(i)` for `i = 1, 2, ...` until one drops below
/// `eps`.
fn collect_terms(eps: f64, mut next: impl FnMut(usize, &[f64]) -> f64) -> Vec<f64> {
    let mut s = vec![1.0];
    for i in 1..=MAX_TERMS {
        let v = next(i, &s);
        if !(v >= eps) {
            break;
        }
        s.push(v);
    }
    s
}

/// Steady-state tail of d-way balanced allocation at load `lambda`.
pub fn baseline_tail(lambda: f64, d: usize, eps: f64) -> Result<TailDistribution> {
    check_lambda(lambda)?;
    check_eps(eps)?;
    if d < 1 {
        return Err(Error::contract("d must be at least 1"));
    }
    // exponent e_i = (d^i - 1)/(d - 1) via e_i = d * e_{i-1} + 1; gives i for d = 1
    let mut exponent = 0.0f64;
    let s = collect_terms(eps, |_, _| {
        exponent = d as f64 * exponent + 1.0;
        lambda.powf(exponent)
    });
    Ok(TailDistribution::from_terms(
        s,
        eps,
        TailParams {
            kind: TailKind::Baseline,
            lambda,
            d,
            fuzz: None,
            priority: None,
        },
    ))
}

/// Effective per-class loads `rho_k = lambda_k / (1 - sum_{j<k} lambda_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveLoad {
    pub rates: Vec<f64>,
    pub rho: Vec<f64>,
}

impl EffectiveLoad {
    pub fn new(rates: &[f64]) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::contract("need at least one priority rate"));
        }
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0)) {
            return Err(Error::contract(format!("priority rate {r} must be positive")));
        }
        let total: f64 = rates.iter().sum();
        if total >= 1.0 {
            return Err(Error::Unstable(format!(
                "total arrival rate {total} must be below 1"
            )));
        }
        let mut higher = 0.0;
        let mut rho = Vec::with_capacity(rates.len());
        for (k, &r) in rates.iter().enumerate() {
            let load = r / (1.0 - higher);
            if load >= 1.0 {
                return Err(Error::Unstable(format!(
                    "priority {k} effective load {load} must be below 1"
                )));
            }
            rho.push(load);
            higher += r;
        }
        Ok(EffectiveLoad {
            rates: rates.to_vec(),
            rho,
        })
    }
}

/// Tail of the priority-`k` job count under the Independent strategy, with
/// per-class probe counts `ds`.
pub fn priority_tail(lambdas: &[f64], ds: &[usize], k: usize, eps: f64) -> Result<TailDistribution> {
    if ds.len() != lambdas.len() {
        return Err(Error::contract(format!(
            "{} rates but {} probe counts",
            lambdas.len(),
            ds.len()
        )));
    }
    if k >= lambdas.len() {
        return Err(Error::contract(format!("priority {k} out of range")));
    }
    let load = EffectiveLoad::new(lambdas)?;
    let mut tail = baseline_tail(load.rho[k], ds[k], eps)?;
    tail.params.kind = TailKind::Priority;
    tail.params.priority = Some(k);
    Ok(tail)
}

fn fuzz_polynomial(r: f64, b: u32, d: usize) -> f64 {
    r.powi(b as i32 + 1) - r.powi(b as i32) - (d as f64 - 1.0)
}

/// The unique root above 1 of `r^(b+1) - r^b - (d - 1)`, by bisection.
pub fn fuzz_beta(b: u32, d: usize) -> Result<f64> {
    if b < 1 {
        return Err(Error::contract("fuzz b must be at least 1"));
    }
    if d < 2 {
        return Err(Error::contract("fuzz root needs d >= 2"));
    }
    let mut lo = 1.0 + 1e-9;
    let mut hi = 1.0 + ((d - 1) as f64).powf(1.0 / (b as f64 + 1.0)) + 1.0;
    debug_assert!(fuzz_polynomial(lo, b, d) < 0.0 && fuzz_polynomial(hi, b, d) > 0.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if fuzz_polynomial(mid, b, d) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which power of `beta` the fuzzed double-exponential branch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FuzzExponent {
    /// `beta^(i-b-1)`: continuous with the geometric branch at `i = b + 1`.
    #[default]
    Continuous,
    /// `beta^(i-b)`, kept for comparison.
    Shifted,
}

pub fn fuzz_tail(lambda: f64, d: usize, b: u32, eps: f64) -> Result<TailDistribution> {
    fuzz_tail_with(lambda, d, b, eps, FuzzExponent::Continuous)
}

/// Closed-form steady-state tail under fuzz `b`.
pub fn fuzz_tail_with(
    lambda: f64,
    d: usize,
    b: u32,
    eps: f64,
    exponent: FuzzExponent,
) -> Result<TailDistribution> {
    check_lambda(lambda)?;
    check_eps(eps)?;
    let beta = fuzz_beta(b, d)?;
    let knee = b as usize + 1;
    let inv = 1.0 / (d as f64 - 1.0);
    let shift = match exponent {
        FuzzExponent::Continuous => knee,
        FuzzExponent::Shifted => b as usize,
    };
    let s = collect_terms(eps, |i, _| {
        if i <= knee {
            lambda.powi(i as i32)
        } else {
            let e = (knee as f64 + inv) * beta.powi((i - shift) as i32) - inv;
            lambda.powf(e)
        }
    });
    Ok(TailDistribution::from_terms(
        s,
        eps,
        TailParams {
            kind: TailKind::FuzzClosedForm,
            lambda,
            d,
            fuzz: Some(b),
            priority: None,
        },
    ))
}

/// Tail from iterating `s_i = lambda * s_{i-1} * s_{i-1-b}^(d-1)`, with
/// `s_j = 1` for `j < 0`. With `b = 0` this is the exact-information
/// recurrence `s_i = lambda * s_{i-1}^d`.
pub fn fuzz_tail_recurrence(lambda: f64, d: usize, b: u32, eps: f64) -> Result<TailDistribution> {
    check_lambda(lambda)?;
    check_eps(eps)?;
    if d < 1 {
        return Err(Error::contract("d must be at least 1"));
    }
    let lag = b as usize + 1;
    let s = collect_terms(eps, |i, s| {
        let far = if i >= lag { s[i - lag] } else { 1.0 };
        lambda * s[i - 1] * far.powi(d as i32 - 1)
    });
    Ok(TailDistribution::from_terms(
        s,
        eps,
        TailParams {
            kind: TailKind::FuzzRecurrence,
            lambda,
            d,
            fuzz: Some(b),
            priority: None,
        },
    ))
}

/// Smallest depth `i` at which fewer than one of `n` queues is expected to
/// hold `i` or more jobs.
pub fn max_depth_estimate(tail: &TailDistribution, n: usize) -> Result<usize> {
    if n < 1 {
        return Err(Error::contract("need at least one queue"));
    }
    let n = n as f64;
    Ok(tail
        .s
        .iter()
        .position(|&v| n * v < 1.0)
        .unwrap_or(tail.s.len()))
}
