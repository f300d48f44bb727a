use std::fmt;
use std::sync::Arc;

use super::ExperimentError;
use crate::certificate::{BoundCertificate, EvidenceRow};

/// Longest block the subsequence builder scans term by term.
const MAX_SCAN: u64 = 100_000_000;
/// Below this index `Σ v_n/n` is summed term by term.
const DIRECT_SUM_LIMIT: u64 = 1_000_000;
const CHUNK_GROWTH: f64 = 1e-4;

/// A non-negative sequence `v_1, v_2, …`.
#[derive(Clone)]
pub enum VSource {
    /// `values[i] = v_{i+1}`.
    Values(Vec<f64>),
    /// `decreasing` promises `v` is non-increasing, which allows blocks too
    /// long to scan.
    Function { v: Arc<dyn Fn(u64) -> f64 + Send + Sync>, decreasing: bool },
}

impl fmt::Debug for VSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VSource::Values(v) => write!(f, "Values(len {})", v.len()),
            VSource::Function { decreasing, .. } => write!(f, "Function {{ decreasing: {decreasing} }}"),
        }
    }
}

impl VSource {
    pub fn inverse_square() -> Self {
        VSource::Function { v: Arc::new(|n| 1.0 / (n as f64 * n as f64)), decreasing: true }
    }

    pub fn constant(c: f64) -> Self {
        VSource::Function { v: Arc::new(move |_| c), decreasing: true }
    }

    fn at(&self, n: u64) -> f64 {
        match self {
            VSource::Values(v) => v[n as usize - 1],
            VSource::Function { v, .. } => v(n),
        }
    }

    fn is_decreasing(&self) -> bool {
        matches!(self, VSource::Function { decreasing: true, .. })
    }

    /// Smallest minimiser of `v` over `lo..=hi`.
    fn argmin(&self, lo: u64, hi: u64) -> Result<u64, ExperimentError> {
        if self.is_decreasing() {
            let target = self.at(hi);
            let (mut a, mut b) = (lo, hi);
            while a < b {
                let mid = a + (b - a) / 2;
                if self.at(mid) <= target {
                    b = mid;
                } else {
                    a = mid + 1;
                }
            }
            return Ok(a);
        }
        if hi - lo > MAX_SCAN {
            return Err(ExperimentError::ResourceLimit(format!("block {lo}..={hi} is too long to scan")));
        }
        let mut best = lo;
        let mut best_v = self.at(lo);
        for n in lo + 1..=hi {
            let x = self.at(n);
            if x < best_v {
                best = n;
                best_v = x;
            }
        }
        Ok(best)
    }

    /// `Σ_{n<=upto} v_n/n`, or an upper bound on it for long decreasing sequences.
    fn weighted_sum(&self, upto: u64) -> Result<(f64, bool), ExperimentError> {
        let direct = if self.is_decreasing() { upto.min(DIRECT_SUM_LIMIT) } else { upto };
        if direct > MAX_SCAN {
            return Err(ExperimentError::ResourceLimit(format!("cannot sum {upto} terms of v")));
        }
        let mut tail = 0.0;
        if direct < upto {
            let mut s = direct + 1;
            while s <= upto {
                let e = ((s as f64 * (1.0 + CHUNK_GROWTH)) as u64).clamp(s, upto);
                tail += self.at(s) * (harmonic(e) - harmonic(s - 1));
                s = e + 1;
            }
        }
        // smallest terms first
        let sum = (1..=direct).rev().fold(tail, |acc, n| acc + self.at(n) / n as f64);
        if direct == upto {
            return Ok((sum, false));
        }
        Ok((sum, true))
    }
}

/// `H_n = Σ_{k<=n} 1/k`.
pub fn harmonic(n: u64) -> f64 {
    if n <= 100_000 {
        return (1..=n).rev().map(|k| 1.0 / k as f64).sum();
    }
    let x = n as f64;
    let x2 = x * x;
    x.ln() + 0.577_215_664_901_532_9 + 1.0 / (2.0 * x) - 1.0 / (12.0 * x2) + 1.0 / (120.0 * x2 * x2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsequencePlan {
    pub delta: f64,
    pub b: f64,
    pub k: u32,
    /// Inclusive blocks `[[b^{K+r-2}]+1, [b^{K+r-1}]]`.
    pub blocks: Vec<(u64, u64)>,
    pub n: Vec<u64>,
    pub values: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// `Σ_{n in block r} 1/n`.
    pub block_harmonic: Vec<f64>,
    /// `Σ_{n <= last block end} v_n/n` (an upper bound when `sum_is_bound`).
    pub weighted_sum: f64,
    pub sum_is_bound: bool,
    /// `weighted_sum / min_r block_harmonic[r]`, which bounds every partial sum.
    pub evidence_block: f64,
    /// `weighted_sum / log b`, the asymptotic form of the same bound.
    pub evidence_log_b: f64,
    pub certificate: BoundCertificate,
}

/// `[b^k]` for `b = √(1+δ)`, with even powers taken as integer powers of `1+δ`.
fn floor_pow(delta: f64, k: u32) -> u64 {
    let base = 1.0 + delta;
    let x = if k % 2 == 0 { base.powi((k / 2) as i32) } else { base.powi((k / 2) as i32) * base.sqrt() };
    (x * (1.0 + 1e-13)).floor() as u64
}

/// Picks one index per geometric block of ratio `b = √(1+δ)` at which `v` is
/// smallest, so that `Σ v_{n_r}` is controlled by `Σ v_n/n`.
pub fn build_subsequence(v: &VSource, delta: f64, blocks: usize) -> Result<SubsequencePlan, ExperimentError> {
    if !(delta > 0.0 && delta < 3.0) {
        return Err(ExperimentError::DeltaOutOfRange(delta));
    }
    let b = (1.0 + delta).sqrt();
    let mut k = 1u32;
    while floor_pow(delta, k) < floor_pow(delta, k - 1) + 2 {
        k += 1;
    }
    let ranges: Vec<(u64, u64)> =
        (1..=blocks as u32).map(|r| (floor_pow(delta, k + r - 2) + 1, floor_pow(delta, k + r - 1))).collect();
    let end = ranges.last().map_or(0, |r| r.1);
    if let VSource::Values(vals) = v {
        if (vals.len() as u64) < end {
            return Err(ExperimentError::InvalidConfig(format!(
                "v has {} terms but {blocks} blocks reach index {end}",
                vals.len()
            )));
        }
        if let Some(x) = vals.iter().find(|x| !(**x >= 0.0)) {
            return Err(ExperimentError::InvalidConfig(format!("v must be non-negative, found {x}")));
        }
    }
    let n = ranges.iter().map(|&(lo, hi)| v.argmin(lo, hi)).collect::<Result<Vec<_>, _>>()?;
    let values: Vec<f64> = n.iter().map(|&i| v.at(i)).collect();
    let partial_sums: Vec<f64> = values
        .iter()
        .scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        })
        .collect();
    let block_harmonic: Vec<f64> = ranges.iter().map(|&(lo, hi)| harmonic(hi) - harmonic(lo - 1)).collect();
    let (weighted_sum, sum_is_bound) = v.weighted_sum(end)?;
    let min_h = block_harmonic.iter().copied().fold(f64::INFINITY, f64::min);
    let evidence_block = weighted_sum / min_h;
    let evidence_log_b = weighted_sum / b.ln();

    let mut evidence = Vec::new();
    let tol = 1.0 + 1e-12;
    for r in 0..n.len().saturating_sub(1) {
        let next = n[r + 1] as f64;
        evidence.push(EvidenceRow {
            n: n[r + 1],
            label: format!("n_{} <= (1+delta) n_{}", r + 2, r + 1),
            empirical: next,
            bound: (1.0 + delta) * n[r] as f64,
            holds: next <= (1.0 + delta) * n[r] as f64 * tol,
        });
        if r >= 1 {
            evidence.push(EvidenceRow {
                n: n[r + 1],
                label: format!("n_{} >= b n_{}", r + 2, r),
                empirical: next,
                bound: b * n[r - 1] as f64,
                holds: next * tol >= b * n[r - 1] as f64,
            });
        }
    }
    for (r, &s) in partial_sums.iter().enumerate() {
        let increasing = r == 0 || s >= partial_sums[r - 1];
        evidence.push(EvidenceRow {
            n: n[r],
            label: format!("partial sum {}", r + 1),
            empirical: s,
            bound: evidence_block,
            holds: increasing && s <= evidence_block * tol,
        });
    }
    let params = vec![
        ("delta".to_string(), delta),
        ("b".to_string(), b),
        ("K".to_string(), k as f64),
        ("log_b".to_string(), b.ln()),
        ("evidence_log_b".to_string(), evidence_log_b),
    ];
    let certificate = BoundCertificate::from_rows("subsequence", params, evidence);
    Ok(SubsequencePlan {
        delta,
        b,
        k,
        blocks: ranges,
        n,
        values,
        partial_sums,
        block_harmonic,
        weighted_sum,
        sum_is_bound,
        evidence_block,
        evidence_log_b,
        certificate,
    })
}
