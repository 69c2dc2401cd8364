//! Doubling-map oracle, symbolic paths, Lyapunov estimates and divergence
//! reports.
//!
//! Bit convention everywhere: `1` = transmitted = `q <= 1/2`. The tie at
//! exactly `1/2` goes to transmitted.

use std::io::Write;

use crate::bohm::ScatterEvent;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChaosError {
    #[error("need at least {needed} levels, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// `2 x mod 1`; exact in floating point.
pub fn bernoulli_step(x: f64) -> f64 {
    let y = 2.0 * x;
    if y >= 1.0 {
        y - 1.0
    } else {
        y
    }
}

/// Symbol of internal coordinate `q`.
pub fn bit_of(q: f64) -> bool {
    q <= 0.5
}

/// `x0` followed by `n - 1` doubling-map iterates.
pub fn oracle_orbit(x0: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut x = x0;
    for _ in 0..n {
        out.push(x);
        x = bernoulli_step(x);
    }
    out
}

pub fn symbolic_path(x0: f64, n: usize) -> Vec<bool> {
    oracle_orbit(x0, n).into_iter().map(bit_of).collect()
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// 1-based level of the first disagreement between two bit strings.
pub fn first_mismatch(a: &[bool], b: &[bool]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y).map(|i| i + 1)
}

/// Internal coordinate per level with its symbolic path.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSequence {
    pub q: Vec<f64>,
    pub bits: Vec<bool>,
}

impl QuantileSequence {
    /// Bits derived from `q` with the tie rule.
    pub fn from_quantiles(q: Vec<f64>) -> Self {
        let bits = q.iter().map(|&x| bit_of(x)).collect();
        QuantileSequence { q, bits }
    }

    /// Coordinates before each scattering and the outcomes actually detected.
    pub fn from_events(events: &[ScatterEvent]) -> Self {
        QuantileSequence {
            q: events.iter().map(|e| e.q_before).collect(),
            bits: events.iter().map(|e| e.outcome.bit()).collect(),
        }
    }

    pub fn oracle(x0: f64, n: usize) -> Self {
        Self::from_quantiles(oracle_orbit(x0, n))
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Minimum sequence length for a Lyapunov estimate.
pub const MIN_LEVELS: usize = 8;

/// Mean of `ln |f'(q_n)|` along an oracle orbit; `|f'| = 2` everywhere.
pub fn lyapunov_oracle(seq: &QuantileSequence) -> Result<f64, ChaosError> {
    if seq.len() < MIN_LEVELS {
        return Err(ChaosError::TooShort {
            needed: MIN_LEVELS,
            found: seq.len(),
        });
    }
    let derivative = 2.0f64;
    Ok(seq.q.iter().map(|_| derivative.ln()).sum::<f64>() / seq.len() as f64)
}

/// Least-squares slope of `ln |Δq_n|` against `n`.
pub fn log_separation_slope(separations: &[f64]) -> Result<f64, ChaosError> {
    let pts: Vec<(f64, f64)> = separations
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(i, d)| (i as f64, d.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(ChaosError::TooShort {
            needed: 2,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Expansion rate per level of a nearby pair, fitted over the levels before
/// their paths first split.
pub fn pair_lyapunov(a: &QuantileSequence, b: &QuantileSequence) -> Result<f64, ChaosError> {
    let n = a.len().min(b.len());
    let split = first_mismatch(&a.bits, &b.bits).unwrap_or(n + 1);
    let pre = (split - 1).min(n);
    let seps: Vec<f64> = (0..pre).map(|i| (a.q[i] - b.q[i]).abs()).collect();
    log_separation_slope(&seps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    /// 1-based level of the first bit disagreement.
    pub first_mismatch: Option<usize>,
}

impl OracleComparison {
    /// Largest deviation over the first `levels` levels.
    pub fn max_deviation_within(&self, levels: usize) -> f64 {
        self.deviations
            .iter()
            .take(levels)
            .cloned()
            .fold(0.0, f64::max)
    }
}

pub fn compare_sequences(
    simulated: &QuantileSequence,
    reference: &QuantileSequence,
) -> Result<OracleComparison, ChaosError> {
    if simulated.len() != reference.len() {
        return Err(ChaosError::LengthMismatch(simulated.len(), reference.len()));
    }
    let deviations: Vec<f64> = simulated
        .q
        .iter()
        .zip(&reference.q)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(OracleComparison {
        max_deviation: deviations.iter().cloned().fold(0.0, f64::max),
        deviations,
        first_mismatch: first_mismatch(&simulated.bits, &reference.bits),
    })
}

/// Compare a simulated sequence with the oracle orbit of `x0`, which should be
/// the coordinate extracted from the simulated initial condition.
pub fn compare_to_oracle(simulated: &QuantileSequence, x0: f64) -> OracleComparison {
    compare_sequences(simulated, &QuantileSequence::oracle(x0, simulated.len()))
        .expect("oracle built with matching length")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceRow {
    pub level: usize,
    pub q_a: f64,
    pub q_b: f64,
    pub dq: f64,
    pub bits_a: String,
    pub bits_b: String,
    pub hamming: usize,
}

/// Level-by-level comparison of two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub rows: Vec<DivergenceRow>,
    pub first_mismatch: Option<usize>,
    pub lyapunov: Option<f64>,
}

impl DivergenceReport {
    pub fn from_pair(a: &QuantileSequence, b: &QuantileSequence) -> Self {
        let n = a.len().min(b.len());
        let mut hamming = 0;
        let rows = (0..n)
            .map(|i| {
                hamming += usize::from(a.bits[i] != b.bits[i]);
                DivergenceRow {
                    level: i,
                    q_a: a.q[i],
                    q_b: b.q[i],
                    dq: (a.q[i] - b.q[i]).abs(),
                    bits_a: bits_to_string(&a.bits[..=i]),
                    bits_b: bits_to_string(&b.bits[..=i]),
                    hamming,
                }
            })
            .collect();
        DivergenceReport {
            rows,
            first_mismatch: first_mismatch(&a.bits[..n], &b.bits[..n]),
            lyapunov: pair_lyapunov(a, b).ok(),
        }
    }

    pub fn final_hamming(&self) -> usize {
        self.rows.last().map_or(0, |r| r.hamming)
    }

    /// CSV rows followed by one `#` summary line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "level,q_a,q_b,dq,bits_a,bits_b,hamming")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{},{},{}",
                r.level, r.q_a, r.q_b, r.dq, r.bits_a, r.bits_b, r.hamming
            )?;
        }
        let fmt_opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        writeln!(
            out,
            "# lyapunov={},first_mismatch={}",
            fmt_opt(self.lyapunov.map(|l| format!("{l:?}"))),
            fmt_opt(self.first_mismatch.map(|l| l.to_string()))
        )
    }
}
