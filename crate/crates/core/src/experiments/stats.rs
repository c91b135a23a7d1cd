//! Distribution distances and chi-square tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::qcore::PROB_TOL;

/// `½ Σ |h1_j − h2_j|` for two probability vectors of equal length.
pub fn tv_distance(h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(Error::DimensionMismatch {
            expected: h1.len(),
            found: h2.len(),
        });
    }
    for h in [h1, h2] {
        let total: f64 = h.iter().sum();
        if (total - 1.0).abs() > PROB_TOL || h.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "vector sums to {total}, expected 1"
            )));
        }
    }
    let d = 0.5 * h1.iter().zip(h2).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(d.clamp(0.0, 1.0))
}

/// Counts divided by their total.
pub fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| c as f64 / total.max(1) as f64)
        .collect()
}

/// Pearson goodness-of-fit test of `observed` against `expected` probabilities.
/// Categories with zero expected probability are dropped; observing one of
/// them yields p = 0. Returns `(statistic, p_value)`.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch {
            expected: expected.len(),
            found: observed.len(),
        });
    }
    let n: u64 = observed.iter().sum();
    let nf = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected) {
        if p <= 0.0 {
            if o > 0 {
                return Ok((f64::INFINITY, 0.0));
            }
            continue;
        }
        let e = nf * p;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    Ok((stat, survival(stat, cells.saturating_sub(1))))
}

/// Chi-square test of homogeneity for two count vectors over the same
/// categories. Returns `(statistic, p_value)`.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let n = (na + nb) as f64;
    if na == 0 || nb == 0 {
        return Ok((0.0, 1.0));
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = col * na as f64 / n;
        let eb = col * nb as f64 / n;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    Ok((stat, survival(stat, cells.saturating_sub(1))))
}

fn survival(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(f64::NAN)
}
