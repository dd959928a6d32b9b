//! Permutation-invariant ensemble summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub mean: f64,
    /// Sample sd, divisor m − 1.
    pub sd: f64,
    pub size: usize,
}

/// Mean and sample sd of the members. Members are sorted before summation so
/// any permutation gives bit-identical results.
pub fn summarize_ensemble(members: &[f64]) -> Result<EnsembleSummary> {
    let m = members.len();
    if m < 2 {
        return Err(Error::TooFewMembers(m));
    }
    if members.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ensemble member".into()));
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    if sorted[0] == sorted[m - 1] {
        return Ok(EnsembleSummary {
            mean: sorted[0],
            sd: 0.0,
            size: m,
        });
    }
    let mean = sorted.iter().sum::<f64>() / m as f64;
    let ss: f64 = sorted.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(EnsembleSummary {
        mean,
        sd: (ss / (m - 1) as f64).sqrt(),
        size: m,
    })
}
