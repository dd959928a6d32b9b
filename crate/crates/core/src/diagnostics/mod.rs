//! Forecast verification: bias and error spread, standardized residuals,
//! Kolmogorov–Smirnov tests, CRPS, PIT histograms and bootstrap bands.

mod bootstrap;
mod report;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::GaussianForecast;
use crate::stats::{norm_cdf, norm_pdf};

pub use bootstrap::{
    bootstrap_ci, bootstrap_model_ci, bootstrap_replicates, Interval, ParamInterval, MIN_REPLICATES,
};
pub use report::{
    diagnose_source, write_crps_csv, write_summary_csv, DiagnoseOptions, HorizonDiagnostics,
    Source, SourceDiagnostics,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// Mean of `y − mu`.
    pub bias: f64,
    /// Sample sd of `y − mu`, divisor n − 1.
    pub err_sd: f64,
}

pub fn error_stats(y: &[f64], mu: &[f64]) -> Result<ErrorStats> {
    if y.len() != mu.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "error statistics need n >= 2, got {n}"
        )));
    }
    let err: Vec<f64> = y.iter().zip(mu).map(|(a, b)| a - b).collect();
    let bias = err.iter().sum::<f64>() / n as f64;
    let ss: f64 = err.iter().map(|e| (e - bias) * (e - bias)).sum();
    Ok(ErrorStats {
        bias,
        err_sd: (ss / (n - 1) as f64).sqrt(),
    })
}

/// `(y − mu) / sigma` per row.
pub fn standardized_residuals(y: &[f64], forecasts: &[GaussianForecast]) -> Result<Vec<f64>> {
    if y.len() != forecasts.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    y.iter()
        .zip(forecasts)
        .enumerate()
        .map(|(row, (yi, f))| {
            if f.sigma > 0.0 {
                Ok((yi - f.mu) / f.sigma)
            } else {
                Err(Error::NonPositiveSigma {
                    row,
                    sigma: f.sigma,
                })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `sample` against N(0, 1).
pub fn ks_test(sample: &[f64]) -> Result<KsResult> {
    let n = sample.len();
    if n < 5 {
        return Err(Error::Invalid(format!("KS test needs n >= 5, got {n}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("KS sample".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = norm_cdf(*x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sn = nf.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
///
/// Below λ = 1.18 the alternating series converges slowly, so the
/// equivalent theta-function form `1 − √(2π)/λ Σ exp(−(2k−1)²π²/(8λ²))` is
/// summed instead.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let c = PI * PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let t = (-j * j * c).exp();
            s += t;
            if t < 1e-16 * s {
                break;
            }
        }
        1.0 - (2.0 * PI).sqrt() / lambda * s
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let t = (-2.0 * kf * kf * lambda * lambda).exp();
            s += sign * t;
            if t < 1e-12 {
                break;
            }
            sign = -sign;
        }
        2.0 * s
    };
    q.clamp(0.0, 1.0)
}

/// CRPS of `N(mu, sigma²)` at `y`; `|y − mu|` for a point forecast.
pub fn crps_gaussian(y: f64, mu: f64, sigma: f64) -> Result<f64> {
    if sigma < 0.0 || sigma.is_nan() {
        return Err(Error::Invalid(format!(
            "CRPS needs sigma >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok((y - mu).abs());
    }
    let z = (y - mu) / sigma;
    Ok(sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / PI.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrpsSummary {
    pub mean: f64,
    pub per_row: Vec<f64>,
}

pub fn mean_crps(y: &[f64], forecasts: &[GaussianForecast]) -> Result<CrpsSummary> {
    if y.len() != forecasts.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    if y.is_empty() {
        return Err(Error::Invalid("CRPS of an empty sample".into()));
    }
    let per_row: Vec<f64> = y
        .iter()
        .zip(forecasts)
        .map(|(yi, f)| crps_gaussian(*yi, f.mu, f.sigma))
        .collect::<Result<_>>()?;
    Ok(CrpsSummary {
        mean: per_row.iter().sum::<f64>() / per_row.len() as f64,
        per_row,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitHistogram {
    pub bin_count: usize,
    pub counts: Vec<u64>,
    pub n: u64,
}

impl PitHistogram {
    pub fn new(bin_count: usize) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::Invalid("PIT histogram needs at least 2 bins".into()));
        }
        Ok(PitHistogram {
            bin_count,
            counts: vec![0; bin_count],
            n: 0,
        })
    }

    /// Add one PIT value in [0, 1]; 1.0 lands in the last bin.
    pub fn add(&mut self, u: f64) {
        let b = ((u * self.bin_count as f64) as usize).min(self.bin_count - 1);
        self.counts[b] += 1;
        self.n += 1;
    }

    pub fn from_pit(values: &[f64], bin_count: usize) -> Result<Self> {
        let mut h = PitHistogram::new(bin_count)?;
        for &u in values {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::Invalid(format!("PIT value {u} outside [0, 1]")));
            }
            h.add(u);
        }
        Ok(h)
    }

    /// Merge counts from another histogram with the same binning.
    pub fn merge(&mut self, other: &PitHistogram) -> Result<()> {
        if other.bin_count != self.bin_count {
            return Err(Error::Invalid(
                "cannot merge histograms with different bins".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n += other.n;
        Ok(())
    }

    /// Pearson chi-square statistic against equal bin probabilities.
    pub fn chi_square(&self) -> f64 {
        let e = self.n as f64 / self.bin_count as f64;
        self.counts
            .iter()
            .map(|&c| (c as f64 - e).powi(2) / e)
            .sum()
    }
}

/// Histogram of `Φ((y − mu)/sigma)` over `bin_count` equal bins.
pub fn pit_histogram(
    y: &[f64],
    forecasts: &[GaussianForecast],
    bin_count: usize,
) -> Result<PitHistogram> {
    let r = standardized_residuals(y, forecasts)?;
    let pit: Vec<f64> = r.iter().map(|z| norm_cdf(*z)).collect();
    PitHistogram::from_pit(&pit, bin_count)
}
