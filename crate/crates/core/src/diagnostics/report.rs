use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    bootstrap_ci, error_stats, ks_test, mean_crps, pit_histogram, standardized_residuals, Interval,
    KsResult, PitHistogram,
};
use crate::error::{Error, Result};
use crate::regression::GaussianForecast;

/// Forecast being verified: the raw deterministic forecast or a calibrated
/// model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "D")]
    Deterministic,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "NHGR")]
    Nhgr,
}

impl Source {
    pub fn code(self) -> &'static str {
        match self {
            Source::Deterministic => "D",
            Source::Lr => "LR",
            Source::Nhgr => "NHGR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseOptions {
    pub bins: usize,
    /// Bootstrap replicates for the bias band; 0 disables it.
    pub bootstrap: usize,
    pub seed: u64,
    pub level: f64,
    pub per_row_crps: bool,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            bins: 10,
            bootstrap: 1000,
            seed: 0,
            level: 0.95,
            per_row_crps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDiagnostics {
    pub source: Source,
    pub n: usize,
    /// Rows dropped because the predictive sd was not positive.
    pub excluded: usize,
    pub bias: f64,
    pub err_sd: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bias_ci: Option<Interval>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ks: Option<KsResult>,
    pub mean_crps: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub crps: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pit: Option<PitHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonDiagnostics {
    pub response: String,
    pub horizon: u32,
    pub sources: Vec<SourceDiagnostics>,
}

/// All statistics for one source at one horizon. `None` forecasts are
/// excluded and counted. KS and PIT are computed only when every retained
/// forecast has positive spread.
pub fn diagnose_source(
    source: Source,
    y: &[f64],
    forecasts: &[Option<GaussianForecast>],
    opts: &DiagnoseOptions,
) -> Result<SourceDiagnostics> {
    if y.len() != forecasts.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    let (yk, fk): (Vec<f64>, Vec<GaussianForecast>) = y
        .iter()
        .zip(forecasts)
        .filter_map(|(yi, f)| f.map(|f| (*yi, f)))
        .unzip();
    let excluded = y.len() - yk.len();
    let mu: Vec<f64> = fk.iter().map(|f| f.mu).collect();
    let es = error_stats(&yk, &mu)?;
    let crps = mean_crps(&yk, &fk)?;
    let probabilistic = fk.iter().all(|f| f.sigma > 0.0);
    let ks = if probabilistic {
        Some(ks_test(&standardized_residuals(&yk, &fk)?)?)
    } else {
        None
    };
    let pit = if probabilistic {
        Some(pit_histogram(&yk, &fk, opts.bins)?)
    } else {
        None
    };
    let bias_ci = if opts.bootstrap > 0 {
        let err: Vec<f64> = yk.iter().zip(&mu).map(|(a, b)| a - b).collect();
        Some(bootstrap_ci(
            err.len(),
            |rows| Ok(rows.iter().map(|&i| err[i]).sum::<f64>() / rows.len() as f64),
            opts.bootstrap,
            opts.seed,
            opts.level,
        )?)
    } else {
        None
    };
    Ok(SourceDiagnostics {
        source,
        n: yk.len(),
        excluded,
        bias: es.bias,
        err_sd: es.err_sd,
        bias_ci,
        ks,
        mean_crps: crps.mean,
        crps: opts.per_row_crps.then_some(crps.per_row),
        pit,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per response × horizon × source.
pub fn write_summary_csv<W: Write>(mut w: W, rows: &[HorizonDiagnostics]) -> Result<()> {
    writeln!(
        w,
        "response,horizon,source,n,excluded,bias,err_sd,bias_lo,bias_hi,ks_stat,ks_p,mean_crps"
    )?;
    for h in rows {
        for s in &h.sources {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                h.response,
                h.horizon,
                s.source.code(),
                s.n,
                s.excluded,
                s.bias,
                s.err_sd,
                opt(s.bias_ci.map(|c| c.lo)),
                opt(s.bias_ci.map(|c| c.hi)),
                opt(s.ks.map(|k| k.statistic)),
                opt(s.ks.map(|k| k.p_value)),
                s.mean_crps
            )?;
        }
    }
    Ok(())
}

/// Mean CRPS by horizon, one row per response × horizon × source.
pub fn write_crps_csv<W: Write>(mut w: W, rows: &[HorizonDiagnostics]) -> Result<()> {
    writeln!(w, "response,horizon,source,mean_crps")?;
    for h in rows {
        for s in &h.sources {
            writeln!(
                w,
                "{},{},{},{}",
                h.response,
                h.horizon,
                s.source.code(),
                s.mean_crps
            )?;
        }
    }
    Ok(())
}
