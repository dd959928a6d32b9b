use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::AlignedDataset;
use crate::error::{Error, Result};
use crate::regression::{fit, FitOptions, Params};
use crate::rng::Stream;
use crate::selection::ModelSpec;
use crate::stats::{quantile_sorted, sample_sd};

pub const MIN_REPLICATES: usize = 100;
/// Largest tolerated fraction of failed resamples.
const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn resample(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    let mut s = Stream::new(seed, replicate as u64);
    (0..n).map(|_| s.index(n)).collect()
}

/// Evaluate `statistic` on `b` resamples (with replacement) of `n` rows.
/// Replicate `r` draws its rows from stream `r` of `seed`, so the result does
/// not depend on scheduling. Failed replicates are dropped; more than 5%
/// failures is an error.
pub fn bootstrap_replicates<T, F>(n: usize, statistic: F, b: usize, seed: u64) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[usize]) -> Result<T> + Sync,
{
    if n < 2 {
        return Err(Error::Invalid(format!("bootstrap needs n >= 2, got {n}")));
    }
    if b == 0 {
        return Err(Error::Invalid(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    let results: Vec<Result<T>> = (0..b)
        .into_par_iter()
        .map(|r| statistic(&resample(n, seed, r)))
        .collect();
    let mut ok = Vec::with_capacity(b);
    let mut failed = 0;
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                failed += 1;
                first.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed as f64 > MAX_FAILURE_RATE * b as f64 {
        return Err(Error::BootstrapFailure {
            failed,
            total: b,
            first: first.unwrap_or_default(),
        });
    }
    Ok(ok)
}

/// Percentile interval of a scalar statistic at the given level. Needs at
/// least [`MIN_REPLICATES`] replicates.
pub fn bootstrap_ci<F>(n: usize, statistic: F, b: usize, seed: u64, level: f64) -> Result<Interval>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if b < MIN_REPLICATES {
        return Err(Error::Invalid(format!(
            "bootstrap needs B >= {MIN_REPLICATES}, got {b}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!(
            "level must be in (0, 1), got {level}"
        )));
    }
    let mut v = bootstrap_replicates(n, |rows| statistic(rows), b, seed)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("bootstrap statistic".into()));
    }
    v.sort_unstable_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        lo: quantile_sorted(&v, tail),
        hi: quantile_sorted(&v, 1.0 - tail),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInterval {
    pub name: String,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// Sd of the bootstrap replicates.
    pub se: f64,
}

/// 95% percentile bands for every parameter of a model, by refitting on
/// resampled rows. NHGR refits start from the full-sample spread. Needs at least [`MIN_REPLICATES`] replicates.
pub fn bootstrap_model_ci(
    data: &AlignedDataset,
    spec: &ModelSpec,
    opts: &FitOptions,
    b: usize,
    seed: u64,
) -> Result<Vec<ParamInterval>> {
    if b < MIN_REPLICATES {
        return Err(Error::Invalid(format!(
            "bootstrap needs B >= {MIN_REPLICATES}, got {b}"
        )));
    }
    let full = fit(data, spec, opts)?;
    let names = full.named_parameters();
    let opts = match &full.params {
        Params::Nhgr(p) => FitOptions {
            spread_start: Some([p.d, p.e]),
            ..*opts
        },
        Params::Lr(_) => *opts,
    };
    let reps = bootstrap_replicates(
        data.n(),
        |rows| {
            let m = fit(&data.select_rows(rows), spec, &opts)?;
            Ok(m.named_parameters()
                .into_iter()
                .map(|p| p.value)
                .collect::<Vec<f64>>())
        },
        b,
        seed,
    )?;
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(j, p)| {
            let mut v: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            v.sort_unstable_by(f64::total_cmp);
            ParamInterval {
                name: p.name,
                estimate: p.value,
                lo: quantile_sorted(&v, 0.025),
                hi: quantile_sorted(&v, 0.975),
                se: sample_sd(&v),
            }
        })
        .collect())
}
