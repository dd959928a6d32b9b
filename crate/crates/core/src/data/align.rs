use std::collections::BTreeMap;

use crate::data::ingest::{ForecastGroup, ForecastSet, MeasurementSet};
use crate::data::types::{AlignedDataset, CovariateId, CovariateKind, QuantityId};
use crate::ensemble::summarize_ensemble;
use crate::error::{Error, Result};
use crate::time::Timestamp;

/// Covariate values for a single issue time, as consumed by prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRow {
    pub values: BTreeMap<CovariateId, f64>,
    /// Ensemble sd of the response, when at least two members exist.
    pub ens_sd: Option<f64>,
    pub deterministic: Option<f64>,
}

fn covariate_value(group: Option<ForecastGroup<'_>>, kind: CovariateKind) -> Option<f64> {
    let g = group?;
    match kind {
        CovariateKind::Deterministic => g.deterministic(),
        CovariateKind::Control => g.control(),
        CovariateKind::EnsembleMean => ens_summary(g).map(|s| s.0),
    }
}

fn ens_summary(g: ForecastGroup<'_>) -> Option<(f64, f64)> {
    let members: Vec<f64> = g.members().collect();
    summarize_ensemble(&members).ok().map(|s| (s.mean, s.sd))
}

fn resolve(fc: &ForecastSet, pool: &[CovariateId]) -> Result<Vec<(CovariateId, QuantityId)>> {
    pool.iter()
        .map(|id| {
            let q = fc
                .registry()
                .id(&id.quantity)
                .filter(|&q| fc.has_covariate(q, id.kind))
                .ok_or_else(|| Error::MissingCovariate(id.label()))?;
            Ok((id.clone(), q))
        })
        .collect()
}

/// Complete-case dataset for one response and horizon over all issue times.
pub fn align(
    forecasts: &ForecastSet,
    measurements: &MeasurementSet,
    response: &str,
    horizon: u32,
    pool: &[CovariateId],
) -> Result<AlignedDataset> {
    align_where(forecasts, measurements, response, horizon, pool, |_| true)
}

/// As [`align`], keeping only issue times accepted by `keep`.
pub fn align_where(
    forecasts: &ForecastSet,
    measurements: &MeasurementSet,
    response: &str,
    horizon: u32,
    pool: &[CovariateId],
    keep: impl Fn(Timestamp) -> bool,
) -> Result<AlignedDataset> {
    if !forecasts.horizons().contains(&horizon) {
        return Err(Error::UnknownHorizon(horizon));
    }
    let rq = forecasts
        .registry()
        .id(response)
        .ok_or_else(|| Error::Invalid(format!("unknown response quantity `{response}`")))?;
    let mq = measurements
        .registry()
        .id(response)
        .ok_or_else(|| Error::Invalid(format!("unknown response quantity `{response}`")))?;
    if !forecasts.has_covariate(rq, CovariateKind::EnsembleMean) {
        return Err(Error::MissingEnsemble(response.into()));
    }
    let cols = resolve(forecasts, pool)?;

    let mut times = Vec::new();
    let mut y = Vec::new();
    let mut ens_sd = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    let mut row = Vec::with_capacity(cols.len());
    'issue: for t in forecasts.issue_times(rq, horizon) {
        if !keep(t) {
            continue;
        }
        let Some(obs) = measurements.get(mq, t.plus_hours(horizon as i64)) else {
            continue;
        };
        let Some((_, sd)) = forecasts.group(rq, horizon, t).and_then(ens_summary) else {
            continue;
        };
        row.clear();
        for (id, q) in &cols {
            match covariate_value(forecasts.group(*q, horizon, t), id.kind) {
                Some(v) => row.push(v),
                None => continue 'issue,
            }
        }
        times.push(t);
        y.push(obs);
        ens_sd.push(sd);
        for (c, v) in values.iter_mut().zip(&row) {
            c.push(*v);
        }
    }

    let columns = cols.into_iter().map(|(id, _)| id).zip(values).collect();
    AlignedDataset::new(response, horizon, times, y, columns, ens_sd)
}

/// Covariates for one (issue time, horizon). Missing components are an error.
pub fn covariates_at(
    forecasts: &ForecastSet,
    response: &str,
    horizon: u32,
    issue: Timestamp,
    covariates: &[CovariateId],
) -> Result<CovariateRow> {
    let rq = forecasts
        .registry()
        .id(response)
        .ok_or_else(|| Error::Invalid(format!("unknown response quantity `{response}`")))?;
    let cols = resolve(forecasts, covariates)?;
    let mut values = BTreeMap::new();
    for (id, q) in cols {
        let v = covariate_value(forecasts.group(q, horizon, issue), id.kind)
            .ok_or_else(|| Error::Missing(format!("{} at {issue} + {horizon} h", id.label())))?;
        values.insert(id, v);
    }
    let group = forecasts.group(rq, horizon, issue);
    Ok(CovariateRow {
        values,
        ens_sd: group.and_then(ens_summary).map(|s| s.1),
        deterministic: group.and_then(|g| g.deterministic()),
    })
}
