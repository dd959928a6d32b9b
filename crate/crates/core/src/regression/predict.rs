use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{AlignedDataset, CovariateId};
use crate::error::{Error, Result};
use crate::regression::{FittedModel, Params};

/// Upper 97.5% point of the standard normal.
pub const Z_975: f64 = 1.959964;

/// Gaussian predictive distribution `N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianForecast {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianForecast {
    /// Central 95% interval.
    pub fn interval95(&self) -> (f64, f64) {
        (self.mu - Z_975 * self.sigma, self.mu + Z_975 * self.sigma)
    }
}

fn sigma_of(model: &FittedModel, ens_sd: Option<f64>) -> Result<f64> {
    match &model.params {
        Params::Lr(p) => Ok(p.s),
        Params::Nhgr(p) => {
            let s = ens_sd.ok_or_else(|| {
                Error::Missing(format!("ensemble sd for {}", model.spec.response))
            })?;
            Ok(p.d + p.e * s)
        }
    }
}

fn mean_of(model: &FittedModel, value: impl Fn(&CovariateId) -> Result<f64>) -> Result<f64> {
    let mut mu = model.params.a();
    for (id, b) in model.spec.x_covariates().zip(model.params.b()) {
        mu += b * value(id)?;
    }
    for (k, (id, c)) in model.spec.z_covariates().zip(model.params.c()).enumerate() {
        mu += c * model.std.transform(k, value(id)?);
    }
    Ok(mu)
}

/// Predictive distribution for one covariate row. NHGR needs the response
/// ensemble sd and refuses inputs where `d + e·s_E ≤ 0`.
pub fn predict(
    model: &FittedModel,
    row: &BTreeMap<CovariateId, f64>,
    ens_sd: Option<f64>,
) -> Result<GaussianForecast> {
    let mu = mean_of(model, |id| {
        row.get(id)
            .copied()
            .ok_or_else(|| Error::MissingCovariate(id.label()))
    })?;
    let sigma = sigma_of(model, ens_sd)?;
    if model.family() == crate::selection::Family::Nhgr && !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma { row: 0, sigma });
    }
    Ok(GaussianForecast { mu, sigma })
}

/// Predictions for every row of a dataset. Rows where an NHGR spread is not
/// positive come back as `None`.
pub fn predict_dataset(
    model: &FittedModel,
    data: &AlignedDataset,
) -> Result<Vec<Option<GaussianForecast>>> {
    let cols: Vec<&[f64]> = model
        .spec
        .mean_covariates
        .iter()
        .map(|id| data.column(id))
        .collect::<Result<_>>()?;
    let index: BTreeMap<&CovariateId, usize> = model
        .spec
        .mean_covariates
        .iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    (0..data.n())
        .map(|i| {
            let mu = mean_of(model, |id| Ok(cols[index[id]][i]))?;
            let sigma = sigma_of(model, Some(data.ens_sd[i]))?;
            Ok(
                (sigma > 0.0 || model.family() == crate::selection::Family::Lr)
                    .then_some(GaussianForecast { mu, sigma }),
            )
        })
        .collect()
}

/// `Σ_i [log σ_i + (y_i − μ_i)² / (2σ_i²) + ½ log 2π]`.
pub fn gaussian_nll(y: &[f64], forecasts: &[GaussianForecast]) -> Result<f64> {
    if y.len() != forecasts.len() {
        return Err(Error::Invalid("length mismatch".into()));
    }
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let mut total = 0.0;
    for (row, (yi, f)) in y.iter().zip(forecasts).enumerate() {
        if !(f.sigma > 0.0) {
            return Err(Error::NonPositiveSigma {
                row,
                sigma: f.sigma,
            });
        }
        let r = (yi - f.mu) / f.sigma;
        total += f.sigma.ln() + 0.5 * r * r + half_log_2pi;
    }
    Ok(total)
}

/// NLL of a fitted model on a dataset, using its predictive sd (for LR the
/// `n − p` estimate).
pub fn model_nll(model: &FittedModel, data: &AlignedDataset) -> Result<f64> {
    let preds = predict_dataset(model, data)?;
    let forecasts: Vec<GaussianForecast> = preds
        .into_iter()
        .enumerate()
        .map(|(row, p)| {
            p.ok_or(Error::NonPositiveSigma {
                row,
                sigma: f64::NAN,
            })
        })
        .collect::<Result<_>>()?;
    gaussian_nll(&data.y, &forecasts)
}
