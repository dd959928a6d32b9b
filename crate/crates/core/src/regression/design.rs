use nalgebra::{DMatrix, DVector};

use crate::data::AlignedDataset;
use crate::error::{Error, Result};
use crate::regression::{StandardizationParams, ZScale};
use crate::selection::ModelSpec;
use crate::stats::{mean, sample_sd};

/// Designs whose column-normalized condition estimate exceeds this are
/// rejected.
pub(crate) const MAX_CONDITION: f64 = 1e10;

/// `z* = (sigma_y / sigma_z)(z − mu_z)`.
pub fn standardize(z: &[f64], scale: &ZScale, sigma_y: f64) -> Result<Vec<f64>> {
    if !(scale.sigma_z > 0.0) {
        return Err(Error::ZeroVariance(scale.covariate.label()));
    }
    let f = sigma_y / scale.sigma_z;
    Ok(z.iter().map(|v| f * (v - scale.mu_z)).collect())
}

/// Intercept, x columns, then z columns, in spec order.
pub(crate) struct Design {
    pub x: DMatrix<f64>,
    pub std: StandardizationParams,
}

pub(crate) fn build(
    data: &AlignedDataset,
    spec: &ModelSpec,
    standardize_z: bool,
) -> Result<Design> {
    if data.response != spec.response {
        return Err(Error::Invalid(format!(
            "dataset response `{}` does not match spec {}",
            data.response, spec
        )));
    }
    let n = data.n();
    let k = spec.mean_covariates.len() + 1;
    let p = spec.n_params();
    if n <= p {
        return Err(Error::TooFewRows { n, p });
    }
    let sigma_y = sample_sd(&data.y);
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for id in spec.x_covariates() {
        cols.push(data.column(id)?.to_vec());
    }
    let mut z = Vec::new();
    for id in spec.z_covariates() {
        let raw = data.column(id)?;
        let scale = ZScale {
            covariate: id.clone(),
            mu_z: mean(raw),
            sigma_z: sample_sd(raw),
        };
        if !(scale.sigma_z > 0.0) {
            return Err(Error::ZeroVariance(id.label()));
        }
        if standardize_z {
            if !(sigma_y > 0.0) {
                return Err(Error::ZeroVariance(format!("response {}", spec.response)));
            }
            cols.push(standardize(raw, &scale, sigma_y)?);
        } else {
            cols.push(raw.to_vec());
        }
        z.push(scale);
    }
    let x = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    Ok(Design {
        x,
        std: StandardizationParams {
            standardized: standardize_z,
            sigma_y,
            z,
        },
    })
}

/// Least-squares coefficients via column-pivoted QR on the column-normalized
/// design. Fails when the condition estimate exceeds [`MAX_CONDITION`].
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &[f64], label: &str) -> Result<Vec<f64>> {
    let k = x.ncols();
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::RankDeficient {
            spec: label.into(),
            condition: f64::INFINITY,
        });
    }
    let mut scaled = x.clone();
    for (j, nj) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / nj);
    }
    let qr = scaled.col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if dmin > 0.0 {
        dmax / dmin
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient {
            spec: label.into(),
            condition,
        });
    }
    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let mut z = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut acc = qty[i];
        for j in i + 1..k {
            acc -= r[(i, j)] * z[j];
        }
        z[i] = acc / r[(i, i)];
    }
    qr.p().inv_permute_rows(&mut z);
    Ok((0..k).map(|j| z[j] / norms[j]).collect())
}
