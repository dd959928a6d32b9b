//! Linear (LR) and non-homogeneous Gaussian (NHGR) calibration regressions.
//!
//! Both families predict `Y ~ N(mu, sigma²)` with
//! `mu = a + Σ b_j x_j + Σ c_k z*_k`, where `x` are covariates of the response
//! quantity and `z*` are other-quantity covariates rescaled to the response's
//! sample sd. LR has constant `sigma = s`; NHGR has `sigma = d + e·s_E`.

mod design;
mod lr;
mod nhgr;
mod optim;
mod predict;

use serde::{Deserialize, Serialize};

use crate::data::CovariateId;
use crate::error::{Error, Result};
use crate::selection::{Family, ModelSpec};

pub use design::standardize;
pub use lr::{fit_lr, fit_lr_with};
pub use nhgr::{fit_nhgr, fit_nhgr_with};
pub use optim::{nelder_mead, NelderMeadResult};
pub use predict::{gaussian_nll, model_nll, predict, predict_dataset, GaussianForecast, Z_975};

/// Options shared by both families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Rescale other-quantity covariates to the response sd before fitting.
    pub standardize_z: bool,
    /// Nelder–Mead iteration cap per start.
    pub max_iter: usize,
    /// Nelder–Mead stops once the simplex NLL spread falls below this.
    pub tol: f64,
    /// Hold the NHGR spread slope at zero.
    pub fix_e_zero: bool,
    /// NHGR `(d, e)` to try first; the multi-start search runs only if a
    /// Newton polish from here fails.
    pub spread_start: Option<[f64; 2]>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            standardize_z: true,
            max_iter: 10_000,
            tol: 1e-9,
            fix_e_zero: false,
            spread_start: None,
        }
    }
}

pub fn fit(
    data: &crate::data::AlignedDataset,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<FittedModel> {
    match spec.family {
        Family::Lr => fit_lr_with(data, spec, opts),
        Family::Nhgr => fit_nhgr_with(data, spec, opts),
    }
}

/// Scaling of one other-quantity covariate, frozen at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScale {
    pub covariate: CovariateId,
    pub mu_z: f64,
    pub sigma_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    /// When false the z columns enter raw and the scales are informational.
    pub standardized: bool,
    pub sigma_y: f64,
    pub z: Vec<ZScale>,
}

impl StandardizationParams {
    pub fn transform(&self, k: usize, value: f64) -> f64 {
        if self.standardized {
            let zs = &self.z[k];
            self.sigma_y / zs.sigma_z * (value - zs.mu_z)
        } else {
            value
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// sqrt(RSS / (n − p)), used for prediction.
    pub s: f64,
    /// sqrt(RSS / n), the likelihood maximizer.
    pub s_mle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NhgrParams {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Params {
    Lr(LrParams),
    Nhgr(NhgrParams),
}

impl Params {
    pub fn a(&self) -> f64 {
        match self {
            Params::Lr(p) => p.a,
            Params::Nhgr(p) => p.a,
        }
    }

    pub fn b(&self) -> &[f64] {
        match self {
            Params::Lr(p) => &p.b,
            Params::Nhgr(p) => &p.b,
        }
    }

    pub fn c(&self) -> &[f64] {
        match self {
            Params::Lr(p) => &p.c,
            Params::Nhgr(p) => &p.c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParameter {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelWire", into = "ModelWire")]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub horizon: u32,
    pub params: Params,
    pub std: StandardizationParams,
    pub n: usize,
    pub p: usize,
    pub nll: f64,
    pub aic: f64,
    /// NHGR only: the spread slope was held at zero.
    pub e_fixed: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedModel {
    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Parameters with display names such as `b[det_hs]` and `c[ensmean_w]`.
    pub fn named_parameters(&self) -> Vec<NamedParameter> {
        let np = |name: String, value: f64| NamedParameter { name, value };
        let mut out = vec![np("a".into(), self.params.a())];
        for (c, v) in self.spec.x_covariates().zip(self.params.b()) {
            out.push(np(format!("b[{c}]"), *v));
        }
        for (c, v) in self.spec.z_covariates().zip(self.params.c()) {
            out.push(np(format!("c[{c}]"), *v));
        }
        match &self.params {
            Params::Lr(p) => out.push(np("s".into(), p.s)),
            Params::Nhgr(p) => {
                out.push(np("d".into(), p.d));
                out.push(np("e".into(), p.e));
            }
        }
        out
    }

    /// Intercept and z coefficients expressed against the unstandardized
    /// covariates. Returns `(a, b, c)`.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let mut a = self.params.a();
        let c: Vec<f64> = if self.std.standardized {
            self.std
                .z
                .iter()
                .zip(self.params.c())
                .map(|(zs, ck)| {
                    let raw = ck * self.std.sigma_y / zs.sigma_z;
                    a -= raw * zs.mu_z;
                    raw
                })
                .collect()
        } else {
            self.params.c().to_vec()
        };
        (a, self.params.b().to_vec(), c)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    spec: ModelSpec,
    horizon: u32,
    params: Params,
    #[serde(default)]
    parameters: Vec<NamedParameter>,
    std: StandardizationParams,
    n: usize,
    p: usize,
    #[serde(with = "crate::serde_f64")]
    nll: f64,
    #[serde(with = "crate::serde_f64")]
    aic: f64,
    e_fixed: bool,
    converged: bool,
    iterations: usize,
}

impl From<FittedModel> for ModelWire {
    fn from(m: FittedModel) -> Self {
        ModelWire {
            parameters: m.named_parameters(),
            spec: m.spec,
            horizon: m.horizon,
            params: m.params,
            std: m.std,
            n: m.n,
            p: m.p,
            nll: m.nll,
            aic: m.aic,
            e_fixed: m.e_fixed,
            converged: m.converged,
            iterations: m.iterations,
        }
    }
}

impl TryFrom<ModelWire> for FittedModel {
    type Error = Error;
    fn try_from(w: ModelWire) -> Result<Self> {
        let fam_ok = matches!(
            (&w.params, w.spec.family),
            (Params::Lr(_), Family::Lr) | (Params::Nhgr(_), Family::Nhgr)
        );
        if !fam_ok
            || w.params.b().len() != w.spec.n_x()
            || w.params.c().len() != w.spec.n_z()
            || w.std.z.len() != w.spec.n_z()
        {
            return Err(Error::Invalid(format!(
                "model parameters do not match spec {}",
                w.spec
            )));
        }
        Ok(FittedModel {
            spec: w.spec,
            horizon: w.horizon,
            params: w.params,
            std: w.std,
            n: w.n,
            p: w.p,
            nll: w.nll,
            aic: w.aic,
            e_fixed: w.e_fixed,
            converged: w.converged,
            iterations: w.iterations,
        })
    }
}

pub(crate) fn aic(p: usize, nll: f64) -> f64 {
    2.0 * p as f64 + 2.0 * nll
}
