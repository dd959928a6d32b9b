use std::f64::consts::PI;

use crate::data::AlignedDataset;
use crate::error::{Error, Result};
use crate::regression::design::{build, least_squares, Design};
use crate::regression::{aic, FitOptions, FittedModel, LrParams, Params};
use crate::selection::{Family, ModelSpec};

pub fn fit_lr(data: &AlignedDataset, spec: &ModelSpec) -> Result<FittedModel> {
    fit_lr_with(data, spec, &FitOptions::default())
}

pub fn fit_lr_with(
    data: &AlignedDataset,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<FittedModel> {
    if spec.family != Family::Lr {
        return Err(Error::Invalid(format!("fit_lr called with {spec}")));
    }
    let design = build(data, spec, opts.standardize_z)?;
    let ols = ols(&design, &data.y, &spec.label())?;
    let n = data.n();
    let p = spec.n_params();
    let nx = spec.n_x();
    Ok(FittedModel {
        spec: spec.clone(),
        horizon: data.horizon,
        params: Params::Lr(LrParams {
            a: ols.beta[0],
            b: ols.beta[1..1 + nx].to_vec(),
            c: ols.beta[1 + nx..].to_vec(),
            s: (ols.rss / (n - p) as f64).sqrt(),
            s_mle: (ols.rss / n as f64).sqrt(),
        }),
        std: design.std,
        n,
        p,
        nll: ols.nll,
        aic: aic(p, ols.nll),
        e_fixed: false,
        converged: true,
        iterations: 0,
    })
}

pub(crate) struct Ols {
    pub beta: Vec<f64>,
    pub rss: f64,
    /// Gaussian NLL at the MLE variance RSS/n.
    pub nll: f64,
}

pub(crate) fn ols(design: &Design, y: &[f64], label: &str) -> Result<Ols> {
    let beta = least_squares(&design.x, y, label)?;
    let fitted = &design.x * nalgebra::DVector::from_column_slice(&beta);
    let rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let n = y.len() as f64;
    let nll = if rss > 0.0 {
        0.5 * n * ((2.0 * PI).ln() + (rss / n).ln() + 1.0)
    } else {
        f64::NEG_INFINITY
    };
    Ok(Ols { beta, rss, nll })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateId;
    use crate::time::Timestamp;
    use std::collections::BTreeMap;

    fn dataset(y: Vec<f64>, cols: Vec<(CovariateId, Vec<f64>)>) -> AlignedDataset {
        let n = y.len();
        AlignedDataset::new(
            "hs",
            24,
            (0..n as i64).map(Timestamp::from_hours).collect(),
            y,
            cols.into_iter().collect::<BTreeMap<_, _>>(),
            vec![0.5; n],
        )
        .unwrap()
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 1.0).collect();
        let y = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let d = dataset(y, vec![(CovariateId::det("hs"), x)]);
        let spec = ModelSpec::new(Family::Lr, "hs", vec![CovariateId::det("hs")]).unwrap();
        let m = fit_lr(&d, &spec).unwrap();
        let Params::Lr(p) = &m.params else { panic!() };
        assert!((p.a - 1.0).abs() < 1e-12);
        assert!((p.b[0] - 2.0).abs() < 1e-12);
        assert!(p.s < 1e-7);
        assert_eq!(m.p, 2);
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = vec![1.0, 2.5, 4.0, -0.5, 3.0];
        let d = dataset(y.clone(), vec![]);
        let spec = ModelSpec::new(Family::Lr, "hs", vec![]).unwrap();
        let m = fit_lr(&d, &spec).unwrap();
        let mean = y.iter().sum::<f64>() / 5.0;
        assert!((m.params.a() - mean).abs() < 1e-14);
        let rss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let Params::Lr(p) = &m.params else { panic!() };
        assert!((p.s - (rss / 4.0).sqrt()).abs() < 1e-14);
        let nll = 2.5 * ((2.0 * PI).ln() + (rss / 5.0).ln() + 1.0);
        assert!((m.nll - nll).abs() < 1e-12);
        assert!((m.aic - (2.0 + 2.0 * nll)).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows_and_collinear() {
        let d = dataset(
            vec![1.0, 2.0],
            vec![(CovariateId::det("hs"), vec![0.0, 1.0])],
        );
        let spec = ModelSpec::new(Family::Lr, "hs", vec![CovariateId::det("hs")]).unwrap();
        assert!(matches!(
            fit_lr(&d, &spec),
            Err(Error::TooFewRows { n: 2, p: 2 })
        ));

        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let d = dataset(
            vec![1.0, 0.0, 2.0, 1.0, 3.0],
            vec![
                (CovariateId::det("hs"), x.clone()),
                (
                    CovariateId::ctrl("hs"),
                    x.iter().map(|v| 2.0 * v + 1.0).collect(),
                ),
            ],
        );
        let spec = ModelSpec::new(
            Family::Lr,
            "hs",
            vec![CovariateId::det("hs"), CovariateId::ctrl("hs")],
        )
        .unwrap();
        assert!(matches!(
            fit_lr(&d, &spec),
            Err(Error::RankDeficient { .. })
        ));
    }
}
