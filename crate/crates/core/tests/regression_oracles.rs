use std::collections::BTreeMap;

use metcal_core::data::{AlignedDataset, CovariateId};
use metcal_core::regression::{fit, fit_lr, predict_dataset, FitOptions, Params};
use metcal_core::rng::Stream;
use metcal_core::selection::{enumerate_specs, select_optimal, Family, ModelSpec};
use metcal_core::Timestamp;

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, rest) = a.split_at_mut(row);
            for (x, p) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = cols.len();
    let a = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum())
                .collect()
        })
        .collect();
    let b = (0..p)
        .map(|i| cols[i].iter().zip(y).map(|(u, v)| u * v).sum())
        .collect();
    solve(a, b)
}

fn dataset(n: usize, seed: u64) -> AlignedDataset {
    let mut s = Stream::new(seed, 0);
    let det: Vec<f64> = (0..n).map(|_| 2.0 + s.normal()).collect();
    let ens: Vec<f64> = det.iter().map(|v| 0.8 * v + 0.3 * s.normal()).collect();
    let wind: Vec<f64> = (0..n).map(|_| 8.0 + 3.0 * s.normal()).collect();
    let sd: Vec<f64> = (0..n).map(|_| 0.2 + 0.3 * s.uniform()).collect();
    let y = (0..n)
        .map(|i| {
            -0.2 + 0.5 * det[i] + 0.4 * ens[i] + 0.05 * wind[i] + (0.1 + 0.7 * sd[i]) * s.normal()
        })
        .collect();
    AlignedDataset::new(
        "hs",
        24,
        (0..n as i64).map(Timestamp::from_hours).collect(),
        y,
        BTreeMap::from([
            (CovariateId::det("hs"), det),
            (CovariateId::ens_mean("hs"), ens),
            (CovariateId::det("w"), wind),
        ]),
        sd,
    )
    .unwrap()
}

fn pool() -> Vec<CovariateId> {
    vec![
        CovariateId::det("hs"),
        CovariateId::ens_mean("hs"),
        CovariateId::det("w"),
    ]
}

#[test]
fn lr_matches_normal_equations() {
    for seed in 0..20 {
        let data = dataset(200, seed);
        let spec = ModelSpec::new(Family::Lr, "hs", pool()).unwrap();
        let m = fit(
            &data,
            &spec,
            &FitOptions {
                standardize_z: false,
                ..FitOptions::default()
            },
        )
        .unwrap();
        let (a, b, c) = m.raw_coefficients();
        let got: Vec<f64> = std::iter::once(a).chain(b).chain(c).collect();

        let mut cols = vec![vec![1.0; data.n()]];
        for id in spec.x_covariates().chain(spec.z_covariates()) {
            cols.push(data.columns[id].clone());
        }
        let want = normal_equations(&cols, &data.y);
        for (g, w) in got.iter().zip(&want) {
            assert!(
                (g - w).abs() <= 1e-8 * w.abs().max(1.0),
                "seed {seed}: {got:?} vs {want:?}"
            );
        }
        let resid: Vec<f64> = (0..data.n())
            .map(|i| data.y[i] - cols.iter().zip(&want).map(|(c, w)| c[i] * w).sum::<f64>())
            .collect();
        for c in &cols {
            let dot: f64 = c.iter().zip(&resid).map(|(u, v)| u * v).sum();
            let scale = c.iter().map(|v| v * v).sum::<f64>().sqrt()
                * resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dot.abs() <= 1e-10 * scale);
        }
        let Params::Lr(p) = &m.params else { panic!() };
        let rss: f64 = resid.iter().map(|r| r * r).sum();
        assert!((p.s - (rss / (data.n() - 4) as f64).sqrt()).abs() < 1e-10);
    }
}

#[test]
fn standardization_leaves_predictions_and_selection_unchanged() {
    let on = FitOptions::default();
    let off = FitOptions {
        standardize_z: false,
        ..on
    };
    let data: Vec<AlignedDataset> = (0..4).map(|s| dataset(400, 100 + s)).collect();
    for family in [Family::Lr, Family::Nhgr] {
        let specs = enumerate_specs("hs", &pool(), family, 3);
        let a = select_optimal(&data, &specs, &on).unwrap();
        let b = select_optimal(&data, &specs, &off).unwrap();
        for (ha, hb) in a.horizons.iter().zip(&b.horizons) {
            assert_eq!(ha.optimal, hb.optimal);
            for (x, y) in ha.aic.iter().zip(&hb.aic) {
                let (x, y) = (x.unwrap(), y.unwrap());
                assert!((x - y).abs() <= 1e-7 * x.abs(), "{family:?}: {x} vs {y}");
            }
        }
        let spec = ModelSpec::new(family, "hs", pool()).unwrap();
        let ma = fit(&data[0], &spec, &on).unwrap();
        let mb = fit(&data[0], &spec, &off).unwrap();
        let pa = predict_dataset(&ma, &data[0]).unwrap();
        let pb = predict_dataset(&mb, &data[0]).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            let (x, y) = (x.unwrap(), y.unwrap());
            assert!((x.mu - y.mu).abs() < 1e-6 && (x.sigma - y.sigma).abs() < 1e-6);
        }
    }
}

#[test]
fn nhgr_beats_lr_on_heteroscedastic_data() {
    let data = dataset(2000, 7);
    let lr = fit_lr(&data, &ModelSpec::new(Family::Lr, "hs", pool()).unwrap()).unwrap();
    let nh = fit(
        &data,
        &ModelSpec::new(Family::Nhgr, "hs", pool()).unwrap(),
        &FitOptions::default(),
    )
    .unwrap();
    assert!(nh.aic < lr.aic);
    let Params::Nhgr(p) = &nh.params else {
        panic!()
    };
    assert!((p.e - 0.7).abs() < 0.15, "{p:?}");
}

#[test]
fn row_order_does_not_change_fit() {
    let data = dataset(300, 11);
    let mut rows: Vec<usize> = (0..data.n()).collect();
    let mut s = Stream::new(5, 0);
    for i in (1..rows.len()).rev() {
        rows.swap(i, s.index(i + 1));
    }
    let shuffled = data.select_rows(&rows);
    for family in [Family::Lr, Family::Nhgr] {
        let spec = ModelSpec::new(family, "hs", pool()).unwrap();
        let a = fit(&data, &spec, &FitOptions::default()).unwrap();
        let b = fit(&shuffled, &spec, &FitOptions::default()).unwrap();
        assert!((a.aic - b.aic).abs() < 1e-6 * a.aic.abs());
    }
}
