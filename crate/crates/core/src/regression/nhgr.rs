//! NHGR fitting.
//!
//! For fixed spread parameters `(d, e)` the mean coefficients that minimize
//! the NLL are a weighted least-squares solution, so the search runs over the
//! spread parameters alone with the mean profiled out. Nelder–Mead does the
//! global work; a Newton iteration on the full parameter vector with the
//! analytic Hessian then polishes the optimum.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use tracing::warn;

use crate::data::AlignedDataset;
use crate::error::{Error, Result};
use crate::regression::design::build;
use crate::regression::lr::ols;
use crate::regression::optim::nelder_mead;
use crate::regression::{aic, FitOptions, FittedModel, NhgrParams, Params};
use crate::selection::{Family, ModelSpec};
use crate::stats::sample_sd;

/// Ensemble sd columns with less spread than this leave `e` unidentifiable.
const MIN_SPREAD_SD: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

pub fn fit_nhgr(data: &AlignedDataset, spec: &ModelSpec) -> Result<FittedModel> {
    fit_nhgr_with(data, spec, &FitOptions::default())
}

pub fn fit_nhgr_with(
    data: &AlignedDataset,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<FittedModel> {
    if spec.family != Family::Nhgr {
        return Err(Error::Invalid(format!("fit_nhgr called with {spec}")));
    }
    let label = spec.label();
    let design = build(data, spec, opts.standardize_z)?;
    let n = data.n();
    let init = ols(&design, &data.y, &label)?;
    let lr_p = spec.mean_covariates.len() + 1;
    let s_lr = (init.rss / (n - lr_p) as f64).sqrt();
    if !(s_lr > 0.0) {
        return Err(Error::InfeasibleSpread { spec: label });
    }

    let mut p = spec.n_params();
    let degenerate = sample_sd(&data.ens_sd) < MIN_SPREAD_SD;
    if degenerate {
        warn!(spec = %label, horizon = data.horizon, "ensemble sd is constant; fixing e = 0");
    }
    let fix_e = opts.fix_e_zero || degenerate;
    if fix_e {
        p -= 1;
    }

    let prob = Problem::new(&design.x, &data.y, &data.ens_sd, fix_e);
    let warm = opts.spread_start.and_then(|[d, e]| {
        let g = if fix_e { vec![d] } else { vec![d, e] };
        let (_, beta0) = prob.profile(&g)?;
        let (theta, ok, it) = prob.newton(beta0, g);
        ok.then_some((theta, it))
    });
    let (theta, converged, iterations) = match warm {
        Some((theta, it)) => (theta, true, it),
        None => cold_start(&prob, s_lr, fix_e, opts, &label)?,
    };
    let k = prob.k;
    let beta: Vec<f64> = (0..k).map(|j| theta[j] / prob.scale[j]).collect();
    let d = theta[k];
    let e = if fix_e { 0.0 } else { theta[k + 1] };
    let nll = prob.nll(&theta).unwrap_or(f64::INFINITY);
    if let Some((row, sigma)) = data
        .ens_sd
        .iter()
        .map(|s| d + e * s)
        .enumerate()
        .find(|(_, s)| !(*s > 0.0))
    {
        return Err(Error::NonPositiveSigma { row, sigma });
    }

    let nx = spec.n_x();
    let model = FittedModel {
        spec: spec.clone(),
        horizon: data.horizon,
        params: Params::Nhgr(NhgrParams {
            a: beta[0],
            b: beta[1..1 + nx].to_vec(),
            c: beta[1 + nx..].to_vec(),
            d,
            e,
        }),
        std: design.std,
        n,
        p,
        nll,
        aic: aic(p, nll),
        e_fixed: fix_e,
        converged,
        iterations,
    };
    if !model.converged {
        return Err(Error::NonConvergence {
            best: Box::new(model),
        });
    }
    Ok(model)
}

/// Newton from several spread starts; if none converges, multi-start
/// Nelder–Mead over the profiled spread parameters and a Newton polish.
fn cold_start(
    prob: &Problem,
    s_lr: f64,
    fix_e: bool,
    opts: &FitOptions,
    label: &str,
) -> Result<(Vec<f64>, bool, usize)> {
    let starts: Vec<Vec<f64>> = if fix_e {
        vec![vec![s_lr], vec![0.5 * s_lr], vec![2.0 * s_lr]]
    } else {
        vec![
            vec![s_lr, 0.0],
            vec![0.5 * s_lr, 0.5],
            vec![0.5 * s_lr, 1.0],
        ]
    };
    let step = |g: &[f64]| -> Vec<f64> {
        let mut s = vec![0.25 * g[0].abs().max(0.1 * s_lr)];
        if !fix_e {
            s.push(0.25);
        }
        s
    };
    let mut iterations = 0;
    let mut newton_best: Option<(Vec<f64>, f64)> = None;
    for x0 in &starts {
        let Some((_, beta0)) = prob.profile(x0) else {
            continue;
        };
        let (theta, ok, it) = prob.newton(beta0, x0.clone());
        iterations += it;
        if let (true, Some(v)) = (ok, prob.nll(&theta)) {
            if newton_best.as_ref().is_none_or(|b| v < b.1) {
                newton_best = Some((theta, v));
            }
        }
    }
    if let Some((theta, _)) = newton_best {
        return Ok((theta, true, iterations));
    }

    let f = |g: &[f64]| prob.profile(g).map_or(f64::INFINITY, |(v, _)| v);
    let mut any_converged = false;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x0 in &starts {
        if !f(x0).is_finite() {
            continue;
        }
        let r = nelder_mead(f, x0, &step(x0), opts.tol, opts.max_iter);
        iterations += r.iterations;
        any_converged |= r.converged;
        if best.as_ref().is_none_or(|b| r.f < b.1) {
            best = Some((r.x, r.f));
        }
    }
    let Some((g0, _)) = best else {
        return Err(Error::InfeasibleSpread { spec: label.into() });
    };
    let r = nelder_mead(f, &g0, &step(&g0), opts.tol, opts.max_iter);
    iterations += r.iterations;
    any_converged |= r.converged;

    let (_, beta0) = prob
        .profile(&r.x)
        .ok_or_else(|| Error::InfeasibleSpread { spec: label.into() })?;
    let (theta, newton_ok, it) = prob.newton(beta0, r.x);
    Ok((theta, any_converged || newton_ok, iterations + it))
}

/// Column-scaled design and data for one NHGR fit. Parameters are
/// `theta = (beta in scaled units, d, e)`; `e` is absent when fixed.
struct Problem {
    n: usize,
    k: usize,
    /// Row-major, columns scaled to unit root-mean-square.
    x: Vec<f64>,
    scale: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    fix_e: bool,
}

impl Problem {
    fn new(x: &DMatrix<f64>, y: &[f64], s: &[f64], fix_e: bool) -> Self {
        let (n, k) = x.shape();
        let scale: Vec<f64> = x
            .column_iter()
            .map(|c| (c.norm_squared() / n as f64).sqrt())
            .collect();
        let mut rows = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                rows.push(x[(i, j)] / scale[j]);
            }
        }
        Problem {
            n,
            k,
            x: rows,
            scale,
            y: y.to_vec(),
            s: s.to_vec(),
            fix_e,
        }
    }

    fn n_gamma(&self) -> usize {
        if self.fix_e {
            1
        } else {
            2
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    fn sigma(&self, g: &[f64], i: usize) -> f64 {
        if self.fix_e {
            g[0]
        } else {
            g[0] + g[1] * self.s[i]
        }
    }

    /// Σ log σ_i, or None if some σ_i ≤ 0.
    fn sum_log_sigma(&self, g: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        let mut prod = 1.0;
        for i in 0..self.n {
            let sg = self.sigma(g, i);
            if !(sg > 0.0) {
                return None;
            }
            prod *= sg;
            if i % 16 == 15 {
                total += prod.ln();
                prod = 1.0;
            }
        }
        total += prod.ln();
        if total.is_finite() {
            Some(total)
        } else {
            Some((0..self.n).map(|i| self.sigma(g, i).ln()).sum())
        }
    }

    /// Profile NLL over the mean coefficients for fixed spread parameters.
    fn profile(&self, g: &[f64]) -> Option<(f64, Vec<f64>)> {
        let log_sum = self.sum_log_sigma(g)?;
        let k = self.k;
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        for i in 0..self.n {
            let w = 1.0 / self.sigma(g, i).powi(2);
            let xi = self.row(i);
            for p in 0..k {
                let wx = w * xi[p];
                b[p] += wx * self.y[i];
                for q in 0..=p {
                    a[(p, q)] += wx * xi[q];
                }
            }
        }
        for p in 0..k {
            for q in 0..p {
                a[(q, p)] = a[(p, q)];
            }
        }
        let beta = a.cholesky()?.solve(&b);
        let beta: Vec<f64> = beta.iter().copied().collect();
        let mut theta = beta.clone();
        theta.extend_from_slice(g);
        let quad = self.weighted_rss(&theta);
        Some((
            log_sum + 0.5 * quad + 0.5 * self.n as f64 * (2.0 * PI).ln(),
            beta,
        ))
    }

    fn weighted_rss(&self, theta: &[f64]) -> f64 {
        let (beta, g) = theta.split_at(self.k);
        (0..self.n)
            .map(|i| {
                let r = self.y[i] - dot(self.row(i), beta);
                let sg = self.sigma(g, i);
                r * r / (sg * sg)
            })
            .sum()
    }

    fn nll(&self, theta: &[f64]) -> Option<f64> {
        let log_sum = self.sum_log_sigma(&theta[self.k..])?;
        Some(log_sum + 0.5 * self.weighted_rss(theta) + 0.5 * self.n as f64 * (2.0 * PI).ln())
    }

    fn grad_hess(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let m = k + self.n_gamma();
        let (beta, g) = theta.split_at(k);
        let mut grad = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        let mut v = vec![0.0; m];
        for i in 0..self.n {
            let xi = self.row(i);
            let sg = self.sigma(g, i);
            let r = self.y[i] - dot(xi, beta);
            let w = 1.0 / (sg * sg);
            let gw = [1.0, self.s[i]];
            v[..k].copy_from_slice(xi);
            v[k..].copy_from_slice(&gw[..m - k]);
            let cb = -r * w;
            let cg = 1.0 / sg - r * r * w / sg;
            let hbg = 2.0 * r * w / sg;
            let hgg = -w + 3.0 * r * r * w * w;
            for p in 0..m {
                grad[p] += if p < k { cb * v[p] } else { cg * v[p] };
                for q in 0..=p {
                    let c = match (p < k, q < k) {
                        (true, true) => w,
                        (false, true) => hbg,
                        (false, false) => hgg,
                        (true, false) => unreachable!(),
                    };
                    h[(p, q)] += c * v[p] * v[q];
                }
            }
        }
        for p in 0..m {
            for q in 0..p {
                h[(q, p)] = h[(p, q)];
            }
        }
        (grad, h)
    }

    fn feasible(&self, g: &[f64]) -> bool {
        (0..self.n).all(|i| self.sigma(g, i) > 0.0)
    }

    /// Damped Newton iteration from `(beta, gamma)`. Returns the final
    /// parameters, whether the gradient vanished to working precision, and
    /// the number of steps taken.
    fn newton(&self, beta: Vec<f64>, gamma: Vec<f64>) -> (Vec<f64>, bool, usize) {
        let mut theta = beta;
        theta.extend(gamma);
        let m = theta.len();
        let Some(mut f) = self.nll(&theta) else {
            return (theta, false, 0);
        };
        let mut settled = false;
        let mut steps = 0;
        for _ in 0..NEWTON_MAX_ITER {
            steps += 1;
            let (grad, h) = self.grad_hess(&theta);
            let Some(delta) = solve_damped(&h, &grad) else {
                break;
            };
            let predicted = -grad.dot(&delta);
            if !(predicted > 0.0) {
                settled = true;
                break;
            }
            let mut accepted = None;
            if 0.5 * predicted < 1e-10 * (1.0 + f.abs()) {
                let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
                if self.feasible(&trial[self.k..]) {
                    accepted = Some((trial, 1.0));
                }
            } else {
                let mut t = 1.0;
                for _ in 0..50 {
                    let trial: Vec<f64> = theta
                        .iter()
                        .zip(delta.iter())
                        .map(|(th, d)| th + t * d)
                        .collect();
                    if let Some(ft) = self.nll(&trial) {
                        if ft < f {
                            accepted = Some((trial, t));
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
            let Some((trial, t)) = accepted else {
                settled = true;
                break;
            };
            let rel = (0..m)
                .map(|j| (t * delta[j]).abs() / (1.0 + theta[j].abs()))
                .fold(0.0, f64::max);
            theta = trial;
            f = self.nll(&theta).unwrap_or(f64::INFINITY);
            if rel < 1e-15 {
                settled = true;
                break;
            }
        }
        let (grad, _) = self.grad_hess(&theta);
        let gmax = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        (theta, settled && gmax < 1e-6 * (1.0 + f.abs()), steps)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton direction `-H⁻¹ g`, adding Levenberg damping when `H` is not
/// positive definite.
fn solve_damped(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let m = h.nrows();
    let mut mu = 0.0;
    for _ in 0..30 {
        let mut hd = h.clone();
        for j in 0..m {
            hd[(j, j)] += mu * h[(j, j)].abs().max(1e-12);
        }
        if let Some(ch) = hd.cholesky() {
            return Some(-ch.solve(g));
        }
        mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CovariateId;
    use crate::regression::fit_lr;
    use crate::time::Timestamp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeMap;

    fn normal(rng: &mut ChaCha20Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    fn synthetic(n: usize, d: f64, e: f64, seed: u64, const_sd: bool) -> AlignedDataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut s = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let xi = 2.0 + normal(&mut rng);
            let si = if const_sd {
                0.3
            } else {
                0.1 + 0.5 * rng.random::<f64>()
            };
            y.push(0.1 + 0.9 * xi + (d + e * si) * normal(&mut rng));
            x.push(xi);
            s.push(si);
        }
        AlignedDataset::new(
            "hs",
            12,
            (0..n as i64).map(Timestamp::from_hours).collect(),
            y,
            BTreeMap::from([(CovariateId::det("hs"), x)]),
            s,
        )
        .unwrap()
    }

    fn spec(f: Family) -> ModelSpec {
        ModelSpec::new(f, "hs", vec![CovariateId::det("hs")]).unwrap()
    }

    #[test]
    fn recovers_spread() {
        let data = synthetic(3000, 0.05, 0.8, 1, false);
        let m = fit_nhgr(&data, &spec(Family::Nhgr)).unwrap();
        let Params::Nhgr(p) = &m.params else { panic!() };
        assert!((p.a - 0.1).abs() < 0.05, "{p:?}");
        assert!((p.b[0] - 0.9).abs() < 0.02, "{p:?}");
        assert!((p.d - 0.05).abs() < 0.03, "{p:?}");
        assert!((p.e - 0.8).abs() < 0.1, "{p:?}");
        assert_eq!(m.p, 4);
        let lr = fit_lr(&data, &spec(Family::Lr)).unwrap();
        assert!(m.aic < lr.aic);
    }

    #[test]
    fn never_worse_than_start() {
        let data = synthetic(400, 0.4, 0.0, 2, false);
        let m = fit_nhgr(&data, &spec(Family::Nhgr)).unwrap();
        let lr = fit_lr(&data, &spec(Family::Lr)).unwrap();
        let Params::Lr(l) = &lr.params else { panic!() };
        let start: f64 = data
            .y
            .iter()
            .zip(&data.columns[&CovariateId::det("hs")])
            .map(|(y, x)| {
                let r = y - l.a - l.b[0] * x;
                l.s.ln() + r * r / (2.0 * l.s * l.s) + 0.5 * (2.0 * PI).ln()
            })
            .sum();
        assert!(m.nll <= start);
    }

    #[test]
    fn fixed_slope_matches_lr() {
        let data = synthetic(500, 0.3, 0.6, 3, false);
        let opts = FitOptions {
            fix_e_zero: true,
            ..FitOptions::default()
        };
        let m = fit_nhgr_with(&data, &spec(Family::Nhgr), &opts).unwrap();
        let lr = fit_lr(&data, &spec(Family::Lr)).unwrap();
        let (Params::Nhgr(p), Params::Lr(l)) = (&m.params, &lr.params) else {
            panic!()
        };
        assert!((p.a - l.a).abs() <= 1e-6 * l.a.abs());
        assert!((p.b[0] - l.b[0]).abs() <= 1e-6 * l.b[0].abs());
        assert!((p.d - l.s_mle).abs() <= 1e-6 * l.s_mle);
        assert_eq!(p.e, 0.0);
        assert!((m.nll - lr.nll).abs() < 1e-8);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let data = synthetic(1000, 0.1, 0.6, 6, false);
        let cold = fit_nhgr(&data, &spec(Family::Nhgr)).unwrap();
        let opts = FitOptions {
            spread_start: Some([0.15, 0.5]),
            ..FitOptions::default()
        };
        let warm = fit_nhgr_with(&data, &spec(Family::Nhgr), &opts).unwrap();
        assert!(warm.iterations < cold.iterations);
        assert!((warm.nll - cold.nll).abs() < 1e-8);
        let bad = FitOptions {
            spread_start: Some([-1.0, 0.0]),
            ..FitOptions::default()
        };
        let fallback = fit_nhgr_with(&data, &spec(Family::Nhgr), &bad).unwrap();
        assert!((fallback.nll - cold.nll).abs() < 1e-8);
    }

    #[test]
    fn constant_spread_fixes_slope() {
        let data = synthetic(300, 0.3, 0.0, 4, true);
        let m = fit_nhgr(&data, &spec(Family::Nhgr)).unwrap();
        let Params::Nhgr(p) = &m.params else { panic!() };
        assert!(m.e_fixed);
        assert_eq!(p.e, 0.0);
        assert_eq!(m.p, 3);
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let data = synthetic(800, 0.1, 0.7, 5, false);
        let m = fit_nhgr(&data, &spec(Family::Nhgr)).unwrap();
        let Params::Nhgr(p) = &m.params else { panic!() };
        let x = &data.columns[&CovariateId::det("hs")];
        let nll = |t: &[f64]| -> f64 {
            (0..data.n())
                .map(|i| {
                    let sg = t[2] + t[3] * data.ens_sd[i];
                    let r = data.y[i] - t[0] - t[1] * x[i];
                    sg.ln() + r * r / (2.0 * sg * sg) + 0.5 * (2.0 * PI).ln()
                })
                .sum()
        };
        let theta = [p.a, p.b[0], p.d, p.e];
        for j in 0..4 {
            let h = 1e-6 * (1.0 + theta[j].abs());
            let mut up = theta;
            let mut dn = theta;
            up[j] += h;
            dn[j] -= h;
            let g = (nll(&up) - nll(&dn)) / (2.0 * h);
            assert!(g.abs() < 1e-3 * (1.0 + m.nll.abs()), "component {j}: {g}");
        }
    }
}
