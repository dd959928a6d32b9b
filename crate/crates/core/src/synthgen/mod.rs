//! Seeded synthetic scenarios with a known calibration truth.
//!
//! Each quantity's truth is a stationary hourly AR(1) series. For every
//! issue time and horizon the forecast components are drawn conditionally on
//! the truth at the target time, so that given the emitted covariates and the
//! response's ensemble sd the measurement is exactly
//! `N(a + Σ coef·covariate, (d·g(τ) + e·s_E)²)`.
//!
//! Per quantity `q` the signal `S = Σ coef·covariate` is drawn as
//! `S | y ~ N(mean − a + ρ(y − mean), ρσ²)` with `ρ = 1 − σ²/sd²`, which makes
//! `y | S ~ N(a + S, σ²)`. Unconstrained component values are then projected
//! onto `{C : B·C = S}` jointly over all quantities, where `B` stacks the truth
//! coefficient rows. The projection only adds information about `S`, so the
//! conditional law of `y` is unchanged.

mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    write_measurements, AlignedDataset, Component, CovariateId, CovariateKind, ForecastRecord,
    MeasurementRecord, QuantityId, QuantityRegistry, FORECAST_HEADER,
};
use crate::ensemble::summarize_ensemble;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};
use crate::stats::sample_sd;
use crate::time::Timestamp;

pub use config::{default_horizons, QuantityConfig, ScenarioConfig, TruthConfig};

/// Largest allowed predictive sd as a fraction of the truth's marginal sd.
const MAX_SIGMA_FRACTION: f64 = 0.9;
const MAX_SPREAD_DRAWS: usize = 1000;
const KINDS: [CovariateKind; 3] = [
    CovariateKind::Deterministic,
    CovariateKind::Control,
    CovariateKind::EnsembleMean,
];
/// Issue times generated per parallel chunk when streaming to disk.
const CHUNK: usize = 32;

/// The latent forecast signal behind one ensemble: members are this value
/// plus independent noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentRecord {
    pub issue_time: Timestamp,
    pub horizon: u32,
    pub quantity: QuantityId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonTruth {
    pub horizon: u32,
    pub growth: f64,
    pub d: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityTruth {
    pub code: String,
    pub mean: f64,
    pub sd: f64,
    pub a: f64,
    pub coefficients: BTreeMap<CovariateId, f64>,
    pub horizons: Vec<HorizonTruth>,
}

impl QuantityTruth {
    pub fn covariates(&self) -> Vec<CovariateId> {
        self.coefficients.keys().cloned().collect()
    }
}

/// Generating parameters, written as `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub seed: u64,
    pub members: usize,
    pub issue_times: usize,
    pub horizons: Vec<u32>,
    pub quantities: Vec<QuantityTruth>,
}

impl TruthRecord {
    pub fn quantity(&self, code: &str) -> Option<&QuantityTruth> {
        self.quantities.iter().find(|q| q.code == code)
    }
}

pub struct Scenario {
    pub registry: QuantityRegistry,
    pub forecasts: Vec<ForecastRecord>,
    pub measurements: Vec<MeasurementRecord>,
    pub latent: Vec<LatentRecord>,
    pub truth: TruthRecord,
}

struct RowDraw {
    /// Component values indexed `3·q + kind`.
    covariates: Vec<f64>,
    members: Vec<Vec<f64>>,
    latent: Vec<f64>,
}

struct Generator<'a> {
    cfg: &'a ScenarioConfig,
    b: DMatrix<f64>,
    proj: DMatrix<f64>,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let nq = cfg.quantities.len();
        let index: BTreeMap<&str, usize> = cfg
            .quantities
            .iter()
            .enumerate()
            .map(|(i, q)| (q.code.as_str(), i))
            .collect();
        let mut b = DMatrix::zeros(nq, 3 * nq);
        for (r, q) in cfg.quantities.iter().enumerate() {
            for (id, v) in &q.truth.coefficients {
                let k = KINDS
                    .iter()
                    .position(|k| *k == id.kind)
                    .expect("all kinds listed");
                b[(r, 3 * index[id.quantity.as_str()] + k)] = *v;
            }
        }
        let bbt = &b * b.transpose();
        let chol = bbt
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Config("truth coefficient rows are linearly dependent".into()))?;
        let diag = chol.l().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        if !(lo > 1e-6 * hi) {
            return Err(Error::Config(
                "truth coefficient rows are nearly dependent".into(),
            ));
        }
        let proj = b.transpose() * chol.inverse();
        Ok(Generator { cfg, b, proj })
    }

    fn draw(&self, horizon: u32, y: &[f64], rng: &mut Stream) -> Result<RowDraw> {
        let nq = self.cfg.quantities.len();
        let m = self.cfg.members;
        let mut f0 = DVector::zeros(3 * nq);
        let mut s = DVector::zeros(nq);
        let mut noise = Vec::with_capacity(nq);
        for (qi, q) in self.cfg.quantities.iter().enumerate() {
            let g = q.growth(horizon);
            let (xi, sigma) = self.spread(q, g, rng)?;
            noise.push(xi);
            let rho = 1.0 - (sigma / q.sd).powi(2);
            let t = &q.truth;
            s[qi] = q.mean - t.a + rho * (y[qi] - q.mean) + rho.sqrt() * sigma * rng.normal();
            let guess = t.a + s[qi];
            let scale = q.sd * g;
            f0[3 * qi] = guess + q.det_bias + q.det_noise * scale * rng.normal();
            f0[3 * qi + 1] = guess + q.ctrl_noise * scale * rng.normal();
            f0[3 * qi + 2] = guess + q.ensmean_noise * scale * rng.normal();
        }
        let c = &f0 + &self.proj * (s - &self.b * &f0);
        let mut members = Vec::with_capacity(nq);
        let mut latent = Vec::with_capacity(nq);
        for (qi, xi) in noise.into_iter().enumerate() {
            let centre = c[3 * qi + 2];
            let xbar = xi.iter().sum::<f64>() / m as f64;
            members.push(xi.iter().map(|v| centre + (v - xbar)).collect());
            latent.push(centre - xbar);
        }
        Ok(RowDraw {
            covariates: c.iter().copied().collect(),
            members,
            latent,
        })
    }

    /// Member noise and the implied predictive sd, redrawn until the sd is
    /// admissible. The redraw depends only on the noise, never on the truth.
    fn spread(&self, q: &QuantityConfig, g: f64, rng: &mut Stream) -> Result<(Vec<f64>, f64)> {
        let m = self.cfg.members;
        for _ in 0..MAX_SPREAD_DRAWS {
            let scale =
                q.spread * q.sd * q.dispersion * g * (q.spread_variability * rng.normal()).exp();
            let xi: Vec<f64> = (0..m).map(|_| scale * rng.normal()).collect();
            let sigma = q.truth.d * g + q.truth.e * sample_sd(&xi);
            if sigma < MAX_SIGMA_FRACTION * q.sd {
                return Ok((xi, sigma));
            }
        }
        Err(Error::Config(format!(
            "{}: truth spread d·g + e·s_E cannot stay below {MAX_SIGMA_FRACTION}·sd",
            q.code
        )))
    }

    fn truth_record(&self) -> TruthRecord {
        TruthRecord {
            seed: self.cfg.seed,
            members: self.cfg.members,
            issue_times: self.cfg.issue_times().len(),
            horizons: self.cfg.horizons.clone(),
            quantities: self
                .cfg
                .quantities
                .iter()
                .map(|q| QuantityTruth {
                    code: q.code.clone(),
                    mean: q.mean,
                    sd: q.sd,
                    a: q.truth.a,
                    coefficients: q.truth.coefficients.clone(),
                    horizons: self
                        .cfg
                        .horizons
                        .iter()
                        .map(|&h| HorizonTruth {
                            horizon: h,
                            growth: q.growth(h),
                            d: q.truth.d * q.growth(h),
                            e: q.truth.e,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Hourly truth from the first issue time to the last target time.
    fn truth_series(&self) -> Vec<Vec<f64>> {
        let len = (self.cfg.end.hours() - self.cfg.start.hours()) as usize
            + *self.cfg.horizons.last().expect("validated") as usize
            + 1;
        let seed = derive_seed(self.cfg.seed, &[0]);
        self.cfg
            .quantities
            .iter()
            .enumerate()
            .map(|(qi, q)| {
                let mut rng = Stream::new(seed, qi as u64);
                let phi = q.autocorrelation;
                let innov = q.sd * (1.0 - phi * phi).sqrt();
                let mut v = Vec::with_capacity(len);
                let mut x = q.mean + q.sd * rng.normal();
                for _ in 0..len {
                    v.push(x);
                    x = q.mean + phi * (x - q.mean) + innov * rng.normal();
                }
                v
            })
            .collect()
    }

    fn issue_block(
        &self,
        index: usize,
        issue: Timestamp,
        truth: &[Vec<f64>],
    ) -> Result<(Vec<ForecastRecord>, Vec<LatentRecord>)> {
        let mut rng = Stream::new(derive_seed(self.cfg.seed, &[1]), index as u64);
        let nq = self.cfg.quantities.len();
        let offset = (issue.hours() - self.cfg.start.hours()) as usize;
        let mut fc = Vec::with_capacity(self.cfg.horizons.len() * nq * (self.cfg.members + 2));
        let mut latent = Vec::with_capacity(self.cfg.horizons.len() * nq);
        let mut y = vec![0.0; nq];
        for &h in &self.cfg.horizons {
            for (qi, yq) in y.iter_mut().enumerate() {
                *yq = truth[qi][offset + h as usize];
            }
            let row = self.draw(h, &y, &mut rng)?;
            for qi in 0..nq {
                let quantity = QuantityId(qi as u16);
                let rec = |component, value| ForecastRecord {
                    issue_time: issue,
                    horizon: h,
                    quantity,
                    component,
                    value,
                };
                fc.push(rec(Component::Deterministic, row.covariates[3 * qi]));
                fc.push(rec(Component::Control, row.covariates[3 * qi + 1]));
                for (k, v) in row.members[qi].iter().enumerate() {
                    fc.push(rec(Component::Member(k as u32 + 1), *v));
                }
                latent.push(LatentRecord {
                    issue_time: issue,
                    horizon: h,
                    quantity,
                    value: row.latent[qi],
                });
            }
        }
        Ok((fc, latent))
    }

    fn measurements(&self, truth: &[Vec<f64>]) -> Vec<MeasurementRecord> {
        let len = truth[0].len();
        let mut out = Vec::with_capacity(len * truth.len());
        for t in 0..len {
            for (qi, series) in truth.iter().enumerate() {
                out.push(MeasurementRecord {
                    time: self.cfg.start.plus_hours(t as i64),
                    quantity: QuantityId(qi as u16),
                    value: series[t],
                });
            }
        }
        out
    }
}

/// Generate a whole scenario in memory.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario> {
    let gen = Generator::new(config)?;
    let registry = config.registry()?;
    let truth = gen.truth_series();
    let blocks: Vec<_> = config
        .issue_times()
        .into_par_iter()
        .enumerate()
        .map(|(i, t)| gen.issue_block(i, t, &truth))
        .collect::<Result<_>>()?;
    let mut forecasts = Vec::new();
    let mut latent = Vec::new();
    for (f, l) in blocks {
        forecasts.extend(f);
        latent.extend(l);
    }
    Ok(Scenario {
        registry,
        forecasts,
        measurements: gen.measurements(&truth),
        latent,
        truth: gen.truth_record(),
    })
}

/// Paths written by [`write_scenario`].
pub const FORECAST_FILE: &str = "forecasts.csv";
pub const MEASUREMENT_FILE: &str = "measurements.csv";
pub const TRUTH_FILE: &str = "truth.json";

/// [`write_scenario_files`] into `dir` with the default file names.
pub fn write_scenario(config: &ScenarioConfig, dir: &Path) -> Result<TruthRecord> {
    write_scenario_files(
        config,
        &dir.join(FORECAST_FILE),
        &dir.join(MEASUREMENT_FILE),
        &dir.join(TRUTH_FILE),
    )
}

fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(File::create(path)?)
}

/// Generate a scenario straight to disk without holding every forecast in
/// memory. Output is identical to writing [`generate`]'s records.
pub fn write_scenario_files(
    config: &ScenarioConfig,
    forecasts: &Path,
    measurements: &Path,
    truth_path: &Path,
) -> Result<TruthRecord> {
    let gen = Generator::new(config)?;
    let registry = config.registry()?;
    let truth = gen.truth_series();
    let mut w = BufWriter::with_capacity(1 << 20, create(forecasts)?);
    writeln!(w, "{FORECAST_HEADER}")?;
    let issues = config.issue_times();
    for (c, chunk) in issues.chunks(CHUNK).enumerate() {
        let blocks: Vec<_> = chunk
            .par_iter()
            .enumerate()
            .map(|(j, t)| gen.issue_block(c * CHUNK + j, *t, &truth))
            .collect::<Result<_>>()?;
        for (records, _) in blocks {
            for r in &records {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.issue_time,
                    r.horizon,
                    registry.code(r.quantity),
                    r.component,
                    r.value
                )?;
            }
        }
    }
    w.flush()?;
    write_measurements(create(measurements)?, &registry, &gen.measurements(&truth))?;
    let record = gen.truth_record();
    let mut tw = BufWriter::new(create(truth_path)?);
    serde_json::to_writer_pretty(&mut tw, &record)?;
    writeln!(tw)?;
    tw.flush()?;
    Ok(record)
}

/// `n` independent rows at one horizon, truths drawn from their marginals
/// instead of an AR(1) series. Returns one dataset per quantity as response,
/// each carrying det, ctrl and ensmean columns of every quantity.
pub fn sample(
    config: &ScenarioConfig,
    horizon: u32,
    n: usize,
) -> Result<BTreeMap<String, AlignedDataset>> {
    let gen = Generator::new(config)?;
    let nq = config.quantities.len();
    let mut rng = Stream::new(derive_seed(config.seed, &[2, horizon as u64]), 0);
    let mut ys = vec![Vec::with_capacity(n); nq];
    let mut sds = vec![Vec::with_capacity(n); nq];
    let mut cols = vec![Vec::with_capacity(n); 3 * nq];
    let mut y = vec![0.0; nq];
    for _ in 0..n {
        for (qi, q) in config.quantities.iter().enumerate() {
            y[qi] = q.mean + q.sd * rng.normal();
        }
        let row = gen.draw(horizon, &y, &mut rng)?;
        for qi in 0..nq {
            let summary = summarize_ensemble(&row.members[qi])?;
            ys[qi].push(y[qi]);
            sds[qi].push(summary.sd);
            cols[3 * qi].push(row.covariates[3 * qi]);
            cols[3 * qi + 1].push(row.covariates[3 * qi + 1]);
            cols[3 * qi + 2].push(summary.mean);
        }
    }
    let mut columns = BTreeMap::new();
    for (j, col) in cols.into_iter().enumerate() {
        let id = CovariateId::new(&config.quantities[j / 3].code, KINDS[j % 3]);
        columns.insert(id, col);
    }
    let times: Vec<Timestamp> = (0..n as i64).map(Timestamp::from_hours).collect();
    config
        .quantities
        .iter()
        .zip(ys.into_iter().zip(sds))
        .map(|(q, (y, sd))| {
            let d = AlignedDataset::new(&q.code, horizon, times.clone(), y, columns.clone(), sd)?;
            Ok((q.code.clone(), d))
        })
        .collect()
}

/// The truth record for a config without generating any data.
pub fn truth_record(config: &ScenarioConfig) -> Result<TruthRecord> {
    Ok(Generator::new(config)?.truth_record())
}
