//! Pipeline stages. Each stage reads its inputs from disk and writes its
//! outputs under the run's output directory, then refreshes the manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use metcal_core::data::{
    align_where, covariates_at, read_forecasts, read_measurements, AlignedDataset, CovariateId,
    ForecastSet, MeasurementSet,
};
use metcal_core::diagnostics::{
    bootstrap_model_ci, diagnose_source, write_crps_csv, write_summary_csv, DiagnoseOptions,
    HorizonDiagnostics, PitHistogram, Source,
};
use metcal_core::regression::{
    fit, predict, predict_dataset, FitOptions, FittedModel, GaussianForecast,
};
use metcal_core::rng::derive_seed;
use metcal_core::selection::{
    default_pool, enumerate_specs, select_from_table, Family, ModelSpec, SelectionReport,
};
use metcal_core::synthgen::{write_scenario_files, TruthRecord};
use metcal_core::{Error, Result, ResultExt, Timestamp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::config::{Period, RunConfig};
use crate::store::{
    read_json, write_json, write_with, ModelIndex, ResponseIndex, SkippedEntry, Store,
};

pub fn store(cfg: &RunConfig) -> Store {
    Store::new(&cfg.output)
}

pub fn load_forecasts(cfg: &RunConfig) -> Result<ForecastSet> {
    let reg = cfg.registry()?;
    read_forecasts(&cfg.forecasts, &reg)
        .with_context(|| format!("reading forecasts {}", cfg.forecasts.display()))
}

pub fn load_measurements(cfg: &RunConfig) -> Result<MeasurementSet> {
    let reg = cfg.registry()?;
    read_measurements(&cfg.measurements, &reg)
        .with_context(|| format!("reading measurements {}", cfg.measurements.display()))
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        standardize_z: cfg.standardize_z,
        ..FitOptions::default()
    }
}

/// Configured pool, or the default pool restricted to covariates present
/// in the forecast file.
fn pool_for(cfg: &RunConfig, fc: &ForecastSet, response: &str) -> Vec<CovariateId> {
    if let Some(p) = cfg.pool.get(response) {
        return p.clone();
    }
    let reg = fc.registry();
    let codes: Vec<&str> = reg.iter().map(|(_, q)| q.code.as_str()).collect();
    default_pool(codes, response)
        .into_iter()
        .filter(|c| {
            reg.id(&c.quantity)
                .is_some_and(|q| fc.has_covariate(q, c.kind))
        })
        .collect()
}

fn align_period(
    fc: &ForecastSet,
    ms: &MeasurementSet,
    response: &str,
    horizon: u32,
    pool: &[CovariateId],
    period: &Period,
) -> Result<AlignedDataset> {
    align_where(fc, ms, response, horizon, pool, |t| period.contains(t)).with_context(|| {
        format!(
            "period `{}` ({} to {}), response {response}, horizon {horizon} h",
            period.name, period.start, period.end
        )
    })
}

fn selected_families(available: &[Family], wanted: Option<&[Family]>) -> Result<Vec<Family>> {
    match wanted {
        None => Ok(available.to_vec()),
        Some(w) => {
            for f in w {
                if !available.contains(f) {
                    return Err(Error::Missing(format!("no {f} models in the store")));
                }
            }
            Ok(available
                .iter()
                .copied()
                .filter(|f| w.contains(f))
                .collect())
        }
    }
}

/// Write a synthetic scenario to the configured data paths.
pub fn run_simulate(cfg: &RunConfig) -> Result<TruthRecord> {
    let scenario = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config("`simulate` needs a `scenario` section".into()))?;
    if cfg.registry()? != scenario.registry()? {
        return Err(Error::Config(
            "configured quantities differ from the scenario's quantities".into(),
        ));
    }
    info!(issues = scenario.issue_times().len(), "simulating scenario");
    let truth = write_scenario_files(scenario, &cfg.forecasts, &cfg.measurements, &cfg.truth)?;
    store(cfg).write_manifest()?;
    Ok(truth)
}

/// Fit every candidate spec at every horizon on the training period.
pub fn run_fit(cfg: &RunConfig) -> Result<ModelIndex> {
    let store = store(cfg);
    let fc = load_forecasts(cfg)?;
    let ms = load_measurements(cfg)?;
    let train = &cfg.periods()[0];
    let opts = fit_options(cfg);
    let models_dir = store.models_dir();
    if models_dir.exists() {
        std::fs::remove_dir_all(&models_dir)?;
    }
    let horizons: Vec<u32> = fc.horizons().iter().copied().collect();
    let mut responses = Vec::new();
    let mut skipped = Vec::new();
    for response in &cfg.responses {
        let pool = pool_for(cfg, &fc, response);
        let datasets: Vec<AlignedDataset> = horizons
            .iter()
            .map(|&h| {
                align_period(&fc, &ms, response, h, &pool, train)
                    .with_context(|| "empty or unusable training window")
            })
            .collect::<Result<_>>()?;
        for &family in &cfg.families {
            let specs = enumerate_specs(response, &pool, family, cfg.max_covariates);
            info!(%family, response, specs = specs.len(), horizons = horizons.len(), "fitting");
            let jobs: Vec<(usize, usize)> = (0..datasets.len())
                .flat_map(|d| (0..specs.len()).map(move |s| (d, s)))
                .collect();
            let fits: Vec<Result<FittedModel>> = jobs
                .par_iter()
                .map(|&(d, s)| fit(&datasets[d], &specs[s], &opts))
                .collect();
            for (&(d, s), r) in jobs.iter().zip(fits) {
                let spec = &specs[s];
                let horizon = datasets[d].horizon;
                match r {
                    Ok(m) => write_json(&store.model_path(spec, horizon), &m)?,
                    Err(e) => {
                        warn!(spec = %spec, horizon, error = %e, "fit failed; spec skipped at this horizon");
                        skipped.push(SkippedEntry {
                            spec: spec.label(),
                            horizon,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
        responses.push(ResponseIndex {
            response: response.clone(),
            pool,
            horizons: horizons.clone(),
            rows: datasets.iter().map(AlignedDataset::n).collect(),
        });
    }
    let index = ModelIndex {
        families: cfg.families.clone(),
        max_covariates: cfg.max_covariates,
        responses,
        skipped,
    };
    write_json(&store.index_path(), &index)?;
    store.write_manifest()?;
    Ok(index)
}

/// One row of the cross-horizon consistent-model summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistentEntry {
    pub family: Family,
    pub response: String,
    pub spec: String,
    pub covariates: Vec<CovariateId>,
    pub horizons_optimal: usize,
    pub horizons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub horizon: u32,
    pub parameter: String,
    pub estimate: f64,
    /// Bootstrap band; absent when disabled or when the bootstrap failed.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub se: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// AIC tables, optimal and consistent specs, barcodes and parameter bands.
pub fn run_select(cfg: &RunConfig, families: Option<&[Family]>) -> Result<Vec<ConsistentEntry>> {
    let store = store(cfg);
    let index = store.read_index()?;
    let families = selected_families(&index.families, families)?;
    let skipped: HashMap<(&str, u32), &str> = index
        .skipped
        .iter()
        .map(|s| ((s.spec.as_str(), s.horizon), s.reason.as_str()))
        .collect();
    let opts = fit_options(cfg);
    let mut data: Option<(ForecastSet, MeasurementSet)> = None;
    let mut summary = Vec::new();
    for (fi, &family) in families.iter().enumerate() {
        for (ri, r) in index.responses.iter().enumerate() {
            let specs = enumerate_specs(&r.response, &r.pool, family, index.max_covariates);
            let mut table = Vec::with_capacity(r.horizons.len());
            let mut models: Vec<Vec<Option<FittedModel>>> = Vec::with_capacity(r.horizons.len());
            for &h in &r.horizons {
                let mut row = Vec::with_capacity(specs.len());
                let mut fitted = Vec::with_capacity(specs.len());
                for spec in &specs {
                    let label = spec.label();
                    if let Some(reason) = skipped.get(&(label.as_str(), h)) {
                        row.push(Err(reason.to_string()));
                        fitted.push(None);
                    } else {
                        let m = store.read_model(spec, h).with_context(|| {
                            format!("selection for {family} {} at horizon {h} h", r.response)
                        })?;
                        row.push(Ok(m.aic));
                        fitted.push(Some(m));
                    }
                }
                table.push((h, row));
                models.push(fitted);
            }
            let result = select_from_table(&r.response, &specs, table)
                .with_context(|| format!("selection for {family} {}", r.response))?;
            let report = result.report();
            let stem = format!("{}_{}", family.code(), r.response);
            let dir = store.selection_dir();
            write_json(&store.selection_path(family, &r.response), &report)?;
            write_with(&dir.join(format!("{stem}_barcode.csv")), |w| {
                report.barcode.write_csv(w)
            })?;
            write_with(&dir.join(format!("{stem}_aic.csv")), |w| {
                result.write_aic_csv(w)
            })?;

            let consistent = report.consistent_spec()?;
            let ci = specs
                .iter()
                .position(|s| *s == consistent)
                .expect("consistent spec is a candidate");
            summary.push(ConsistentEntry {
                family,
                response: r.response.clone(),
                spec: consistent.label(),
                covariates: consistent.mean_covariates.clone(),
                horizons_optimal: report.consistent.horizons_optimal,
                horizons: r.horizons.len(),
            });

            let b = cfg.bootstrap.parameter_replicates;
            if b > 0 && data.is_none() {
                data = Some((load_forecasts(cfg)?, load_measurements(cfg)?));
            }
            let train = &cfg.periods()[0];
            let mut params = Vec::new();
            for (hi, &h) in r.horizons.iter().enumerate() {
                let Some(model) = &models[hi][ci] else {
                    warn!(spec = %consistent, horizon = h, "consistent spec not fitted at this horizon");
                    continue;
                };
                let bands = match &data {
                    Some((fc, ms)) if b > 0 => {
                        let d = align_period(fc, ms, &r.response, h, &r.pool, train)?;
                        let seed = derive_seed(cfg.seed, &[1, fi as u64, ri as u64, h as u64]);
                        match bootstrap_model_ci(&d, &consistent, &opts, b, seed) {
                            Ok(v) => Some(v),
                            Err(e) => {
                                warn!(spec = %consistent, horizon = h, error = %e, "parameter bootstrap failed");
                                None
                            }
                        }
                    }
                    _ => None,
                };
                for (j, p) in model.named_parameters().into_iter().enumerate() {
                    let band = bands.as_ref().map(|v| &v[j]);
                    params.push(ParameterRow {
                        horizon: h,
                        parameter: p.name,
                        estimate: p.value,
                        lo: band.map(|x| x.lo),
                        hi: band.map(|x| x.hi),
                        se: band.map(|x| x.se),
                    });
                }
            }
            write_json(&dir.join(format!("{stem}_parameters.json")), &params)?;
            write_with(&dir.join(format!("{stem}_parameters.csv")), |w| {
                writeln!(w, "horizon,parameter,estimate,lo,hi,se")?;
                for p in &params {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        p.horizon,
                        p.parameter,
                        p.estimate,
                        fmt_opt(p.lo),
                        fmt_opt(p.hi),
                        fmt_opt(p.se)
                    )?;
                }
                Ok(())
            })?;
        }
    }
    let dir = store.selection_dir();
    write_json(&dir.join("consistent.json"), &summary)?;
    write_with(&dir.join("consistent.csv"), |w| {
        writeln!(w, "family,response,spec,horizons_optimal,horizons")?;
        for s in &summary {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.family.code(),
                s.response,
                ModelSpec::new(s.family, &s.response, s.covariates.clone())?.covariate_label(),
                s.horizons_optimal,
                s.horizons
            )?;
        }
        Ok(())
    })?;
    store.write_manifest()?;
    Ok(summary)
}

fn source_of(family: Family) -> Source {
    match family {
        Family::Lr => Source::Lr,
        Family::Nhgr => Source::Nhgr,
    }
}

/// Consistent models of one response, per horizon.
struct ResponseModels {
    response: String,
    horizons: Vec<u32>,
    det: Option<CovariateId>,
    covariates: Vec<CovariateId>,
    sources: Vec<(Source, Vec<FittedModel>)>,
}

fn load_consistent(store: &Store, families: Option<&[Family]>) -> Result<Vec<ResponseModels>> {
    let index = store.read_index()?;
    let families = selected_families(&index.families, families)?;
    let mut out = Vec::new();
    for r in &index.responses {
        let det = CovariateId::det(&r.response);
        let det = r.pool.contains(&det).then_some(det);
        let mut needed: BTreeSet<CovariateId> = det.iter().cloned().collect();
        let mut sources = Vec::new();
        for &family in &families {
            let report: SelectionReport = store.read_selection(family, &r.response)?;
            let spec = report.consistent_spec()?;
            needed.extend(spec.mean_covariates.iter().cloned());
            let models = r
                .horizons
                .iter()
                .map(|&h| store.read_model(&spec, h))
                .collect::<Result<Vec<_>>>()?;
            sources.push((source_of(family), models));
        }
        out.push(ResponseModels {
            response: r.response.clone(),
            horizons: r.horizons.clone(),
            det,
            covariates: needed.into_iter().collect(),
            sources,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledPit {
    pub response: String,
    pub source: Source,
    pub histogram: PitHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDiagnostics {
    pub period: String,
    pub horizons: Vec<HorizonDiagnostics>,
    pub pit: Vec<PooledPit>,
}

/// Verify the consistent models (and the raw deterministic forecast) over
/// one period, or over every configured period when `period` is `None`.
pub fn run_diagnose(
    cfg: &RunConfig,
    period: Option<&str>,
    families: Option<&[Family]>,
) -> Result<Vec<PeriodDiagnostics>> {
    let store = store(cfg);
    let responses = load_consistent(&store, families)?;
    let all = cfg.periods();
    let periods: Vec<(usize, Period)> = match period {
        Some(name) => {
            let p = cfg.period(name)?;
            let i = all
                .iter()
                .position(|q| q.name == p.name)
                .expect("found above");
            vec![(i, p)]
        }
        None => all.into_iter().enumerate().collect(),
    };
    let fc = load_forecasts(cfg)?;
    let ms = load_measurements(cfg)?;
    let mut results = Vec::new();
    for (pi, period) in periods {
        info!(period = %period.name, "diagnosing");
        let mut rows = Vec::new();
        let mut pooled: BTreeMap<(String, Source), PitHistogram> = BTreeMap::new();
        let mut crps_rows = Vec::new();
        for (ri, r) in responses.iter().enumerate() {
            for (hi, &h) in r.horizons.iter().enumerate() {
                let data = align_period(&fc, &ms, &r.response, h, &r.covariates, &period)?;
                let mut sources: Vec<(Source, Vec<Option<GaussianForecast>>)> = Vec::new();
                if let Some(det) = &r.det {
                    let col = data.column(det)?;
                    sources.push((
                        Source::Deterministic,
                        col.iter()
                            .map(|&mu| Some(GaussianForecast { mu, sigma: 0.0 }))
                            .collect(),
                    ));
                }
                for (source, models) in &r.sources {
                    sources.push((*source, predict_dataset(&models[hi], &data)?));
                }
                let mut diag = Vec::with_capacity(sources.len());
                for (source, preds) in &sources {
                    let opts = DiagnoseOptions {
                        bins: cfg.pit_bins,
                        bootstrap: cfg.bootstrap.replicates,
                        seed: derive_seed(
                            cfg.seed,
                            &[2, pi as u64, ri as u64, h as u64, *source as u64],
                        ),
                        level: 0.95,
                        per_row_crps: cfg.per_row_crps,
                    };
                    let d = diagnose_source(*source, &data.y, preds, &opts).with_context(|| {
                        format!(
                            "{} {} at horizon {h} h in period `{}`",
                            source.code(),
                            r.response,
                            period.name
                        )
                    })?;
                    if d.excluded > 0 {
                        warn!(
                            response = %r.response, horizon = h, excluded = d.excluded,
                            "rows with non-positive predictive sd excluded"
                        );
                    }
                    if let Some(p) = &d.pit {
                        match pooled.entry((r.response.clone(), *source)) {
                            std::collections::btree_map::Entry::Occupied(mut e) => {
                                e.get_mut().merge(p)?
                            }
                            std::collections::btree_map::Entry::Vacant(e) => {
                                e.insert(p.clone());
                            }
                        }
                    }
                    if let Some(per_row) = &d.crps {
                        let kept = data
                            .times
                            .iter()
                            .zip(&data.y)
                            .zip(preds)
                            .filter(|(_, f)| f.is_some());
                        for (((t, y), _), c) in kept.zip(per_row) {
                            crps_rows.push((r.response.clone(), h, *source, *t, *y, *c));
                        }
                    }
                    diag.push(d);
                }
                rows.push(HorizonDiagnostics {
                    response: r.response.clone(),
                    horizon: h,
                    sources: diag,
                });
            }
        }
        let pit: Vec<PooledPit> = pooled
            .into_iter()
            .map(|((response, source), histogram)| PooledPit {
                response,
                source,
                histogram,
            })
            .collect();
        let dir = store.diagnostics_dir(&period.name);
        write_json(&dir.join("diagnostics.json"), &rows)?;
        write_json(&dir.join("pit.json"), &pit)?;
        write_with(&dir.join("summary.csv"), |w| write_summary_csv(w, &rows))?;
        write_with(&dir.join("crps.csv"), |w| write_crps_csv(w, &rows))?;
        write_with(&dir.join("pit.csv"), |w| write_pit_csv(w, &pit))?;
        let rows_path = dir.join("crps_rows.csv");
        if cfg.per_row_crps {
            write_with(&rows_path, |w| {
                writeln!(w, "response,horizon,source,issue_time,y,crps")?;
                for (resp, h, s, t, y, c) in &crps_rows {
                    writeln!(w, "{resp},{h},{},{t},{y},{c}", s.code())?;
                }
                Ok(())
            })?;
        } else if rows_path.exists() {
            std::fs::remove_file(&rows_path)?;
        }
        results.push(PeriodDiagnostics {
            period: period.name.clone(),
            horizons: rows,
            pit,
        });
    }
    store.write_manifest()?;
    Ok(results)
}

fn write_pit_csv<W: Write>(w: &mut W, pit: &[PooledPit]) -> Result<()> {
    writeln!(w, "response,source,bin,lower,upper,count,frequency")?;
    for p in pit {
        let h = &p.histogram;
        for (b, c) in h.counts.iter().enumerate() {
            let k = h.bin_count as f64;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.response,
                p.source.code(),
                b,
                b as f64 / k,
                (b + 1) as f64 / k,
                c,
                *c as f64 / h.n as f64
            )?;
        }
    }
    Ok(())
}

/// Calibrated forecast for one response, horizon and source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub horizon: u32,
    pub target_time: Timestamp,
    pub source: Source,
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePrediction {
    pub response: String,
    pub rows: Vec<PredictionRow>,
}

/// Consistent models loaded once, applied to any issue time.
pub struct Predictor {
    responses: Vec<ResponseModels>,
}

impl Predictor {
    pub fn load(cfg: &RunConfig, families: Option<&[Family]>) -> Result<Self> {
        Ok(Predictor {
            responses: load_consistent(&store(cfg), families)?,
        })
    }

    pub fn predict(&self, fc: &ForecastSet, issue: Timestamp) -> Result<Vec<ResponsePrediction>> {
        let mut out = Vec::new();
        for r in &self.responses {
            let mut rows = Vec::new();
            for (hi, &h) in r.horizons.iter().enumerate() {
                let cov =
                    covariates_at(fc, &r.response, h, issue, &r.covariates).with_context(|| {
                        format!(
                            "forecast components for {} at {issue}, horizon {h} h",
                            r.response
                        )
                    })?;
                let target_time = issue.plus_hours(h as i64);
                let mut push = |source, f: GaussianForecast| {
                    let (lo, hi) = f.interval95();
                    rows.push(PredictionRow {
                        horizon: h,
                        target_time,
                        source,
                        mu: f.mu,
                        sigma: f.sigma,
                        lo,
                        hi,
                    });
                };
                if let Some(det) = &r.det {
                    push(
                        Source::Deterministic,
                        GaussianForecast {
                            mu: cov.values[det],
                            sigma: 0.0,
                        },
                    );
                }
                for (source, models) in &r.sources {
                    match predict(&models[hi], &cov.values, cov.ens_sd) {
                        Ok(f) => push(*source, f),
                        Err(Error::NonPositiveSigma { sigma, .. }) => {
                            warn!(response = %r.response, horizon = h, sigma, "non-positive NHGR sd; no forecast");
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            out.push(ResponsePrediction {
                response: r.response.clone(),
                rows,
            });
        }
        Ok(out)
    }
}

/// Calibrated forecasts for one issue time, written to `predictions/`.
pub fn run_predict(
    cfg: &RunConfig,
    issue: Timestamp,
    families: Option<&[Family]>,
) -> Result<Vec<ResponsePrediction>> {
    let predictor = Predictor::load(cfg, families)?;
    let fc = load_forecasts(cfg)?;
    if !fc.all_issue_times().contains(&issue) {
        return Err(Error::Missing(format!("no forecasts issued at {issue}")));
    }
    let preds = predictor.predict(&fc, issue)?;
    let store = store(cfg);
    let stem = issue.to_datetime().format("%Y%m%dT%HZ").to_string();
    let dir = store.predictions_dir();
    write_json(&dir.join(format!("{stem}.json")), &preds)?;
    write_with(&dir.join(format!("{stem}.csv")), |w| {
        writeln!(w, "response,horizon,target_time,source,mu,sigma,lo,hi")?;
        for p in &preds {
            for r in &p.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    p.response,
                    r.horizon,
                    r.target_time,
                    r.source.code(),
                    r.mu,
                    r.sigma,
                    r.lo,
                    r.hi
                )?;
            }
        }
        Ok(())
    })?;
    store.write_manifest()?;
    Ok(preds)
}

/// Index of report files by figure family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub figures: BTreeMap<String, Vec<String>>,
}

/// Collect selection and diagnostics outputs into flat tables under `report/`.
pub fn run_report(cfg: &RunConfig) -> Result<ReportIndex> {
    let store = store(cfg);
    let index = store.read_index()?;
    let dir = store.report_dir();
    let mut aic = String::from("family,response,horizon,spec,aic\n");
    let mut sel =
        String::from("family,response,horizon,optimal,optimal_aic,consistent,consistent_aic\n");
    let mut bars = String::from("family,response,covariate,horizon,included\n");
    let mut params = String::from("family,response,horizon,parameter,estimate,lo,hi,se\n");
    for &family in &index.families {
        for r in &index.responses {
            let path = store.selection_path(family, &r.response);
            if !path.exists() {
                continue;
            }
            let report: SelectionReport = read_json(&path)?;
            let fam = family.code();
            let consistent = &report.consistent.spec;
            for h in &report.horizons {
                for (spec, a) in &h.aic {
                    aic.push_str(&format!(
                        "{fam},{},{},{spec},{}\n",
                        r.response, h.horizon, a.0
                    ));
                }
                let ca = h
                    .aic
                    .get(consistent)
                    .map(|a| a.0.to_string())
                    .unwrap_or_default();
                sel.push_str(&format!(
                    "{fam},{},{},{},{},{consistent},{ca}\n",
                    r.response, h.horizon, h.optimal, h.optimal_aic.0
                ));
            }
            let b = &report.barcode;
            for (row, cells) in b.rows.iter().zip(&b.matrix) {
                for (h, v) in b.horizons.iter().zip(cells) {
                    bars.push_str(&format!("{fam},{},{row},{h},{v}\n", r.response));
                }
            }
            let ppath = store
                .selection_dir()
                .join(format!("{fam}_{}_parameters.json", r.response));
            let rows: Vec<ParameterRow> = read_json(&ppath)?;
            for p in rows {
                params.push_str(&format!(
                    "{fam},{},{},{},{},{},{},{}\n",
                    r.response,
                    p.horizon,
                    p.parameter,
                    p.estimate,
                    fmt_opt(p.lo),
                    fmt_opt(p.hi),
                    fmt_opt(p.se)
                ));
            }
        }
    }
    let mut figures: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut put = |file: &str, body: &str, figure: &str| -> Result<()> {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(file), body)?;
        figures
            .entry(figure.into())
            .or_default()
            .push(format!("report/{file}"));
        Ok(())
    };
    put("aic.csv", &aic, "aic_vs_horizon")?;
    put("selection.csv", &sel, "aic_vs_horizon")?;
    put("barcode.csv", &bars, "barcode")?;
    put("parameters.csv", &params, "parameters_vs_horizon")?;

    let mut diag = String::from(
        "period,response,horizon,source,n,excluded,bias,err_sd,bias_lo,bias_hi,ks_stat,ks_p,mean_crps\n",
    );
    let mut crps = String::from("period,response,horizon,source,mean_crps\n");
    let mut pit = String::from("period,response,source,bin,lower,upper,count,frequency\n");
    for p in cfg.periods() {
        let pdir = store.diagnostics_dir(&p.name);
        if !pdir.join("diagnostics.json").exists() {
            continue;
        }
        let rows: Vec<HorizonDiagnostics> = read_json(&pdir.join("diagnostics.json"))?;
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rows)?;
        for line in String::from_utf8_lossy(&buf).lines().skip(1) {
            diag.push_str(&format!("{},{line}\n", p.name));
        }
        for h in &rows {
            for s in &h.sources {
                crps.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.name,
                    h.response,
                    h.horizon,
                    s.source.code(),
                    s.mean_crps
                ));
            }
        }
        let pooled: Vec<PooledPit> = read_json(&pdir.join("pit.json"))?;
        let mut buf = Vec::new();
        write_pit_csv(&mut buf, &pooled)?;
        for line in String::from_utf8_lossy(&buf).lines().skip(1) {
            pit.push_str(&format!("{},{line}\n", p.name));
        }
    }
    put("diagnostics.csv", &diag, "bias_sd_ks")?;
    put("crps.csv", &crps, "crps_vs_horizon")?;
    put("pit.csv", &pit, "rank_histogram")?;
    let report = ReportIndex { figures };
    write_json(&dir.join("index.json"), &report)?;
    store.write_manifest()?;
    Ok(report)
}
