//! Exhaustive small-subset AIC selection, per horizon and across horizons.

mod spec;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::data::{AlignedDataset, CovariateId};
use crate::error::{Error, Result};
use crate::regression::{fit, FitOptions, FittedModel};

pub use spec::{Family, ModelSpec};

/// AIC values closer than this are treated as equal.
pub const AIC_TIE: f64 = 1e-12;

/// Deterministic, control and ensemble mean of the response, plus the
/// deterministic and ensemble mean of every other quantity.
pub fn default_pool<'a>(
    quantities: impl IntoIterator<Item = &'a str>,
    response: &str,
) -> Vec<CovariateId> {
    let mut pool = vec![
        CovariateId::det(response),
        CovariateId::ctrl(response),
        CovariateId::ens_mean(response),
    ];
    for q in quantities {
        if q != response {
            pool.push(CovariateId::det(q));
            pool.push(CovariateId::ens_mean(q));
        }
    }
    pool.sort_by_key(|c| c.label());
    pool
}

/// All subsets of `pool` with at most `max_covariates` members, each with an
/// intercept. Ordered by size, then lexicographically by covariate label.
pub fn enumerate_specs(
    response: &str,
    pool: &[CovariateId],
    family: Family,
    max_covariates: usize,
) -> Vec<ModelSpec> {
    let mut sorted = pool.to_vec();
    sorted.sort_by_key(|c| c.label());
    sorted.dedup();
    let mut out = Vec::new();
    for size in 0..=max_covariates.min(sorted.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let covs = idx.iter().map(|&i| sorted[i].clone()).collect();
            out.push(ModelSpec::new(family, response, covs).expect("pool has no repeats"));
            // advance to the next combination in lexicographic order
            let mut i = size;
            while i > 0 && idx[i - 1] == sorted.len() - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSelection {
    pub horizon: u32,
    /// AIC per candidate, aligned with [`SelectionResult::specs`]; `None`
    /// where the fit failed.
    pub aic: Vec<Option<f64>>,
    pub optimal: usize,
}

impl HorizonSelection {
    pub fn optimal_aic(&self) -> f64 {
        self.aic[self.optimal].expect("optimal spec was fitted")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedFit {
    pub horizon: u32,
    pub spec: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub family: Family,
    pub response: String,
    pub pool: Vec<CovariateId>,
    pub specs: Vec<ModelSpec>,
    pub horizons: Vec<HorizonSelection>,
    pub skipped: Vec<SkippedFit>,
}

/// Index of the minimum AIC, preferring fewer covariates and then earlier
/// candidates among values within [`AIC_TIE`] of the minimum.
fn argmin_aic(aic: &[Option<f64>], specs: &[ModelSpec]) -> Option<usize> {
    let best = aic
        .iter()
        .flatten()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::INFINITY, f64::min);
    let near = |v: f64| v == best || (v - best).abs() < AIC_TIE;
    aic.iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|v| near(*v)).map(|_| i))
        .min_by_key(|&i| (specs[i].mean_covariates.len(), i))
}

/// Fit every spec on every horizon's dataset and pick the AIC-optimal spec
/// at each horizon. Specs that fail to fit are skipped with a warning.
pub fn select_optimal(
    datasets: &[AlignedDataset],
    specs: &[ModelSpec],
    opts: &FitOptions,
) -> Result<SelectionResult> {
    let fits: Vec<Vec<Result<FittedModel>>> = datasets
        .iter()
        .map(|d| specs.par_iter().map(|s| fit(d, s, opts)).collect())
        .collect();
    let table = fits
        .into_iter()
        .zip(datasets)
        .map(|(row, d)| {
            let aic = row
                .into_iter()
                .map(|r| r.map(|m| m.aic).map_err(|e| e.to_string()))
                .collect();
            (d.horizon, aic)
        })
        .collect();
    let response = datasets
        .first()
        .map(|d| d.response.clone())
        .or_else(|| specs.first().map(|s| s.response.clone()))
        .unwrap_or_default();
    select_from_table(&response, specs, table)
}

/// Selection from precomputed fit outcomes: one `(horizon, per-spec AIC or
/// failure message)` entry per horizon.
pub fn select_from_table(
    response: &str,
    specs: &[ModelSpec],
    table: Vec<(u32, Vec<std::result::Result<f64, String>>)>,
) -> Result<SelectionResult> {
    let family = specs.first().map_or(Family::Lr, |s| s.family);
    let mut pool: Vec<CovariateId> = specs
        .iter()
        .flat_map(|s| s.mean_covariates.iter().cloned())
        .collect();
    pool.sort_by_key(|c| c.label());
    pool.dedup();

    let mut horizons = Vec::with_capacity(table.len());
    let mut skipped = Vec::new();
    for (horizon, row) in table {
        let mut aic = Vec::with_capacity(row.len());
        for (spec, r) in specs.iter().zip(row) {
            match r {
                Ok(v) => aic.push(Some(v)),
                Err(reason) => {
                    warn!(spec = %spec, horizon, %reason, "skipping unfittable spec");
                    skipped.push(SkippedFit {
                        horizon,
                        spec: spec.label(),
                        reason,
                    });
                    aic.push(None);
                }
            }
        }
        let optimal = argmin_aic(&aic, specs).ok_or(Error::NoFittableSpec(horizon))?;
        horizons.push(HorizonSelection {
            horizon,
            aic,
            optimal,
        });
    }
    Ok(SelectionResult {
        family,
        response: response.into(),
        pool,
        specs: specs.to_vec(),
        horizons,
        skipped,
    })
}

/// Index of the spec optimal at the most horizons; ties go to the smaller
/// AIC summed over all horizons, then to enumeration order.
pub fn consistent_index(result: &SelectionResult) -> usize {
    let n = result.specs.len();
    let mut count = vec![0usize; n];
    let mut total = vec![0.0f64; n];
    for h in &result.horizons {
        count[h.optimal] += 1;
        for (t, a) in total.iter_mut().zip(&h.aic) {
            *t += a.unwrap_or(f64::INFINITY);
        }
    }
    let top = count.iter().copied().max().unwrap_or(0);
    let mut best: Option<usize> = None;
    for i in (0..n).filter(|&i| count[i] == top) {
        match best {
            None => best = Some(i),
            Some(b) if total[i] < total[b] => best = Some(i),
            _ => {}
        }
    }
    best.unwrap_or(0)
}

pub fn select_consistent(result: &SelectionResult) -> ModelSpec {
    result.specs[consistent_index(result)].clone()
}

/// Covariate-by-horizon inclusion matrix of the optimal specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barcode {
    /// `intercept` followed by the pool labels.
    pub rows: Vec<String>,
    pub horizons: Vec<u32>,
    /// `matrix[row][horizon]`, 0 or 1.
    pub matrix: Vec<Vec<u8>>,
}

pub fn barcode(result: &SelectionResult) -> Barcode {
    let mut rows = vec!["intercept".to_string()];
    rows.extend(result.pool.iter().map(CovariateId::label));
    let mut matrix = vec![vec![1u8; result.horizons.len()]];
    for c in &result.pool {
        matrix.push(
            result
                .horizons
                .iter()
                .map(|h| u8::from(result.specs[h.optimal].contains(c)))
                .collect(),
        );
    }
    Barcode {
        rows,
        horizons: result.horizons.iter().map(|h| h.horizon).collect(),
        matrix,
    }
}

impl Barcode {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "covariate")?;
        for h in &self.horizons {
            write!(w, ",{h}")?;
        }
        writeln!(w)?;
        for (label, row) in self.rows.iter().zip(&self.matrix) {
            write!(w, "{label}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// A value that may be non-finite, written as in [`crate::serde_f64`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Aic(#[serde(with = "crate::serde_f64")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon: u32,
    pub optimal: String,
    pub optimal_aic: Aic,
    pub aic: BTreeMap<String, Aic>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistentReport {
    pub spec: String,
    pub horizons_optimal: usize,
    pub total_aic: Aic,
}

/// Serializable form of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub family: Family,
    pub response: String,
    pub candidates: Vec<String>,
    pub horizons: Vec<HorizonReport>,
    pub consistent: ConsistentReport,
    pub barcode: Barcode,
}

impl SelectionReport {
    pub fn consistent_spec(&self) -> Result<ModelSpec> {
        self.consistent.spec.parse()
    }
}

impl SelectionResult {
    pub fn report(&self) -> SelectionReport {
        let ci = consistent_index(self);
        let horizons = self
            .horizons
            .iter()
            .map(|h| HorizonReport {
                horizon: h.horizon,
                optimal: self.specs[h.optimal].label(),
                optimal_aic: Aic(h.optimal_aic()),
                aic: self
                    .specs
                    .iter()
                    .zip(&h.aic)
                    .filter_map(|(s, a)| a.map(|a| (s.label(), Aic(a))))
                    .collect(),
                skipped: self
                    .specs
                    .iter()
                    .zip(&h.aic)
                    .filter(|(_, a)| a.is_none())
                    .map(|(s, _)| s.label())
                    .collect(),
            })
            .collect();
        SelectionReport {
            family: self.family,
            response: self.response.clone(),
            candidates: self.specs.iter().map(ModelSpec::label).collect(),
            horizons,
            consistent: ConsistentReport {
                spec: self.specs[ci].label(),
                horizons_optimal: self.horizons.iter().filter(|h| h.optimal == ci).count(),
                total_aic: Aic(self
                    .horizons
                    .iter()
                    .map(|h| h.aic[ci].unwrap_or(f64::INFINITY))
                    .sum()),
            },
            barcode: barcode(self),
        }
    }

    /// AIC table with one row per horizon and one column per candidate.
    pub fn write_aic_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "horizon")?;
        for s in &self.specs {
            write!(w, ",{}", s.covariate_label())?;
        }
        writeln!(w)?;
        for h in &self.horizons {
            write!(w, "{}", h.horizon)?;
            for a in &h.aic {
                match a {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
