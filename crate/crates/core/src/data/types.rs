use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Timestamp;

/// A physical quantity with a fixed unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quantity {
    pub code: String,
    pub unit: String,
}

/// Index of a quantity inside a [`QuantityRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuantityId(pub u16);

/// Known quantity codes. Defaults to significant wave height, wind speed and
/// mean wave period; more can be registered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantityRegistry {
    quantities: Vec<Quantity>,
}

impl Default for QuantityRegistry {
    fn default() -> Self {
        let q = |code: &str, unit: &str| Quantity {
            code: code.into(),
            unit: unit.into(),
        };
        QuantityRegistry {
            quantities: vec![q("hs", "m"), q("w", "m/s"), q("tm", "s")],
        }
    }
}

impl QuantityRegistry {
    pub fn empty() -> Self {
        QuantityRegistry { quantities: vec![] }
    }

    /// Add a quantity. Re-registering a code with the same unit is a no-op.
    pub fn register(&mut self, code: &str, unit: &str) -> Result<QuantityId> {
        if let Some(id) = self.id(code) {
            let existing = &self.quantities[id.0 as usize];
            if existing.unit != unit {
                return Err(Error::Invalid(format!(
                    "quantity `{code}` already registered with unit `{}`",
                    existing.unit
                )));
            }
            return Ok(id);
        }
        if code.is_empty() || code.contains([',', '_', '+', '~', ':']) {
            return Err(Error::Invalid(format!("illegal quantity code `{code}`")));
        }
        self.quantities.push(Quantity {
            code: code.into(),
            unit: unit.into(),
        });
        Ok(QuantityId((self.quantities.len() - 1) as u16))
    }

    pub fn id(&self, code: &str) -> Option<QuantityId> {
        self.quantities
            .iter()
            .position(|q| q.code == code)
            .map(|i| QuantityId(i as u16))
    }

    pub fn get(&self, id: QuantityId) -> &Quantity {
        &self.quantities[id.0 as usize]
    }

    pub fn code(&self, id: QuantityId) -> &str {
        &self.get(id).code
    }

    pub fn iter(&self) -> impl Iterator<Item = (QuantityId, &Quantity)> {
        self.quantities
            .iter()
            .enumerate()
            .map(|(i, q)| (QuantityId(i as u16), q))
    }

    pub fn len(&self) -> usize {
        self.quantities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantities.is_empty()
    }
}

/// Which forecast product a value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Deterministic,
    Control,
    /// 1-based ensemble member index.
    Member(u32),
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Deterministic => f.write_str("det"),
            Component::Control => f.write_str("ctrl"),
            Component::Member(k) => write!(f, "ens{k}"),
        }
    }
}

impl FromStr for Component {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "det" => Ok(Component::Deterministic),
            "ctrl" => Ok(Component::Control),
            _ => {
                let k = s
                    .strip_prefix("ens")
                    .and_then(|rest| {
                        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
                            None
                        } else {
                            rest.parse::<u32>().ok()
                        }
                    })
                    .ok_or_else(|| format!("unknown component `{s}`"))?;
                if k == 0 {
                    return Err("ensemble member index must be >= 1".into());
                }
                Ok(Component::Member(k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRecord {
    pub issue_time: Timestamp,
    pub horizon: u32,
    pub quantity: QuantityId,
    pub component: Component,
    pub value: f64,
}

impl ForecastRecord {
    pub fn target_time(&self) -> Timestamp {
        self.issue_time.plus_hours(self.horizon as i64)
    }

    pub(crate) fn sort_key(&self) -> (QuantityId, u32, Timestamp, Component) {
        (self.quantity, self.horizon, self.issue_time, self.component)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub time: Timestamp,
    pub quantity: QuantityId,
    pub value: f64,
}

/// Permutation-invariant forecast summaries that may enter a model.
/// Individual ensemble members are never covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Deterministic,
    Control,
    EnsembleMean,
}

impl CovariateKind {
    pub fn prefix(self) -> &'static str {
        match self {
            CovariateKind::Deterministic => "det",
            CovariateKind::Control => "ctrl",
            CovariateKind::EnsembleMean => "ensmean",
        }
    }
}

/// A covariate: a summary kind applied to one quantity's forecasts.
/// Text form is `<kind>_<quantity>`, e.g. `ensmean_hs`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CovariateId {
    pub quantity: String,
    pub kind: CovariateKind,
}

impl CovariateId {
    pub fn new(quantity: &str, kind: CovariateKind) -> Self {
        CovariateId {
            quantity: quantity.to_string(),
            kind,
        }
    }

    pub fn det(quantity: &str) -> Self {
        Self::new(quantity, CovariateKind::Deterministic)
    }

    pub fn ctrl(quantity: &str) -> Self {
        Self::new(quantity, CovariateKind::Control)
    }

    pub fn ens_mean(quantity: &str) -> Self {
        Self::new(quantity, CovariateKind::EnsembleMean)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for CovariateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind.prefix(), self.quantity)
    }
}

impl FromStr for CovariateId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, quantity) = s
            .split_once('_')
            .ok_or_else(|| Error::Invalid(format!("bad covariate label `{s}`")))?;
        let kind = match kind {
            "det" => CovariateKind::Deterministic,
            "ctrl" => CovariateKind::Control,
            "ensmean" => CovariateKind::EnsembleMean,
            _ => return Err(Error::Invalid(format!("bad covariate kind in `{s}`"))),
        };
        if quantity.is_empty() {
            return Err(Error::Invalid(format!("bad covariate label `{s}`")));
        }
        Ok(CovariateId::new(quantity, kind))
    }
}

impl Serialize for CovariateId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CovariateId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Regression-ready data for one (response, horizon) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub response: String,
    pub horizon: u32,
    /// Issue times, strictly increasing.
    pub times: Vec<Timestamp>,
    /// Measured response at `times[i] + horizon`.
    pub y: Vec<f64>,
    pub columns: BTreeMap<CovariateId, Vec<f64>>,
    /// Ensemble sd of the response quantity.
    pub ens_sd: Vec<f64>,
}

impl AlignedDataset {
    pub fn new(
        response: impl Into<String>,
        horizon: u32,
        times: Vec<Timestamp>,
        y: Vec<f64>,
        columns: BTreeMap<CovariateId, Vec<f64>>,
        ens_sd: Vec<f64>,
    ) -> Result<Self> {
        let n = y.len();
        let response = response.into();
        if n == 0 {
            return Err(Error::EmptyDataset { response, horizon });
        }
        if times.len() != n || ens_sd.len() != n || columns.values().any(|c| c.len() != n) {
            return Err(Error::Invalid("dataset vectors differ in length".into()));
        }
        if y.iter()
            .chain(columns.values().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("dataset value".into()));
        }
        if ens_sd.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Invalid("ensemble sd must be finite and >= 0".into()));
        }
        Ok(AlignedDataset {
            response,
            horizon,
            times,
            y,
            columns,
            ens_sd,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn column(&self, id: &CovariateId) -> Result<&[f64]> {
        self.columns
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingCovariate(id.label()))
    }

    /// Rows picked by index, repeats allowed (bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> AlignedDataset {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        AlignedDataset {
            response: self.response.clone(),
            horizon: self.horizon,
            times: rows.iter().map(|&i| self.times[i]).collect(),
            y: pick(&self.y),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), pick(v)))
                .collect(),
            ens_sd: pick(&self.ens_sd),
        }
    }
}
