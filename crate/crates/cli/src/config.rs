//! Run configuration: a JSON file plus command-line overrides.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use metcal_core::data::{CovariateId, Quantity, QuantityRegistry};
use metcal_core::selection::Family;
use metcal_core::synthgen::ScenarioConfig;
use metcal_core::{Error, Result, Timestamp};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const TRAIN: &str = "train";

/// Inclusive range of issue dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    #[serde(default)]
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    pub fn contains(&self, issue: Timestamp) -> bool {
        let d = issue.date();
        self.start <= d && d <= self.end
    }

    fn overlaps(&self, other: &Period) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    /// Replicates for diagnostic bias bands; 0 disables them.
    pub replicates: usize,
    /// Replicates for parameter-vs-horizon bands; 0 disables them.
    pub parameter_replicates: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            parameter_replicates: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub forecasts: PathBuf,
    pub measurements: PathBuf,
    /// Where `simulate` writes the generating parameters.
    pub truth: PathBuf,
    /// Quantity registry; empty means the scenario's quantities, or hs, w and tm.
    pub quantities: Vec<Quantity>,
    pub responses: Vec<String>,
    /// Candidate pool per response; missing responses get the default pool.
    pub pool: BTreeMap<String, Vec<CovariateId>>,
    pub max_covariates: usize,
    pub families: Vec<Family>,
    pub standardize_z: bool,
    pub train: Period,
    pub test_periods: Vec<Period>,
    pub bootstrap: BootstrapConfig,
    pub seed: u64,
    pub pit_bins: usize,
    pub per_row_crps: bool,
    pub output: PathBuf,
    pub scenario: Option<ScenarioConfig>,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl Default for RunConfig {
    /// The synthetic demo: 16 simulated months, about eleven for training
    /// and two later test periods.
    fn default() -> Self {
        RunConfig {
            forecasts: "data/forecasts.csv".into(),
            measurements: "data/measurements.csv".into(),
            truth: "data/truth.json".into(),
            quantities: vec![],
            responses: vec!["hs".into(), "w".into(), "tm".into()],
            pool: BTreeMap::new(),
            max_covariates: 3,
            families: vec![Family::Lr, Family::Nhgr],
            standardize_z: true,
            train: Period {
                name: TRAIN.into(),
                start: date(2022, 5, 17),
                end: date(2023, 3, 31),
            },
            test_periods: vec![
                Period {
                    name: "period1".into(),
                    start: date(2023, 4, 1),
                    end: date(2023, 6, 30),
                },
                Period {
                    name: "period2".into(),
                    start: date(2023, 7, 1),
                    end: date(2023, 9, 6),
                },
            ],
            bootstrap: BootstrapConfig::default(),
            seed: 1,
            pit_bins: 10,
            per_row_crps: false,
            output: "out".into(),
            scenario: Some(ScenarioConfig::default()),
        }
    }
}

/// Set `path` (dot separated) inside a JSON object, creating objects on the
/// way. The value is parsed as JSON, or taken as a string if that fails.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("bad override key `{key}`")));
        }
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                let child = map
                    .entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()));
                if child.is_null() {
                    *child = Value::Object(Default::default());
                }
                child
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("`{part}` in `{key}` is not an index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    Error::Config(format!("index {idx} in `{key}` out of range ({len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::Config(format!(
                    "`{key}` does not name an object field"
                )))
            }
        };
    }
    Ok(())
}

impl RunConfig {
    /// Load `path` (or the demo defaults) and apply overrides. Relative
    /// data paths resolve against the config file's directory, or against
    /// the output directory when there is no file.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        let base = match path {
            Some(p) => p.parent().map(Path::to_path_buf).unwrap_or_default(),
            None => PathBuf::new(),
        };
        cfg.output = base.join(&cfg.output);
        let data_base = if path.is_some() {
            base
        } else {
            cfg.output.clone()
        };
        cfg.resolve_data(&data_base);
        Ok(cfg)
    }

    fn resolve_data(&mut self, base: &Path) {
        for p in [&mut self.forecasts, &mut self.measurements, &mut self.truth] {
            *p = base.join(&*p);
        }
    }

    /// Point the run at a different output directory. Data paths that lived
    /// under the old output directory move with it.
    pub fn set_output(&mut self, out: PathBuf) {
        let old = std::mem::replace(&mut self.output, out);
        for p in [&mut self.forecasts, &mut self.measurements, &mut self.truth] {
            if let Ok(rel) = p.strip_prefix(&old) {
                *p = self.output.join(rel);
            }
        }
    }

    pub fn registry(&self) -> Result<QuantityRegistry> {
        if !self.quantities.is_empty() {
            let mut reg = QuantityRegistry::empty();
            for q in &self.quantities {
                reg.register(&q.code, &q.unit)
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            return Ok(reg);
        }
        match &self.scenario {
            Some(s) => s.registry(),
            None => Ok(QuantityRegistry::default()),
        }
    }

    /// Training period first, then the test periods.
    pub fn periods(&self) -> Vec<Period> {
        let mut train = self.train.clone();
        train.name = TRAIN.into();
        std::iter::once(train)
            .chain(self.test_periods.iter().cloned())
            .collect()
    }

    pub fn period(&self, name: &str) -> Result<Period> {
        self.periods()
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("no period named `{name}`")))
    }

    pub fn validate(&self) -> Result<()> {
        let reg = self.registry()?;
        if self.responses.is_empty() {
            return Err(Error::Config("no responses configured".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &self.responses {
            if reg.id(r).is_none() {
                return Err(Error::Config(format!(
                    "response `{r}` is not a known quantity"
                )));
            }
            if !seen.insert(r) {
                return Err(Error::Config(format!("response `{r}` listed twice")));
            }
        }
        for (r, pool) in &self.pool {
            if !self.responses.contains(r) {
                return Err(Error::Config(format!(
                    "pool given for unknown response `{r}`"
                )));
            }
            for c in pool {
                if reg.id(&c.quantity).is_none() {
                    return Err(Error::Config(format!(
                        "pool covariate {c} names an unknown quantity"
                    )));
                }
            }
        }
        if self.families.is_empty() {
            return Err(Error::Config("no model families configured".into()));
        }
        if self.pit_bins < 2 {
            return Err(Error::Config("pit_bins must be at least 2".into()));
        }
        for (what, b) in [
            ("bootstrap.replicates", self.bootstrap.replicates),
            (
                "bootstrap.parameter_replicates",
                self.bootstrap.parameter_replicates,
            ),
        ] {
            if b > 0 && b < metcal_core::diagnostics::MIN_REPLICATES {
                return Err(Error::Config(format!(
                    "{what} must be 0 or at least {}, got {b}",
                    metcal_core::diagnostics::MIN_REPLICATES
                )));
            }
        }
        let periods = self.periods();
        let mut names = BTreeSet::new();
        for p in &periods {
            if p.start > p.end {
                return Err(Error::Config(format!(
                    "period `{}` ends before it starts",
                    p.name
                )));
            }
            if p.name.is_empty()
                || !p
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Config(format!("bad period name `{}`", p.name)));
            }
            if !names.insert(p.name.as_str()) {
                return Err(Error::Config(format!(
                    "period name `{}` used twice",
                    p.name
                )));
            }
        }
        for p in &periods[1..] {
            if p.overlaps(&periods[0]) {
                return Err(Error::Config(format!(
                    "test period `{}` overlaps the training period",
                    p.name
                )));
            }
        }
        if let Some(s) = &self.scenario {
            s.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides() {
        let mut v = serde_json::json!({"a": {"b": 1}, "list": [1, 2]});
        apply_override(&mut v, "a.b=2.5").unwrap();
        apply_override(&mut v, "a.c=text").unwrap();
        apply_override(&mut v, "x.y.z=[1,2]").unwrap();
        apply_override(&mut v, "list.1=7").unwrap();
        assert_eq!(
            v,
            serde_json::json!({"a": {"b": 2.5, "c": "text"}, "x": {"y": {"z": [1, 2]}}, "list": [1, 7]})
        );
        assert!(apply_override(&mut v, "nokey").is_err());
        assert!(apply_override(&mut v, "a.b.c=1").is_err());
        assert!(apply_override(&mut v, "list.5=1").is_err());
    }

    #[test]
    fn demo_defaults_validate() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.forecasts, PathBuf::from("out/data/forecasts.csv"));
        assert_eq!(cfg.periods().len(), 3);
        let moved = {
            let mut c = cfg.clone();
            c.set_output("elsewhere".into());
            c
        };
        assert_eq!(
            moved.measurements,
            PathBuf::from("elsewhere/data/measurements.csv")
        );
    }

    #[test]
    fn invalid_settings() {
        let bad = |o: &str| {
            RunConfig::load(None, &[o.to_string()])
                .and_then(|c| c.validate())
                .is_err()
        };
        assert!(bad("responses=[\"xx\"]"));
        assert!(bad("families=[]"));
        assert!(bad("bootstrap.replicates=50"));
        assert!(bad("test_periods.0.start=\"2023-03-01\""));
        assert!(bad("train.end=\"2022-01-01\""));
        assert!(bad("unknown_field=1"));
        assert!(bad("scenario.members=1"));
        assert!(!bad("bootstrap.replicates=0"));
    }

    #[test]
    fn period_membership_by_issue_date() {
        let p = Period {
            name: "p".into(),
            start: date(2023, 1, 1),
            end: date(2023, 1, 2),
        };
        assert!(p.contains(Timestamp::from_ymdh(2023, 1, 2, 18).unwrap()));
        assert!(!p.contains(Timestamp::from_ymdh(2023, 1, 3, 0).unwrap()));
        assert!(!p.contains(Timestamp::from_ymdh(2022, 12, 31, 18).unwrap()));
    }
}
