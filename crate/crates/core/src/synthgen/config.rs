use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{CovariateId, QuantityRegistry};
use crate::error::{Error, Result};
use crate::time::Timestamp;

/// Calibration truth for one response: `y = a + Σ coef·covariate + (d·g(τ) + e·s_E)·ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub a: f64,
    pub coefficients: BTreeMap<CovariateId, f64>,
    pub d: f64,
    pub e: f64,
}

/// One simulated quantity. Noise and spread scales are fractions of `sd` and
/// grow with horizon as `g(τ) = 1 + (error_growth − 1)(1 − exp(−τ/skill_efold_hours))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantityConfig {
    pub code: String,
    pub unit: String,
    pub mean: f64,
    pub sd: f64,
    /// Lag-one-hour autocorrelation of the truth.
    #[serde(default = "default_autocorrelation")]
    pub autocorrelation: f64,
    #[serde(default = "default_growth")]
    pub error_growth: f64,
    #[serde(default = "default_efold")]
    pub skill_efold_hours: f64,
    #[serde(default)]
    pub det_bias: f64,
    #[serde(default = "default_noise")]
    pub det_noise: f64,
    #[serde(default = "default_noise")]
    pub ctrl_noise: f64,
    #[serde(default = "default_noise")]
    pub ensmean_noise: f64,
    /// Member spread scale.
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Multiplier on the member spread; above 1 is over-dispersed.
    #[serde(default = "default_dispersion")]
    pub dispersion: f64,
    /// Log-sd of the per-forecast spread scale.
    #[serde(default = "default_spread_variability")]
    pub spread_variability: f64,
    pub truth: TruthConfig,
}

fn default_autocorrelation() -> f64 {
    0.97
}
fn default_growth() -> f64 {
    2.5
}
fn default_efold() -> f64 {
    120.0
}
fn default_noise() -> f64 {
    0.3
}
fn default_spread() -> f64 {
    0.25
}
fn default_dispersion() -> f64 {
    1.0
}
fn default_spread_variability() -> f64 {
    0.3
}

impl QuantityConfig {
    /// Defaults for `code` with the given moments and truth.
    pub fn new(code: &str, unit: &str, mean: f64, sd: f64, truth: TruthConfig) -> Self {
        QuantityConfig {
            code: code.into(),
            unit: unit.into(),
            mean,
            sd,
            autocorrelation: default_autocorrelation(),
            error_growth: default_growth(),
            skill_efold_hours: default_efold(),
            det_bias: 0.0,
            det_noise: default_noise(),
            ctrl_noise: default_noise(),
            ensmean_noise: default_noise(),
            spread: default_spread(),
            dispersion: default_dispersion(),
            spread_variability: default_spread_variability(),
            truth,
        }
    }

    pub fn growth(&self, horizon: u32) -> f64 {
        1.0 + (self.error_growth - 1.0) * (1.0 - (-(horizon as f64) / self.skill_efold_hours).exp())
    }
}

/// 0..72 every 3 h, then 78..168 every 6 h.
pub fn default_horizons() -> Vec<u32> {
    (0..=72).step_by(3).chain((78..=168).step_by(6)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// First and last issue time, inclusive.
    pub start: Timestamp,
    pub end: Timestamp,
    pub issue_step: u32,
    pub horizons: Vec<u32>,
    pub members: usize,
    pub quantities: Vec<QuantityConfig>,
}

fn truth(a: f64, coefs: &[(&str, f64)], d: f64, e: f64) -> TruthConfig {
    TruthConfig {
        a,
        coefficients: coefs
            .iter()
            .map(|(k, v)| (k.parse().expect("valid label"), *v))
            .collect(),
        d,
        e,
    }
}

impl Default for ScenarioConfig {
    /// 16 months of 6-hourly issues for hs, w and tm with 50 members.
    fn default() -> Self {
        let hs = QuantityConfig {
            det_bias: 0.1,
            ..QuantityConfig::new(
                "hs",
                "m",
                2.0,
                1.0,
                truth(
                    -0.3,
                    &[("det_hs", 0.45), ("ensmean_hs", 0.5), ("ensmean_w", 0.05)],
                    0.08,
                    0.6,
                ),
            )
        };
        let w = QuantityConfig {
            det_bias: 0.3,
            ..QuantityConfig::new(
                "w",
                "m/s",
                8.0,
                3.0,
                truth(
                    -0.2,
                    &[("det_w", 0.4), ("ensmean_w", 0.55), ("ensmean_hs", 0.4)],
                    0.3,
                    0.6,
                ),
            )
        };
        let tm = QuantityConfig {
            det_bias: -0.2,
            ..QuantityConfig::new(
                "tm",
                "s",
                7.0,
                1.5,
                truth(
                    0.2,
                    &[("det_tm", 0.45), ("ensmean_tm", 0.45), ("det_hs", 0.25)],
                    0.15,
                    0.5,
                ),
            )
        };
        ScenarioConfig {
            seed: 1,
            start: Timestamp::from_ymdh(2022, 5, 17, 0).expect("valid date"),
            end: Timestamp::from_ymdh(2023, 9, 6, 18).expect("valid date"),
            issue_step: 6,
            horizons: default_horizons(),
            members: 50,
            quantities: vec![hs, w, tm],
        }
    }
}

fn positive(what: &str, code: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{code}: {what} must be > 0, got {v}"
        )))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let step = self.issue_step;
        if step == 0 || 24 % step != 0 {
            return Err(Error::Config(format!(
                "issue_step must divide 24, got {step}"
            )));
        }
        if self.start.hours().rem_euclid(step as i64) != 0 {
            return Err(Error::Config(format!(
                "start {} is not on the {step}-hourly issue cycle",
                self.start
            )));
        }
        if self.end < self.start {
            return Err(Error::Config("end precedes start".into()));
        }
        if self.horizons.is_empty() || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "horizons must be non-empty and strictly increasing".into(),
            ));
        }
        if self.members < 2 {
            return Err(Error::Config(format!(
                "need at least 2 members, got {}",
                self.members
            )));
        }
        if self.quantities.is_empty() {
            return Err(Error::Config("no quantities".into()));
        }
        let reg = self.registry()?;
        let codes: BTreeSet<&str> = self.quantities.iter().map(|q| q.code.as_str()).collect();
        for q in &self.quantities {
            let c = q.code.as_str();
            if !q.mean.is_finite() {
                return Err(Error::Config(format!("{c}: mean must be finite")));
            }
            positive("sd", c, q.sd)?;
            positive("error_growth", c, q.error_growth)?;
            positive("skill_efold_hours", c, q.skill_efold_hours)?;
            positive("det_noise", c, q.det_noise)?;
            positive("ctrl_noise", c, q.ctrl_noise)?;
            positive("ensmean_noise", c, q.ensmean_noise)?;
            positive("spread", c, q.spread)?;
            positive("dispersion", c, q.dispersion)?;
            positive("truth.d", c, q.truth.d)?;
            if !(q.autocorrelation.abs() < 1.0) {
                return Err(Error::Config(format!(
                    "{c}: autocorrelation must be in (-1, 1)"
                )));
            }
            if !(q.spread_variability >= 0.0 && q.spread_variability.is_finite()) {
                return Err(Error::Config(format!(
                    "{c}: spread_variability must be >= 0"
                )));
            }
            if !(q.truth.e >= 0.0 && q.truth.e.is_finite())
                || !q.truth.a.is_finite()
                || !q.det_bias.is_finite()
            {
                return Err(Error::Config(format!(
                    "{c}: truth.e must be >= 0 and a, det_bias finite"
                )));
            }
            if q.truth.coefficients.is_empty() {
                return Err(Error::Config(format!(
                    "{c}: truth needs at least one covariate"
                )));
            }
            for (id, v) in &q.truth.coefficients {
                if !codes.contains(id.quantity.as_str()) {
                    return Err(Error::Config(format!(
                        "{c}: truth covariate {id} names an unknown quantity"
                    )));
                }
                if !(v.is_finite() && *v != 0.0) {
                    return Err(Error::Config(format!(
                        "{c}: coefficient of {id} must be finite and non-zero"
                    )));
                }
            }
        }
        debug_assert_eq!(reg.len(), self.quantities.len());
        Ok(())
    }

    pub fn registry(&self) -> Result<QuantityRegistry> {
        let mut reg = QuantityRegistry::empty();
        for q in &self.quantities {
            if reg.id(&q.code).is_some() {
                return Err(Error::Config(format!("quantity `{}` listed twice", q.code)));
            }
            reg.register(&q.code, &q.unit)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(reg)
    }

    pub fn issue_times(&self) -> Vec<Timestamp> {
        let step = self.issue_step.max(1) as usize;
        (self.start.hours()..=self.end.hours())
            .step_by(step)
            .map(Timestamp::from_hours)
            .collect()
    }
}
