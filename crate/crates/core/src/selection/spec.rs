use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::CovariateId;
use crate::error::{Error, Result};

/// Calibration model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lr,
    Nhgr,
}

impl Family {
    pub fn code(self) -> &'static str {
        match self {
            Family::Lr => "lr",
            Family::Nhgr => "nhgr",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Lr => "LR",
            Family::Nhgr => "NHGR",
        })
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Family::Lr),
            "nhgr" => Ok(Family::Nhgr),
            _ => Err(Error::Invalid(format!("unknown family `{s}`"))),
        }
    }
}

/// A candidate model: family, response and the mean covariates. The
/// intercept is always present; NHGR spread always uses the response's
/// ensemble sd.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpecWire", into = "SpecWire")]
pub struct ModelSpec {
    pub family: Family,
    pub response: String,
    /// Sorted by label, no repeats.
    pub mean_covariates: Vec<CovariateId>,
}

impl ModelSpec {
    pub fn new(family: Family, response: &str, mut covariates: Vec<CovariateId>) -> Result<Self> {
        covariates.sort_by_key(|c| c.label());
        if covariates.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid("repeated covariate in model spec".into()));
        }
        Ok(ModelSpec {
            family,
            response: response.into(),
            mean_covariates: covariates,
        })
    }

    pub fn is_x_type(&self, c: &CovariateId) -> bool {
        c.quantity == self.response
    }

    /// Same-quantity covariates, entered unstandardized.
    pub fn x_covariates(&self) -> impl Iterator<Item = &CovariateId> {
        self.mean_covariates.iter().filter(|c| self.is_x_type(c))
    }

    /// Other-quantity covariates, entered standardized.
    pub fn z_covariates(&self) -> impl Iterator<Item = &CovariateId> {
        self.mean_covariates.iter().filter(|c| !self.is_x_type(c))
    }

    pub fn n_x(&self) -> usize {
        self.x_covariates().count()
    }

    pub fn n_z(&self) -> usize {
        self.z_covariates().count()
    }

    /// Parameter count used for AIC.
    pub fn n_params(&self) -> usize {
        match self.family {
            Family::Lr => self.mean_covariates.len() + 1,
            Family::Nhgr => self.mean_covariates.len() + 3,
        }
    }

    /// `det_hs+ensmean_w`, or `intercept` for the empty set.
    pub fn covariate_label(&self) -> String {
        if self.mean_covariates.is_empty() {
            "intercept".into()
        } else {
            self.mean_covariates
                .iter()
                .map(CovariateId::label)
                .collect::<Vec<_>>()
                .join("+")
        }
    }

    /// `lr:hs:det_hs+ensmean_w`
    pub fn label(&self) -> String {
        format!(
            "{}:{}:{}",
            self.family.code(),
            self.response,
            self.covariate_label()
        )
    }

    pub fn spread_covariate(&self) -> Option<String> {
        (self.family == Family::Nhgr).then(|| format!("enssd_{}", self.response))
    }

    pub fn contains(&self, c: &CovariateId) -> bool {
        self.mean_covariates.contains(c)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(3, ':');
        let (Some(fam), Some(resp), Some(covs)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Invalid(format!("bad spec label `{s}`")));
        };
        let covariates = if covs == "intercept" {
            vec![]
        } else {
            covs.split('+').map(str::parse).collect::<Result<_>>()?
        };
        ModelSpec::new(fam.parse()?, resp, covariates)
    }
}

#[derive(Serialize, Deserialize)]
struct SpecWire {
    label: String,
    family: Family,
    response: String,
    mean_covariates: Vec<CovariateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spread_covariate: Option<String>,
    include_intercept: bool,
}

impl From<ModelSpec> for SpecWire {
    fn from(s: ModelSpec) -> Self {
        SpecWire {
            label: s.label(),
            spread_covariate: s.spread_covariate(),
            family: s.family,
            response: s.response,
            mean_covariates: s.mean_covariates,
            include_intercept: true,
        }
    }
}

impl TryFrom<SpecWire> for ModelSpec {
    type Error = Error;
    fn try_from(w: SpecWire) -> Result<Self> {
        if !w.include_intercept {
            return Err(Error::Invalid("models always include an intercept".into()));
        }
        ModelSpec::new(w.family, &w.response, w.mean_covariates)
    }
}
