use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    Log,
}

impl Transform {
    /// Applies the transform to the value at data row `row` of `column`.
    pub fn apply(self, value: f64, row: usize, column: &str) -> Result<f64> {
        match self {
            Transform::None => Ok(value),
            Transform::Log if value > 0.0 => Ok(value.ln()),
            Transform::Log => Err(Error::NonPositiveLog {
                row,
                column: column.to_string(),
                value,
            }),
        }
    }
}

/// One term `m_j(X_j) Z_j`. A missing `z` means `Z_j ≡ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub x: String,
    #[serde(default)]
    pub x_transform: Transform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<String>,
    #[serde(default)]
    pub z_transform: Transform,
}

impl Term {
    pub fn new(x: &str, z: Option<&str>) -> Self {
        Term {
            x: x.to_string(),
            x_transform: Transform::None,
            z: z.map(str::to_string),
            z_transform: Transform::None,
        }
    }

    pub fn describe(&self) -> String {
        let x = match self.x_transform {
            Transform::None => self.x.clone(),
            Transform::Log => format!("log {}", self.x),
        };
        match (&self.z, self.z_transform) {
            (None, _) => format!("m({x})"),
            (Some(z), Transform::None) => format!("m({x})*{z}"),
            (Some(z), Transform::Log) => format!("m({x})*log {z}"),
        }
    }
}

/// A column available to the role enumeration, with the transform it
/// receives wherever it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolVariable {
    pub column: String,
    #[serde(default)]
    pub transform: Transform,
}

/// Affine map of a column onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub min: f64,
    pub max: f64,
}

impl Rescale {
    pub fn fit(column: &str, values: &[f64]) -> Result<Self> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::ZeroRange {
                column: column.to_string(),
            });
        }
        Ok(Rescale { min, max })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: String,
    pub terms: Vec<Term>,
    /// Extra variables arranged into `(X, Z)` pairs by `fit --enumerate-roles`;
    /// the listed `terms` stay fixed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pool: Vec<PoolVariable>,
    /// Filled in by ingestion, one record per term.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rescale: Vec<Rescale>,
}

impl ModelSpec {
    pub fn new(response: &str, terms: Vec<Term>) -> Self {
        ModelSpec {
            response: response.to_string(),
            terms,
            pool: Vec::new(),
            rescale: Vec::new(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn d(&self) -> usize {
        self.terms.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() && self.pool.is_empty() {
            return Err(Error::Config("model has no terms".into()));
        }
        for (a, t) in self.terms.iter().enumerate() {
            if self.terms[..a]
                .iter()
                .any(|u| u.x == t.x && u.x_transform == t.x_transform && u.z == t.z && u.z_transform == t.z_transform)
            {
                return Err(Error::Config(format!("term {} repeats an earlier term", t.describe())));
            }
            if t.z.as_deref() == Some(self.response.as_str()) || t.x == self.response {
                return Err(Error::Config(format!("term {} uses the response column", t.describe())));
            }
        }
        if self.pool.len() % 2 != 0 {
            return Err(Error::Config("the role pool needs an even number of variables".into()));
        }
        if !self.rescale.is_empty() && self.rescale.len() != self.terms.len() {
            return Err(Error::Config("one rescale record per term is required".into()));
        }
        Ok(())
    }
}
