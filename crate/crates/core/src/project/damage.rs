use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{annualize, Convention};
use crate::resample::BootstrapRun;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageSource {
    /// Coefficients from the annual panel: g is an annual growth effect.
    #[default]
    AnnualPanel,
    /// Coefficients from the long-difference model: g is per decade and is
    /// annualized before use.
    LongDifference,
}

/// Quadratic growth response g(T) = linear·T + quadratic·T² for one
/// coefficient draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageFunction {
    pub source: DamageSource,
    pub linear: f64,
    pub quadratic: f64,
    /// Annualization used for the long-difference source.
    #[serde(default = "signed")]
    pub convention: Convention,
}

fn signed() -> Convention {
    Convention::Signed
}

impl DamageFunction {
    pub fn new(source: DamageSource, linear: f64, quadratic: f64) -> Self {
        Self { source, linear, quadratic, convention: Convention::Signed }
    }

    /// Raw response before annualization.
    pub fn response(&self, t: f64) -> f64 {
        self.linear * t + self.quadratic * t * t
    }

    /// Annual growth effect at temperature `t`. A long-difference response
    /// outside the annualization domain is an error.
    pub fn growth(&self, t: f64) -> Result<f64> {
        let g = self.response(t);
        match self.source {
            DamageSource::AnnualPanel => Ok(g),
            DamageSource::LongDifference => annualize(g, 10, self.convention).map_err(|_| {
                Error::Domain(format!("decadal response {g} at {t} cannot be annualized"))
            }),
        }
    }

    /// One damage function per successful bootstrap replicate, in
    /// replicate order.
    pub fn from_draws(
        run: &BootstrapRun,
        linear: &str,
        quadratic: &str,
        source: DamageSource,
    ) -> Result<Vec<Self>> {
        let (a, b) = (run.index_of(linear)?, run.index_of(quadratic)?);
        Ok(run.draws.iter().map(|d| Self::new(source, d[a], d[b])).collect())
    }
}
