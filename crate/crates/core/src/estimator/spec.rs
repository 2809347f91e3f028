use serde::{Deserialize, Serialize};

use super::absorb::FeTerm;
use crate::error::{Error, Result};
use crate::panel::RegionPanel;

/// Observation weights of a regression.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    /// Unweighted.
    #[default]
    None,
    /// 1 / (regions of the country in that period), recomputed on the
    /// estimation sample.
    Region,
    /// The `pop` column.
    Population,
    /// Any nonnegative column.
    Column(String),
}

/// Serial-correlation structure assumed by a HAC covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HacKind {
    /// Scores summed over regions within each period, then Bartlett-weighted
    /// autocovariances across periods. Robust to cross-sectional dependence.
    #[default]
    DriscollKraay,
    /// Bartlett-weighted autocovariances within each region, summed.
    PanelNeweyWest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VcovKind {
    Classical,
    /// Heteroskedasticity-robust (HC1 with the small-sample flag).
    Robust,
    /// One-way clustered (CR1 with the small-sample flag).
    Cluster { factor: String },
    /// Two-way clustered: V(a) + V(b) − V(a∩b).
    TwoWay { factor_a: String, factor_b: String },
    /// Bartlett kernel with weights 1 − ℓ/(L+1).
    Hac {
        bandwidth: usize,
        #[serde(default)]
        estimator: HacKind,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VcovSpec {
    #[serde(flatten)]
    pub kind: VcovKind,
    #[serde(default = "yes")]
    pub small_sample: bool,
}

fn yes() -> bool {
    true
}

impl Default for VcovSpec {
    fn default() -> Self {
        Self::cluster("country")
    }
}

impl VcovSpec {
    pub fn classical() -> Self {
        Self { kind: VcovKind::Classical, small_sample: true }
    }

    pub fn robust() -> Self {
        Self { kind: VcovKind::Robust, small_sample: true }
    }

    pub fn cluster(factor: &str) -> Self {
        Self { kind: VcovKind::Cluster { factor: factor.into() }, small_sample: true }
    }

    pub fn two_way(a: &str, b: &str) -> Self {
        Self {
            kind: VcovKind::TwoWay { factor_a: a.into(), factor_b: b.into() },
            small_sample: true,
        }
    }

    pub fn hac(bandwidth: usize, estimator: HacKind) -> Self {
        Self { kind: VcovKind::Hac { bandwidth, estimator }, small_sample: true }
    }

    /// Factors the covariance needs from the estimation sample.
    pub fn factors(&self) -> Vec<String> {
        match &self.kind {
            VcovKind::Cluster { factor } => vec![factor.clone()],
            VcovKind::TwoWay { factor_a, factor_b } => vec![factor_a.clone(), factor_b.clone()],
            _ => Vec::new(),
        }
    }

    pub fn describe(&self) -> String {
        let base = match &self.kind {
            VcovKind::Classical => "classical".to_string(),
            VcovKind::Robust => "heteroskedasticity-robust".to_string(),
            VcovKind::Cluster { factor } => format!("clustered by {factor}"),
            VcovKind::TwoWay { factor_a, factor_b } => {
                format!("two-way clustered by {factor_a} and {factor_b}")
            }
            VcovKind::Hac { bandwidth, estimator: HacKind::DriscollKraay } => {
                format!("Driscoll-Kraay, Bartlett bandwidth {bandwidth}")
            }
            VcovKind::Hac { bandwidth, estimator: HacKind::PanelNeweyWest } => {
                format!("panel Newey-West, Bartlett bandwidth {bandwidth}")
            }
        };
        if self.small_sample {
            base
        } else {
            format!("{base}, no small-sample correction")
        }
    }
}

/// Interacts a 0/1 dummy with some regressors; columns are named
/// `{dummy}_x_{variable}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub dummy: String,
    pub variables: Vec<String>,
}

impl Interaction {
    pub fn column_name(&self, variable: &str) -> String {
        format!("{}_x_{variable}", self.dummy)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.variables.iter().map(|v| self.column_name(v)).collect()
    }
}

/// Declarative description of one regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub response: String,
    pub regressors: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<FeTerm>,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub vcov: VcovSpec,
    #[serde(default)]
    pub interaction: Option<Interaction>,
}

impl RegressionSpec {
    pub fn new(response: &str, regressors: &[&str]) -> Self {
        Self {
            response: response.into(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            fixed_effects: Vec::new(),
            weights: WeightSpec::None,
            vcov: VcovSpec::default(),
            interaction: None,
        }
    }

    pub fn with_fe(mut self, terms: Vec<FeTerm>) -> Self {
        self.fixed_effects = terms;
        self
    }

    pub fn with_weights(mut self, weights: WeightSpec) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_vcov(mut self, vcov: VcovSpec) -> Self {
        self.vcov = vcov;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Final regressor list, interaction columns appended.
    pub fn all_regressors(&self) -> Vec<String> {
        let mut out = self.regressors.clone();
        if let Some(inter) = &self.interaction {
            out.extend(inter.column_names());
        }
        out
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.regressors.is_empty() {
            return Err(Error::InvalidInput("at least one regressor is required".into()));
        }
        if self.regressors.contains(&self.response) {
            return Err(Error::InvalidInput(format!(
                "response {} also listed as a regressor",
                self.response
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for r in self.all_regressors() {
            if !seen.insert(r.clone()) {
                return Err(Error::InvalidInput(format!("regressor {r} listed twice")));
            }
        }
        for t in &self.fixed_effects {
            t.validate()?;
        }
        if let VcovKind::Hac { .. } = self.vcov.kind {
            if self.fixed_effects.is_empty() {
                log::debug!("HAC covariance without fixed effects");
            }
        }
        Ok(())
    }

    /// Checks that every referenced column or factor exists in `panel`.
    pub fn check_columns(&self, panel: &RegionPanel) -> Result<()> {
        let need_column = |name: &str| -> Result<()> {
            if panel.has_column(name) {
                Ok(())
            } else {
                Err(Error::MissingColumn(name.to_string()))
            }
        };
        need_column(&self.response)?;
        for r in &self.regressors {
            need_column(r)?;
        }
        if let Some(inter) = &self.interaction {
            need_column(&inter.dummy)?;
            for v in &inter.variables {
                need_column(v)?;
            }
        }
        match &self.weights {
            WeightSpec::Population => need_column("pop")?,
            WeightSpec::Column(c) => need_column(c)?,
            _ => {}
        }
        let mut factors: Vec<String> = self.fixed_effects.iter().map(FeTerm::grouping).collect();
        factors.extend(self.vcov.factors());
        for f in factors {
            for part in f.split('#') {
                if !panel.is_builtin_factor(part) {
                    need_column(part)?;
                }
            }
        }
        Ok(())
    }
}
