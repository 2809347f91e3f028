use serde::Serialize;

use super::absorb::{AbsorbOptions, Absorber, TermCodes};
use super::spec::{Interaction, RegressionSpec, VcovSpec, WeightSpec};
use crate::error::{Error, Result};
use crate::inference;
use crate::linalg::{Matrix, PivotedQr};
use crate::panel::{region_weights, RegionPanel, N_PRECIP_BINS, N_TEMP_BINS};
use crate::scalar::Scalar;

/// Groups of one absorbed fixed-effect term on the estimation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FePartition {
    pub label: String,
    pub groups: Vec<u32>,
    pub params: usize,
}

/// A fitted regression.
#[derive(Debug, Clone)]
pub struct FitResult<S> {
    /// Names of the estimated (non-collinear) coefficients.
    pub names: Vec<String>,
    pub coefficients: Vec<S>,
    pub vcov: Matrix<S>,
    pub vcov_spec: VcovSpec,
    /// Regressors removed as collinear, in spec order.
    pub dropped: Vec<String>,
    /// Response minus full fitted values (fixed effects included).
    pub residuals: Vec<S>,
    pub fitted: Vec<S>,
    pub weights: Vec<S>,
    /// Absorbed regressors of the retained coefficients, unweighted.
    pub design: Matrix<S>,
    /// (X'WX)⁻¹ of the absorbed design.
    pub bread: Matrix<S>,
    pub n: usize,
    pub rank: usize,
    pub absorbed_params: usize,
    pub dof: usize,
    pub r2: S,
    pub r2_within: S,
    pub iterations: usize,
    pub fe: Vec<FePartition>,
    /// Estimation sample (rows after listwise deletion).
    pub sample: RegionPanel,
    /// Row indices of the sample in the input panel.
    pub rows: Vec<usize>,
    pub notes: Vec<String>,
}

impl<S: Scalar> FitResult<S> {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Result<S> {
        self.index_of(name)
            .map(|i| self.coefficients[i])
            .ok_or_else(|| Error::MissingCoefficient(name.to_string()))
    }

    pub fn std_errors(&self) -> Vec<S> {
        self.vcov.diagonal().into_iter().map(|v| v.max(S::zero()).sqrt()).collect()
    }

    pub fn se(&self, name: &str) -> Result<S> {
        let i = self.index_of(name).ok_or_else(|| Error::MissingCoefficient(name.to_string()))?;
        Ok(self.vcov[(i, i)].max(S::zero()).sqrt())
    }

    /// Covariance entry for two named coefficients.
    pub fn cov(&self, a: &str, b: &str) -> Result<S> {
        let i = self.index_of(a).ok_or_else(|| Error::MissingCoefficient(a.to_string()))?;
        let j = self.index_of(b).ok_or_else(|| Error::MissingCoefficient(b.to_string()))?;
        Ok(self.vcov[(i, j)])
    }

    /// Parameters counted in small-sample corrections: estimated
    /// coefficients plus absorbed fixed effects.
    pub fn n_params(&self) -> usize {
        self.rank + self.absorbed_params
    }

    /// Same fit under a different covariance estimator.
    pub fn with_vcov(&self, spec: &VcovSpec) -> Result<Self> {
        let (vcov, note) = inference::vcov(self, spec)?;
        let mut out = self.clone();
        out.vcov = vcov;
        out.vcov_spec = spec.clone();
        if let Some(n) = note {
            out.notes.push(n);
        }
        Ok(out)
    }

    pub fn summary(&self) -> FitSummary {
        let se = self.std_errors();
        FitSummary {
            coefficients: self
                .names
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let b = self.coefficients[i].as_f64();
                    let s = se[i].as_f64();
                    CoefficientRow { name: name.clone(), estimate: b, std_error: s, t_stat: b / s }
                })
                .collect(),
            vcov: (0..self.names.len())
                .map(|i| (0..self.names.len()).map(|j| self.vcov[(i, j)].as_f64()).collect())
                .collect(),
            vcov_kind: self.vcov_spec.describe(),
            dropped: self.dropped.clone(),
            n: self.n,
            rank: self.rank,
            absorbed_params: self.absorbed_params,
            dof: self.dof,
            r2: self.r2.as_f64(),
            r2_within: self.r2_within.as_f64(),
            iterations: self.iterations,
            fixed_effects: self.fe.iter().map(|f| f.label.clone()).collect(),
            notes: self.notes.clone(),
        }
    }

    /// `name,estimate,std_error,t_stat` rows.
    pub fn write_coefficients_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "estimate", "std_error", "t_stat"])?;
        for row in self.summary().coefficients {
            w.write_record([
                row.name,
                format!("{:?}", row.estimate),
                format!("{:?}", row.std_error),
                format!("{:?}", row.t_stat),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
}

/// Serializable view of a fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub coefficients: Vec<CoefficientRow>,
    pub vcov: Vec<Vec<f64>>,
    pub vcov_kind: String,
    pub dropped: Vec<String>,
    pub n: usize,
    pub rank: usize,
    pub absorbed_params: usize,
    pub dof: usize,
    pub r2: f64,
    pub r2_within: f64,
    pub iterations: usize,
    pub fixed_effects: Vec<String>,
    pub notes: Vec<String>,
}

/// Weighted least squares of `spec.response` on the regressors after
/// absorbing the fixed effects. Rows with any missing input, or zero
/// weight, are dropped first.
pub fn fit<S: Scalar>(panel: &RegionPanel, spec: &RegressionSpec) -> Result<FitResult<S>> {
    fit_with(panel, spec, AbsorbOptions::default())
}

/// [`fit`] with explicit absorption settings.
pub fn fit_with<S: Scalar>(
    panel: &RegionPanel,
    spec: &RegressionSpec,
    options: AbsorbOptions,
) -> Result<FitResult<S>> {
    spec.validate()?;
    spec.check_columns(panel)?;
    let mut notes = Vec::new();

    let regressor_names = spec.all_regressors();
    let mut raw: Vec<Vec<f64>> = spec
        .regressors
        .iter()
        .map(|r| panel.column(r).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    if let Some(inter) = &spec.interaction {
        raw.extend(interaction_columns(panel, inter)?);
    }
    let y_all = panel.column(&spec.response)?;

    // Listwise deletion over everything this specification touches.
    let mut present: Vec<bool> = (0..panel.len())
        .map(|i| y_all[i].is_finite() && raw.iter().all(|c| c[i].is_finite()))
        .collect();
    let mut numeric_factors: Vec<String> = Vec::new();
    for f in spec.fixed_effects.iter().map(|t| t.grouping()).chain(spec.vcov.factors()) {
        for part in f.split('#') {
            if !panel.is_builtin_factor(part) && !numeric_factors.iter().any(|x| x == part) {
                numeric_factors.push(part.to_string());
            }
        }
    }
    for f in &numeric_factors {
        let col = panel.column(f)?;
        for (i, p) in present.iter_mut().enumerate() {
            *p = *p && col[i].is_finite();
        }
    }
    let raw_w: Option<&[f64]> = match &spec.weights {
        WeightSpec::None | WeightSpec::Region => None,
        WeightSpec::Population => Some(panel.column("pop")?),
        WeightSpec::Column(c) => Some(panel.column(c)?),
    };
    if let Some(w) = raw_w {
        if let Some(i) = (0..panel.len()).find(|&i| present[i] && w[i] < 0.0) {
            return Err(Error::InvalidInput(format!("negative weight at row {i}")));
        }
        let mut zero = 0;
        for (i, p) in present.iter_mut().enumerate() {
            if *p && w[i] == 0.0 {
                zero += 1;
            }
            *p = *p && w[i].is_finite() && w[i] > 0.0;
        }
        if zero > 0 {
            notes.push(format!("{zero} zero-weight rows left out of the estimation sample"));
        }
    }
    let rows: Vec<usize> = (0..panel.len()).filter(|&i| present[i]).collect();
    let n = rows.len();
    if n == 0 {
        return Err(Error::InsufficientData("no complete rows for this specification".into()));
    }
    if n < panel.len() {
        notes.push(format!("{} rows dropped for missing values", panel.len() - n));
    }
    let sample = panel.select_rows(&rows);

    let weights_f64: Vec<f64> = match (&spec.weights, raw_w) {
        (WeightSpec::Region, _) => {
            let country = sample.factor_codes("country")?;
            region_weights(&country, sample.time(), &vec![true; n])
        }
        (_, Some(w)) => rows.iter().map(|&i| w[i]).collect(),
        _ => vec![1.0; n],
    };
    let weights: Vec<S> = weights_f64.iter().map(|&w| S::lit(w)).collect();

    let terms: Vec<TermCodes> = spec
        .fixed_effects
        .iter()
        .map(|t| {
            Ok(TermCodes {
                label: t.label(),
                groups: sample.factor_codes(&t.grouping())?,
                degree: t.degree(),
            })
        })
        .collect::<Result<_>>()?;
    let time: Vec<S> = sample.time().iter().map(|&t| S::lit(t as f64)).collect();
    let absorber = Absorber::new(&terms, &time, &weights, options)?;
    if !absorber.note().is_empty() {
        notes.push(absorber.note().to_string());
    }

    let y: Vec<S> = rows.iter().map(|&i| S::lit(y_all[i])).collect();
    let mut columns: Vec<Vec<S>> = Vec::with_capacity(raw.len() + 1);
    columns.push(y.clone());
    for c in &raw {
        columns.push(rows.iter().map(|&i| S::lit(c[i])).collect());
    }
    let stats = absorber.absorb(&mut columns)?;
    let y_tilde = columns.remove(0);

    let sqrt_w: Vec<S> = weights.iter().map(|w| w.sqrt()).collect();
    let weighted: Vec<Vec<S>> = columns
        .iter()
        .map(|c| c.iter().zip(&sqrt_w).map(|(&x, &s)| x * s).collect())
        .collect();
    let qr = PivotedQr::new(&Matrix::from_columns(&weighted), S::rank_tolerance());
    let rank = qr.rank();
    if rank == 0 {
        return Err(Error::Degenerate(
            "no regressor varies after absorbing the fixed effects".into(),
        ));
    }
    let absorbed = stats.absorbed_params;
    if n <= rank + absorbed {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {} parameters",
            rank + absorbed
        )));
    }
    let kept: Vec<usize> = {
        let mut k = qr.kept().to_vec();
        k.sort_unstable();
        k
    };
    let dropped: Vec<String> = qr.dropped().iter().map(|&j| regressor_names[j].clone()).collect();
    if !dropped.is_empty() {
        log::warn!("collinear regressors dropped: {}", dropped.join(", "));
        notes.push(format!("collinear regressors dropped: {}", dropped.join(", ")));
    }
    let wy: Vec<S> = y_tilde.iter().zip(&sqrt_w).map(|(&v, &s)| v * s).collect();
    let beta_full = qr.solve(&wy);
    let coefficients: Vec<S> = kept.iter().map(|&j| beta_full[j]).collect();
    let design = Matrix::from_columns(&kept.iter().map(|&j| columns[j].clone()).collect::<Vec<_>>());

    let mut residuals = y_tilde.clone();
    for (k, &b) in coefficients.iter().enumerate() {
        for (r, &x) in residuals.iter_mut().zip(design.col(k)) {
            *r = *r - b * x;
        }
    }
    let fitted: Vec<S> = y.iter().zip(&residuals).map(|(&a, &e)| a - e).collect();

    let wsum: S = weights.iter().copied().sum();
    let ybar = y.iter().zip(&weights).map(|(&v, &w)| v * w).sum::<S>() / wsum;
    let tss: S = y.iter().zip(&weights).map(|(&v, &w)| w * (v - ybar) * (v - ybar)).sum();
    let tss_within: S = y_tilde.iter().zip(&weights).map(|(&v, &w)| w * v * v).sum();
    let rss: S = residuals.iter().zip(&weights).map(|(&e, &w)| w * e * e).sum();
    let r2 = if tss > S::zero() { S::one() - rss / tss } else { S::nan() };
    let r2_within = if tss_within > S::zero() { S::one() - rss / tss_within } else { S::nan() };

    let fe = absorber
        .projectors()
        .iter()
        .map(|p| FePartition {
            label: p.label.clone(),
            groups: p.groups().to_vec(),
            params: p.n_params(),
        })
        .collect();

    let mut result = FitResult {
        names: kept.iter().map(|&j| regressor_names[j].clone()).collect(),
        coefficients,
        vcov: Matrix::zeros(rank, rank),
        vcov_spec: spec.vcov.clone(),
        dropped,
        residuals,
        fitted,
        weights,
        design,
        bread: qr.inverse_gram(),
        n,
        rank,
        absorbed_params: absorbed,
        dof: n - rank - absorbed,
        r2,
        r2_within,
        iterations: stats.iterations,
        fe,
        sample,
        rows,
        notes,
    };
    let (vcov, note) = inference::vcov(&result, &spec.vcov)?;
    result.vcov = vcov;
    if let Some(n) = note {
        result.notes.push(n);
    }
    Ok(result)
}

fn interaction_columns(panel: &RegionPanel, inter: &Interaction) -> Result<Vec<Vec<f64>>> {
    let d = panel.column(&inter.dummy)?;
    if let Some(v) = d.iter().find(|v| v.is_finite() && **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidInput(format!(
            "dummy {} takes value {v}, expected 0 or 1",
            inter.dummy
        )));
    }
    inter
        .variables
        .iter()
        .map(|v| {
            let x = panel.column(v)?;
            Ok(d.iter().zip(x).map(|(a, b)| a * b).collect())
        })
        .collect()
}

/// Adds `dummy × v` for every `v` in `variables` (by default the level and
/// square of temperature) and fits. Group-specific marginal effects follow
/// from the base and interacted coefficients.
pub fn fit_heterogeneous<S: Scalar>(
    panel: &RegionPanel,
    spec: &RegressionSpec,
    dummy: &str,
    variables: Option<&[&str]>,
) -> Result<FitResult<S>> {
    let vars: Vec<String> = match variables {
        Some(v) => v.iter().map(|s| s.to_string()).collect(),
        None => vec!["temp".into(), "sq_temp".into()],
    };
    let mut spec = spec.clone();
    spec.interaction = Some(Interaction { dummy: dummy.into(), variables: vars });
    fit(panel, &spec)
}

/// Omitted bins of a binned regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinReference {
    pub temperature: usize,
    pub precipitation: usize,
}

impl Default for BinReference {
    /// 12–15 °C and 0.8–1.0 m.
    fn default() -> Self {
        Self { temperature: 5, precipitation: 4 }
    }
}

/// Regression on temperature (and, when present, precipitation) bin
/// indicators plus `spec.regressors` as controls. Coefficients are effects
/// relative to the reference bins; bins with no observation in the sample
/// are dropped.
pub fn fit_binned<S: Scalar>(
    panel: &RegionPanel,
    spec: &RegressionSpec,
    reference: BinReference,
) -> Result<FitResult<S>> {
    let mut regressors = Vec::new();
    let mut empty = Vec::new();
    let mut add_bins = |prefix: &str, n: usize, reference: usize| -> Result<()> {
        if reference >= n {
            return Err(Error::InvalidInput(format!("reference bin {reference} out of range")));
        }
        for b in (0..n).filter(|&b| b != reference) {
            let name = format!("{prefix}{b}");
            let col = panel.column(&name)?;
            if col.iter().any(|&v| v == 1.0) {
                regressors.push(name);
            } else {
                empty.push(name);
            }
        }
        Ok(())
    };
    add_bins("bin_t_", N_TEMP_BINS, reference.temperature)?;
    if panel.has_column("bin_p_0") {
        add_bins("bin_p_", N_PRECIP_BINS, reference.precipitation)?;
    }
    if !empty.is_empty() {
        log::warn!("empty bins dropped: {}", empty.join(", "));
    }
    regressors.extend(spec.regressors.iter().cloned());
    let mut binned = spec.clone();
    binned.regressors = regressors;
    let mut result = fit(panel, &binned)?;
    result.dropped.extend(empty.iter().cloned());
    if !empty.is_empty() {
        result.notes.push(format!("empty bins dropped: {}", empty.join(", ")));
    }
    Ok(result)
}
