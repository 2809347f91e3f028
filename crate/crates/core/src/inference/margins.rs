use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Which response a marginal effect refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// Persistent effect on the growth rate: ∂g/∂T from the level terms.
    Growth,
    /// Transient effect on output from a one-unit change: from the
    /// difference terms.
    Level,
}

/// One coefficient in a marginal-effect formula, contributing
/// `scale · x^power · β[name]` at evaluation point x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTerm {
    pub name: String,
    pub scale: f64,
    pub power: i32,
}

/// A marginal effect as a linear combination of coefficients whose
/// weights are monomials of the evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    pub kind: EffectKind,
    pub terms: Vec<EffectTerm>,
}

fn term(name: &str, scale: f64, power: i32) -> EffectTerm {
    EffectTerm { name: name.into(), scale, power }
}

impl MarginSpec {
    /// ME(x) = β_linear + 2 β_quadratic x.
    pub fn growth(linear: &str, quadratic: &str) -> Self {
        Self { kind: EffectKind::Growth, terms: vec![term(linear, 1.0, 0), term(quadratic, 2.0, 1)] }
    }

    /// ME(x) = β_diff + β_interaction x.
    pub fn level(diff: &str, interaction: &str) -> Self {
        Self { kind: EffectKind::Level, terms: vec![term(diff, 1.0, 0), term(interaction, 1.0, 1)] }
    }

    /// Growth effect for dummy value `d` of a model with `dummy × linear`
    /// and `dummy × quadratic` interactions named `{dummy}_x_{var}`.
    pub fn growth_for_group(linear: &str, quadratic: &str, dummy: &str, d: f64) -> Self {
        let mut spec = Self::growth(linear, quadratic);
        if d != 0.0 {
            spec.terms.push(term(&format!("{dummy}_x_{linear}"), d, 0));
            spec.terms.push(term(&format!("{dummy}_x_{quadratic}"), 2.0 * d, 1));
        }
        spec
    }

    pub fn formula(&self) -> String {
        self.terms
            .iter()
            .map(|t| match t.power {
                0 if t.scale == 1.0 => t.name.clone(),
                0 => format!("{}·{}", t.scale, t.name),
                1 if t.scale == 1.0 => format!("{}·x", t.name),
                1 => format!("{}·{}·x", t.scale, t.name),
                p => format!("{}·{}·x^{p}", t.scale, t.name),
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Marginal effects with delta-method standard errors over a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalCurve<S> {
    pub grid: Vec<S>,
    pub effect: Vec<S>,
    pub se: Vec<S>,
    pub lo: Vec<S>,
    pub hi: Vec<S>,
    pub confidence: f64,
    pub kind: EffectKind,
    pub formula: String,
}

impl<S: Scalar> MarginalCurve<S> {
    /// `level,effect,se,lo,hi` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["level", "effect", "se", "lo", "hi"])?;
        for i in 0..self.grid.len() {
            w.write_record(
                [self.grid[i], self.effect[i], self.se[i], self.lo[i], self.hi[i]]
                    .iter()
                    .map(|v| format!("{:?}", v.as_f64())),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two-sided normal critical value for `confidence`.
pub fn critical_value(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(format!("confidence level {confidence} outside (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

/// Evaluates `spec` on `grid` (strictly increasing) with coefficients and
/// covariance from `fit`.
pub fn marginal_effect<S: Scalar>(
    fit: &FitResult<S>,
    spec: &MarginSpec,
    grid: &[S],
    confidence: f64,
) -> Result<MarginalCurve<S>> {
    let idx: Vec<usize> = spec
        .terms
        .iter()
        .map(|t| fit.index_of(&t.name).ok_or_else(|| Error::MissingCoefficient(t.name.clone())))
        .collect::<Result<_>>()?;
    let beta: Vec<S> = idx.iter().map(|&i| fit.coefficients[i]).collect();
    let mut cov = Matrix::zeros(idx.len(), idx.len());
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            cov[(a, b)] = fit.vcov[(i, j)];
        }
    }
    evaluate_curve(spec, &beta, &cov, grid, confidence)
}

/// [`marginal_effect`] from raw coefficients (in `spec.terms` order) and
/// their covariance.
pub fn evaluate_curve<S: Scalar>(
    spec: &MarginSpec,
    beta: &[S],
    cov: &Matrix<S>,
    grid: &[S],
    confidence: f64,
) -> Result<MarginalCurve<S>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty evaluation grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("evaluation grid must be strictly increasing".into()));
    }
    let z = S::lit(critical_value(confidence)?);
    let mut out = MarginalCurve {
        grid: grid.to_vec(),
        effect: Vec::with_capacity(grid.len()),
        se: Vec::with_capacity(grid.len()),
        lo: Vec::with_capacity(grid.len()),
        hi: Vec::with_capacity(grid.len()),
        confidence,
        kind: spec.kind,
        formula: spec.formula(),
    };
    for &x in grid {
        let g: Vec<S> = spec.terms.iter().map(|t| S::lit(t.scale) * x.powi(t.power)).collect();
        let effect = g.iter().zip(beta).map(|(&a, &b)| a * b).sum::<S>();
        let se = cov.quad_form(&g).max(S::zero()).sqrt();
        out.effect.push(effect);
        out.se.push(se);
        out.lo.push(effect - z * se);
        out.hi.push(effect + z * se);
    }
    Ok(out)
}

/// Quadratic response β_linear·x + β_quadratic·x² with the covariance of
/// (β_linear, β_quadratic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticResponse<S> {
    pub linear: S,
    pub quadratic: S,
    pub cov: [[S; 2]; 2],
}

/// Vertex of a quadratic response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optimum<S> {
    pub level: S,
    pub se: S,
    /// True when the quadratic coefficient is negative (a maximum).
    pub concave: bool,
}

impl<S: Scalar> QuadraticResponse<S> {
    /// Point estimates without sampling uncertainty.
    pub fn new(linear: S, quadratic: S) -> Self {
        Self { linear, quadratic, cov: [[S::zero(); 2]; 2] }
    }

    pub fn from_fit(fit: &FitResult<S>, linear: &str, quadratic: &str) -> Result<Self> {
        Ok(Self {
            linear: fit.coef(linear)?,
            quadratic: fit.coef(quadratic)?,
            cov: [
                [fit.cov(linear, linear)?, fit.cov(linear, quadratic)?],
                [fit.cov(quadratic, linear)?, fit.cov(quadratic, quadratic)?],
            ],
        })
    }

    pub fn value(&self, x: S) -> S {
        self.linear * x + self.quadratic * x * x
    }

    /// β_linear + 2 β_quadratic x.
    pub fn marginal(&self, x: S) -> S {
        self.linear + S::lit(2.0) * self.quadratic * x
    }

    pub fn marginal_se(&self, x: S) -> S {
        let g = [S::one(), S::lit(2.0) * x];
        self.quad(&g)
    }

    fn quad(&self, g: &[S; 2]) -> S {
        let c = &self.cov;
        let v = g[0] * (c[0][0] * g[0] + c[0][1] * g[1]) + g[1] * (c[1][0] * g[0] + c[1][1] * g[1]);
        v.max(S::zero()).sqrt()
    }

    /// x* = −β_linear / (2 β_quadratic) with delta-method standard error,
    /// gradient (−1/(2β_q), β_l/(2β_q²)).
    pub fn optimum(&self) -> Result<Optimum<S>> {
        let two = S::lit(2.0);
        let scale = self.linear.abs().max(S::one());
        if !(self.quadratic.abs() > S::lit(1e-12) * scale) {
            return Err(Error::Degenerate(format!(
                "quadratic coefficient {} too close to zero for an interior optimum",
                self.quadratic
            )));
        }
        let level = -self.linear / (two * self.quadratic);
        let g = [
            -S::one() / (two * self.quadratic),
            self.linear / (two * self.quadratic * self.quadratic),
        ];
        Ok(Optimum { level, se: self.quad(&g), concave: self.quadratic < S::zero() })
    }
}

/// Optimal level of the variable whose linear and squared terms are
/// `linear` and `quadratic` in `fit`.
pub fn optimal_level<S: Scalar>(
    fit: &FitResult<S>,
    linear: &str,
    quadratic: &str,
) -> Result<Optimum<S>> {
    QuadraticResponse::from_fit(fit, linear, quadratic)?.optimum()
}
