//! Fixed-effect absorption by alternating weighted projections.
//!
//! Every fixed-effect term is turned into a [`Projector`]: a partition of the
//! rows into groups plus, within each group, a weighted-orthonormal basis of
//! the functions the term spans (the constant for a categorical factor;
//! `1, t, .., t^d` for a factor-specific polynomial trend). Projecting a
//! column onto one term is then two linear passes over the rows. Terms are
//! swept in turn until a full sweep changes no value by more than the
//! tolerance; an Irons–Tuck extrapolation step every few sweeps speeds up
//! the slow cases (unbalanced panels with several terms).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A fixed-effect term of a regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeTerm {
    /// One intercept per level of a factor.
    Factor { factor: String },
    /// Per-level polynomial trend in the time index (including the level
    /// intercept), of degree 1 or 2.
    Trend { factor: String, degree: u8 },
    /// One intercept per combination of levels, e.g. continent × year.
    Interact { factors: Vec<String> },
}

impl FeTerm {
    pub fn factor(name: &str) -> Self {
        FeTerm::Factor { factor: name.to_string() }
    }

    pub fn trend(name: &str, degree: u8) -> Self {
        FeTerm::Trend { factor: name.to_string(), degree }
    }

    pub fn interact(a: &str, b: &str) -> Self {
        FeTerm::Interact { factors: vec![a.to_string(), b.to_string()] }
    }

    /// Name of the grouping factor; interactions use `a#b`.
    pub fn grouping(&self) -> String {
        match self {
            FeTerm::Factor { factor } | FeTerm::Trend { factor, .. } => factor.clone(),
            FeTerm::Interact { factors } => factors.join("#"),
        }
    }

    pub fn degree(&self) -> u8 {
        match self {
            FeTerm::Trend { degree, .. } => *degree,
            _ => 0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            FeTerm::Factor { factor } => factor.clone(),
            FeTerm::Trend { factor, degree: 1 } => format!("{factor} linear trend"),
            FeTerm::Trend { factor, degree } => format!("{factor} trend (degree {degree})"),
            FeTerm::Interact { factors } => factors.join(" x "),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeTerm::Trend { degree, .. } if !(1..=2).contains(degree) => Err(Error::InvalidInput(
                format!("trend degree must be 1 or 2, got {degree}"),
            )),
            FeTerm::Interact { factors } if factors.len() < 2 => Err(Error::InvalidInput(
                "interaction needs at least two factors".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Projection onto the span of one fixed-effect term.
#[derive(Debug, Clone)]
pub struct Projector<S> {
    pub label: String,
    groups: Vec<u32>,
    n_groups: usize,
    /// Row-major `rows x width` basis values, zero where a basis function
    /// was dropped for its group.
    basis: Vec<S>,
    width: usize,
    /// Retained basis functions per group.
    rank_per_group: Vec<u8>,
}

impl<S: Scalar> Projector<S> {
    /// Builds the projector for groups `groups` (dense codes), polynomial
    /// degree `degree` in `time`, under `weights`.
    pub fn new(label: &str, groups: &[u32], degree: u8, time: &[S], weights: &[S]) -> Self {
        let n = groups.len();
        let n_groups = groups.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
        let width = degree as usize + 1;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
        for (i, &g) in groups.iter().enumerate() {
            members[g as usize].push(i);
        }
        let mut basis = vec![S::zero(); n * width];
        let mut rank_per_group = vec![0u8; n_groups];
        let tol = S::lit(1e-9);

        for (g, rows) in members.iter().enumerate() {
            let wsum: S = rows.iter().map(|&i| weights[i]).sum();
            if wsum <= S::zero() {
                continue;
            }
            // Center and scale time within the group for conditioning.
            let tmean = rows.iter().map(|&i| weights[i] * time[i]).sum::<S>() / wsum;
            let spread = rows
                .iter()
                .map(|&i| (time[i] - tmean).abs())
                .fold(S::zero(), S::max)
                .max(S::one());
            let mut kept: Vec<Vec<S>> = Vec::with_capacity(width);
            for power in 0..width {
                let mut v: Vec<S> = rows
                    .iter()
                    .map(|&i| ((time[i] - tmean) / spread).powi(power as i32))
                    .collect();
                let raw_norm = weighted_norm(&v, rows, weights);
                // Two rounds of Gram-Schmidt keep the basis orthonormal.
                for _ in 0..2 {
                    for q in &kept {
                        let proj: S =
                            rows.iter().enumerate().map(|(k, &i)| weights[i] * q[k] * v[k]).sum();
                        for k in 0..v.len() {
                            v[k] = v[k] - proj * q[k];
                        }
                    }
                }
                let norm = weighted_norm(&v, rows, weights);
                if norm <= tol * raw_norm.max(S::one()) || norm == S::zero() {
                    continue;
                }
                for x in v.iter_mut() {
                    *x = *x / norm;
                }
                kept.push(v);
            }
            rank_per_group[g] = kept.len() as u8;
            for (a, q) in kept.iter().enumerate() {
                for (k, &i) in rows.iter().enumerate() {
                    basis[i * width + a] = q[k];
                }
            }
        }
        Self { label: label.to_string(), groups: groups.to_vec(), n_groups, basis, width, rank_per_group }
    }

    pub fn groups(&self) -> &[u32] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// Number of free parameters this term spans on its own.
    pub fn n_params(&self) -> usize {
        self.rank_per_group.iter().map(|&r| r as usize).sum()
    }

    pub fn is_categorical(&self) -> bool {
        self.width == 1
    }

    /// Subtracts the projection of `x` in place; returns the largest change.
    fn apply(&self, x: &mut [S], weights: &[S], coef: &mut Vec<S>) -> S {
        let w = self.width;
        coef.clear();
        coef.resize(self.n_groups * w, S::zero());
        for i in 0..x.len() {
            let wx = weights[i] * x[i];
            let g = self.groups[i] as usize * w;
            let b = &self.basis[i * w..(i + 1) * w];
            for a in 0..w {
                coef[g + a] = coef[g + a] + b[a] * wx;
            }
        }
        let mut max_change = S::zero();
        for i in 0..x.len() {
            let g = self.groups[i] as usize * w;
            let b = &self.basis[i * w..(i + 1) * w];
            let mut fitted = S::zero();
            for a in 0..w {
                fitted = fitted + b[a] * coef[g + a];
            }
            x[i] = x[i] - fitted;
            max_change = max_change.max(fitted.abs());
        }
        max_change
    }
}

/// Total order on f64 as u64 keys.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn weighted_norm<S: Scalar>(v: &[S], rows: &[usize], weights: &[S]) -> S {
    rows.iter().enumerate().map(|(k, &i)| weights[i] * v[k] * v[k]).sum::<S>().sqrt()
}

/// True when every group of `fine` lies inside a single group of `coarse`.
pub(crate) fn is_nested(fine: &[u32], coarse: &[u32]) -> bool {
    let n_fine = fine.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
    let mut owner: Vec<Option<u32>> = vec![None; n_fine];
    for (&f, &c) in fine.iter().zip(coarse) {
        match owner[f as usize] {
            None => owner[f as usize] = Some(c),
            Some(o) if o != c => return false,
            _ => {}
        }
    }
    true
}

/// Number of connected components of the bipartite graph linking the
/// groups of `a` and `b` through shared rows.
pub(crate) fn connected_components(a: &[u32], b: &[u32]) -> usize {
    let na = a.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
    let nb = b.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
    let mut parent: Vec<usize> = (0..na + nb).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut used = vec![false; na + nb];
    for (&ga, &gb) in a.iter().zip(b) {
        let (x, y) = (ga as usize, na + gb as usize);
        used[x] = true;
        used[y] = true;
        let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
        if rx != ry {
            parent[rx] = ry;
        }
    }
    (0..na + nb).filter(|&v| used[v] && find(&mut parent, v) == v).count()
}

/// Settings for [`Absorber`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Spread columns over the rayon pool.
    pub parallel: bool,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 10_000, parallel: true }
    }
}

/// Outcome of absorbing a set of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbStats {
    /// Largest number of sweeps any column needed.
    pub iterations: usize,
    /// Parameters spanned by the fixed effects after removing redundancies
    /// among group intercepts (exact for two intercept terms, conservative
    /// beyond).
    pub absorbed_params: usize,
    pub note: String,
}

/// Residualizes columns against the span of several fixed-effect terms.
#[derive(Debug, Clone)]
pub struct Absorber<S> {
    projectors: Vec<Projector<S>>,
    weights: Vec<S>,
    options: AbsorbOptions,
    absorbed_params: usize,
    note: String,
}

/// Grouping and degree of one term, already resolved to dense codes.
#[derive(Debug, Clone)]
pub struct TermCodes {
    pub label: String,
    pub groups: Vec<u32>,
    pub degree: u8,
}

impl<S: Scalar> Absorber<S> {
    pub fn new(
        terms: &[TermCodes],
        time: &[S],
        weights: &[S],
        options: AbsorbOptions,
    ) -> Result<Self> {
        if weights.iter().any(|&w| w < S::zero() || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        if !weights.is_empty() && weights.iter().all(|&w| w == S::zero()) {
            return Err(Error::InvalidInput("all weights are zero".into()));
        }
        // Drop terms whose span sits inside another term's span: a
        // categorical term is redundant when another term's groups refine it.
        let mut keep = vec![true; terms.len()];
        for i in 0..terms.len() {
            if terms[i].degree != 0 {
                continue;
            }
            for j in 0..terms.len() {
                if i == j || !keep[j] {
                    continue;
                }
                // Of two identical partitions the earlier one is kept.
                let same_span_later = terms[j].degree == 0
                    && j > i
                    && is_nested(&terms[i].groups, &terms[j].groups);
                if is_nested(&terms[j].groups, &terms[i].groups) && !same_span_later {
                    keep[i] = false;
                    break;
                }
            }
        }
        let mut notes = Vec::new();
        for (t, k) in terms.iter().zip(&keep) {
            if !k {
                notes.push(format!("{} spanned by another term", t.label));
            }
        }
        let projectors: Vec<Projector<S>> = terms
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(t, _)| Projector::new(&t.label, &t.groups, t.degree, time, weights))
            .collect();

        let mut absorbed: usize = projectors.iter().map(Projector::n_params).sum();
        if projectors.len() >= 2 {
            let first = projectors[0].groups();
            for p in &projectors[1..] {
                absorbed = absorbed.saturating_sub(connected_components(first, p.groups()));
            }
            // A factor whose levels each sit at one time point spans every
            // function of time, so within each connected component it also
            // spans the trend powers t..t^d.
            let time_codes = {
                let keys: Vec<u64> = time.iter().map(|t| ordered_bits(t.as_f64())).collect();
                crate::panel::dense_codes(&keys)
            };
            for p in projectors.iter().filter(|p| !p.is_categorical()) {
                let slope_overlap = projectors
                    .iter()
                    .filter(|c| c.is_categorical() && is_nested(c.groups(), &time_codes))
                    .map(|c| (p.width - 1) * connected_components(p.groups(), c.groups()))
                    .max()
                    .unwrap_or(0);
                absorbed = absorbed.saturating_sub(slope_overlap);
            }
            if projectors.len() > 2 {
                notes.push("intercept redundancy beyond the first pair of terms counted against the first term only".into());
            }
        }
        Ok(Self {
            projectors,
            weights: weights.to_vec(),
            options,
            absorbed_params: absorbed,
            note: notes.join("; "),
        })
    }

    pub fn projectors(&self) -> &[Projector<S>] {
        &self.projectors
    }

    pub fn absorbed_params(&self) -> usize {
        self.absorbed_params
    }

    pub fn note(&self) -> &str {
        &self.note
    }

    /// Residualizes one column in place and returns the sweeps used.
    ///
    /// A column has converged when the last sweep moved no value by more
    /// than the tolerance and the distance still to go, extrapolated from
    /// the observed contraction rate, is below it too. The tolerance is
    /// floored at a small multiple of the rounding error of the column.
    pub fn absorb_column(&self, x: &mut [S]) -> Result<usize> {
        let scale = x.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        let tol = S::lit(self.options.tolerance).max(S::lit(64.0) * S::epsilon() * scale);
        let mut coef = Vec::new();
        match self.projectors.len() {
            0 => return Ok(0),
            1 => {
                self.projectors[0].apply(x, &self.weights, &mut coef);
                return Ok(1);
            }
            _ => {}
        }
        let sweep = |x: &mut [S], coef: &mut Vec<S>| -> S {
            self.projectors
                .iter()
                .fold(S::zero(), |m, p| m.max(p.apply(x, &self.weights, coef)))
        };
        let converged = |delta: S, prev: S| -> bool {
            if !(delta < tol) {
                return false;
            }
            if !(prev > S::zero() && prev.is_finite()) {
                return delta == S::zero();
            }
            let rate = (delta / prev).min(S::lit(0.999));
            delta * rate / (S::one() - rate) < tol
        };
        let mut last = S::infinity();
        let mut prev = S::infinity();
        let mut iter = 0;
        let mut f1 = vec![S::zero(); x.len()];
        let mut f2 = vec![S::zero(); x.len()];
        while iter < self.options.max_iterations {
            let delta = sweep(x, &mut coef);
            iter += 1;
            last = delta;
            if converged(delta, prev) {
                return Ok(iter);
            }
            prev = delta;
            // Irons-Tuck extrapolation every third sweep.
            if iter % 3 == 0 && iter + 2 <= self.options.max_iterations {
                f1.copy_from_slice(x);
                let d1 = sweep(&mut f1, &mut coef);
                f2.copy_from_slice(&f1);
                let d2 = sweep(&mut f2, &mut coef);
                iter += 2;
                last = d2;
                if converged(d2, d1) {
                    x.copy_from_slice(&f2);
                    return Ok(iter);
                }
                let mut num = S::zero();
                let mut den = S::zero();
                for i in 0..x.len() {
                    let dd = f2[i] - f1[i];
                    let d2x = dd - (f1[i] - x[i]);
                    num = num + dd * d2x;
                    den = den + d2x * d2x;
                }
                if den > S::zero() && num.is_finite() {
                    let step = num / den;
                    for i in 0..x.len() {
                        x[i] = f2[i] - step * (f2[i] - f1[i]);
                    }
                } else {
                    x.copy_from_slice(&f2);
                }
                // The contraction rate is unknown right after a jump.
                prev = S::infinity();
            }
        }
        Err(Error::NotConverged { iterations: iter, last_delta: last.as_f64() })
    }

    /// Residualizes every column; returns statistics.
    pub fn absorb(&self, columns: &mut [Vec<S>]) -> Result<AbsorbStats> {
        let iters: Vec<Result<usize>> = if self.options.parallel {
            columns.par_iter_mut().map(|c| self.absorb_column(c)).collect()
        } else {
            columns.iter_mut().map(|c| self.absorb_column(c)).collect()
        };
        let mut iterations = 0;
        for r in iters {
            iterations = iterations.max(r?);
        }
        Ok(AbsorbStats { iterations, absorbed_params: self.absorbed_params, note: self.note.clone() })
    }
}

/// One-call absorption of `columns` against `terms`.
pub fn absorb<S: Scalar>(
    columns: &mut [Vec<S>],
    terms: &[TermCodes],
    time: &[S],
    weights: &[S],
    options: AbsorbOptions,
) -> Result<AbsorbStats> {
    Absorber::new(terms, time, weights, options)?.absorb(columns)
}
