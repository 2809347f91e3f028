mod common;

use std::collections::BTreeMap;

use climecon::estimator::{fit, FeTerm, HacKind, RegressionSpec, VcovSpec};
use climecon::inference::{
    annualize_decadal, evaluate_curve, marginal_effect, optimal_level, vcov_classical,
    vcov_cluster, vcov_cluster_codes, vcov_hac, vcov_robust, vcov_twoway, Convention, MarginSpec,
    QuadraticResponse,
};
use climecon::panel::{PanelRow, RegionPanel};
use climecon::{FitResult, Matrix};
use common::{normal, random_panel, rng};
use nalgebra::DMatrix;
use rand::Rng;

fn row(region: &str, country: &str, time: i32, values: &[(&str, f64)]) -> PanelRow {
    PanelRow {
        region: region.into(),
        country: country.into(),
        continent: "K".into(),
        time,
        values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
    }
}

fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.max_abs_diff(b) <= tol
}

#[test]
fn two_cluster_sandwich_matches_hand_algebra() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    let ys = [1.0, 3.0, 2.0, 5.0];
    let rows = vec![
        row("A", "CA", 2000, &[("x", xs[0]), ("y", ys[0])]),
        row("A", "CA", 2001, &[("x", xs[1]), ("y", ys[1])]),
        row("B", "CB", 2000, &[("x", xs[2]), ("y", ys[2])]),
        row("B", "CB", 2001, &[("x", xs[3]), ("y", ys[3])]),
    ];
    let p = RegionPanel::from_rows(rows, "year").unwrap();
    let f: FitResult = fit(&p, &RegressionSpec::new("y", &["x"])).unwrap();

    // Hand algebra: b = Σxy/Σx², meat = Σ_g (Σ_{i∈g} x_i e_i)², V = meat/(Σx²)².
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let b = sxy / sxx;
    let s: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x * (y - b * x)).collect();
    let meat = (s[0] + s[1]).powi(2) + (s[2] + s[3]).powi(2);
    let raw = meat / (sxx * sxx);
    let cr1 = 2.0 / 1.0 * 3.0 / 3.0;
    assert!((b - 1.1).abs() < 1e-12);
    assert!((f.coefficients[0] - b).abs() < 1e-12);
    let v = vcov_cluster(&f, "country", false).unwrap();
    assert!((v[(0, 0)] - raw).abs() < 1e-12, "{} vs {raw}", v[(0, 0)]);
    let v = vcov_cluster(&f, "country", true).unwrap();
    assert!((v[(0, 0)] - cr1 * raw).abs() < 1e-12);
    assert!((v[(0, 0)] - 0.01).abs() < 1e-12);
    assert!(vcov_cluster(&f, "continent", true).is_err());
}

fn clustered_fixture(seed: u64) -> (RegionPanel, FitResult) {
    let mut r = rng(seed);
    let p = random_panel(&mut r, 12, 8, 0.9);
    let spec = RegressionSpec::new("y", &["x1", "x2"]).with_fe(vec![FeTerm::factor("region")]);
    let f = fit(&p, &spec).unwrap();
    (p, f)
}

#[test]
fn permuting_rows_within_clusters_leaves_vcov_unchanged() {
    let (_, f) = clustered_fixture(5);
    let base = vcov_cluster(&f, "country", true).unwrap();
    let codes = f.sample.factor_codes("country").unwrap();
    let mut r = rng(6);
    let mut perm: Vec<usize> = (0..f.n).collect();
    // Shuffle indices inside each cluster only.
    let groups = codes.iter().copied().max().unwrap() + 1;
    for g in 0..groups {
        let members: Vec<usize> = (0..f.n).filter(|&i| codes[i] == g).collect();
        let mut shuffled = members.clone();
        for i in (1..shuffled.len()).rev() {
            let j = r.random_range(0..=i);
            shuffled.swap(i, j);
        }
        for (a, b) in members.iter().zip(&shuffled) {
            perm[*a] = *b;
        }
    }
    let mut g = f.clone();
    let permute = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
    g.residuals = permute(&f.residuals);
    g.weights = permute(&f.weights);
    let cols: Vec<Vec<f64>> = (0..f.design.ncols()).map(|j| permute(f.design.col(j))).collect();
    g.design = Matrix::from_columns(&cols);
    let codes_p: Vec<u32> = perm.iter().map(|&i| codes[i]).collect();
    let v = vcov_cluster_codes(&g, &codes_p, true).unwrap();
    assert!(close(&v, &base, 1e-14), "diff {}", v.max_abs_diff(&base));
}

#[test]
fn singleton_clusters_approach_classical() {
    let mut r = rng(9);
    let mut ratios = Vec::new();
    for n in [200usize, 20_000] {
        let rows: Vec<PanelRow> = (0..n)
            .map(|i| {
                let x = normal(&mut r);
                let y = 0.5 * x + normal(&mut r);
                row(&format!("R{i}"), &format!("C{i}"), 2000, &[("x", x), ("y", y)])
            })
            .collect();
        let p = RegionPanel::from_rows(rows, "year").unwrap();
        let f: FitResult = fit(&p, &RegressionSpec::new("y", &["x"])).unwrap();
        let c = vcov_cluster(&f, "country", true).unwrap();
        let v = vcov_classical(&f);
        ratios.push(c[(0, 0)] / v[(0, 0)]);
    }
    assert!((ratios[1] - 1.0).abs() < 0.05, "{ratios:?}");
    assert!((ratios[1] - 1.0).abs() < (ratios[0] - 1.0).abs() + 0.05, "{ratios:?}");
}

/// Independent three-term two-way oracle using nalgebra, no absorbed terms,
/// with negative eigenvalues floored at zero.
fn twoway_oracle(f: &FitResult, a: &[u32], b: &[u32], small: bool) -> DMatrix<f64> {
    let n = f.n;
    let k = f.design.ncols();
    let x = DMatrix::from_fn(n, k, |i, j| f.design.col(j)[i]);
    let w = DMatrix::from_fn(n, n, |i, j| if i == j { f.weights[i] } else { 0.0 });
    let bread = (x.transpose() * &w * &x).try_inverse().unwrap();
    let one_way = |codes: &[(u32, u32)]| -> DMatrix<f64> {
        let mut levels: Vec<(u32, u32)> = codes.to_vec();
        levels.sort();
        levels.dedup();
        let mut meat = DMatrix::zeros(k, k);
        for lv in &levels {
            let mut s = DMatrix::<f64>::zeros(k, 1);
            for i in 0..n {
                if codes[i] == *lv {
                    for j in 0..k {
                        s[(j, 0)] += f.weights[i] * f.residuals[i] * x[(i, j)];
                    }
                }
            }
            meat += &s * s.transpose();
        }
        let g = levels.len() as f64;
        let c = if small {
            g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64)
        } else {
            1.0
        };
        &bread * meat * &bread * c
    };
    let ca: Vec<(u32, u32)> = a.iter().map(|&v| (v, 0)).collect();
    let cb: Vec<(u32, u32)> = b.iter().map(|&v| (v, 0)).collect();
    let cab: Vec<(u32, u32)> = a.iter().zip(b).map(|(&u, &v)| (u, v)).collect();
    let v = one_way(&ca) + one_way(&cb) - one_way(&cab);
    let v = (&v + v.transpose()) * 0.5;
    let eig = v.symmetric_eigen();
    let floored = eig.eigenvalues.map(|e| e.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose()
}

#[test]
fn twoway_matches_three_term_oracle_and_reduces_on_identical_factors() {
    let mut floored_any = 0;
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let p = random_panel(&mut r, 10, 7, 0.85);
        let f: FitResult = fit(
            &p,
            &RegressionSpec::new("y", &["x1", "x2", "x3"])
                .with_weights(climecon::estimator::WeightSpec::Column("w".into())),
        )
        .unwrap();
        for small in [false, true] {
            let a = f.sample.factor_codes("country").unwrap();
            let b = f.sample.factor_codes("year").unwrap();
            let (v, floored) = vcov_twoway(&f, "country", "year", small).unwrap();
            let o = twoway_oracle(&f, &a, &b, small);
            floored_any += floored;
            for i in 0..v.nrows() {
                for j in 0..v.ncols() {
                    assert!((v[(i, j)] - o[(i, j)]).abs() < 1e-12, "seed {seed}");
                }
            }
            let (same, _) = vcov_twoway(&f, "country", "country", small).unwrap();
            let one = vcov_cluster(&f, "country", small).unwrap();
            assert!(close(&same, &one, 1e-14));
        }
    }
    assert!(floored_any > 0);
}

#[test]
fn twoway_output_is_symmetric_psd() {
    let (_, f) = clustered_fixture(21);
    let (v, _) = vcov_twoway(&f, "country", "year", true).unwrap();
    assert!(v.is_symmetric(1e-15));
    let (eig, _) = climecon::linalg::symmetric_eigen(&v);
    assert!(eig.iter().all(|&e| e >= -1e-15));
}

#[test]
fn hac_at_zero_bandwidth_reduces_by_variant() {
    let (_, f) = clustered_fixture(31);
    for small in [false, true] {
        let nw = vcov_hac(&f, 0, HacKind::PanelNeweyWest, small).unwrap();
        assert!(close(&nw, &vcov_robust(&f, small), 1e-15));
        let dk = vcov_hac(&f, 0, HacKind::DriscollKraay, small).unwrap();
        assert!(close(&dk, &vcov_cluster(&f, "year", small).unwrap(), 1e-15));
    }
    let t = f.sample.time_levels().len();
    assert!(vcov_hac(&f, t, HacKind::DriscollKraay, true).is_err());
    assert!(vcov_hac(&f, t - 1, HacKind::DriscollKraay, true).is_ok());
}

/// Panel whose errors follow an AR(1) process with coefficient `rho` in a
/// shock common to all regions. The regressor is close to constant, so the
/// period score sums inherit the serial correlation.
fn ar_panel(rho: f64, regions: usize, years: usize, seed: u64) -> FitResult {
    let mut r = rng(seed);
    let mut rows = Vec::new();
    let mut ce = 0.0;
    let scale = (1.0 - rho * rho).sqrt();
    for t in 0..years {
        ce = rho * ce + scale * normal(&mut r);
        for g in 0..regions {
            let x = 1.0 + 0.1 * normal(&mut r);
            let e = ce + 0.3 * normal(&mut r);
            let name = format!("R{g}");
            rows.push(row(&name, &name, 1900 + t as i32, &[("x", x), ("y", 0.2 * x + e)]));
        }
    }
    let p = RegionPanel::from_rows(rows, "year").unwrap();
    fit(&p, &RegressionSpec::new("y", &["x"])).unwrap()
}

#[test]
fn hac_bandwidth_ordering_under_serial_correlation() {
    let mut white = Vec::new();
    let mut ar = Vec::new();
    for seed in 0..20 {
        let f = ar_panel(0.0, 5, 200, seed);
        let l0 = vcov_hac(&f, 0, HacKind::DriscollKraay, false).unwrap().trace();
        let l2 = vcov_hac(&f, 2, HacKind::DriscollKraay, false).unwrap().trace();
        white.push(l2 / l0);
        let f = ar_panel(0.5, 5, 200, 1000 + seed);
        let l0 = vcov_hac(&f, 0, HacKind::DriscollKraay, false).unwrap().trace();
        let l10 = vcov_hac(&f, 10, HacKind::DriscollKraay, false).unwrap().trace();
        ar.push(l10 / l0);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&white) - 1.0).abs() < 0.15, "white {white:?}");
    assert!(ar.iter().all(|&q| q > 1.0), "ar {ar:?}");
    assert!(mean(&ar) > 2.0, "ar {ar:?}");
}

#[test]
fn reported_growth_and_level_effects() {
    let cov = Matrix::zeros(2, 2);
    let growth = evaluate_curve(
        &MarginSpec::growth("temp", "sq_temp"),
        &[0.0226, -0.000774],
        &cov,
        &[25.0],
        0.9,
    )
    .unwrap();
    assert!((growth.effect[0] - -0.0161).abs() < 5e-5, "{}", growth.effect[0]);
    let ld = QuadraticResponse::<f64>::new(0.534, -0.0149);
    assert!((ld.marginal(29.0) - -0.330).abs() < 5e-4, "{}", ld.marginal(29.0));
    let flat = QuadraticResponse::<f64>::new(0.0175, 0.0);
    for t in [-5.0, 10.0, 30.0] {
        assert_eq!(flat.marginal(t), 0.0175);
    }
}

#[test]
fn reported_optimal_temperatures() {
    for (d, g, want) in [
        (0.0226, -0.000774, 14.60),
        (0.0175, -0.000554, 15.79),
        (0.534, -0.0149, 17.92),
    ] {
        let opt = QuadraticResponse::<f64>::new(d, g).optimum().unwrap();
        assert!((opt.level - want).abs() < 5e-3, "{} vs {want}", opt.level);
        assert!(opt.concave);
    }
}

#[test]
fn reported_annualized_effects() {
    let up: f64 = annualize_decadal(0.384, Convention::Magnitude).unwrap();
    let down: f64 = annualize_decadal(-0.331, Convention::Magnitude).unwrap();
    assert!((up - 0.0331).abs() < 5e-4, "{up}");
    assert!((down - -0.0290).abs() < 5e-4, "{down}");
    assert_eq!(annualize_decadal(0.0, Convention::Magnitude).unwrap(), 0.0);
}

#[test]
fn curve_from_fit_uses_fit_covariance() {
    let mut r = rng(44);
    let p = random_panel(&mut r, 8, 10, 1.1);
    let mut p2 = p.clone();
    let t: Vec<f64> = p.column("x1").unwrap().iter().map(|v| v * 5.0 + 12.0).collect();
    p2.set_column("temp", t.iter().copied().collect()).unwrap();
    p2.set_column("sq_temp", t.iter().map(|v| v * v).collect()).unwrap();
    let spec = RegressionSpec::new("y", &["temp", "sq_temp"])
        .with_fe(vec![FeTerm::factor("region"), FeTerm::factor("year")])
        .with_vcov(VcovSpec::cluster("country"));
    let f: FitResult = fit(&p2, &spec).unwrap();
    let grid = [0.0, 10.0, 20.0];
    let c = marginal_effect(&f, &MarginSpec::growth("temp", "sq_temp"), &grid, 0.9).unwrap();
    let q = QuadraticResponse::from_fit(&f, "temp", "sq_temp").unwrap();
    for (i, &x) in grid.iter().enumerate() {
        assert!((c.effect[i] - q.marginal(x)).abs() < 1e-15);
        assert!((c.se[i] - q.marginal_se(x)).abs() < 1e-12);
        assert!(c.lo[i] <= c.effect[i] && c.effect[i] <= c.hi[i]);
    }
    let opt = optimal_level(&f, "temp", "sq_temp").unwrap();
    assert!(q.marginal(opt.level).abs() < 1e-12);
    let missing = marginal_effect(&f, &MarginSpec::growth("temp", "cube"), &grid, 0.9);
    assert!(matches!(missing, Err(climecon::Error::MissingCoefficient(ref n)) if n == "cube"));
}
