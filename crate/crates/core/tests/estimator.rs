mod common;

use climecon::estimator::{
    absorb, fit, fit_binned, fit_heterogeneous, AbsorbOptions, BinReference, FeTerm,
    RegressionSpec, TermCodes, VcovSpec, WeightSpec,
};
use climecon::panel::{bin_indicators, PanelRow, RegionPanel};
use climecon::FitResult;
use common::{dense_wls, dummy_columns, normal, random_panel, rng};
use rand::Rng;

fn fe_sets() -> Vec<Vec<FeTerm>> {
    vec![
        vec![FeTerm::factor("region")],
        vec![FeTerm::factor("region"), FeTerm::factor("year")],
        vec![FeTerm::factor("region"), FeTerm::factor("year"), FeTerm::trend("region", 1)],
        vec![FeTerm::factor("region"), FeTerm::factor("year"), FeTerm::trend("region", 2)],
        vec![FeTerm::factor("region"), FeTerm::interact("continent", "year")],
        vec![
            FeTerm::factor("region"),
            FeTerm::interact("continent", "year"),
            FeTerm::trend("region", 1),
        ],
    ]
}

fn oracle(panel: &RegionPanel, f: &FitResult, terms: &[FeTerm]) -> common::DenseFit {
    let s = &f.sample;
    let y = s.column("y").unwrap();
    let x: Vec<Vec<f64>> =
        f.names.iter().map(|n| s.column(n).unwrap().to_vec()).collect();
    let _ = panel;
    dense_wls(y, &x, &dummy_columns(s, terms), &f.weights)
}

#[test]
fn absorbed_fit_matches_dense_dummy_regression() {
    let mut r = rng(11);
    for case in 0..30 {
        let p = random_panel(&mut r, 4 + case % 6, 5 + case % 4, 0.85);
        for terms in fe_sets() {
            let spec = RegressionSpec::new("y", &["x1", "x2", "x3"])
                .with_fe(terms.clone())
                .with_weights(WeightSpec::Column("w".into()))
                .with_vcov(VcovSpec::robust());
            let f: FitResult = match fit(&p, &spec) {
                Ok(f) => f,
                Err(climecon::Error::InsufficientData(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            let d = oracle(&p, &f, &terms);
            for (a, b) in f.coefficients.iter().zip(&d.coefficients) {
                assert!((a - b).abs() < 1e-8, "case {case} {terms:?}: {a} vs {b}");
            }
            for (a, b) in f.fitted.iter().zip(&d.fitted) {
                assert!((a - b).abs() < 1e-9, "case {case} {terms:?}: fitted {a} vs {b}");
            }
        }
    }
}

fn balanced(regions: usize, years: usize, seed: u64) -> RegionPanel {
    let mut r = rng(seed);
    random_panel(&mut r, regions, years, 1.1)
}

#[test]
fn dof_matches_dense_rank_on_balanced_panels() {
    let p = balanced(6, 7, 3);
    for terms in fe_sets() {
        let spec = RegressionSpec::new("y", &["x1"]).with_fe(terms.clone());
        let f: FitResult = fit(&p, &spec).unwrap();
        let d = dense_wls(
            p.column("y").unwrap(),
            &[p.column("x1").unwrap().to_vec()],
            &dummy_columns(&p, &terms),
            &vec![1.0; p.len()],
        );
        assert_eq!(f.dof, p.len() - d.rank, "{terms:?}");
    }
}

#[test]
fn noiseless_recovery() {
    let mut r = rng(5);
    let mut rows = Vec::new();
    for reg in 0..8 {
        let fe = normal(&mut r) * 3.0;
        for t in 0..6 {
            let x = normal(&mut r);
            rows.push(PanelRow {
                region: format!("r{reg}"),
                country: format!("c{}", reg / 2),
                continent: "k".into(),
                time: t,
                values: [("x".to_string(), x), ("y".to_string(), 2.0 * x + fe)].into(),
            });
        }
    }
    let p = RegionPanel::from_rows(rows, "year").unwrap();
    let f: FitResult =
        fit(&p, &RegressionSpec::new("y", &["x"]).with_fe(vec![FeTerm::factor("region")])).unwrap();
    assert!((f.coefficients[0] - 2.0).abs() < 1e-12);
    assert!(f.r2 > 1.0 - 1e-12);
    assert_eq!(f.iterations, 1);
    assert_eq!(f.dof, 48 - 1 - 8);
}

#[test]
fn weight_scale_invariance() {
    let p = balanced(8, 6, 9);
    let spec = RegressionSpec::new("y", &["x1", "x2"])
        .with_fe(vec![FeTerm::factor("region"), FeTerm::factor("year")])
        .with_weights(WeightSpec::Column("w".into()));
    let mut scaled = p.clone();
    let w: Vec<f64> = p.column("w").unwrap().iter().map(|v| v * 37.5).collect();
    scaled.set_column("w", w).unwrap();
    let a: FitResult = fit(&p, &spec).unwrap();
    let b: FitResult = fit(&scaled, &spec).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x - y).abs() < 1e-10);
    }
    assert!(a.vcov.max_abs_diff(&b.vcov) < 1e-10);
}

#[test]
fn frisch_waugh_and_idempotence() {
    let p = balanced(5, 6, 21);
    let terms = [FeTerm::factor("region"), FeTerm::factor("year"), FeTerm::trend("region", 1)];
    let codes: Vec<TermCodes> = terms
        .iter()
        .map(|t| TermCodes {
            label: t.label(),
            groups: p.factor_codes(&t.grouping()).unwrap(),
            degree: t.degree(),
        })
        .collect();
    let time: Vec<f64> = p.time().iter().map(|&t| t as f64).collect();
    let w = vec![1.0; p.len()];
    let opts = AbsorbOptions { tolerance: 1e-13, ..AbsorbOptions::default() };
    let mut cols = vec![p.column("x1").unwrap().to_vec(), p.column("y").unwrap().to_vec()];
    absorb(&mut cols, &codes, &time, &w, opts).unwrap();
    let once = cols.clone();
    absorb(&mut cols, &codes, &time, &w, opts).unwrap();
    for (a, b) in once.iter().flatten().zip(cols.iter().flatten()) {
        assert!((a - b).abs() < 1e-10);
    }
    // Residualized simple regression equals the joint fit.
    let (x, y) = (&once[0], &once[1]);
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|a| a * a).sum::<f64>();
    let f: FitResult =
        fit(&p, &RegressionSpec::new("y", &["x1"]).with_fe(terms.to_vec())).unwrap();
    assert!((slope - f.coefficients[0]).abs() < 1e-9);
}

#[test]
fn absorbed_columns_match_dense_projection() {
    // 12 regions x 10 years = 120 rows.
    let p = balanced(12, 10, 33);
    let terms = [FeTerm::factor("region"), FeTerm::factor("year"), FeTerm::trend("region", 1)];
    let codes: Vec<TermCodes> = terms
        .iter()
        .map(|t| TermCodes {
            label: t.label(),
            groups: p.factor_codes(&t.grouping()).unwrap(),
            degree: t.degree(),
        })
        .collect();
    let time: Vec<f64> = p.time().iter().map(|&t| t as f64).collect();
    let w = p.column("w").unwrap().to_vec();
    let mut cols = vec![p.column("x1").unwrap().to_vec()];
    absorb(&mut cols, &codes, &time, &w, AbsorbOptions::default()).unwrap();
    let dummies = dummy_columns(&p, &terms);
    let d = dense_wls(p.column("x1").unwrap(), &[], &dummies, &w);
    for i in 0..p.len() {
        let resid = p.column("x1").unwrap()[i] - d.fitted[i];
        assert!((cols[0][i] - resid).abs() < 1e-8);
    }
}

#[test]
fn collinear_regressor_is_dropped_by_name() {
    let mut p = balanced(5, 5, 2);
    let x1 = p.column("x1").unwrap().to_vec();
    let x2 = p.column("x2").unwrap().to_vec();
    p.set_column("x4", x1.iter().zip(&x2).map(|(a, b)| a - 2.0 * b).collect()).unwrap();
    let f: FitResult = fit(
        &p,
        &RegressionSpec::new("y", &["x1", "x2", "x4"]).with_fe(vec![FeTerm::factor("region")]),
    )
    .unwrap();
    assert_eq!(f.rank, 2);
    assert_eq!(f.dropped.len(), 1);
    assert_eq!(f.names.len(), 2);
}

#[test]
fn degenerate_designs_are_errors() {
    let p = balanced(4, 4, 8);
    let mut q = p.clone();
    q.set_column("c", vec![3.0; p.len()]).unwrap();
    let spec = RegressionSpec::new("y", &["c"]).with_fe(vec![FeTerm::factor("region")]);
    assert!(matches!(fit::<f64>(&q, &spec), Err(climecon::Error::Degenerate(_))));
    let small = p.filter_rows(|i| i < 3);
    let spec = RegressionSpec::new("y", &["x1", "x2", "x3"]).with_fe(vec![FeTerm::factor("region")]);
    assert!(fit::<f64>(&small, &spec).is_err());
}

#[test]
fn zero_dummy_interaction_equals_plain_fit() {
    let mut p = balanced(6, 6, 4);
    let x = p.column("x1").unwrap().to_vec();
    p.set_column("temp", x.clone()).unwrap();
    p.set_column("sq_temp", x.iter().map(|v| v * v).collect()).unwrap();
    p.set_column("poor", vec![0.0; p.len()]).unwrap();
    let spec = RegressionSpec::new("y", &["temp", "sq_temp"])
        .with_fe(vec![FeTerm::factor("region"), FeTerm::factor("year")]);
    let a: FitResult = fit(&p, &spec).unwrap();
    let b: FitResult = fit_heterogeneous(&p, &spec, "poor", None).unwrap();
    assert_eq!(b.dropped, vec!["poor_x_temp".to_string(), "poor_x_sq_temp".to_string()]);
    for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn two_group_response_is_recovered() {
    let mut r = rng(77);
    let mut rows = Vec::new();
    for reg in 0..60 {
        let poor = if reg % 2 == 0 { 1.0 } else { 0.0 };
        let fe = normal(&mut r);
        for t in 0..10 {
            let temp = 5.0 + 20.0 * r.random::<f64>();
            let (d, g) = if poor == 1.0 { (0.03, -0.001) } else { (0.01, -0.0004) };
            let y = fe + d * temp + g * temp * temp + 0.01 * normal(&mut r);
            rows.push(PanelRow {
                region: format!("r{reg}"),
                country: format!("c{}", reg / 3),
                continent: "k".into(),
                time: t,
                values: [
                    ("temp".to_string(), temp),
                    ("sq_temp".to_string(), temp * temp),
                    ("poor".to_string(), poor),
                    ("y".to_string(), y),
                ]
                .into(),
            });
        }
    }
    let p = RegionPanel::from_rows(rows, "year").unwrap();
    let spec = RegressionSpec::new("y", &["temp", "sq_temp"])
        .with_fe(vec![FeTerm::factor("region"), FeTerm::factor("year")]);
    let f: FitResult = fit_heterogeneous(&p, &spec, "poor", None).unwrap();
    let truth = [("temp", 0.01), ("sq_temp", -0.0004), ("poor_x_temp", 0.02), ("poor_x_sq_temp", -0.0006)];
    for (name, v) in truth {
        let z = (f.coef(name).unwrap() - v) / f.se(name).unwrap();
        assert!(z.abs() < 3.0, "{name}: z = {z}");
    }
}

fn binned_panel(seed: u64, effects: &[f64; 11]) -> RegionPanel {
    let mut r = rng(seed);
    let mut rows = Vec::new();
    for reg in 0..30 {
        let fe = normal(&mut r);
        for t in 0..12 {
            let temp = -4.0 + 36.0 * r.random::<f64>();
            let bin = climecon::panel::temp_bin(temp).unwrap();
            rows.push(PanelRow {
                region: format!("r{reg}"),
                country: format!("c{}", reg / 3),
                continent: "k".into(),
                time: t,
                values: [("temp".to_string(), temp), ("y".to_string(), fe + effects[bin])].into(),
            });
        }
    }
    bin_indicators(&RegionPanel::from_rows(rows, "year").unwrap()).unwrap()
}

#[test]
fn binned_step_function_is_recovered() {
    let steps = [0.3, 0.2, 0.1, 0.05, 0.02, 0.0, -0.01, -0.03, -0.06, -0.1, -0.2];
    let p = binned_panel(3, &steps);
    let spec = RegressionSpec::new("y", &[]).with_fe(vec![FeTerm::factor("region")]);
    let f: FitResult = fit_binned(&p, &spec, BinReference::default()).unwrap();
    for (b, &s) in steps.iter().enumerate().filter(|(b, _)| *b != 5) {
        assert!((f.coef(&format!("bin_t_{b}")).unwrap() - s).abs() < 1e-10);
    }
    let flat = binned_panel(3, &[0.0; 11]);
    let f0: FitResult = fit_binned(&flat, &spec, BinReference::default()).unwrap();
    assert!(f0.coefficients.iter().all(|c| c.abs() < 1e-10));
}

#[test]
fn switching_reference_bin_shifts_coefficients() {
    let mut r = rng(4);
    let steps: [f64; 11] = std::array::from_fn(|_| normal(&mut r) * 0.1);
    let mut p = binned_panel(8, &steps);
    let noise: Vec<f64> = (0..p.len()).map(|_| 0.05 * normal(&mut r)).collect();
    let y: Vec<f64> = p.column("y").unwrap().iter().zip(&noise).map(|(a, b)| a + b).collect();
    p.set_column("y", y).unwrap();
    let spec = RegressionSpec::new("y", &[]).with_fe(vec![FeTerm::factor("region")]);
    let a: FitResult = fit_binned(&p, &spec, BinReference { temperature: 5, precipitation: 0 }).unwrap();
    let b: FitResult = fit_binned(&p, &spec, BinReference { temperature: 2, precipitation: 0 }).unwrap();
    let shift = b.coef("bin_t_5").unwrap();
    for k in [0, 1, 3, 4, 6, 7, 8, 9, 10] {
        let name = format!("bin_t_{k}");
        let diff = b.coef(&name).unwrap() - a.coef(&name).unwrap();
        assert!((diff - shift).abs() < 1e-9, "{name}");
    }
    for (u, v) in a.fitted.iter().zip(&b.fitted) {
        assert!((u - v).abs() < 1e-9);
    }
}

#[test]
fn region_weights_are_recomputed_on_the_sample() {
    let mut p = balanced(8, 5, 13);
    let mut y = p.column("y").unwrap().to_vec();
    y[0] = f64::NAN;
    p.set_column("y", y).unwrap();
    let spec = RegressionSpec::new("y", &["x1"])
        .with_fe(vec![FeTerm::factor("region")])
        .with_weights(WeightSpec::Region);
    let f: FitResult = fit(&p, &spec).unwrap();
    let country = f.sample.factor_codes("country").unwrap();
    let mut sums = std::collections::HashMap::new();
    for i in 0..f.n {
        *sums.entry((country[i], f.sample.time()[i])).or_insert(0.0) += f.weights[i];
    }
    assert!(sums.values().all(|&s| (s - 1.0f64).abs() < 1e-15));
    assert_eq!(f.n, p.len() - 1);
}

#[test]
fn single_precision_fit_agrees() {
    let p = balanced(6, 6, 19);
    let spec = RegressionSpec::new("y", &["x1", "x2"])
        .with_fe(vec![FeTerm::factor("region"), FeTerm::factor("year")]);
    let a: FitResult = fit(&p, &spec).unwrap();
    let b: climecon::FitResult32 = fit(&p, &spec).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x - *y as f64).abs() < 1e-3);
    }
}
