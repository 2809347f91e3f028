use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(stage: &str, dir: &Path, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join(format!("{stage}.json"));
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_climecon"))
        .arg(stage)
        .arg("--config")
        .arg(&path)
        .args(extra)
        .env_remove("CLIMECON_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().clone();
    r.records()
        .map(|rec| h.iter().zip(rec.unwrap().iter()).map(|(a, b)| (a.to_string(), b.to_string())).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn growth_spec(vcov: Value) -> Value {
    json!({
        "response": "growth",
        "regressors": ["temp", "sq_temp", "precip"],
        "fixed_effects": [{"kind": "factor", "factor": "region"}, {"kind": "factor", "factor": "year"}],
        "vcov": vcov
    })
}

/// Dense dummy-variable OLS with HC1 errors on the fixture.
fn dense_oracle() -> Vec<(f64, f64)> {
    let rows = read_csv(&fixture("panel200.csv"));
    let regions: Vec<String> = {
        let mut v: Vec<String> = rows.iter().map(|r| r["region_id"].clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let years: Vec<String> = {
        let mut v: Vec<String> = rows.iter().map(|r| r["year"].clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let k = 3 + regions.len() + years.len() - 1;
    let n = rows.len();
    let mut z = DMatrix::<f64>::zeros(n, k);
    let mut y = DVector::<f64>::zeros(n);
    for (i, r) in rows.iter().enumerate() {
        let t = num(r, "temp");
        z[(i, 0)] = t;
        z[(i, 1)] = num(r, "sq_temp");
        z[(i, 2)] = num(r, "precip");
        z[(i, 3 + regions.iter().position(|g| *g == r["region_id"]).unwrap())] = 1.0;
        let yi = years.iter().position(|g| *g == r["year"]).unwrap();
        if yi > 0 {
            z[(i, 2 + regions.len() + yi)] = 1.0;
        }
        y[i] = num(r, "growth");
    }
    let ztz = z.transpose() * &z;
    let inv = ztz.clone().try_inverse().unwrap();
    let mut beta = &inv * (z.transpose() * &y);
    for _ in 0..3 {
        beta += &inv * (z.transpose() * (&y - &z * &beta));
    }
    let e = &y - &z * &beta;
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let zi = z.row(i).transpose() * e[i];
        meat += &zi * zi.transpose();
    }
    let v = &inv * meat * &inv * (n as f64 / (n - k) as f64);
    (0..3).map(|j| (beta[j], v[(j, j)].sqrt())).collect()
}

#[test]
fn estimate_matches_the_golden_file() {
    let golden = read_csv(&fixture("estimate_golden.csv"));
    for (g, (b, se)) in golden.iter().zip(dense_oracle()) {
        assert!((num(g, "estimate") - b).abs() <= 1e-9 * b.abs().max(1e-3), "{g:?} {b}");
        assert!((num(g, "std_error") - se).abs() <= 1e-8 * se, "{g:?} {se}");
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "inputs": {"panel": fixture("panel200.csv")},
        "output_dir": "out",
        "options": {"spec": growth_spec(json!({"kind": "robust"}))}
    });
    ok(&run("estimate", dir.path(), &cfg, &[]));
    let got = read_csv(&dir.path().join("out/coefficients.csv"));
    assert_eq!(got.len(), golden.len());
    for (a, b) in got.iter().zip(&golden) {
        assert_eq!(a["name"], b["name"]);
        for key in ["estimate", "std_error", "t_stat"] {
            let (x, y) = (num(a, key), num(b, key));
            assert!((x - y).abs() <= 1e-8 * y.abs(), "{key}: {x} vs {y}");
        }
    }
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stage"], "estimate");
    assert_eq!(manifest["inputs"]["panel"]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"]["coefficients.csv"].is_string());
}

#[test]
fn invalid_configs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = json!({"inputs": {"panel": "nope.csv"}, "output_dir": "out",
                         "options": {"spec": growth_spec(json!({"kind": "robust"}))}});
    let out = run("estimate", dir.path(), &missing, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("inputs.panel"));

    let unseeded = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "out",
                          "options": {"spec": growth_spec(json!({"kind": "robust"})), "replications": 5}});
    let out = run("bootstrap", dir.path(), &unseeded, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let typo = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "out",
                      "options": {"spec": growth_spec(json!({"kind": "robust"})), "precison": "f32"}});
    let out = run("estimate", dir.path(), &typo, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("precison"));

    let bad_vcov = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "out",
                          "options": {"spec": growth_spec(json!({"kind": "sideways"}))}});
    let out = run("estimate", dir.path(), &bad_vcov, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("options.spec.vcov"), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn runtime_failures_exit_with_1_and_leave_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = growth_spec(json!({"kind": "robust"}));
    spec["regressors"] = json!(["temp", "no_such_column"]);
    let cfg = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "out",
                     "options": {"spec": spec}});
    let out = run("estimate", dir.path(), &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_column"));
    assert!(!dir.path().join("out").exists());
}

fn outputs_without_timing(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().to_string();
        let mut bytes = std::fs::read(e.path()).unwrap();
        if name == "manifest.json" {
            let mut m: Value = serde_json::from_slice(&bytes).unwrap();
            let o = m.as_object_mut().unwrap();
            o.remove("started_at");
            o.remove("wall_time_seconds");
            o.remove("threads");
            o["config"].as_object_mut().unwrap().remove("output_dir");
            o["config"].as_object_mut().unwrap().remove("threads");
            bytes = serde_json::to_vec(&m).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = |o: &str| {
        json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": o, "seed": 11,
               "options": {"spec": growth_spec(json!({"kind": "cluster", "factor": "country"})),
                           "replications": 30}})
    };
    ok(&run("bootstrap", dir.path(), &cfg("a"), &["--threads", "1"]));
    ok(&run("bootstrap", dir.path(), &cfg("b"), &["--threads", "3"]));
    let a = outputs_without_timing(&dir.path().join("a"));
    let b = outputs_without_timing(&dir.path().join("b"));
    assert!(a.contains_key("bootstrap_draws.csv") && a.contains_key("bootstrap_run.json"));
    assert_eq!(a, b);
}

#[test]
fn environment_overrides_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"inputs": {"panel": "missing.csv"}, "output_dir": "ignored",
                     "options": {"spec": growth_spec(json!({"kind": "classical"}))}});
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let target = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_climecon"))
        .args(["estimate", "--config"])
        .arg(&path)
        .env("CLIMECON_INPUT_PANEL", fixture("panel200.csv"))
        .env("CLIMECON_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    ok(&out);
    assert!(target.join("coefficients.csv").is_file());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn panel_margins_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let build = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "built",
                       "options": {"weights": ["region", "population"], "bins": true,
                                   "rich_poor": {"block_years": 5},
                                   "long_difference": {"years": 5}}});
    ok(&run("build-panel", dir.path(), &build, &[]));
    let panel = read_csv(&dir.path().join("built/panel.csv"));
    assert_eq!(panel.len(), 200);
    for col in ["d_ln_gdppc", "sq_temp", "d_temp_x_lag_temp", "w_region", "w_pop", "bin_t_0", "poor"] {
        assert!(panel[0].contains_key(col), "{col}");
    }
    let ld = read_csv(&dir.path().join("built/ld_panel.csv"));
    assert_eq!(ld.len(), 20);

    let margins = json!({"inputs": {"panel": dir.path().join("built/panel.csv")}, "output_dir": "m",
                         "options": {"spec": growth_spec(json!({"kind": "cluster", "factor": "country"})),
                                     "margin": {"kind": "growth", "terms": [
                                         {"name": "temp", "scale": 1.0, "power": 0},
                                         {"name": "sq_temp", "scale": 2.0, "power": 1}]},
                                     "grid": {"from": 0.0, "to": 30.0, "step": 1.0},
                                     "optimum": {"linear": "temp", "quadratic": "sq_temp"}}});
    ok(&run("margins", dir.path(), &margins, &[]));
    let curve = read_csv(&dir.path().join("m/margins.csv"));
    assert_eq!(curve.len(), 31);
    let opt: Value = serde_json::from_slice(&std::fs::read(dir.path().join("m/optimum.json")).unwrap()).unwrap();
    let level = opt["level"].as_f64().unwrap();
    assert!((level - 0.008721421631797642 / (2.0 * 0.0003078900222696276)).abs() < 1e-6);

    let plot = json!({"inputs": {"margins": dir.path().join("m/margins.csv"),
                                 "panel": dir.path().join("built/panel.csv")},
                      "output_dir": "p", "options": {"histogram": {"variable": "temp", "bins": 10}}});
    ok(&run("plot-data", dir.path(), &plot, &[]));
    let pm = read_csv(&dir.path().join("p/plot_margins.csv"));
    assert!(pm.windows(2).all(|w| num(&w[1], "level") > num(&w[0], "level")));
    let h = read_csv(&dir.path().join("p/plot_histogram.csv"));
    assert_eq!(h.iter().map(|r| num(r, "count")).sum::<f64>(), 200.0);

    std::fs::write(dir.path().join("empty.csv"), "level,effect,se,lo,hi\n").unwrap();
    let empty = json!({"inputs": {"margins": dir.path().join("empty.csv")}, "output_dir": "e"});
    let out = run("plot-data", dir.path(), &empty, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty grid"));
    let missing = json!({"inputs": {"margins": dir.path().join("m/none.csv")}, "output_dir": "e"});
    let out = run("plot-data", dir.path(), &missing, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `margins` first"));
}

#[test]
fn diagnostics_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "d",
                     "options": {"unit_root": [{"variable": "temp"}, {"variable": "temp", "trend": true}],
                                 "serial": {"spec": growth_spec(json!({"kind": "robust"})), "orders": [1, 2]}}});
    ok(&run("diagnose", dir.path(), &cfg, &[]));
    let v: Value = serde_json::from_slice(&std::fs::read(dir.path().join("d/diagnostics.json")).unwrap()).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| (0.0..=1.0).contains(&r["p_value"].as_f64().unwrap())));
}

#[test]
fn bootstrap_projection_and_bands() {
    let dir = tempfile::tempdir().unwrap();
    let boot = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "b", "seed": 4,
                      "options": {"spec": growth_spec(json!({"kind": "cluster", "factor": "country"})),
                                  "replications": 20}});
    ok(&run("bootstrap", dir.path(), &boot, &[]));

    let mut scen = String::from("scenario_id,region_id,year,T\n");
    let mut socio = String::from("region_id,year,population,gdppc\n");
    for r in 0..20 {
        for (s, slope) in [("low", 0.02), ("high", 0.05)] {
            for y in 2020..=2030 {
                scen.push_str(&format!("{s},R{r:02},{y},{}\n", 10.0 + r as f64 + slope * (y - 2019) as f64));
            }
        }
        socio.push_str(&format!("R{r:02},2020,{},1000\nR{r:02},2030,{},1200\n", 1 + r, 2 + r));
    }
    let groups: String = std::iter::once("region_id,group\n".to_string())
        .chain((0..20).map(|r| format!("R{r:02},{}\n", if r < 10 { "north" } else { "south" })))
        .collect();
    for (name, text) in [("scen.csv", &scen), ("socio.csv", &socio), ("groups.csv", &groups)] {
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    let proj = json!({"inputs": {"draws": dir.path().join("b/bootstrap_run.json"),
                                 "scenarios": dir.path().join("scen.csv"),
                                 "history": fixture("panel200.csv"),
                                 "socioeconomics": dir.path().join("socio.csv"),
                                 "groups": dir.path().join("groups.csv")},
                      "output_dir": "proj", "seed": 9,
                      "options": {"linear": "temp", "quadratic": "sq_temp",
                                  "baseline": {"from": 2005, "to": 2009},
                                  "from": 2020, "to": 2030, "samples": 50}});
    ok(&run("project", dir.path(), &proj, &[]));
    let groups_out = read_csv(&dir.path().join("proj/projection_groups.csv"));
    assert_eq!(groups_out.len(), 3 * 11);

    let plot = json!({"inputs": {"projection_runs": dir.path().join("proj/projection_runs.csv")},
                      "output_dir": "pp"});
    ok(&run("plot-data", dir.path(), &plot, &[]));
    let bands = read_csv(&dir.path().join("pp/plot_projection.csv"));
    let global: Vec<_> = groups_out.iter().filter(|r| r["group"] == "global").collect();
    assert_eq!(bands.len(), global.len());
    for (b, g) in bands.iter().zip(global) {
        assert_eq!(b["year"], g["year"]);
        for key in ["p10", "p90", "mean"] {
            assert!((num(b, key) - num(g, key)).abs() <= 1e-12 * num(g, key).abs().max(1e-12), "{key}");
        }
    }
}

#[test]
fn adaptation_stage() {
    let dir = tempfile::tempdir().unwrap();
    let build = json!({"inputs": {"panel": fixture("panel200.csv")}, "output_dir": "built",
                       "options": {"long_difference": {"years": 5}}});
    ok(&run("build-panel", dir.path(), &build, &[]));
    let margin = json!({"kind": "growth", "terms": [
        {"name": "temp", "scale": 1.0, "power": 0}, {"name": "sq_temp", "scale": 2.0, "power": 1}]});
    let ld_spec = json!({"response": "d_ln_gdppc", "regressors": ["d_temp", "d_temp_x_lag_temp"],
                         "vcov": {"kind": "robust"}});
    let ld_margin = json!({"kind": "growth", "terms": [
        {"name": "d_temp", "scale": 1.0, "power": 0}, {"name": "d_temp_x_lag_temp", "scale": 1.0, "power": 1}]});
    let cfg = json!({"inputs": {"fe_panel": dir.path().join("built/panel.csv"),
                                "ld_panel": dir.path().join("built/ld_panel.csv")},
                     "output_dir": "a", "seed": 2,
                     "options": {"fe_spec": growth_spec(json!({"kind": "robust"})), "ld_spec": ld_spec,
                                 "fe_margin": margin, "ld_margin": ld_margin,
                                 "grid": [10.0, 20.0], "replications": 15}});
    ok(&run("adaptation", dir.path(), &cfg, &[]));
    let rows = read_csv(&dir.path().join("a/adaptation.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(num(r, "used") + num(r, "filtered"), 15.0);
    }
}

#[test]
fn aggregate_stage() {
    let dir = tempfile::tempdir().unwrap();
    let geo = r#"{"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"region_id":"A1","country_id":"A"},
         "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
        {"type":"Feature","properties":{"region_id":"B1","country_id":"B"},
         "geometry":{"type":"Polygon","coordinates":[[[1,0],[2,0],[2,1],[1,1],[1,0]]]}}]}"#;
    let mut t = String::from("cell_id,lon,lat,area_km2,year,month,value\n");
    let mut p = t.clone();
    let mut u = t.clone();
    let mut r = t.clone();
    for (id, lon, area) in [("c1", 0.25, 1.0), ("c2", 0.75, 3.0), ("c3", 1.5, 2.0)] {
        for m in 1..=12 {
            t.push_str(&format!("{id},{lon},0.5,{area},2000,{m},{}\n", lon * 10.0 + m as f64));
            p.push_str(&format!("{id},{lon},0.5,{area},2000,{m},0.1\n"));
        }
        u.push_str(&format!("{id},{lon},0.5,{area},2000,,{}\n", 100.0 * area));
        r.push_str(&format!("{id},{lon},0.5,{area},2000,,{}\n", 300.0 * area));
    }
    for (name, text) in [("r.geojson", geo.to_string()), ("t.csv", t), ("p.csv", p), ("u.csv", u), ("rr.csv", r)] {
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    let cfg = json!({"inputs": {"regions": "r.geojson", "temperature": "t.csv", "precipitation": "p.csv",
                                "urban": "u.csv", "rural": "rr.csv"},
                     "output_dir": "agg"});
    ok(&run("aggregate", dir.path(), &cfg, &[]));
    let rows = read_csv(&dir.path().join("agg/region_years.csv"));
    assert_eq!(rows.len(), 2);
    // A1: area-weighted lon·10 = (2.5 + 3·7.5)/4 = 6.25, plus mean month 6.5.
    assert!((num(&rows[0], "temp") - 12.75).abs() < 1e-12);
    assert!((num(&rows[0], "precip") - 1.2).abs() < 1e-12);
    assert_eq!(num(&rows[0], "pop"), 1600.0);
    assert_eq!(num(&rows[0], "urb"), 0.25);
}
