//! One function per subcommand. Each reads its inputs, computes, and
//! returns the rendered outputs; nothing touches the output directory here.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use climecon::diagnostics::{harris_tzavalis, lm_serial, TestReport, UnitRootOptions};
use climecon::estimator::{fit_with, FitResult, RegressionSpec};
use climecon::inference::{marginal_effect, optimal_level, Convention, MarginSpec};
use climecon::ingest::{
    aggregate_climate, aggregate_population, assign_cells, country_map, empty_regions, read_cells_csv,
    read_regions_geojson, region_years, write_region_years_csv, Statistic,
};
use climecon::panel::{
    bin_indicators, classify_rich_poor, compute_weights, growth_rates, long_difference, period_average,
    read_panel_csv, weather_terms, write_panel_csv, BlockLayout, LagForm, RegionPanel, RichPoorCoding,
    WeightScheme,
};
use climecon::project::{
    baseline_climate, read_groups_csv, read_scenarios_csv, run_projection, DamageFunction, DamageSource,
    ProjectionOptions, Socioeconomics, WeightKind,
};
use climecon::resample::{
    adaptation_ratio, block_bootstrap_with, country_universe, paired_bootstrap, quantile, sorted_finite,
    BootstrapOptions, BootstrapRun,
};

use crate::config::{parse_field, RunConfig, Stage};
use crate::output::Outputs;
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_panel(path: &Path) -> Result<RegionPanel, CliError> {
    read_panel_csv(open(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Parses the `options` block of `config` for a stage.
pub fn stage_options<T: for<'de> Deserialize<'de>>(config: &RunConfig) -> Result<T, CliError> {
    let value = if config.options.is_null() { serde_json::json!({}) } else { config.options.clone() };
    parse_field(&value, "options")
}

/// Checks the stage options without running anything.
pub fn validate_options(stage: Stage, config: &RunConfig) -> Result<(), CliError> {
    match stage {
        Stage::Aggregate => stage_options::<AggregateOptions>(config).map(drop),
        Stage::BuildPanel => stage_options::<BuildPanelOptions>(config).map(drop),
        Stage::Estimate => stage_options::<EstimateOptions>(config).map(drop),
        Stage::Margins => stage_options::<MarginsOptions>(config).and_then(|o| o.grid.values().map(drop)),
        Stage::Diagnose => stage_options::<DiagnoseOptions>(config).map(drop),
        Stage::Bootstrap => stage_options::<BootstrapStageOptions>(config).map(drop),
        Stage::Adaptation => {
            stage_options::<AdaptationOptions>(config).and_then(|o| o.grid.values().map(drop))
        }
        Stage::Project => stage_options::<ProjectOptions>(config).map(drop),
        Stage::PlotData => stage_options::<PlotDataOptions>(config).map(drop),
    }
}

pub fn run(stage: Stage, config: &RunConfig) -> Result<Outputs, CliError> {
    validate_options(stage, config)?;
    match stage {
        Stage::Aggregate => aggregate(config),
        Stage::BuildPanel => build_panel(config),
        Stage::Estimate => estimate(config),
        Stage::Margins => margins(config),
        Stage::Diagnose => diagnose(config),
        Stage::Bootstrap => bootstrap(config),
        Stage::Adaptation => adaptation(config),
        Stage::Project => project(config),
        Stage::PlotData => crate::plot::plot_data(config),
    }
}

/// An evaluation grid: an explicit list or an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { from, to, step } => {
                if !(*step > 0.0) || !(to >= from) {
                    return Err(CliError::Config("options.grid: need step > 0 and to >= from".into()));
                }
                let n = ((to - from) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|k| from + k as f64 * step).collect()
            }
        };
        if v.is_empty() {
            return Err(CliError::Config("options.grid: empty".into()));
        }
        if v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("options.grid: must be strictly increasing".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateOptions {}

#[derive(Debug, Serialize)]
struct AggregateReport {
    cells: usize,
    mapped_cells: usize,
    empty_regions: Vec<String>,
    incomplete_temperature: Vec<(String, i32)>,
    incomplete_precipitation: Vec<(String, i32)>,
    rows: usize,
}

fn aggregate(config: &RunConfig) -> Result<Outputs, CliError> {
    let shapes = read_regions_geojson(open(config.require("regions")?)?).map_err(runtime)?;
    let temps = read_cells_csv(open(config.require("temperature")?)?).map_err(runtime)?;
    let precs = read_cells_csv(open(config.require("precipitation")?)?).map_err(runtime)?;
    let assignment = assign_cells(&temps, &shapes).map_err(runtime)?;
    let precip_assignment = assign_cells(&precs, &shapes).map_err(runtime)?;
    let t = aggregate_climate(&temps, &assignment, Statistic::Mean);
    let p = aggregate_climate(&precs, &precip_assignment, Statistic::Sum);
    let population = match (config.input("urban"), config.input("rural")) {
        (Some(u), Some(r)) => {
            let urban = read_cells_csv(open(u)?).map_err(runtime)?;
            let rural = read_cells_csv(open(r)?).map_err(runtime)?;
            let pop_assignment = assign_cells(&urban, &shapes).map_err(runtime)?;
            Some(aggregate_population(&urban, &rural, &pop_assignment).map_err(runtime)?)
        }
        (None, None) => None,
        _ => return Err(CliError::Config("inputs: urban and rural must be given together".into())),
    };
    let rows = region_years(&t, &p, population.as_ref(), &country_map(&shapes)).map_err(runtime)?;
    let mut out = Outputs::default();
    out.add_with("region_years.csv", |w| write_region_years_csv(&rows, w))?;
    out.add_json(
        "aggregate_report.json",
        &AggregateReport {
            cells: temps.len(),
            mapped_cells: assignment.len(),
            empty_regions: empty_regions(&shapes, &assignment),
            incomplete_temperature: t.incomplete,
            incomplete_precipitation: p.incomplete,
            rows: rows.len(),
        },
    )?;
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RichPoorOptions {
    #[serde(default)]
    pub coding: RichPoorCoding,
    #[serde(default = "ten")]
    pub block_years: u32,
}

fn ten() -> u32 {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildPanelOptions {
    #[serde(default = "lagged")]
    pub lag_form: LagForm,
    #[serde(default = "region_weights")]
    pub weights: Vec<WeightScheme>,
    #[serde(default)]
    pub bins: bool,
    #[serde(default)]
    pub rich_poor: Option<RichPoorOptions>,
    /// Also emit a long-difference panel over these blocks.
    #[serde(default)]
    pub long_difference: Option<BlockLayout>,
}

fn lagged() -> LagForm {
    LagForm::Lagged
}

fn region_weights() -> Vec<WeightScheme> {
    vec![WeightScheme::Region]
}

/// Adds the columns of `extra` missing from `base`, matched on region and
/// year.
fn join_columns(base: &RegionPanel, extra: &RegionPanel) -> Result<RegionPanel, CliError> {
    let index: HashMap<(&str, i32), usize> =
        (0..extra.len()).map(|i| ((extra.region()[i].as_str(), extra.time()[i]), i)).collect();
    let mut out = base.clone();
    let names: Vec<String> = extra.column_names().filter(|n| !base.has_column(n)).map(String::from).collect();
    for name in names {
        let src = extra.column(&name).map_err(runtime)?;
        let col = (0..base.len())
            .map(|i| index.get(&(base.region()[i].as_str(), base.time()[i])).map_or(f64::NAN, |&j| src[j]))
            .collect();
        out.set_column(&name, col).map_err(runtime)?;
    }
    Ok(out)
}

fn add_weights(panel: RegionPanel, schemes: &[WeightScheme]) -> Result<RegionPanel, CliError> {
    schemes.iter().try_fold(panel, |p, &s| compute_weights(&p, s).map_err(runtime))
}

fn build_panel(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: BuildPanelOptions = stage_options(config)?;
    let mut base = read_panel(config.require("panel")?)?;
    if let Some(path) = config.input("climate") {
        base = join_columns(&base, &read_panel(path)?)?;
    }
    let mut panel = base.clone();
    if panel.has_column("gdppc") {
        panel = growth_rates(&panel).map_err(runtime)?;
    }
    panel = weather_terms(&panel, opts.lag_form).map_err(runtime)?;
    panel = add_weights(panel, &opts.weights)?;
    if opts.bins {
        panel = bin_indicators(&panel).map_err(runtime)?;
    }
    if let Some(rp) = &opts.rich_poor {
        panel = classify_rich_poor(&panel, BlockLayout::new(rp.block_years), rp.coding).map_err(runtime)?;
    }
    let mut out = Outputs::default();
    out.add_with("panel.csv", |w| write_panel_csv(&panel, w))?;
    if let Some(layout) = opts.long_difference {
        let periods = period_average(&base, layout).map_err(runtime)?;
        let mut ld = long_difference(&periods, opts.lag_form).map_err(runtime)?;
        ld = add_weights(ld, &opts.weights)?;
        out.add_with("ld_panel.csv", |w| write_panel_csv(&ld, w))?;
        out.add_json(
            "ld_blocks.json",
            &serde_json::json!({ "layout": layout, "blocks": periods.blocks, "dropped": periods.dropped }),
        )?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateOptions {
    pub spec: RegressionSpec,
    #[serde(default)]
    pub precision: Precision,
}

fn fit_spec(config: &RunConfig, panel: &RegionPanel, spec: &RegressionSpec) -> Result<FitResult<f64>, CliError> {
    fit_with::<f64>(panel, spec, config.absorb_options()).map_err(runtime)
}

fn estimate(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: EstimateOptions = stage_options(config)?;
    let panel = read_panel(config.require("panel")?)?;
    let mut out = Outputs::default();
    match opts.precision {
        Precision::F64 => {
            let f = fit_spec(config, &panel, &opts.spec)?;
            out.add_with("coefficients.csv", |w| f.write_coefficients_csv(w))?;
            out.add_json("fit.json", &f.summary())?;
        }
        Precision::F32 => {
            let f = fit_with::<f32>(&panel, &opts.spec, config.absorb_options()).map_err(runtime)?;
            out.add_with("coefficients.csv", |w| f.write_coefficients_csv(w))?;
            out.add_json("fit.json", &f.summary())?;
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimumRequest {
    pub linear: String,
    pub quadratic: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginsOptions {
    pub spec: RegressionSpec,
    pub margin: MarginSpec,
    pub grid: Grid,
    #[serde(default = "ninety")]
    pub confidence: f64,
    #[serde(default)]
    pub optimum: Option<OptimumRequest>,
}

fn ninety() -> f64 {
    0.9
}

fn margins(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: MarginsOptions = stage_options(config)?;
    let panel = read_panel(config.require("panel")?)?;
    let f = fit_spec(config, &panel, &opts.spec)?;
    let curve = marginal_effect(&f, &opts.margin, &opts.grid.values()?, opts.confidence).map_err(runtime)?;
    let mut out = Outputs::default();
    out.add_with("margins.csv", |w| curve.write_csv(w))?;
    if let Some(req) = &opts.optimum {
        let o = optimal_level(&f, &req.linear, &req.quadratic).map_err(runtime)?;
        out.add_json("optimum.json", &o)?;
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitRootRequest {
    pub variable: String,
    #[serde(default)]
    pub trend: bool,
    #[serde(default)]
    pub cross_demean: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerialRequest {
    pub spec: RegressionSpec,
    pub orders: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseOptions {
    #[serde(default)]
    pub unit_root: Vec<UnitRootRequest>,
    #[serde(default)]
    pub serial: Option<SerialRequest>,
}

fn diagnose(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: DiagnoseOptions = stage_options(config)?;
    if opts.unit_root.is_empty() && opts.serial.is_none() {
        return Err(CliError::Config("options: request unit_root and/or serial tests".into()));
    }
    let panel = read_panel(config.require("panel")?)?;
    let mut reports: Vec<TestReport> = Vec::new();
    for r in &opts.unit_root {
        let o = UnitRootOptions { trend: r.trend, cross_demean: r.cross_demean };
        reports.push(harris_tzavalis(&panel, &r.variable, o).map_err(runtime)?);
    }
    if let Some(s) = &opts.serial {
        let f = fit_spec(config, &panel, &s.spec)?;
        for &k in &s.orders {
            reports.push(lm_serial(&f, k).map_err(runtime)?);
        }
    }
    let mut out = Outputs::default();
    out.add_json("diagnostics.json", &reports)?;
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapStageOptions {
    pub spec: RegressionSpec,
    pub replications: usize,
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
}

fn bootstrap_options(config: &RunConfig, replications: usize, levels: Option<Vec<f64>>) -> BootstrapOptions {
    let mut o = BootstrapOptions::new(replications, config.seed.expect("validated"));
    if let Some(l) = levels {
        o.levels = l;
    }
    o
}

fn add_run(out: &mut Outputs, prefix: &str, run: &BootstrapRun) -> Result<(), CliError> {
    out.add_with(&format!("{prefix}_draws.csv"), |w| run.write_csv(w))?;
    out.add_json(&format!("{prefix}_run.json"), run)?;
    out.add_json(&format!("{prefix}_summary.json"), &run.summary().map_err(runtime)?)
}

fn bootstrap(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: BootstrapStageOptions = stage_options(config)?;
    let panel = read_panel(config.require("panel")?)?;
    let bo = bootstrap_options(config, opts.replications, opts.levels);
    let absorb = config.absorb_options();
    let run = block_bootstrap_with(&panel, &country_universe(&[&panel]), &bo, |p| {
        let f = fit_with::<f64>(p, &opts.spec, absorb)?;
        Ok((f.names, f.coefficients))
    })
    .map_err(runtime)?;
    let mut out = Outputs::default();
    add_run(&mut out, "bootstrap", &run)?;
    Ok(out)
}

fn floor_default() -> f64 {
    1e-4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationOptions {
    pub fe_spec: RegressionSpec,
    pub ld_spec: RegressionSpec,
    pub fe_margin: MarginSpec,
    pub ld_margin: MarginSpec,
    pub grid: Grid,
    pub replications: usize,
    #[serde(default = "floor_default")]
    pub floor: f64,
    #[serde(default)]
    pub convention: Convention,
}

fn adaptation(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: AdaptationOptions = stage_options(config)?;
    let fe_panel = read_panel(config.require("fe_panel")?)?;
    let ld_panel = read_panel(config.require("ld_panel")?)?;
    let bo = bootstrap_options(config, opts.replications, None);
    let absorb = config.absorb_options();
    let estimate = |spec: &RegressionSpec| {
        let spec = spec.clone();
        move |p: &RegionPanel| {
            let f = fit_with::<f64>(p, &spec, absorb)?;
            Ok((f.names, f.coefficients))
        }
    };
    let (fe, ld) =
        paired_bootstrap(&fe_panel, &ld_panel, &bo, estimate(&opts.fe_spec), estimate(&opts.ld_spec))
            .map_err(runtime)?;
    let summary = adaptation_ratio(
        &fe,
        &ld,
        &opts.fe_margin,
        &opts.ld_margin,
        &opts.grid.values()?,
        opts.floor,
        opts.convention,
    )
    .map_err(runtime)?;
    let mut out = Outputs::default();
    out.add_with("adaptation.csv", |w| summary.write_csv(w))?;
    out.add_json("adaptation.json", &summary)?;
    add_run(&mut out, "fe", &fe)?;
    add_run(&mut out, "ld", &ld)?;
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineWindow {
    #[serde(default = "temp")]
    pub column: String,
    #[serde(default = "y2015")]
    pub from: i32,
    #[serde(default = "y2019")]
    pub to: i32,
}

impl Default for BaselineWindow {
    fn default() -> Self {
        Self { column: temp(), from: y2015(), to: y2019() }
    }
}

fn temp() -> String {
    "temp".into()
}
fn y2015() -> i32 {
    2015
}
fn y2019() -> i32 {
    2019
}
fn y2020() -> i32 {
    2020
}
fn y2100() -> i32 {
    2100
}
fn thousand() -> usize {
    1000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectOptions {
    pub linear: String,
    pub quadratic: String,
    #[serde(default)]
    pub source: DamageSource,
    #[serde(default)]
    pub convention: Option<Convention>,
    #[serde(default)]
    pub baseline: BaselineWindow,
    #[serde(default = "y2020")]
    pub from: i32,
    #[serde(default = "y2100")]
    pub to: i32,
    #[serde(default)]
    pub weight: WeightKind,
    #[serde(default = "thousand")]
    pub samples: usize,
}

#[derive(Debug, Serialize)]
struct ProjectionMeta<'a> {
    years: (i32, i32),
    pairs: usize,
    kept: usize,
    flagged: &'a [climecon::project::FlaggedPair],
    unweighted_regions: &'a [String],
    damage_draws: usize,
    scenarios: Vec<String>,
}

fn project(config: &RunConfig) -> Result<Outputs, CliError> {
    let opts: ProjectOptions = stage_options(config)?;
    let run: BootstrapRun = serde_json::from_reader(open(config.require("draws")?)?)
        .map_err(|e| runtime(format!("inputs.draws: {e}")))?;
    let mut damages =
        DamageFunction::from_draws(&run, &opts.linear, &opts.quadratic, opts.source).map_err(runtime)?;
    if let Some(c) = opts.convention {
        for d in &mut damages {
            d.convention = c;
        }
    }
    let scenarios = read_scenarios_csv(open(config.require("scenarios")?)?).map_err(runtime)?;
    let history = read_panel(config.require("history")?)?;
    let baseline = baseline_climate(&history, &opts.baseline.column, opts.baseline.from, opts.baseline.to)
        .map_err(runtime)?;
    let socio = Socioeconomics::read_csv(open(config.require("socioeconomics")?)?).map_err(runtime)?;
    let groups = match config.input("groups") {
        Some(p) => read_groups_csv(open(p)?).map_err(runtime)?,
        None => BTreeMap::new(),
    };
    let po = ProjectionOptions {
        from: opts.from,
        to: opts.to,
        weight: opts.weight,
        samples: opts.samples,
        seed: config.seed.expect("validated"),
    };
    let report = run_projection(&damages, &scenarios, &baseline, &socio, &groups, &po).map_err(runtime)?;
    let mut out = Outputs::default();
    out.add_with("projection_groups.csv", |w| report.write_group_paths_csv(w))?;
    out.add_with("projection_regions.csv", |w| report.write_region_table_csv(w))?;
    out.add_with("projection_runs.csv", |w| report.write_global_runs_csv(w))?;
    out.add_json(
        "projection.json",
        &ProjectionMeta {
            years: (opts.from, opts.to),
            pairs: report.pairs.len(),
            kept: report.global_runs.len(),
            flagged: &report.flagged,
            unweighted_regions: &report.unweighted_regions,
            damage_draws: damages.len(),
            scenarios: scenarios.iter().map(|s| s.id.clone()).collect(),
        },
    )?;
    Ok(out)
}

/// Percentile bands of the rows of `runs` grouped by year.
pub fn bands(by_year: &BTreeMap<i32, Vec<f64>>) -> Vec<(i32, usize, f64, f64, f64, f64)> {
    by_year
        .iter()
        .map(|(&y, v)| {
            let s = sorted_finite(v);
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            (y, s.len(), mean, quantile(&s, 0.1), quantile(&s, 0.5), quantile(&s, 0.9))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramRequest {
    #[serde(default = "temp")]
    pub variable: String,
    #[serde(default = "thirty")]
    pub bins: usize,
}

fn thirty() -> usize {
    30
}

impl Default for HistogramRequest {
    fn default() -> Self {
        Self { variable: temp(), bins: thirty() }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotDataOptions {
    #[serde(default)]
    pub histogram: Option<HistogramRequest>,
}
