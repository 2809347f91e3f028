//! Run configuration: a JSON file naming the stage inputs, the output
//! directory, the seed and thread count, plus stage-specific `options`.
//!
//! Paths are resolved against the config file's directory. Environment
//! variables override paths only: `CLIMECON_OUTPUT_DIR` replaces
//! `output_dir` and `CLIMECON_INPUT_<NAME>` replaces (or adds) input
//! `<name>`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Aggregate,
    BuildPanel,
    Estimate,
    Margins,
    Diagnose,
    Bootstrap,
    Adaptation,
    Project,
    PlotData,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Aggregate => "aggregate",
            Stage::BuildPanel => "build-panel",
            Stage::Estimate => "estimate",
            Stage::Margins => "margins",
            Stage::Diagnose => "diagnose",
            Stage::Bootstrap => "bootstrap",
            Stage::Adaptation => "adaptation",
            Stage::Project => "project",
            Stage::PlotData => "plot-data",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Stage::Bootstrap | Stage::Adaptation | Stage::Project)
    }

    /// Inputs that must be present, and ones that may be.
    pub fn inputs(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Stage::Aggregate => (&["regions", "temperature", "precipitation"], &["urban", "rural"]),
            Stage::BuildPanel => (&["panel"], &["climate"]),
            Stage::Estimate | Stage::Margins | Stage::Diagnose | Stage::Bootstrap => (&["panel"], &[]),
            Stage::Adaptation => (&["fe_panel", "ld_panel"], &[]),
            Stage::Project => (&["draws", "scenarios", "history", "socioeconomics"], &["groups"]),
            Stage::PlotData => (&[], &["margins", "panel", "projection_runs"]),
        }
    }
}

/// Stage whose output an input name usually refers to.
pub fn upstream(input: &str) -> Option<&'static str> {
    Some(match input {
        "climate" => "aggregate",
        "panel" | "fe_panel" | "ld_panel" | "history" => "build-panel",
        "margins" => "margins",
        "draws" => "bootstrap",
        "projection_runs" => "project",
        _ => return None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Convergence tolerance of fixed-effect absorption.
    pub absorb: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default)]
    pub options: serde_json::Value,
}

const ENV_OUTPUT: &str = "CLIMECON_OUTPUT_DIR";
const ENV_INPUT: &str = "CLIMECON_INPUT_";

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Deserializes with the failing field path in the message.
pub fn parse_field<T: DeserializeOwned>(value: &serde_json::Value, context: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { context.to_string() } else { format!("{context}.{path}") };
        invalid(format!("{at}: {}", e.inner()))
    })
}

impl RunConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid(format!("config is not valid JSON: {e}")))?;
        let mut cfg: RunConfig = parse_field(&value, "config")?;
        cfg.output_dir = base.join(&cfg.output_dir);
        for p in cfg.inputs.values_mut() {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_json(&text, base)?;
        cfg.apply_env(std::env::vars());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) {
        for (k, v) in vars {
            if k == ENV_OUTPUT {
                self.output_dir = PathBuf::from(v);
            } else if let Some(name) = k.strip_prefix(ENV_INPUT) {
                self.inputs.insert(name.to_ascii_lowercase(), PathBuf::from(v));
            }
        }
    }

    pub fn input(&self, name: &str) -> Option<&Path> {
        self.inputs.get(name).map(PathBuf::as_path)
    }

    pub fn require(&self, name: &str) -> Result<&Path, CliError> {
        self.input(name).ok_or_else(|| invalid(format!("inputs.{name}: required")))
    }

    /// Checks everything that can be checked before running `stage`.
    pub fn validate(&self, stage: Stage) -> Result<(), CliError> {
        if let Some(s) = self.stage {
            if s != stage {
                return Err(invalid(format!(
                    "stage: config is for `{}`, not `{}`",
                    s.name(),
                    stage.name()
                )));
            }
        }
        let (required, optional) = stage.inputs();
        for name in required {
            self.require(name)?;
        }
        for (name, path) in &self.inputs {
            if !required.contains(&name.as_str()) && !optional.contains(&name.as_str()) {
                return Err(invalid(format!("inputs.{name}: not used by `{}`", stage.name())));
            }
            if !path.is_file() {
                let from = upstream(name).map(|s| format!(" (run `{s}` first)")).unwrap_or_default();
                return Err(invalid(format!("inputs.{name}: {} does not exist{from}", path.display())));
            }
        }
        if stage.stochastic() && self.seed.is_none() {
            return Err(invalid(format!("seed: required by `{}`", stage.name())));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads: must be at least 1"));
        }
        if let Some(t) = self.tolerance.absorb {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("tolerance.absorb: must be positive"));
            }
        }
        if self.tolerance.max_iterations == Some(0) {
            return Err(invalid("tolerance.max_iterations: must be at least 1"));
        }
        Ok(())
    }

    pub fn absorb_options(&self) -> climecon::estimator::AbsorbOptions {
        let mut o = climecon::estimator::AbsorbOptions::default();
        if let Some(t) = self.tolerance.absorb {
            o.tolerance = t;
        }
        if let Some(m) = self.tolerance.max_iterations {
            o.max_iterations = m;
        }
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_paths_and_env_overrides() {
        let text = r#"{"inputs":{"panel":"data/p.csv"},"output_dir":"out","seed":3}"#;
        let mut c = RunConfig::from_json(text, Path::new("/base")).unwrap();
        assert_eq!(c.input("panel").unwrap(), Path::new("/base/data/p.csv"));
        c.apply_env([
            ("CLIMECON_OUTPUT_DIR".to_string(), "/tmp/o".to_string()),
            ("CLIMECON_INPUT_PANEL".to_string(), "/x.csv".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ]);
        assert_eq!(c.output_dir, Path::new("/tmp/o"));
        assert_eq!(c.input("panel").unwrap(), Path::new("/x.csv"));
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn field_level_errors() {
        let err = RunConfig::from_json(r#"{"output_dir":"o","seed":"x"}"#, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        let err = RunConfig::from_json(r#"{"output_dir":"o","sed":1}"#, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
        let c = RunConfig::from_json(r#"{"output_dir":"o"}"#, Path::new(".")).unwrap();
        assert!(c.validate(Stage::Bootstrap).unwrap_err().to_string().contains("inputs.panel"));
    }
}
