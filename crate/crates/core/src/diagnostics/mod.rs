//! Panel unit-root and serial-correlation tests, and paired comparison
//! statistics for two versions of the same series.

mod compare;
mod serial;
mod simulate;
mod unit_root;

use serde::{Deserialize, Serialize};
use statrs::distribution::Normal;

use crate::error::Result;

pub use compare::{compare_series, midranks, pearson, spearman, Comparison};
pub use serial::{lm_serial, lm_serial_residuals, lm_serial_series};
pub use simulate::{rejection_rate, simulate_series, SeriesProcess, SimulatedTest};
pub use unit_root::{
    balanced_window, harris_tzavalis, harris_tzavalis_balanced, null_moments, UnitRootOptions,
};

/// Options recorded with a test result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trend: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_demean: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub null_hypothesis: String,
    /// Raw estimate behind the statistic, where one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    pub units: usize,
    pub periods: usize,
    pub options: TestOptions,
}

impl TestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}
