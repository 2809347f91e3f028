//! Seeded size and power simulations for the panel tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{harris_tzavalis_balanced, lm_serial_series, UnitRootOptions};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesProcess {
    RandomWalk,
    WhiteNoise,
    /// Stationary AR(1) with unit innovation variance.
    Ar1 { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulatedTest {
    HarrisTzavalis(UnitRootOptions),
    /// Applied to the within-demeaned series, as fixed-effects residuals.
    LmSerial { order: usize },
}

/// `units` independent series of `periods` observations each.
pub fn simulate_series<R: Rng>(
    process: SeriesProcess,
    units: usize,
    periods: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut draw = || -> f64 { rng.sample(StandardNormal) };
    (0..units)
        .map(|_| {
            let mut out = Vec::with_capacity(periods);
            let mut prev = match process {
                SeriesProcess::Ar1 { rho } => draw() / (1.0 - rho * rho).sqrt(),
                _ => 0.0,
            };
            for _ in 0..periods {
                let e = draw();
                let v = match process {
                    SeriesProcess::RandomWalk => prev + e,
                    SeriesProcess::WhiteNoise => e,
                    SeriesProcess::Ar1 { rho } => rho * prev + e,
                };
                out.push(v);
                prev = v;
            }
            out
        })
        .collect()
}

/// Share of `replications` in which `test` rejects at level `alpha`.
/// Replicate r draws from its own ChaCha stream r under `seed`.
#[allow(clippy::too_many_arguments)]
pub fn rejection_rate(
    test: SimulatedTest,
    process: SeriesProcess,
    units: usize,
    periods: usize,
    replications: usize,
    alpha: f64,
    seed: u64,
) -> Result<f64> {
    let outcomes: Vec<bool> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let series = simulate_series(process, units, periods, &mut rng);
            let report = match test {
                SimulatedTest::HarrisTzavalis(opts) => harris_tzavalis_balanced(&series, opts)?,
                SimulatedTest::LmSerial { order } => {
                    let resid: Vec<Vec<f64>> = series
                        .into_iter()
                        .map(|s| {
                            let m = s.iter().sum::<f64>() / s.len() as f64;
                            s.into_iter().map(|v| v - m).collect()
                        })
                        .collect();
                    lm_serial_series(&resid, order)?
                }
            };
            Ok(report.rejects(alpha))
        })
        .collect::<Result<_>>()?;
    Ok(outcomes.iter().filter(|&&b| b).count() as f64 / replications.max(1) as f64)
}
