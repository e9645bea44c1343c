//! Expected comment counts per dimension over a future window.
//!
//! `Analytic` integrates the intensity implied by the history alone, so
//! excitation from comments that arrive inside the window is ignored; it is a
//! deterministic lower bound on the self-consistent expectation. `MonteCarlo`
//! continues the process by thinning and averages realised counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::{compensator_flat, EventStream, HawkesParams, Lattice};
use crate::simulation::continue_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    #[default]
    Analytic,
    MonteCarlo,
}

impl std::str::FromStr for ForecastMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(ForecastMode::Analytic),
            "monte_carlo" | "monte-carlo" | "mc" => Ok(ForecastMode::MonteCarlo),
            other => Err(Error::Config(format!("unknown forecast mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Level,
    Sentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountForecast {
    pub lattice: Lattice,
    pub start: f64,
    pub delta: f64,
    pub mode: ForecastMode,
    /// Number of simulated continuations (0 for analytic forecasts).
    pub samples: usize,
    pub per_dimension: Vec<f64>,
    /// Sample standard deviation of the realised counts (Monte Carlo only).
    pub per_dimension_stddev: Option<Vec<f64>>,
}

/// Options for [`predict_counts`] that only matter in Monte-Carlo mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub samples: usize,
    pub seed: u64,
    pub max_events: usize,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            samples: 200,
            seed: 0,
            max_events: 1_000_000,
        }
    }
}

/// Expected counts `N̂_w(T, T+Δ)` given the history observed up to `start`.
pub fn predict_counts(
    params: &HawkesParams,
    history: &EventStream,
    start: f64,
    delta: f64,
    mode: ForecastMode,
    mc: MonteCarloOptions,
) -> Result<CountForecast> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain("delta", format!("{delta} must be > 0")));
    }
    if !(start >= 0.0 && start <= history.horizon()) {
        return Err(Error::domain(
            "start",
            format!("{start} must lie within the history window [0, {}]", history.horizon()),
        ));
    }
    let observed = history.prefix(start.max(f64::MIN_POSITIVE))?;
    let d = params.dims();
    match mode {
        ForecastMode::Analytic => {
            let per_dimension = (0..d)
                .map(|w| compensator_flat(params, &observed, w, start, start + delta))
                .collect();
            Ok(CountForecast {
                lattice: params.lattice(),
                start,
                delta,
                mode,
                samples: 0,
                per_dimension,
                per_dimension_stddev: None,
            })
        }
        ForecastMode::MonteCarlo => {
            if mc.samples == 0 {
                return Err(Error::domain("samples", "must be >= 1 in monte_carlo mode"));
            }
            let runs: Vec<Vec<usize>> = (0..mc.samples)
                .into_par_iter()
                .map(|k| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
                    rng.set_stream(k as u64);
                    continue_stream(params, &observed, start, start + delta, mc.max_events, &mut rng)
                        .map(|s| s.counts())
                })
                .collect::<Result<_>>()?;
            let n = runs.len() as f64;
            let mut mean = vec![0.0; d];
            for run in &runs {
                for (m, &c) in mean.iter_mut().zip(run) {
                    *m += c as f64;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; d];
            for run in &runs {
                for ((v, &c), m) in var.iter_mut().zip(run).zip(&mean) {
                    *v += (c as f64 - m).powi(2);
                }
            }
            let denom = (n - 1.0).max(1.0);
            let stddev = var.iter().map(|v| (v / denom).sqrt()).collect();
            Ok(CountForecast {
                lattice: params.lattice(),
                start,
                delta,
                mode,
                samples: mc.samples,
                per_dimension: mean,
                per_dimension_stddev: Some(stddev),
            })
        }
    }
}

impl CountForecast {
    /// Sums over sentiments (one entry per level) or over levels (one entry
    /// per sentiment class).
    pub fn aggregate(&self, axis: Axis) -> Vec<f64> {
        let (l, c) = (self.lattice.levels as usize, self.lattice.sentiments as usize);
        match axis {
            Axis::Level => (0..l)
                .map(|li| self.per_dimension[li * c..(li + 1) * c].iter().sum())
                .collect(),
            Axis::Sentiment => (0..c)
                .map(|ci| (0..l).map(|li| self.per_dimension[li * c + ci]).sum())
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.per_dimension.iter().sum()
    }

    /// CSV rows: `dimension,level,sentiment,expected_count,stddev`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["dimension", "level", "sentiment", "expected_count", "stddev"])
            .map_err(wrap)?;
        for cell in self.lattice.iter() {
            let sd = self
                .per_dimension_stddev
                .as_ref()
                .map(|s| s[cell.flat].to_string())
                .unwrap_or_default();
            w.write_record([
                cell.flat.to_string(),
                cell.level.to_string(),
                cell.sentiment.to_string(),
                self.per_dimension[cell.flat].to_string(),
                sd,
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}
