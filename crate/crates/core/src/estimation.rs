//! Analytic log-likelihood gradients and projected stochastic gradient ascent.

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::{dimension_terms, log_likelihood, DimensionIndex, EventStream, HawkesParams, StabilityReport};

/// Gradient of the log-likelihood with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub mu: Vec<f64>,
    pub alpha: Array2<f64>,
    pub beta: Array2<f64>,
}

impl Gradient {
    pub fn zeros(d: usize) -> Self {
        Gradient {
            mu: vec![0.0; d],
            alpha: Array2::zeros((d, d)),
            beta: Array2::zeros((d, d)),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.mu.iter_mut().zip(&other.mu) {
            *a += b;
        }
        self.alpha += &other.alpha;
        self.beta += &other.beta;
    }

    pub fn get(&self, sel: ParamSelector) -> f64 {
        match sel {
            ParamSelector::Mu(w) => self.mu[w],
            ParamSelector::Alpha(w, s) => self.alpha[[w, s]],
            ParamSelector::Beta(w, s) => self.beta[[w, s]],
        }
    }
}

/// Names one scalar parameter by flat dimension indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSelector {
    Mu(usize),
    Alpha(usize, usize),
    Beta(usize, usize),
}

/// Log terms of one target dimension's gradient row: `(∂/∂μ, ∂/∂α row, ∂/∂β row)`.
fn gradient_row(params: &HawkesParams, stream: &EventStream, w: usize, with_beta: bool) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let d = params.dims();
    let horizon = stream.horizon();
    let terms = dimension_terms(params, stream, w, with_beta);
    let mut inv = Vec::with_capacity(terms.lambda.len());
    for (k, &l) in terms.lambda.iter().enumerate() {
        if !(l > 0.0) {
            let e = &stream.events()[stream.indices_in(w)[k]];
            return Err(Error::Evaluation {
                event: e.id.clone(),
                time: e.time,
                message: format!("intensity is {l} at an observed event"),
            });
        }
        inv.push(1.0 / l);
    }
    let g_mu = inv.iter().sum::<f64>() - horizon;
    let mut g_alpha = vec![0.0; d];
    let mut g_beta = vec![0.0; d];
    for src in 0..d {
        let sources = stream.times_in(src);
        if sources.is_empty() {
            continue;
        }
        let beta = params.beta()[[w, src]];
        let alpha = params.alpha()[[w, src]];
        let s0 = &terms.s0[src];
        let log_a: f64 = inv.iter().zip(s0).map(|(i, s)| i * s).sum();
        let mut int_a = 0.0;
        let mut int_b = 0.0;
        for &tj in sources {
            let tau = horizon - tj;
            let decay = (-beta * tau).exp();
            let mass = -(-beta * tau).exp_m1();
            int_a += mass / beta;
            if with_beta {
                // d/dβ of (1/β)(1 - e^{-βτ})
                int_b += -mass / (beta * beta) + tau * decay / beta;
            }
        }
        g_alpha[src] = log_a - int_a;
        if with_beta {
            let log_b: f64 = inv.iter().zip(&terms.s1[src]).map(|(i, s)| i * s).sum();
            g_beta[src] = -alpha * log_b - alpha * int_b;
        }
    }
    Ok((g_mu, g_alpha, g_beta))
}

/// Full gradient of the log-likelihood of one stream.
pub fn gradient(params: &HawkesParams, stream: &EventStream) -> Result<Gradient> {
    let d = params.dims();
    let rows: Vec<_> = (0..d)
        .into_par_iter()
        .map(|w| gradient_row(params, stream, w, true))
        .collect::<Result<_>>()?;
    let mut g = Gradient::zeros(d);
    for (w, (m, a, b)) in rows.into_iter().enumerate() {
        g.mu[w] = m;
        g.alpha.row_mut(w).assign(&ndarray::ArrayView1::from(&a));
        g.beta.row_mut(w).assign(&ndarray::ArrayView1::from(&b));
    }
    Ok(g)
}

/// `∂L/∂μ_w = Σ_i 1/λ_w(t_i) − T`.
pub fn grad_mu(params: &HawkesParams, stream: &EventStream, w: DimensionIndex) -> Result<f64> {
    Ok(gradient_row(params, stream, w.flat, false)?.0)
}

/// `∂L/∂α[w, src]`.
pub fn grad_alpha(params: &HawkesParams, stream: &EventStream, w: DimensionIndex, src: DimensionIndex) -> Result<f64> {
    Ok(gradient_row(params, stream, w.flat, false)?.1[src.flat])
}

/// `∂L/∂β[w, src]`, the exact derivative of the log-likelihood in the decay rate.
pub fn grad_beta(params: &HawkesParams, stream: &EventStream, w: DimensionIndex, src: DimensionIndex) -> Result<f64> {
    Ok(gradient_row(params, stream, w.flat, true)?.2[src.flat])
}

fn perturbed(params: &HawkesParams, sel: ParamSelector, delta: f64) -> Result<HawkesParams> {
    let mut p = params.clone();
    {
        let (mu, alpha, beta) = p.parts_mut();
        match sel {
            ParamSelector::Mu(w) => mu[w] += delta,
            ParamSelector::Alpha(w, s) => alpha[[w, s]] += delta,
            ParamSelector::Beta(w, s) => beta[[w, s]] += delta,
        }
    }
    if !p.is_feasible() {
        return Err(Error::domain(
            "h",
            format!("perturbing {sel:?} by {delta} leaves the feasible set"),
        ));
    }
    Ok(p)
}

/// Central difference `(L(θ+h) − L(θ−h)) / 2h` along one parameter.
pub fn finite_diff_gradient(params: &HawkesParams, stream: &EventStream, sel: ParamSelector, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain("h", format!("step {h} must be > 0")));
    }
    let up = log_likelihood(&perturbed(params, sel, h)?, stream)?;
    let down = log_likelihood(&perturbed(params, sel, -h)?, stream)?;
    Ok((up - down) / (2.0 * h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Initial step size, applied to the per-event mean gradient.
    pub learning_rate: f64,
    /// Maximum number of epochs.
    pub iterations: usize,
    /// Streams per minibatch.
    pub batch: usize,
    pub seed: u64,
    pub min_beta: f64,
    /// Floor applied to baselines after every step.
    pub min_mu: f64,
    /// Relative likelihood change regarded as converged.
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.2,
            iterations: 2000,
            batch: 16,
            seed: 0,
            min_beta: 1e-3,
            min_mu: 1e-9,
            tolerance: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain("learning_rate", "must be > 0"));
        }
        if self.iterations == 0 {
            return Err(Error::domain("iterations", "must be >= 1"));
        }
        if self.batch == 0 {
            return Err(Error::domain("batch", "must be >= 1"));
        }
        if !(self.min_beta > 0.0) {
            return Err(Error::domain("min_beta", "must be > 0"));
        }
        if !(self.min_mu >= 0.0) {
            return Err(Error::domain("min_mu", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Full-data log-likelihood after each epoch.
    pub likelihood_trace: Vec<f64>,
    pub stability: StabilityReport,
}

/// Consecutive sub-tolerance epochs required to declare convergence.
const CONVERGENCE_WINDOW: usize = 5;

/// Step-size reduction after which a fit stops retrying.
const MIN_DAMPING: f64 = 1e-12;

/// Starting point: empirical rates, weak uniform excitation, unit decay.
pub fn initial_params(streams: &[EventStream], config: &FitConfig) -> Result<HawkesParams> {
    let lattice = streams[0].lattice();
    let d = lattice.dims();
    let total_time: f64 = streams.iter().map(EventStream::horizon).sum();
    let mut counts = vec![0usize; d];
    for s in streams {
        for (c, n) in counts.iter_mut().zip(s.counts()) {
            *c += n;
        }
    }
    // half an event's worth of rate keeps empty dimensions off zero
    let floor = (0.5 / total_time).max(config.min_mu);
    let mu = counts.iter().map(|&n| (n as f64 / total_time).max(floor)).collect();
    HawkesParams::new(
        lattice,
        mu,
        Array2::from_elem((d, d), 0.1 / d as f64),
        Array2::from_elem((d, d), 1.0f64.max(config.min_beta)),
    )
}

fn total_log_likelihood(params: &HawkesParams, streams: &[EventStream]) -> Result<f64> {
    let parts: Vec<f64> = streams
        .par_iter()
        .map(|s| log_likelihood(params, s))
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// Fits the process by projected stochastic gradient ascent over whole-stream
/// minibatches. Returns the best iterate seen (never worse than the start).
pub fn fit(streams: &[EventStream], config: &FitConfig) -> Result<(HawkesParams, FitReport)> {
    config.validate()?;
    if streams.iter().all(EventStream::is_empty) {
        return Err(Error::domain("streams", "at least one stream must contain events"));
    }
    let lattice = streams[0].lattice();
    if let Some(s) = streams.iter().find(|s| s.lattice() != lattice) {
        return Err(Error::domain(
            "streams",
            format!("topic `{}` uses a different lattice", s.topic()),
        ));
    }

    let mut params = initial_params(streams, config)?;
    let initial = total_log_likelihood(&params, streams)?;
    let mut best = (initial, params.clone());
    let mut trace = Vec::with_capacity(config.iterations);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..streams.len()).collect();
    let mut previous = initial;
    let mut quiet = 0;
    let mut converged = false;
    let mut damping = 1.0;

    for epoch in 1..=config.iterations {
        order.shuffle(&mut rng);
        let step = damping * config.learning_rate / (epoch as f64).sqrt();
        for chunk in order.chunks(config.batch) {
            let grads: Vec<Gradient> = chunk
                .par_iter()
                .map(|&k| gradient(&params, &streams[k]))
                .collect::<Result<_>>()?;
            let events: usize = chunk.iter().map(|&k| streams[k].len()).sum();
            let mut g = Gradient::zeros(lattice.dims());
            for part in &grads {
                g.add_assign(part);
            }
            let scale = step / events.max(1) as f64;
            {
                let (mu, alpha, beta) = params.parts_mut();
                for (m, gm) in mu.iter_mut().zip(&g.mu) {
                    *m += scale * gm;
                }
                alpha.scaled_add(scale, &g.alpha);
                beta.scaled_add(scale, &g.beta);
            }
            params.project(config.min_mu, config.min_beta);
        }

        let ll = match total_log_likelihood(&params, streams) {
            Ok(v) if v.is_finite() => v,
            _ => {
                trace.push(f64::NAN);
                return Err(Error::FitDiverged { trace });
            }
        };
        trace.push(ll);
        if ll > best.0 {
            best = (ll, params.clone());
        } else if ll < best.0 {
            // overshoot: restart from the best iterate with a smaller step
            params = best.1.clone();
            damping *= 0.5;
            if damping < MIN_DAMPING {
                break;
            }
        }
        let rel = (ll - previous).abs() / previous.abs().max(1.0);
        previous = ll;
        quiet = if rel < config.tolerance { quiet + 1 } else { 0 };
        if quiet >= CONVERGENCE_WINDOW {
            converged = true;
            break;
        }
    }

    let (final_ll, params) = best;
    let stability = params.stability_margin();
    if !stability.stable {
        warn!("fitted parameters violate the stability condition on at least one dimension");
    }
    let report = FitReport {
        initial_log_likelihood: initial,
        final_log_likelihood: final_ll,
        iterations_run: trace.len(),
        converged,
        likelihood_trace: trace,
        stability,
    };
    Ok((params, report))
}
