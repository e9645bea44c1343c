//! Intensity, compensator and log-likelihood of the exponential-kernel process.
//!
//! ```text
//! λ_w(t) = μ_w + Σ_src Σ_{t_j ≤ t} α[w,src] · exp(-β[w,src] (t - t_j))
//! ```
//!
//! Point queries loop over the stream once. Everything evaluated at every
//! event (likelihood, gradients, node features) goes through the recursive
//! kernel sums in [`pair_kernel_sums`], which cost O(N_w + N_src) per
//! dimension pair instead of O(N_w · N_src).

use rayon::prelude::*;

use super::event::EventStream;
use super::lattice::DimensionIndex;
use super::params::HawkesParams;
use crate::error::{Error, Result};

/// Which already-observed events a point evaluation may see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum History {
    /// Events with `t_j ≤ t`.
    Inclusive,
    /// Events with `t_j < t`.
    StrictPast,
}

/// `λ_w(t)` with events at exactly `t` included.
pub fn intensity(params: &HawkesParams, stream: &EventStream, w: DimensionIndex, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= stream.horizon()) {
        return Err(Error::domain(
            "t",
            format!("{t} is outside the observation window [0, {}]", stream.horizon()),
        ));
    }
    Ok(intensity_with(params, stream, w.flat, t, History::Inclusive))
}

/// Unchecked point evaluation; `t` may lie past the stream horizon.
pub fn intensity_with(params: &HawkesParams, stream: &EventStream, w: usize, t: f64, history: History) -> f64 {
    let alpha = params.alpha().row(w);
    let beta = params.beta().row(w);
    let mut lambda = params.mu()[w];
    for (i, e) in stream.events().iter().enumerate() {
        let seen = match history {
            History::Inclusive => e.time <= t,
            History::StrictPast => e.time < t,
        };
        if !seen {
            break;
        }
        let src = stream.dim_of(i);
        let a = alpha[src];
        if a != 0.0 {
            lambda += a * (-beta[src] * (t - e.time)).exp();
        }
    }
    lambda
}

/// Closed-form `∫_a^b λ_w(t) dt`.
pub fn compensator(params: &HawkesParams, stream: &EventStream, w: DimensionIndex, a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && a <= b && b.is_finite()) {
        return Err(Error::domain("interval", format!("[{a}, {b}] must satisfy 0 <= a <= b")));
    }
    Ok(compensator_flat(params, stream, w.flat, a, b))
}

pub(crate) fn compensator_flat(params: &HawkesParams, stream: &EventStream, w: usize, a: f64, b: f64) -> f64 {
    let alpha = params.alpha().row(w);
    let beta = params.beta().row(w);
    let mut total = params.mu()[w] * (b - a);
    for (i, e) in stream.events().iter().enumerate() {
        if e.time >= b {
            break;
        }
        let src = stream.dim_of(i);
        let (al, be) = (alpha[src], beta[src]);
        if al == 0.0 {
            continue;
        }
        // kernel mass on [max(a, t_j), b]
        let start = a.max(e.time);
        let lead = (-be * (start - e.time)).exp();
        total += al / be * lead * -(-be * (b - start)).exp_m1();
    }
    total
}

/// Strict-past kernel sums of one (target, source) dimension pair.
///
/// For every target time `t_i` returns
/// `s0_i = Σ_{t_j < t_i} exp(-β (t_i - t_j))` and, when `with_lag` is set,
/// `s1_i = Σ_{t_j < t_i} (t_i - t_j) exp(-β (t_i - t_j))`, both summed over
/// the source times `t_j`. Both lists must be sorted.
pub fn pair_kernel_sums(targets: &[f64], sources: &[f64], beta: f64, with_lag: bool) -> (Vec<f64>, Vec<f64>) {
    let mut s0 = Vec::with_capacity(targets.len());
    let mut s1 = Vec::with_capacity(if with_lag { targets.len() } else { 0 });
    let (mut r0, mut r1) = (0.0f64, 0.0f64);
    let mut now = 0.0f64;
    let mut j = 0;
    for &t in targets {
        while j < sources.len() && sources[j] < t {
            let dt = sources[j] - now;
            let decay = (-beta * dt).exp();
            r1 = decay * (r1 + dt * r0);
            r0 = decay * r0 + 1.0;
            now = sources[j];
            j += 1;
        }
        let dt = t - now;
        let decay = (-beta * dt).exp();
        s0.push(decay * r0);
        if with_lag {
            s1.push(decay * (r1 + dt * r0));
        }
    }
    (s0, s1)
}

/// Per-event terms of one target dimension.
pub(crate) struct DimensionTerms {
    /// `λ_w(t_i)` (strict past) for every event of `w`, in time order.
    pub lambda: Vec<f64>,
    /// `s0[src][i]`, empty for sources with no events.
    pub s0: Vec<Vec<f64>>,
    /// `s1[src][i]`, only populated with `with_lag`.
    pub s1: Vec<Vec<f64>>,
}

pub(crate) fn dimension_terms(params: &HawkesParams, stream: &EventStream, w: usize, with_lag: bool) -> DimensionTerms {
    let targets = stream.times_in(w);
    let d = params.dims();
    let mut lambda = vec![params.mu()[w]; targets.len()];
    let mut s0 = Vec::with_capacity(d);
    let mut s1 = Vec::with_capacity(d);
    for src in 0..d {
        let sources = stream.times_in(src);
        if targets.is_empty() || sources.is_empty() {
            s0.push(Vec::new());
            s1.push(Vec::new());
            continue;
        }
        let (a0, a1) = pair_kernel_sums(targets, sources, params.beta()[[w, src]], with_lag);
        let al = params.alpha()[[w, src]];
        if al != 0.0 {
            for (l, s) in lambda.iter_mut().zip(&a0) {
                *l += al * s;
            }
        }
        s0.push(a0);
        s1.push(a1);
    }
    DimensionTerms { lambda, s0, s1 }
}

/// `λ` at every event of the stream (strict past), in stream order.
pub fn event_intensities(params: &HawkesParams, stream: &EventStream) -> Vec<f64> {
    let mut out = vec![0.0; stream.len()];
    for w in 0..params.dims() {
        let idx = stream.indices_in(w);
        if idx.is_empty() {
            continue;
        }
        let terms = dimension_terms(params, stream, w, false);
        for (&i, l) in idx.iter().zip(terms.lambda) {
            out[i] = l;
        }
    }
    out
}

/// Contribution of one dimension: `Σ_i ln λ_w(t_i) − ∫_0^T λ_w`.
pub fn dimension_log_likelihood(params: &HawkesParams, stream: &EventStream, w: usize) -> Result<f64> {
    let terms = dimension_terms(params, stream, w, false);
    let mut log_sum = 0.0;
    for (k, &l) in terms.lambda.iter().enumerate() {
        if !(l > 0.0) {
            let e = &stream.events()[stream.indices_in(w)[k]];
            return Err(Error::Evaluation {
                event: e.id.clone(),
                time: e.time,
                message: format!("intensity is {l} at an observed event"),
            });
        }
        log_sum += l.ln();
    }
    Ok(log_sum - compensator_flat(params, stream, w, 0.0, stream.horizon()))
}

/// Log-likelihood of the stream on `[0, T]`. Per-dimension terms are
/// evaluated in parallel and summed in dimension order.
pub fn log_likelihood(params: &HawkesParams, stream: &EventStream) -> Result<f64> {
    let terms: Vec<f64> = (0..params.dims())
        .into_par_iter()
        .map(|w| dimension_log_likelihood(params, stream, w))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Time-rescaled inter-event residuals of the pooled process: the total
/// compensator between consecutive events (starting from 0). A correctly
/// specified model yields unit-rate exponential residuals.
pub fn rescaled_residuals(params: &HawkesParams, stream: &EventStream) -> Vec<f64> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(stream.len());
    for e in stream.events() {
        let r: f64 = (0..params.dims())
            .map(|w| compensator_flat(params, stream, w, prev, e.time))
            .sum();
        out.push(r);
        prev = e.time;
    }
    out
}
