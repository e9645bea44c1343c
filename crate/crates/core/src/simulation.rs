//! Ogata thinning for the multivariate exponential-kernel process, plus
//! parent assignment for simulated comments.
//!
//! Between events every kernel decays, so the total intensity right after
//! the latest event (or candidate) dominates the process until the next
//! candidate. Each candidate is accepted with probability `Σλ(t) / Λ̄`.
//!
//! Parent assignment is not part of the point-process law; the two
//! policies here are constructions of this crate.

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::{CommentEvent, EventStream, HawkesParams};

/// How a simulated level-`l` comment picks its level-`(l−1)` parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructurePolicy {
    /// Sample an earlier candidate with probability ∝ `α[child, parent] · exp(−β Δt)`.
    #[default]
    KernelWeighted,
    /// Always take the latest earlier candidate.
    MostRecent,
}

impl std::str::FromStr for StructurePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel_weighted" | "kernel-weighted" => Ok(StructurePolicy::KernelWeighted),
            "most_recent" | "most-recent" => Ok(StructurePolicy::MostRecent),
            other => Err(Error::Config(format!("unknown structure policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub horizon: f64,
    pub seed: u64,
    pub structure_policy: StructurePolicy,
    pub max_events: usize,
    /// Topic label written on generated events.
    pub topic: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 100.0,
            seed: 0,
            structure_policy: StructurePolicy::KernelWeighted,
            max_events: 1_000_000,
            topic: "sim".to_string(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::domain("horizon", "must be finite and > 0"));
        }
        if self.max_events == 0 {
            return Err(Error::domain("max_events", "must be >= 1"));
        }
        Ok(())
    }
}

/// Excitation state `E[w, src] = Σ_j α[w,src] exp(−β[w,src](now − t_j))`.
struct Excitation<'a> {
    params: &'a HawkesParams,
    state: Array2<f64>,
    now: f64,
}

impl<'a> Excitation<'a> {
    fn new(params: &'a HawkesParams, start: f64) -> Self {
        let d = params.dims();
        Excitation {
            params,
            state: Array2::zeros((d, d)),
            now: start,
        }
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.now;
        if dt > 0.0 {
            Zip::from(&mut self.state).and(self.params.beta()).for_each(|e, b| {
                if *e != 0.0 {
                    *e *= (-b * dt).exp();
                }
            });
        }
        self.now = t;
    }

    /// Registers an event of dimension `src` at the current time (or a past
    /// time `at`, used when loading history).
    fn kick(&mut self, src: usize, at: f64) {
        let alpha = self.params.alpha();
        let beta = self.params.beta();
        let lag = self.now - at;
        for w in 0..self.params.dims() {
            let a = alpha[[w, src]];
            if a != 0.0 {
                self.state[[w, src]] += a * (-beta[[w, src]] * lag).exp();
            }
        }
    }

    fn intensities(&self, out: &mut [f64]) -> f64 {
        let mu = self.params.mu();
        let mut total = 0.0;
        for (w, o) in out.iter_mut().enumerate() {
            *o = mu[w] + self.state.row(w).sum();
            total += *o;
        }
        total
    }
}

/// `(time, flat dimension)` pairs; `Err` carries the events accepted before
/// the cap was hit.
pub(crate) type Thinned = std::result::Result<Vec<(f64, usize)>, Vec<(f64, usize)>>;

/// Raw thinning on `(start, end]` given the events of `history` at or
/// before `start`.
pub(crate) fn thin<R: Rng>(
    params: &HawkesParams,
    history: Option<&EventStream>,
    start: f64,
    end: f64,
    max_events: usize,
    rng: &mut R,
) -> Thinned {
    let d = params.dims();
    let mut exc = Excitation::new(params, start);
    if let Some(h) = history {
        for (i, e) in h.events().iter().enumerate() {
            if e.time > start {
                break;
            }
            exc.kick(h.dim_of(i), e.time);
        }
    }
    let mut lambda = vec![0.0; d];
    let mut out = Vec::new();
    let mut t = start;
    loop {
        let bound = exc.intensities(&mut lambda);
        if !(bound > 0.0) {
            break;
        }
        let wait: f64 = Exp1.sample(rng);
        t += wait / bound;
        if t > end {
            break;
        }
        exc.advance(t);
        let total = exc.intensities(&mut lambda);
        let u: f64 = rng.random();
        if u * bound > total {
            continue;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut dim = d - 1;
        for (w, &l) in lambda.iter().enumerate() {
            if pick < l {
                dim = w;
                break;
            }
            pick -= l;
        }
        while lambda[dim] == 0.0 && dim > 0 {
            dim -= 1;
        }
        out.push((t, dim));
        if out.len() > max_events {
            out.pop();
            return Err(out);
        }
        exc.kick(dim, t);
    }
    Ok(out)
}

fn to_events(params: &HawkesParams, topic: &str, prefix: &str, raw: &[(f64, usize)]) -> Vec<CommentEvent> {
    let lattice = params.lattice();
    raw.iter()
        .enumerate()
        .map(|(n, &(t, dim))| {
            let cell = lattice.from_flat(dim).expect("simulated dimension in range");
            CommentEvent::new(format!("{topic}-{prefix}{n:06}"), topic, cell.level, cell.sentiment, t)
        })
        .collect()
}

/// Simulates one realisation on `[0, horizon]`. Events carry level and
/// sentiment but no parents; see [`attach_structure`].
pub fn simulate(params: &HawkesParams, config: &SimConfig) -> Result<EventStream> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match thin(params, None, 0.0, config.horizon, config.max_events, &mut rng) {
        Ok(raw) => EventStream::new(
            config.topic.clone(),
            params.lattice(),
            to_events(params, &config.topic, "", &raw),
            config.horizon,
        ),
        Err(partial) => {
            let stream = EventStream::new(
                config.topic.clone(),
                params.lattice(),
                to_events(params, &config.topic, "", &partial),
                config.horizon,
            )?;
            Err(Error::Truncated {
                partial: Box::new(stream),
            })
        }
    }
}

/// Continues `history` from `start` to `end` and returns the new events only,
/// windowed to `[0, end]`. Ids carry a `p` prefix so they never collide with
/// the history.
pub fn continue_stream<R: Rng>(
    params: &HawkesParams,
    history: &EventStream,
    start: f64,
    end: f64,
    max_events: usize,
    rng: &mut R,
) -> Result<EventStream> {
    let topic = history.topic().to_string();
    let build = |raw: &[(f64, usize)]| {
        EventStream::new(topic.clone(), params.lattice(), to_events(params, &topic, "p", raw), end)
    };
    match thin(params, Some(history), start, end, max_events, rng) {
        Ok(raw) => build(&raw),
        Err(partial) => Err(Error::Truncated {
            partial: Box::new(build(&partial)?),
        }),
    }
}

/// Simulation followed by parent assignment.
pub fn simulate_topic(params: &HawkesParams, config: &SimConfig) -> Result<EventStream> {
    let raw = simulate(params, config)?;
    attach_structure(&raw, params, config)
}

/// Gives every level-`l ≥ 2` event a parent at level `l−1` with a strictly
/// earlier time. Events that already carry a parent keep it.
pub fn attach_structure(stream: &EventStream, params: &HawkesParams, config: &SimConfig) -> Result<EventStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    assign_parents(stream, None, params, config.structure_policy, &mut rng)
}

/// Parent assignment where candidates may also come from `context` (an
/// already-structured history the new events continue).
pub(crate) fn assign_parents<R: Rng>(
    stream: &EventStream,
    context: Option<&EventStream>,
    params: &HawkesParams,
    policy: StructurePolicy,
    rng: &mut R,
) -> Result<EventStream> {
    let levels = params.lattice().levels as usize;
    // (time, id, flat dim) of every potential parent, per level
    let mut pool: Vec<Vec<(f64, String, usize)>> = vec![Vec::new(); levels + 1];
    if let Some(ctx) = context {
        for (i, e) in ctx.events().iter().enumerate() {
            pool[e.level as usize].push((e.time, e.id.clone(), ctx.dim_of(i)));
        }
    }
    let mut events = stream.events().to_vec();
    for (i, e) in events.iter_mut().enumerate() {
        let dim = stream.dim_of(i);
        if e.level >= 2 && e.parent.is_none() {
            let candidates: Vec<&(f64, String, usize)> =
                pool[e.level as usize - 1].iter().filter(|c| c.0 < e.time).collect();
            if candidates.is_empty() {
                return Err(Error::Structural(format!(
                    "event `{}` (level {}, t = {}) has no earlier level-{} comment to reply to",
                    e.id,
                    e.level,
                    e.time,
                    e.level - 1
                )));
            }
            let latest = || {
                candidates
                    .iter()
                    .max_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|c| c.1.clone())
                    .expect("nonempty")
            };
            let chosen = match policy {
                StructurePolicy::MostRecent => latest(),
                StructurePolicy::KernelWeighted => {
                    let weights = parent_weights(params, dim, e.time, &candidates);
                    let total: f64 = weights.iter().sum();
                    if total > 0.0 {
                        let mut pick = rng.random::<f64>() * total;
                        let mut k = candidates.len() - 1;
                        for (j, w) in weights.iter().enumerate() {
                            if pick < *w {
                                k = j;
                                break;
                            }
                            pick -= w;
                        }
                        candidates[k].1.clone()
                    } else {
                        latest()
                    }
                }
            };
            e.parent = Some(chosen);
        }
        pool[e.level as usize].push((e.time, e.id.clone(), dim));
    }
    let out = EventStream::new(stream.topic().to_string(), stream.lattice(), events, stream.horizon())?;
    Ok(out)
}

/// Unnormalised kernel-weighted parent preferences.
pub fn parent_weights(params: &HawkesParams, child_dim: usize, child_time: f64, candidates: &[&(f64, String, usize)]) -> Vec<f64> {
    candidates
        .iter()
        .map(|(t, _, pdim)| {
            let a = params.alpha()[[child_dim, *pdim]];
            let b = params.beta()[[child_dim, *pdim]];
            a * (-b * (child_time - t)).exp()
        })
        .collect()
}

/// A cascade-shaped parameter set for demos and synthetic corpora: level-1
/// comments arrive at a baseline rate, deeper levels only through replies,
/// and replies lean towards the sentiment of the comment they answer.
pub fn cascade_preset(params_lattice: crate::hawkes::Lattice, seed: u64) -> Result<HawkesParams> {
    let lat = params_lattice;
    let d = lat.dims();
    let c = lat.sentiments as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // level-1 sentiment mix, skewed but nowhere zero
    let raw: Vec<f64> = (0..c).map(|_| 0.2 + rng.random::<f64>()).collect();
    let norm: f64 = raw.iter().sum();
    let mut mu = vec![0.0; d];
    for (k, r) in raw.iter().enumerate() {
        mu[k] = 0.5 * r / norm;
    }
    let mut alpha = Array2::zeros((d, d));
    let mut beta = Array2::from_elem((d, d), 1.0);
    for src in lat.iter() {
        for w in lat.iter() {
            let same_level = w.level == src.level;
            let reply = w.level == src.level + 1;
            if !(same_level || reply) {
                continue;
            }
            let dist = (w.sentiment as f64 - src.sentiment as f64).abs();
            let affinity = (-dist / 1.5).exp();
            let base = if reply { 0.9 } else { 0.2 };
            alpha[[w.flat, src.flat]] = base * affinity / c as f64 * (0.5 + rng.random::<f64>());
            beta[[w.flat, src.flat]] = if reply { 0.8 } else { 1.5 };
        }
    }
    HawkesParams::new(lat, mu, alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::Lattice;
    use ndarray::array;

    fn one_dim(mu: f64, alpha: f64, beta: f64) -> HawkesParams {
        HawkesParams::new(Lattice::new(1, 1).unwrap(), vec![mu], array![[alpha]], array![[beta]]).unwrap()
    }

    #[test]
    fn silent_process_is_empty() {
        let s = simulate(&one_dim(0.0, 0.0, 1.0), &SimConfig::default()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn poisson_count_in_range() {
        let cfg = SimConfig {
            horizon: 1000.0,
            seed: 7,
            ..SimConfig::default()
        };
        let n = simulate(&one_dim(2.0, 0.0, 1.0), &cfg).unwrap().len() as f64;
        assert!((n - 2000.0).abs() <= 3.0 * 2000f64.sqrt(), "{n}");
    }

    #[test]
    fn seed_fixes_stream() {
        let p = one_dim(0.5, 0.4, 1.0);
        let cfg = SimConfig {
            horizon: 200.0,
            seed: 11,
            ..SimConfig::default()
        };
        assert_eq!(simulate(&p, &cfg).unwrap(), simulate(&p, &cfg).unwrap());
    }

    #[test]
    fn supercritical_run_truncates() {
        let cfg = SimConfig {
            horizon: 1000.0,
            max_events: 500,
            ..SimConfig::default()
        };
        match simulate(&one_dim(1.0, 2.0, 1.0), &cfg) {
            Err(Error::Truncated { partial }) => assert_eq!(partial.len(), 500),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_candidate_parent() {
        let lat = Lattice::new(2, 1).unwrap();
        let p = HawkesParams::uniform(lat, 0.1, 0.2, 1.0).unwrap();
        let s = EventStream::new(
            "h",
            lat,
            vec![CommentEvent::new("a", "h", 1, 1, 1.0), CommentEvent::new("b", "h", 2, 1, 2.0)],
            3.0,
        )
        .unwrap();
        for policy in [StructurePolicy::KernelWeighted, StructurePolicy::MostRecent] {
            let cfg = SimConfig {
                structure_policy: policy,
                ..SimConfig::default()
            };
            let out = attach_structure(&s, &p, &cfg).unwrap();
            assert_eq!(out.events()[0].parent, None);
            assert_eq!(out.events()[1].parent.as_deref(), Some("a"));
            out.validate_structure().unwrap();
        }
    }

    #[test]
    fn missing_parent_is_structural() {
        let lat = Lattice::new(2, 1).unwrap();
        let p = HawkesParams::uniform(lat, 0.1, 0.2, 1.0).unwrap();
        let s = EventStream::new("h", lat, vec![CommentEvent::new("b", "h", 2, 1, 2.0)], 3.0).unwrap();
        assert!(matches!(
            attach_structure(&s, &p, &SimConfig::default()),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn preset_is_subcritical_and_simulates_trees() {
        let p = cascade_preset(Lattice::default(), 3).unwrap();
        assert!(p.stability_margin().stable);
        let cfg = SimConfig {
            horizon: 200.0,
            seed: 5,
            ..SimConfig::default()
        };
        let s = simulate_topic(&p, &cfg).unwrap();
        assert!(!s.is_empty());
        s.validate_structure().unwrap();
    }
}
