//! Independent reference implementations used as test oracles.
#![allow(dead_code, clippy::type_complexity, clippy::too_many_arguments)]

use ndarray::Array2;
use opinion_hawkes::graph::{build_graph, CascadeGraph};
use opinion_hawkes::hawkes::{CommentEvent, EventStream, HawkesParams, Lattice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `λ_w(t)` by direct summation over every earlier event (`t_j < t`, or
/// `t_j ≤ t` when `inclusive`).
pub fn naive_intensity(p: &HawkesParams, s: &EventStream, w: usize, t: f64, inclusive: bool) -> f64 {
    let mut v = p.mu()[w];
    for (j, e) in s.events().iter().enumerate() {
        if e.time < t || (inclusive && e.time == t) {
            let src = s.dim_of(j);
            v += p.alpha()[[w, src]] * (-p.beta()[[w, src]] * (t - e.time)).exp();
        }
    }
    v
}

/// `∫_a^b λ_w` term by term, without recursion.
pub fn naive_compensator(p: &HawkesParams, s: &EventStream, w: usize, a: f64, b: f64) -> f64 {
    let mut v = p.mu()[w] * (b - a);
    for (j, e) in s.events().iter().enumerate() {
        if e.time < b {
            let src = s.dim_of(j);
            let (al, be) = (p.alpha()[[w, src]], p.beta()[[w, src]]);
            let lo = a.max(e.time);
            v += al / be * ((-be * (lo - e.time)).exp() - (-be * (b - e.time)).exp());
        }
    }
    v
}

/// Log-likelihood by direct summation.
pub fn naive_log_likelihood(p: &HawkesParams, s: &EventStream) -> f64 {
    let mut ll = 0.0;
    for (j, e) in s.events().iter().enumerate() {
        ll += naive_intensity(p, s, s.dim_of(j), e.time, false).ln();
    }
    for w in 0..p.dims() {
        ll -= naive_compensator(p, s, w, 0.0, s.horizon());
    }
    ll
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫_a^b λ_w` by quadrature on the smooth pieces between events. On a piece
/// `[lo, hi]` the contributing events are exactly those at or before `lo`.
pub fn quadrature_compensator(p: &HawkesParams, s: &EventStream, w: usize, a: f64, b: f64, tol: f64) -> f64 {
    let mut cuts = vec![a];
    cuts.extend(s.events().iter().map(|e| e.time).filter(|&t| t > a && t < b));
    cuts.push(b);
    cuts.dedup();
    cuts.windows(2)
        .map(|seg| {
            let lo = seg[0];
            let piece = |t: f64| {
                let mut v = p.mu()[w];
                for (j, e) in s.events().iter().enumerate() {
                    if e.time <= lo {
                        let src = s.dim_of(j);
                        v += p.alpha()[[w, src]] * (-p.beta()[[w, src]] * (t - e.time)).exp();
                    }
                }
                v
            };
            adaptive_simpson(&piece, lo, seg[1], tol)
        })
        .sum()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lattice with `d` dimensions for `d ∈ {1, 2, 6}` and other small sizes.
pub fn lattice_for(d: usize) -> Lattice {
    match d {
        6 => Lattice::new(2, 3).unwrap(),
        n => Lattice::new(1, n as u32).unwrap(),
    }
}

/// Random feasible parameters with branching rows well below 1.
pub fn random_params(r: &mut impl Rng, lattice: Lattice) -> HawkesParams {
    let d = lattice.dims();
    let mu = (0..d).map(|_| r.random_range(0.1..1.0)).collect();
    let alpha = Array2::from_shape_simple_fn((d, d), || r.random_range(0.0..0.6) / d as f64);
    let beta = Array2::from_shape_simple_fn((d, d), || r.random_range(0.5..2.5));
    HawkesParams::new(lattice, mu, alpha, beta).unwrap()
}

/// `n` events at uniform times on `[0, horizon]` with uniform cells.
pub fn random_stream(r: &mut impl Rng, lattice: Lattice, n: usize, horizon: f64) -> EventStream {
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let cell = lattice.from_flat(r.random_range(0..lattice.dims())).unwrap();
        events.push(CommentEvent::new(format!("e{i}"), "r", cell.level, cell.sentiment, r.random_range(0.0..horizon)));
    }
    EventStream::new("r", lattice, events, horizon).unwrap()
}

/// Central difference with one Richardson step.
pub fn richardson(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let d1 = (f(h) - f(-h)) / (2.0 * h);
    let d2 = (f(2.0 * h) - f(-2.0 * h)) / (4.0 * h);
    (4.0 * d1 - d2) / 3.0
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Parameters on a 3×3 lattice where every cell has a positive baseline, so
/// every sentiment distribution is strictly positive.
pub fn small_params() -> HawkesParams {
    let lat = Lattice::new(3, 3).unwrap();
    let d = lat.dims();
    HawkesParams::new(
        lat,
        (0..d).map(|i| 0.1 + 0.03 * ((i * 5) % 7) as f64).collect(),
        Array2::from_shape_fn((d, d), |(i, j)| 0.015 * ((i * 3 + j * 5) % 7 + 1) as f64),
        Array2::from_shape_fn((d, d), |(i, j)| 0.7 + 0.1 * ((i + 2 * j) % 5) as f64),
    )
    .unwrap()
}

/// Ten comments in three short threads; the last six are marked predicted.
pub fn ten_node_fixture() -> (HawkesParams, CascadeGraph) {
    let p = small_params();
    let lat = p.lattice();
    let ev = |id: &str, level, c, t| CommentEvent::new(id, "fx", level, c, t);
    let observed = EventStream::new(
        "fx",
        lat,
        vec![
            ev("a", 1, 1, 0.4),
            ev("b", 1, 3, 0.9),
            ev("c", 2, 2, 1.3).with_parent("a"),
            ev("d", 2, 1, 1.6).with_parent("b"),
        ],
        2.0,
    )
    .unwrap();
    let future = EventStream::new(
        "fx",
        lat,
        vec![
            ev("e", 3, 3, 2.2).with_parent("c"),
            ev("f", 1, 2, 2.5),
            ev("g", 2, 3, 2.9).with_parent("f"),
            ev("h", 3, 1, 3.4).with_parent("d"),
            ev("i", 2, 2, 3.8).with_parent("a"),
            ev("j", 3, 2, 4.1).with_parent("g"),
        ],
        4.5,
    )
    .unwrap();
    let g = build_graph(&observed, &p, Some(&future)).unwrap();
    (p, g)
}

/// One comment of a hand-built graph: `(id, level, time, parent, predicted)`.
pub type Spec<'a> = (&'a str, u32, f64, Option<&'a str>, bool);

/// Builds a graph from hand-written comments on a 3×2 lattice.
pub fn micro_graph(spec: &[Spec]) -> CascadeGraph {
    let lat = Lattice::new(3, 2).unwrap();
    let p = HawkesParams::uniform(lat, 0.1, 0.1, 1.0).unwrap();
    let make = |keep_predicted: bool| -> Vec<CommentEvent> {
        spec.iter()
            .filter(|s| s.4 == keep_predicted)
            .map(|&(id, level, t, parent, _)| {
                let e = CommentEvent::new(id, "m", level, 1, t);
                match parent {
                    Some(pa) => e.with_parent(pa),
                    None => e,
                }
            })
            .collect()
    };
    let horizon = spec.iter().map(|s| s.2).fold(1.0, f64::max);
    let observed = EventStream::new("m", lat, make(false), horizon).unwrap();
    let predicted = EventStream::new("m", lat, make(true), horizon).unwrap();
    build_graph(&observed, &p, (!predicted.is_empty()).then_some(&predicted)).unwrap()
}

/// Hand-scored structural-consistency cases: `(name, predicted, truth, hits, total)`.
pub fn sca_fixtures() -> Vec<(&'static str, CascadeGraph, CascadeGraph, usize, usize)> {
    let chain: Vec<Spec> = vec![("a", 1, 1.0, None, false), ("b", 2, 2.0, Some("a"), false), ("c", 3, 3.0, Some("b"), false)];
    let pairs: Vec<Spec> = vec![
        ("p1", 1, 1.0, None, false),
        ("p2", 1, 1.5, None, false),
        ("c1", 2, 2.0, Some("p1"), false),
        ("c2", 2, 2.5, Some("p2"), false),
    ];
    vec![
        ("identical chain", micro_graph(&chain), micro_graph(&chain), 3, 3),
        (
            "one of two parents loses its child",
            micro_graph(&pairs[..3]),
            micro_graph(&pairs),
            2,
            4,
        ),
        (
            "extra predicted child",
            micro_graph(&[("a", 1, 1.0, None, false), ("b", 2, 2.0, Some("a"), false), ("x", 2, 2.5, Some("a"), true)]),
            micro_graph(&[("a", 1, 1.0, None, false), ("b", 2, 2.0, Some("a"), false)]),
            1,
            2,
        ),
        (
            "child under the wrong parent",
            micro_graph(&[("a", 1, 1.0, None, false), ("b", 1, 1.5, None, false), ("c", 2, 2.0, Some("b"), true)]),
            micro_graph(&[("a", 1, 1.0, None, false), ("b", 1, 1.5, None, false), ("c", 2, 2.0, Some("a"), false)]),
            1,
            3,
        ),
        ("empty truth", micro_graph(&[]), micro_graph(&[]), 0, 0),
        (
            "roots only",
            micro_graph(&[("a", 1, 1.0, None, false), ("b", 1, 2.0, None, false), ("c", 1, 3.0, None, false)]),
            micro_graph(&[("a", 1, 1.0, None, false), ("b", 1, 2.0, None, false), ("c", 1, 3.0, None, false)]),
            3,
            3,
        ),
        ("nothing predicted", micro_graph(&[]), micro_graph(&pairs[..2]), 0, 2),
        (
            "star loses a leaf to another root",
            micro_graph(&[
                ("a", 1, 1.0, None, false),
                ("e", 1, 1.2, None, false),
                ("b", 2, 2.0, Some("a"), false),
                ("c", 2, 2.1, Some("a"), false),
                ("d", 2, 2.2, Some("e"), true),
            ]),
            micro_graph(&[
                ("a", 1, 1.0, None, false),
                ("e", 1, 1.2, None, false),
                ("b", 2, 2.0, Some("a"), false),
                ("c", 2, 2.1, Some("a"), false),
                ("d", 2, 2.2, Some("a"), false),
            ]),
            3,
            5,
        ),
        (
            "deepest reply left unattached",
            micro_graph(&[("a", 1, 1.0, None, false), ("b", 2, 2.0, Some("a"), false), ("c", 3, 3.0, None, true)]),
            micro_graph(&chain),
            2,
            3,
        ),
        (
            "children swapped between threads",
            micro_graph(&[
                ("p1", 1, 1.0, None, false),
                ("p2", 1, 1.5, None, false),
                ("c1", 2, 2.0, Some("p2"), true),
                ("c2", 2, 2.5, Some("p1"), true),
            ]),
            micro_graph(&pairs),
            2,
            4,
        ),
        (
            "prediction misses the whole second thread",
            micro_graph(&[("p1", 1, 1.0, None, false), ("c1", 2, 2.0, Some("p1"), false)]),
            micro_graph(&pairs),
            2,
            4,
        ),
    ]
}

/// Hand-scored sentiment-accuracy cases: `(name, predicted, truth, hits, total)`.
/// Class 0 stands for a comment the prediction did not produce.
pub fn sa_fixtures() -> Vec<(&'static str, Vec<(&'static str, u32)>, Vec<(&'static str, u32)>, usize, usize)> {
    vec![
        ("all correct", vec![("a", 1), ("b", 2), ("c", 3), ("d", 4)], vec![("a", 1), ("b", 2), ("c", 3), ("d", 4)], 4, 4),
        ("all wrong", vec![("a", 2), ("b", 3), ("c", 1)], vec![("a", 1), ("b", 2), ("c", 3)], 0, 3),
        ("three of four", vec![("a", 1), ("b", 2), ("c", 3), ("d", 5)], vec![("a", 1), ("b", 2), ("c", 3), ("d", 4)], 3, 4),
        ("nothing to score", vec![], vec![], 0, 0),
        (
            "unmatched comments count as wrong",
            vec![("a", 7), ("b", 0), ("c", 0), ("d", 2), ("e", 11)],
            vec![("a", 7), ("b", 3), ("c", 5), ("d", 2), ("e", 10)],
            2,
            5,
        ),
        ("single comment", vec![("z", 6)], vec![("z", 6)], 1, 1),
    ]
}
