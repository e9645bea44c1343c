mod common;

use common::*;
use ndarray::{array, Array2};
use opinion_hawkes::hawkes::{CommentEvent, EventStream, HawkesParams, Lattice};
use opinion_hawkes::simulation::{
    attach_structure, cascade_preset, continue_stream, simulate, simulate_topic, SimConfig, StructurePolicy,
};
use opinion_hawkes::Error;
use proptest::prelude::*;

/// Two level-1 comments and one level-2 reply with fixed cells and times.
fn two_candidates() -> (HawkesParams, EventStream) {
    let lat = Lattice::new(2, 2).unwrap();
    let d = lat.dims();
    let mut alpha = Array2::from_elem((d, d), 0.1);
    let mut beta = Array2::from_elem((d, d), 1.0);
    let child = lat.dim(2, 1).unwrap().flat;
    let (a, b) = (lat.dim(1, 1).unwrap().flat, lat.dim(1, 2).unwrap().flat);
    alpha[[child, a]] = 0.6;
    beta[[child, a]] = 0.5;
    alpha[[child, b]] = 0.3;
    beta[[child, b]] = 2.0;
    let p = HawkesParams::new(lat, vec![0.2; d], alpha, beta).unwrap();
    let s = EventStream::new(
        "t",
        lat,
        vec![
            CommentEvent::new("a", "t", 1, 1, 0.0),
            CommentEvent::new("b", "t", 1, 2, 1.0),
            CommentEvent::new("c", "t", 2, 1, 1.5),
        ],
        2.0,
    )
    .unwrap();
    (p, s)
}

#[test]
fn kernel_weighted_parents_follow_kernel_odds() {
    let (p, s) = two_candidates();
    let wa = 0.6 * (-0.5f64 * 1.5).exp();
    let wb = 0.3 * (-2.0f64 * 0.5).exp();
    let expected = wa / (wa + wb);
    let n = 4000;
    let hits = (0..n)
        .filter(|&seed| {
            let cfg = SimConfig { seed, ..SimConfig::default() };
            let out = attach_structure(&s, &p, &cfg).unwrap();
            out.events()[2].parent.as_deref() == Some("a")
        })
        .count() as f64;
    let sd = (expected * (1.0 - expected) / n as f64).sqrt();
    assert!((hits / n as f64 - expected).abs() < 4.0 * sd, "{} vs {expected}", hits / n as f64);
}

#[test]
fn most_recent_takes_the_latest_earlier_candidate() {
    let (p, s) = two_candidates();
    let cfg = SimConfig { structure_policy: StructurePolicy::MostRecent, ..SimConfig::default() };
    let out = attach_structure(&s, &p, &cfg).unwrap();
    assert_eq!(out.events()[2].parent.as_deref(), Some("b"));
}

#[test]
fn existing_parents_are_kept() {
    let (p, s) = two_candidates();
    let mut events = s.events().to_vec();
    events[2].parent = Some("a".into());
    let fixed = EventStream::new("t", s.lattice(), events, 2.0).unwrap();
    let cfg = SimConfig { structure_policy: StructurePolicy::MostRecent, ..SimConfig::default() };
    assert_eq!(attach_structure(&fixed, &p, &cfg).unwrap().events()[2].parent.as_deref(), Some("a"));
}

#[test]
fn reply_without_an_earlier_comment_is_structural() {
    let lat = Lattice::new(2, 1).unwrap();
    let p = HawkesParams::uniform(lat, 0.1, 0.1, 1.0).unwrap();
    let s = EventStream::new("t", lat, vec![CommentEvent::new("x", "t", 2, 1, 0.5)], 1.0).unwrap();
    assert!(matches!(attach_structure(&s, &p, &SimConfig::default()), Err(Error::Structural(_))));
}

#[test]
fn simulated_cascades_are_well_formed_forests() {
    let lat = Lattice::new(3, 11).unwrap();
    let p = cascade_preset(lat, 3).unwrap();
    for seed in 0..5 {
        let s = simulate_topic(&p, &SimConfig { horizon: 60.0, seed, ..SimConfig::default() }).unwrap();
        s.validate_structure().unwrap();
        let by_id: std::collections::HashMap<&str, &CommentEvent> = s.events().iter().map(|e| (e.id.as_str(), e)).collect();
        for e in s.events() {
            match &e.parent {
                None => assert_eq!(e.level, 1),
                Some(pid) => {
                    let parent = by_id[pid.as_str()];
                    assert_eq!(parent.level + 1, e.level);
                    assert!(parent.time < e.time);
                }
            }
        }
    }
}

#[test]
fn univariate_counts_match_stationary_rate() {
    let p = HawkesParams::new(Lattice::new(1, 1).unwrap(), vec![0.5], array![[0.5]], array![[1.0]]).unwrap();
    let horizon = 500.0;
    let counts: Vec<f64> = (0..40)
        .map(|seed| simulate(&p, &SimConfig { horizon, seed, ..SimConfig::default() }).unwrap().len() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64).sqrt();
    // stationary rate mu / (1 - alpha/beta), less a start-up deficit of order one event
    let want = 0.5 / (1.0 - 0.5) * horizon;
    assert!((mean - want).abs() < 4.0 * sd / (counts.len() as f64).sqrt() + 2.0, "{mean} vs {want}");
}

#[test]
fn bivariate_counts_match_stationary_rates() {
    let lat = Lattice::new(1, 2).unwrap();
    let p = HawkesParams::new(lat, vec![0.3, 0.2], array![[0.2, 0.3], [0.4, 0.1]], array![[1.0, 1.5], [2.0, 0.5]]).unwrap();
    // rates r solve (I - G) r = mu with G = alpha / beta
    let g = [[0.2, 0.2], [0.2, 0.2]];
    let m = [[1.0 - g[0][0], -g[0][1]], [-g[1][0], 1.0 - g[1][1]]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let rates = [(m[1][1] * 0.3 - m[0][1] * 0.2) / det, (m[0][0] * 0.2 - m[1][0] * 0.3) / det];
    let horizon = 400.0;
    let runs = 40;
    let mut totals = [0.0; 2];
    for seed in 0..runs {
        let s = simulate(&p, &SimConfig { horizon, seed, ..SimConfig::default() }).unwrap();
        for (t, c) in totals.iter_mut().zip(s.counts()) {
            *t += c as f64;
        }
    }
    for k in 0..2 {
        let got = totals[k] / (runs as f64 * horizon);
        assert!(rel_err(got, rates[k], 1e-9) < 0.06, "dim {k}: {got} vs {}", rates[k]);
    }
}

#[test]
fn supercritical_runs_truncate_with_partial_stream() {
    let p = HawkesParams::new(Lattice::new(1, 1).unwrap(), vec![1.0], array![[2.0]], array![[1.0]]).unwrap();
    match simulate(&p, &SimConfig { horizon: 1000.0, max_events: 500, ..SimConfig::default() }) {
        Err(Error::Truncated { partial }) => assert_eq!(partial.len(), 500),
        other => panic!("expected truncation, got {other:?}"),
    }
}

#[test]
fn continuation_is_seeded_and_stays_in_window() {
    let lat = Lattice::new(1, 2).unwrap();
    let p = HawkesParams::uniform(lat, 0.5, 0.2, 1.0).unwrap();
    let history = simulate(&p, &SimConfig { horizon: 20.0, seed: 1, ..SimConfig::default() }).unwrap();
    let run = |seed| continue_stream(&p, &history, 20.0, 30.0, 10_000, &mut rng(seed)).unwrap();
    let (a, b) = (run(4), run(4));
    assert_eq!(a, b);
    assert!(a.events().iter().all(|e| e.time > 20.0 && e.time <= 30.0));
    assert!(a.events().iter().all(|e| e.id.starts_with("sim-p")));
    assert_ne!(a, run(5));
}

fn arb_params() -> impl Strategy<Value = HawkesParams> {
    (any::<u64>(), prop::sample::select(vec![1usize, 2, 6])).prop_map(|(seed, d)| random_params(&mut rng(seed), lattice_for(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_streams_are_sorted_and_in_window(p in arb_params(), seed in any::<u64>(), horizon in 1.0f64..40.0) {
        let s = simulate(&p, &SimConfig { horizon, seed, ..SimConfig::default() }).unwrap();
        prop_assert!(s.events().windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert!(s.events().iter().all(|e| e.time >= 0.0 && e.time <= horizon));
        prop_assert_eq!(s.counts().iter().sum::<usize>(), s.len());
    }

    #[test]
    fn same_seed_same_stream(p in arb_params(), seed in any::<u64>()) {
        let cfg = SimConfig { horizon: 15.0, seed, ..SimConfig::default() };
        prop_assert_eq!(simulate(&p, &cfg).unwrap(), simulate(&p, &cfg).unwrap());
    }
}
