mod common;

use common::*;
use ndarray::Array2;
use opinion_hawkes::estimation::{fit, grad_alpha, grad_beta, grad_mu, gradient, FitConfig, ParamSelector};
use opinion_hawkes::hawkes::{log_likelihood, EventStream, HawkesParams};
use opinion_hawkes::simulation::{simulate, SimConfig};
use opinion_hawkes::Error;

fn naive_fd(p: &HawkesParams, s: &EventStream, sel: ParamSelector) -> f64 {
    let base = match sel {
        ParamSelector::Mu(w) => p.mu()[w],
        ParamSelector::Alpha(w, j) => p.alpha()[[w, j]] + 0.02,
        ParamSelector::Beta(w, j) => p.beta()[[w, j]],
    };
    let h = 1e-3 * base.min(1.0);
    let shifted = |delta: f64| {
        let (mut mu, mut alpha, mut beta) = (p.mu().to_vec(), p.alpha().clone(), p.beta().clone());
        match sel {
            ParamSelector::Mu(w) => mu[w] += delta,
            ParamSelector::Alpha(w, j) => alpha[[w, j]] += 0.02 + delta,
            ParamSelector::Beta(w, j) => beta[[w, j]] += delta,
        }
        naive_log_likelihood(&HawkesParams::new(p.lattice(), mu, alpha, beta).unwrap(), s)
    };
    richardson(&shifted, h)
}

#[test]
fn analytic_gradient_matches_direct_finite_differences() {
    for seed in 0..12 {
        let mut r = rng(300 + seed);
        let lat = lattice_for([1, 2, 6][seed as usize % 3]);
        let p = random_params(&mut r, lat);
        let s = random_stream(&mut r, lat, 20, 8.0);
        let d = lat.dims();
        for w in 0..d {
            for j in 0..d {
                for sel in [ParamSelector::Mu(w), ParamSelector::Alpha(w, j), ParamSelector::Beta(w, j)] {
                    // alpha is probed at +0.02 so that zero entries sit inside the feasible set
                    let at = match sel {
                        ParamSelector::Alpha(a, b) => {
                            let mut alpha = p.alpha().clone();
                            alpha[[a, b]] += 0.02;
                            HawkesParams::new(lat, p.mu().to_vec(), alpha, p.beta().clone()).unwrap()
                        }
                        _ => p.clone(),
                    };
                    let got = gradient(&at, &s).unwrap().get(sel);
                    let want = naive_fd(&p, &s, sel);
                    assert!(rel_err(got, want, 1e-3) < 1e-5, "seed {seed} {sel:?}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn per_coordinate_gradients_agree_with_full_gradient() {
    let mut r = rng(17);
    let lat = lattice_for(6);
    let p = random_params(&mut r, lat);
    let s = random_stream(&mut r, lat, 40, 10.0);
    let g = gradient(&p, &s).unwrap();
    for w in lat.iter() {
        assert!(rel_err(grad_mu(&p, &s, w).unwrap(), g.mu[w.flat], 1e-12) < 1e-12);
        for j in lat.iter() {
            assert!(rel_err(grad_alpha(&p, &s, w, j).unwrap(), g.alpha[[w.flat, j.flat]], 1e-12) < 1e-12);
            assert!(rel_err(grad_beta(&p, &s, w, j).unwrap(), g.beta[[w.flat, j.flat]], 1e-12) < 1e-12);
        }
    }
}

#[test]
fn gradient_of_a_poisson_stream_has_closed_form_baseline_term() {
    let lat = lattice_for(1);
    let p = HawkesParams::new(lat, vec![0.5], Array2::zeros((1, 1)), Array2::ones((1, 1))).unwrap();
    let mut r = rng(2);
    let s = random_stream(&mut r, lat, 9, 6.0);
    let g = gradient(&p, &s).unwrap();
    assert!((g.mu[0] - (9.0 / 0.5 - 6.0)).abs() < 1e-12);
}

fn recover(truth: &HawkesParams, horizon: f64, topics: usize) -> HawkesParams {
    let streams: Vec<EventStream> = (0..topics)
        .map(|k| {
            let cfg = SimConfig { horizon, seed: 40 + k as u64, topic: format!("t{k}"), ..SimConfig::default() };
            simulate(truth, &cfg).unwrap()
        })
        .collect();
    let (fitted, report) = fit(&streams, &FitConfig { iterations: 3000, tolerance: 1e-10, learning_rate: 1.0, ..FitConfig::default() }).unwrap();
    assert!(report.final_log_likelihood >= report.initial_log_likelihood);
    let at_truth: f64 = streams.iter().map(|s| log_likelihood(truth, s).unwrap()).sum();
    assert!(report.final_log_likelihood >= at_truth - 1e-6 * at_truth.abs() - 5.0, "{} vs {at_truth} after {} epochs", report.final_log_likelihood, report.iterations_run);
    fitted
}

#[test]
fn fit_recovers_a_univariate_process() {
    let lat = lattice_for(1);
    let truth = HawkesParams::new(lat, vec![0.5], Array2::from_elem((1, 1), 0.6), Array2::from_elem((1, 1), 1.5)).unwrap();
    let f = recover(&truth, 1000.0, 4);
    assert!(rel_err(f.mu()[0], 0.5, 1e-9) < 0.15, "mu {}", f.mu()[0]);
    assert!(rel_err(f.alpha()[[0, 0]], 0.6, 1e-9) < 0.15, "alpha {}", f.alpha()[[0, 0]]);
    assert!(rel_err(f.beta()[[0, 0]], 1.5, 1e-9) < 0.25, "beta {}", f.beta()[[0, 0]]);
}

#[test]
fn fit_separates_self_and_cross_excitation() {
    let lat = lattice_for(2);
    let truth = HawkesParams::new(
        lat,
        vec![0.4, 0.2],
        Array2::from_shape_vec((2, 2), vec![0.0, 0.0, 0.7, 0.0]).unwrap(),
        Array2::from_elem((2, 2), 1.0),
    )
    .unwrap();
    let f = recover(&truth, 1000.0, 4);
    assert!(f.alpha()[[1, 0]] > 0.5, "{:?}", f.alpha());
    assert!(f.alpha()[[0, 1]] < 0.15 && f.alpha()[[0, 0]] < 0.15 && f.alpha()[[1, 1]] < 0.15, "{:?}", f.alpha());
}

#[test]
fn fit_is_deterministic_for_a_seed() {
    let mut r = rng(5);
    let lat = lattice_for(2);
    let p = random_params(&mut r, lat);
    let streams: Vec<EventStream> = (0..5)
        .map(|k| simulate(&p, &SimConfig { horizon: 50.0, seed: k, ..SimConfig::default() }).unwrap())
        .collect();
    let cfg = FitConfig { iterations: 50, batch: 2, ..FitConfig::default() };
    let (a, ra) = fit(&streams, &cfg).unwrap();
    let (b, rb) = fit(&streams, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.likelihood_trace, rb.likelihood_trace);
}

#[test]
fn fit_rejects_empty_input_and_bad_settings() {
    let lat = lattice_for(1);
    let empty = vec![EventStream::empty("e", lat, 1.0).unwrap()];
    assert!(matches!(fit(&empty, &FitConfig::default()), Err(Error::Domain { .. })));
    let mut r = rng(1);
    let s = vec![random_stream(&mut r, lat, 5, 2.0)];
    for cfg in [
        FitConfig { learning_rate: 0.0, ..FitConfig::default() },
        FitConfig { iterations: 0, ..FitConfig::default() },
        FitConfig { batch: 0, ..FitConfig::default() },
    ] {
        assert!(matches!(fit(&s, &cfg), Err(Error::Domain { .. })));
    }
}

#[test]
fn fitted_parameters_stay_feasible() {
    let mut r = rng(8);
    let lat = lattice_for(6);
    let streams: Vec<EventStream> = (0..3).map(|_| random_stream(&mut r, lat, 30, 10.0)).collect();
    let (p, report) = fit(&streams, &FitConfig { iterations: 100, learning_rate: 2.0, ..FitConfig::default() }).unwrap();
    assert!(p.mu().iter().all(|&m| m > 0.0));
    assert!(p.alpha().iter().all(|&a| a >= 0.0));
    assert!(p.beta().iter().all(|&b| b >= 1e-3));
    assert!(report.likelihood_trace.iter().all(|x| x.is_finite()));
}
