use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twoscale::cell::solve_cell_critical_eigen;
use twoscale::hamiltonian::{EffectiveHamiltonian, HamiltonianOptions};
use twoscale::mc::{estimate_v_eps, simulate, SimConfig};
use twoscale::model::{catalog_model, catalog_names, classify_regime, Params, TorusGrid};
use twoscale::rate::{rate_x_independent, EffectiveLagrangian};
use twoscale::Model;

fn catalog(name: &str) -> Model {
    catalog_model(name, &Params::new()).unwrap()
}

fn dispatcher(m: &Model, alpha: f64, resolution: usize) -> EffectiveHamiltonian<f64> {
    let opts = HamiltonianOptions {
        resolution,
        tol: 1e-8,
        ..Default::default()
    };
    EffectiveHamiltonian::new(m, classify_regime(alpha).unwrap(), opts).unwrap()
}

#[test]
fn supercritical_hamiltonian_is_convex_in_p() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in catalog_names() {
        let eh = dispatcher(&catalog(name), 4.0, 64);
        for _ in 0..50 {
            let x = rng.random_range(-1.0..1.0);
            let (p1, p2): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let lam: f64 = rng.random();
            let h = |p: f64| eh.evaluate(&[x], &[p]).unwrap().value;
            let (a, b) = (h(p1), h(p2));
            let mid = h(lam * p1 + (1.0 - lam) * p2);
            assert!(
                mid <= lam * a + (1.0 - lam) * b + 1e-12 * (1.0 + a + b),
                "{name}: p {p1} {p2} lambda {lam}"
            );
        }
    }
}

#[test]
fn finite_difference_slope_in_x_stays_bounded() {
    // H(x, p) = (1 + a tanh(x / ell))^2 H(0, p), so |dH/dx| <= 2 (1 + a) (a / ell) max sigma^2 p^2
    let m = catalog("x-modulated");
    let eh = dispatcher(&m, 2.0, 64);
    let bound = 2.0 * 1.5 * 0.5 * 1.5f64.powi(2);
    let (x, p) = (0.3, 1.0);
    let base = eh.evaluate(&[x], &[p]).unwrap().value;
    let slopes: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&d| (eh.evaluate(&[x + d], &[p]).unwrap().value - base).abs() / d)
        .collect();
    for s in &slopes {
        assert!(*s <= bound, "{slopes:?}");
    }
    let spread = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - slopes.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.25 * slopes[0], "{slopes:?}");
}

#[test]
fn corrector_gradient_grows_at_most_linearly() {
    // max |Dw| ~ p^2 for small p; the local log-log exponent must fall to 1
    let m = catalog("correlated-1d");
    let grid = TorusGrid::uniform(1, 128).unwrap();
    let h = 1.0 / 128.0;
    let ps = [1.0f64, 2.0, 4.0, 8.0, 16.0, 32.0];
    let g: Vec<f64> = ps
        .iter()
        .map(|&p| {
            let sol = solve_cell_critical_eigen(&m, &grid, &[0.0], &[p], 1e-8).unwrap();
            let w = sol.corrector.values();
            (0..w.len())
                .map(|i| (w[(i + 1) % w.len()] - w[i]).abs() / h)
                .fold(0.0, f64::max)
        })
        .collect();
    let exponents: Vec<f64> = (1..ps.len())
        .map(|k| (g[k] / g[k - 1]).ln() / (ps[k] / ps[k - 1]).ln())
        .collect();
    assert!(
        exponents.windows(2).all(|e| e[1] <= e[0] + 1e-3),
        "{exponents:?}"
    );
    assert!(*exponents.last().unwrap() <= 1.1, "{exponents:?}");
}

#[test]
fn lagrangian_is_midpoint_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for name in catalog_names() {
        let eh = dispatcher(&catalog(name), 4.0, 64);
        let l = EffectiveLagrangian::new(Arc::new(eh));
        for _ in 0..100 {
            let x = rng.random_range(-1.0..1.0);
            let (q1, q2): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let a = l.eval(&[x], &[q1]).unwrap();
            let b = l.eval(&[x], &[q2]).unwrap();
            let mid = l.eval(&[x], &[0.5 * (q1 + q2)]).unwrap();
            assert!(
                mid <= 0.5 * (a + b) + 1e-9 * (a + b).max(1.0),
                "{name}: q {q1} {q2}: {mid} vs {a} {b}"
            );
        }
    }
}

#[test]
fn one_dimensional_rate_is_nondecreasing_right_of_start() {
    for name in catalog_names() {
        let m = catalog(name);
        for alpha in [2.0, 4.0] {
            let eh = dispatcher(&m, alpha, 32);
            let l = EffectiveLagrangian::new(Arc::new(eh));
            if !l.x_independent() {
                continue;
            }
            let mut prev = 0.0;
            for i in 0..=20 {
                let x = 0.1 * i as f64;
                let v = rate_x_independent(&l, &[0.0], &[x], 1.0, 1).unwrap().value;
                assert!(v >= prev - 1e-9, "{name} alpha {alpha} x {x}: {v} < {prev}");
                prev = v;
            }
        }
    }
}

#[test]
fn v_eps_stays_within_the_range_of_h() {
    let m = catalog("sine-1d");
    let cfg = SimConfig::new(0.2, 2.0, 1.0, 2000, 5, vec![0.0], vec![0.0]);
    let est = estimate_v_eps(&m, &cfg, &|x: &[f64]| (3.0 * x[0]).sin()).unwrap();
    assert!((-1.0..=1.0).contains(&est.value), "{est}");
    let est = estimate_v_eps(&m, &cfg, &|_: &[f64]| -0.7).unwrap();
    assert!((est.value + 0.7).abs() < 1e-12, "{est}");
}

#[test]
fn tails_decay_faster_than_any_power() {
    // a power law has constant log-log slope; steepening slopes rule it out
    for name in catalog_names() {
        let m = catalog(name);
        let cfg = SimConfig::new(0.2, 2.0, 1.0, 20_000, 9, vec![0.0], vec![0.0]);
        let s = simulate(&m, &cfg).unwrap();
        let n = s.x.len() as f64;
        let sd = (s.x.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        let tail = |r: f64| s.x.iter().filter(|x| x.abs() > r * sd).count() as f64 / n;
        let (p1, p2, p3) = (tail(1.0), tail(2.0), tail(3.0));
        assert!(p3 > 0.0, "{name}");
        let s12 = (p2 / p1).ln() / 2f64.ln();
        let s23 = (p3 / p2).ln() / 1.5f64.ln();
        assert!(s12 < 0.0 && s23 < s12, "{name}: slopes {s12} {s23}");
    }
}
