use std::f64::consts::TAU;

use twoscale::invariant::{h_bar_supercritical, solve_invariant_measure};
use twoscale::model::{catalog_model, catalog_names, Params, TorusGrid};
use twoscale::Model;

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// `e^U / Z` with `U = amp cos(2 pi y)` and `Z` by the periodic trapezoid rule,
/// which is spectrally accurate for this integrand.
fn gibbs(amp: f64, y: f64) -> f64 {
    let n = 4096;
    let z: f64 = (0..n)
        .map(|i| (amp * (TAU * i as f64 / n as f64).cos()).exp())
        .sum::<f64>()
        / n as f64;
    (amp * (TAU * y).cos()).exp() / z
}

#[test]
fn gradient_drift_measure_is_gibbs() {
    let m: Model = catalog_model("gradient-drift", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 256).unwrap();
    let mu = solve_invariant_measure(&m, &grid, 1e-10).unwrap();
    assert!((mu.mass - 1.0).abs() < 1e-12);
    let mut worst = 0.0f64;
    for (i, &d) in mu.density.values().iter().enumerate() {
        let exact = gibbs(1.0, i as f64 / 256.0);
        worst = worst.max((d - exact).abs() / exact);
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn two_dimensional_gibbs_factorizes() {
    let m: Model = catalog_model("gradient-drift", &params(&[("dim", 2.0), ("amp", 0.5)])).unwrap();
    let grid = TorusGrid::uniform(2, 32).unwrap();
    let mu = solve_invariant_measure(&m, &grid, 1e-10).unwrap();
    let mut y = [0.0; 2];
    let mut worst = 0.0f64;
    for (i, &d) in mu.density.values().iter().enumerate() {
        grid.node(i, &mut y);
        let exact = gibbs(0.5, y[0]) * gibbs(0.5, y[1]);
        worst = worst.max((d - exact).abs() / exact);
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn zero_drift_gives_uniform_measure() {
    let m: Model = catalog_model("sine-1d", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 64).unwrap();
    let mu = solve_invariant_measure(&m, &grid, 1e-10).unwrap();
    for &d in mu.density.values() {
        assert!((d - 1.0).abs() < 1e-10, "{d}");
    }
}

#[test]
fn refinement_error_is_second_order() {
    // non-gradient drift with constant tau: the density has no closed form
    let m: Model = catalog_model("sine-1d", &params(&[("kappa", 3.0), ("tau0", 0.8)])).unwrap();
    let at = |n: usize| {
        let g = TorusGrid::uniform(1, n).unwrap();
        solve_invariant_measure(&m, &g, 1e-12).unwrap()
    };
    let (m1, m2, m4) = (at(32), at(64), at(128));
    let diff = |a: &twoscale::Measure, b: &twoscale::Measure| {
        a.density
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - b.density.values()[2 * i]).abs())
            .fold(0.0f64, f64::max)
    };
    let (e1, e2) = (diff(&m1, &m2), diff(&m2, &m4));
    assert!(e1 > 0.0 && e2 > 0.0);
    let order = (e1 / e2).log2();
    assert!(order > 1.7, "observed order {order}");
}

#[test]
fn every_catalog_measure_is_normalized() {
    for name in catalog_names() {
        let m: Model = catalog_model(name, &Params::new()).unwrap();
        let grid = TorusGrid::uniform(m.m(), 64).unwrap();
        let mu = solve_invariant_measure(&m, &grid, 1e-10).unwrap();
        assert!((mu.mass - 1.0).abs() < 1e-12, "{name}");
        assert!(mu.density.min() > 0.0, "{name}");
        assert!(mu.residual_norm < 1e-10, "{name}: {}", mu.residual_norm);
    }
}

#[test]
fn supercritical_sine_average() {
    // mean of (1 + sin/2)^2 under the uniform measure is 1 + 1/8
    let m: Model = catalog_model("sine-1d", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 64).unwrap();
    let mu = solve_invariant_measure(&m, &grid, 1e-12).unwrap();
    for p in [0.5, 1.0, -2.0] {
        let h = h_bar_supercritical(&m, &mu, &[0.0], &[p]).unwrap();
        assert!((h / (p * p) - 1.125).abs() < 1e-9, "{h}");
    }
}

#[test]
fn coarse_grid_is_rejected() {
    let m: Model = catalog_model("sine-1d", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 8).unwrap();
    assert!(solve_invariant_measure(&m, &grid, 1e-10).is_err());
}
