use std::f64::consts::TAU;

use twoscale::cell::{
    default_deltas, h_bar_subcritical_closed_1d, h_bar_uncorrelated_max,
    solve_cell_critical_discount, solve_cell_critical_eigen, solve_cell_subcritical,
};
use twoscale::invariant::{h_bar_supercritical, solve_invariant_measure};
use twoscale::model::{catalog_model, Params, TorusGrid};
use twoscale::Model;

fn params(kv: &[(&str, f64)]) -> Params {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn correlated_closed(p: f64) -> f64 {
    h_bar_subcritical_closed_1d(
        |y: f64| 1.0 + 0.5 * (TAU * y).sin(),
        |y: f64| 1.0 + 0.25 * (TAU * y).cos(),
        p,
        4096,
    )
    .unwrap()
}

#[test]
fn critical_eigen_and_discount_agree_on_correlated_model() {
    let m: Model = catalog_model("correlated-1d", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 64).unwrap();
    let e = solve_cell_critical_eigen(&m, &grid, &[0.0], &[1.0], 1e-8).unwrap();
    let d =
        solve_cell_critical_discount(&m, &grid, &[0.0], &[1.0], &default_deltas(), 1e-8).unwrap();
    let scale = 2.25f64;
    let tol = 2.0 * (e.tol + d.tol).max(1e-3 * scale);
    assert!(
        (e.h_bar - d.h_bar).abs() <= tol,
        "{} {} {tol}",
        e.h_bar,
        d.h_bar
    );
    // the corrector is normalized at the origin and the eigenfunction at its maximum
    assert_eq!(e.corrector.values()[0], 0.0);
    assert!((e.eigenfunction.max() - 1.0).abs() < 1e-12);
}

#[test]
fn critical_value_exceeds_the_average_for_reversible_fast_process() {
    // uncorrelated, b = 0: the tilted operator is symmetric and g = 1 is a trial function
    let m: Model = catalog_model("sine-1d", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 64).unwrap();
    let mu = solve_invariant_measure(&m, &grid, 1e-12).unwrap();
    for p in [0.5, 1.0, 2.0] {
        let avg = h_bar_supercritical(&m, &mu, &[0.0], &[p]).unwrap();
        let max = h_bar_uncorrelated_max(&m, &grid, &[0.0], &[p]);
        let e = solve_cell_critical_eigen(&m, &grid, &[0.0], &[p], 1e-10).unwrap();
        assert!(
            e.h_bar > avg && e.h_bar < max,
            "p = {p}: {avg} < {} < {max}",
            e.h_bar
        );
    }
}

#[test]
fn critical_value_is_frozen_when_sigma_ignores_y() {
    let m: Model = catalog_model("sine-1d", &params(&[("s1", 0.0), ("kappa", 2.0)])).unwrap();
    let grid = TorusGrid::uniform(1, 32).unwrap();
    let e = solve_cell_critical_eigen(&m, &grid, &[0.0], &[1.5], 1e-10).unwrap();
    assert!((e.h_bar - 2.25).abs() < 1e-8, "{}", e.h_bar);
}

#[test]
fn subcritical_cell_solver_matches_quadrature_formula() {
    let m: Model = catalog_model("correlated-1d", &Params::new()).unwrap();
    let exact = correlated_closed(1.0);
    let grid = TorusGrid::uniform(1, 128).unwrap();
    let s = solve_cell_subcritical(&m, &grid, &[0.0], &[1.0], &default_deltas(), 1e-8).unwrap();
    let rel = (s.h_bar - exact).abs() / exact;
    assert!(rel < 2e-2, "{} vs {exact}: {rel}", s.h_bar);
    assert!((s.h_zero - s.h_bar.sqrt()).abs() < 1e-12);
}

#[test]
fn subcritical_cell_solver_matches_max_formula() {
    let m: Model = catalog_model("sine-1d", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 128).unwrap();
    let max = h_bar_uncorrelated_max(&m, &grid, &[0.0], &[1.0]);
    assert!((max - 2.25).abs() < 1e-12, "{max}");
    let s = solve_cell_subcritical(&m, &grid, &[0.0], &[1.0], &default_deltas(), 1e-8).unwrap();
    assert!((s.h_bar - 2.25).abs() / 2.25 < 1e-2, "{}", s.h_bar);
}

#[test]
fn quadrature_formula_special_cases() {
    // tau = 1: (mean sigma)^2 p^2
    let v = h_bar_subcritical_closed_1d(|y: f64| 2.0 + (TAU * y).sin(), |_| 1.0, 3.0, 64).unwrap();
    assert!((v - 36.0).abs() < 1e-12, "{v}");
    // sigma = tau: p^2 / (mean 1/tau)^2, and mean 1/(a + cos) = 1/sqrt(a^2 - 1)
    let v = h_bar_subcritical_closed_1d(
        |y: f64| 1.5 + (TAU * y).cos(),
        |y: f64| 1.5 + (TAU * y).cos(),
        2.0,
        64,
    )
    .unwrap();
    assert!((v - 4.0 * 1.25).abs() < 1e-12, "{v}");
}

#[test]
fn zero_momentum_is_exactly_zero() {
    let m: Model = catalog_model("correlated-1d", &Params::new()).unwrap();
    let grid = TorusGrid::uniform(1, 32).unwrap();
    assert_eq!(
        solve_cell_critical_eigen(&m, &grid, &[0.0], &[0.0], 1e-8)
            .unwrap()
            .h_bar,
        0.0
    );
    assert_eq!(
        solve_cell_critical_discount(&m, &grid, &[0.0], &[0.0], &default_deltas(), 1e-8)
            .unwrap()
            .h_bar,
        0.0
    );
    assert_eq!(
        solve_cell_subcritical(&m, &grid, &[0.0], &[0.0], &default_deltas(), 1e-8)
            .unwrap()
            .h_bar,
        0.0
    );
}
