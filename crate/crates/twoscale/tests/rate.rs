use std::sync::Arc;

use twoscale::hamiltonian::{
    EffectiveHamiltonian, Hamiltonian, HamiltonianOptions, QuadraticHamiltonian,
};
use twoscale::model::{catalog_model, classify_regime, Params};
use twoscale::rate::{
    default_family, growth_bounds, hopf_lax, rate_from_duality_check, rate_general,
    rate_x_independent, solve_effective_pde, EffectiveLagrangian, LineGrid, RateOptions,
    TestFunction,
};
use twoscale::{Model, Result};

fn quadratic(s2: f64) -> EffectiveLagrangian<f64> {
    EffectiveLagrangian::new(Arc::new(QuadraticHamiltonian::scalar(s2).unwrap()))
}

/// `H(x, p) = a(x) p^2` with `a(x) = 1 + 0.5 sin x`.
struct Modulated;

fn coef(x: f64) -> f64 {
    1.0 + 0.5 * x.sin()
}

impl Hamiltonian<f64> for Modulated {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], p: &[f64]) -> Result<f64> {
        Ok(coef(x[0]) * p[0] * p[0])
    }
    fn x_independent(&self) -> bool {
        false
    }
    fn growth(&self) -> (f64, f64) {
        (0.5, 1.5)
    }
    fn growth_at(&self, x: &[f64]) -> (f64, f64) {
        (coef(x[0]), coef(x[0]))
    }
}

/// Minimal action `D^2 / t` for the metric `dx / (2 sqrt(a))`, by Simpson's rule.
fn geodesic_rate(x0: f64, x: f64, t: f64) -> f64 {
    let n = 2000;
    let h = (x - x0) / n as f64;
    let f = |z: f64| 0.5 / coef(z).sqrt();
    let mut s = f(x0) + f(x);
    for i in 1..n {
        s += f(x0 + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let d = s * h / 3.0;
    d * d / t
}

#[test]
fn quadratic_conjugate_closed_form() {
    let l = quadratic(0.09);
    for q in [-3.0, -0.4, 0.05, 1.0, 7.5] {
        let v = l.eval(&[0.2], &[q]).unwrap();
        let exact = q * q / 0.36;
        assert!((v - exact).abs() <= 1e-8 * exact.max(1.0), "{q}: {v}");
    }
}

#[test]
fn path_minimization_matches_straight_line_rate() {
    let l = quadratic(0.5);
    let opts = RateOptions::default();
    for (x0, x, t) in [(0.0, 0.8, 1.0), (0.3, -1.1, 2.0), (-0.5, 0.5, 0.5)] {
        let a = rate_x_independent(&l, &[x0], &[x], t, 16).unwrap().value;
        let b = rate_general(&l, &[x0], &[x], t, &opts).unwrap().value;
        assert!((a - b).abs() <= 1e-6 * a, "{x0} -> {x}: {a} vs {b}");
        assert!((a - (x - x0).powi(2) / (2.0 * t)).abs() < 1e-10);
    }
}

#[test]
fn rate_lies_in_growth_sandwich() {
    let m: Model = catalog_model("sine-1d", &Params::new()).unwrap();
    let opts = HamiltonianOptions {
        resolution: 64,
        ..Default::default()
    };
    let eh = EffectiveHamiltonian::new(&m, classify_regime(4.0).unwrap(), opts).unwrap();
    let l = EffectiveLagrangian::new(Arc::new(eh));
    for x in [-1.5, -0.2, 0.3, 2.0] {
        let i = rate_x_independent(&l, &[0.0], &[x], 1.0, 1).unwrap().value;
        let (lo, hi) = growth_bounds(&l, &[0.0], &[x], 1.0);
        assert!(
            lo * (1.0 - 1e-8) <= i && i <= hi * (1.0 + 1e-8),
            "{x}: {lo} <= {i} <= {hi}"
        );
    }
}

#[test]
fn hopf_lax_of_quadratic_data() {
    // sup_y { -k (y - c)^2 - (y - x)^2 / (4 a t) } = -k (x - c)^2 / (1 + 4 a k t)
    let a = 0.09;
    let l = quadratic(a);
    let h = TestFunction::Quadratic {
        center: 0.4,
        coef: 2.0,
    };
    for (t, x) in [(1.0, 0.0), (0.5, -0.7), (3.0, 1.3)] {
        let v = hopf_lax(&l, &h, t, x).unwrap();
        let exact = -2.0 * (x - 0.4f64).powi(2) / (1.0 + 4.0 * a * 2.0 * t);
        assert!((v - exact).abs() < 1e-8, "t {t} x {x}: {v} vs {exact}");
    }
}

#[test]
fn pde_converges_to_hopf_lax() {
    let s2 = 0.09;
    let l = quadratic(s2);
    let h = TestFunction::Well {
        center: 0.5,
        depth: 0.8,
        width: 0.3,
    };
    let t = 1.0;
    let probes = [-0.2, 0.0, 0.3, 0.6];
    let err = |nodes: usize| {
        let grid = LineGrid::new(-3.0, 4.0, nodes).unwrap();
        let f = solve_effective_pde(l.hamiltonian().as_ref(), &h, t, grid, 0.5).unwrap();
        probes
            .iter()
            .map(|&x| (f.interpolate(x) - hopf_lax(&l, &h, t, x).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (err(201), err(801));
    assert!(fine < 1e-2, "{fine}");
    assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
}

#[test]
fn duality_bound_is_tight_for_quadratic_rate() {
    let l = quadratic(0.09);
    let (x0, x, t) = (0.0, 0.5, 1.0);
    let rate = rate_x_independent(&l, &[x0], &[x], t, 1).unwrap().value;
    let family = default_family(x0, x, t, l.growth());
    let r = rate_from_duality_check(&l, x0, x, t, &family, rate, 1e-8).unwrap();
    assert!(r.passed, "{r:?}");
    assert!(r.relative_gap < 0.05, "{}", r.relative_gap);
}

#[test]
fn position_dependent_rate_matches_geodesic() {
    let l = EffectiveLagrangian::new(Arc::new(Modulated));
    let opts = RateOptions::default();
    for (x0, x, t) in [(0.0, 2.0, 1.0), (-1.0, 1.5, 2.0), (1.0, -2.5, 1.0)] {
        let r = rate_general(&l, &[x0], &[x], t, &opts).unwrap();
        let exact = geodesic_rate(x0, x, t);
        assert!(
            (r.value - exact).abs() <= 2e-3 * exact,
            "{x0} -> {x}: {} vs {exact}",
            r.value
        );
        assert!(r.value < r.straight_line, "{r:?}");
        assert_eq!(r.path.first().unwrap().1, vec![x0]);
        assert_eq!(r.path.last().unwrap().1, vec![x]);
    }
}

#[test]
fn x_independent_route_rejects_position_dependence() {
    let l = EffectiveLagrangian::new(Arc::new(Modulated));
    assert!(rate_x_independent(&l, &[0.0], &[1.0], 1.0, 4).is_err());
}
