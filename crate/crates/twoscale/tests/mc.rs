use std::sync::Arc;

use twoscale::mc::{estimate_v_eps, ldp_slope, sample_mean, simulate, Region, SimConfig};
use twoscale::model::{catalog_model, Params};
use twoscale::Model;

fn const_sigma(phi0: f64) -> Model {
    let mut p = Params::new();
    p.insert("phi0".into(), phi0);
    catalog_model("const-sigma", &p).unwrap()
}

/// `P(N(mean, var) > b)`.
fn gaussian_tail(mean: f64, var: f64, b: f64) -> f64 {
    0.5 * libm::erfc((b - mean) / (2.0 * var).sqrt())
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let m: Model = catalog_model("sine-1d", &Params::new()).unwrap();
    let cfg = SimConfig::new(0.2, 2.0, 1.0, 1500, 11, vec![0.0], vec![0.3]);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&m, &cfg).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one, three);
}

#[test]
fn seed_selects_the_stream() {
    let m = const_sigma(0.0);
    let cfg = |seed| SimConfig::new(0.3, 2.0, 1.0, 500, seed, vec![0.0], vec![0.0]);
    let a = simulate(&m, &cfg(5)).unwrap();
    let b = simulate(&m, &cfg(5)).unwrap();
    let c = simulate(&m, &cfg(6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.x, c.x);
    assert!(a.y.iter().all(|&y| (0.0..1.0).contains(&y)));
}

#[test]
fn constant_volatility_law_is_gaussian() {
    // X_t ~ N(eps phi t, 2 eps sigma^2 t)
    let (eps, t, phi) = (0.25, 1.5, 0.4);
    let m = const_sigma(phi);
    let n = 40_000;
    let cfg = SimConfig::new(eps, 2.0, t, n, 3, vec![0.1], vec![0.0]);
    let s = simulate(&m, &cfg).unwrap();
    let mean = 0.1 + eps * phi * t;
    let var = 2.0 * eps * 0.09 * t;
    let (m1, se1) = sample_mean(&s, |x| x[0]);
    assert!((m1 - mean).abs() < 4.0 * se1, "{m1} vs {mean}");
    let (m2, se2) = sample_mean(&s, |x| (x[0] - mean).powi(2));
    assert!((m2 - var).abs() < 4.0 * se2, "{m2} vs {var}");
    let tail = gaussian_tail(mean, var, mean + 2.0 * var.sqrt());
    let (p, sep) = sample_mean(&s, |x| f64::from(u8::from(x[0] > mean + 2.0 * var.sqrt())));
    assert!((p - tail).abs() < 4.0 * sep, "{p} vs {tail}");
}

#[test]
fn v_eps_matches_gaussian_integral() {
    // eps log E exp(-k X^2 / eps), X ~ N(0, s2): -eps/2 log(1 + 2 k s2 / eps)
    let (eps, t, k) = (0.2, 1.0, 1.5);
    let m = const_sigma(0.0);
    let cfg = SimConfig::new(eps, 2.0, t, 40_000, 8, vec![0.0], vec![0.0]);
    let est = estimate_v_eps(&m, &cfg, &|x: &[f64]| -k * x[0] * x[0]).unwrap();
    let s2 = 2.0 * eps * 0.09 * t;
    let exact = -0.5 * eps * (1.0 + 2.0 * k * s2 / eps).ln();
    assert!(
        (est.value - exact).abs() < 4.0 * est.std_error,
        "{est} vs {exact}"
    );
}

#[test]
fn ldp_levels_match_exact_probabilities() {
    let m = const_sigma(0.0);
    let t = 1.0;
    let b = 0.5;
    let n = 100_000;
    let configs: Vec<SimConfig<f64>> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&e| SimConfig::new(e, 2.0, t, n, 0, vec![0.0], vec![0.0]))
        .collect();
    let region = Region::HalfLine {
        threshold: b,
        upper: true,
    };
    let target = -b * b / (4.0 * 0.09 * t);
    let r = ldp_slope(&m, &configs, &region, Some(target)).unwrap();
    for row in &r.rows {
        let p = gaussian_tail(0.0, 2.0 * row.epsilon * 0.09 * t, b);
        let p_hat = row.hits as f64 / row.n as f64;
        let sd = (p * (1.0 - p) / row.n as f64).sqrt();
        assert!(
            (p_hat - p).abs() < 4.0 * sd,
            "eps {}: {p_hat} vs {p}",
            row.epsilon
        );
        assert!(!row.dropped);
    }
    assert!(r.slope.is_finite() && r.intercept < 0.0);
}

#[test]
fn ldp_needs_three_decreasing_levels() {
    let m = const_sigma(0.0);
    let region = Region::HalfLine {
        threshold: 0.5,
        upper: true,
    };
    let mk = |e| SimConfig::new(e, 2.0, 1.0, 200, 0, vec![0.0], vec![0.0]);
    assert!(ldp_slope(&m, &[mk(0.4), mk(0.2)], &region, None).is_err());
    assert!(ldp_slope(&m, &[mk(0.2), mk(0.4), mk(0.1)], &region, None).is_err());
}

#[test]
fn drift_replacement_shifts_the_mean() {
    let m = const_sigma(0.0);
    let shifted = m.with_phi(Arc::new(|_, _, o: &mut [f64]| o[0] = 2.0));
    let cfg = SimConfig::new(0.1, 2.0, 1.0, 2000, 4, vec![0.0], vec![0.0]);
    let a = simulate(&m, &cfg).unwrap();
    let b = simulate(&shifted, &cfg).unwrap();
    let drift = 0.1 * 2.0 * 1.0;
    for (u, v) in a.x.iter().zip(&b.x) {
        assert!((v - u - drift).abs() < 1e-12);
    }
}

#[test]
fn step_above_cap_is_rejected() {
    let m = const_sigma(0.0);
    let mut cfg = SimConfig::new(0.1, 4.0, 1.0, 200, 0, vec![0.0], vec![0.0]);
    cfg.dt = 10.0 * cfg.max_dt();
    assert!(simulate(&m, &cfg).is_err());
}
