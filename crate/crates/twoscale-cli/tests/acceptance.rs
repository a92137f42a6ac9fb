//! Acceptance suite: one PASS/FAIL line per criterion, with wall time.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use twoscale::cell::{
    default_deltas, feynman_kac_oracle, h_bar_subcritical_closed_1d, h_bar_uncorrelated_max,
    solve_cell_critical_discount, solve_cell_critical_eigen, solve_cell_subcritical, FkConfig,
};
use twoscale::hamiltonian::{EffectiveHamiltonian, HamiltonianOptions, QuadraticHamiltonian};
use twoscale::invariant::{h_bar_supercritical, potential_range, solve_invariant_measure};
use twoscale::model::{catalog_model, catalog_names, classify_regime, Params, TorusGrid};
use twoscale::pricing::{implied_vol_limit, OptionSpec, RateEvaluator};
use twoscale::rate::{EffectiveLagrangian, RateOptions};
use twoscale::Model;
use twoscale_cli::cli::execute;
use twoscale_cli::commands::Check;
use twoscale_cli::config::Config;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn model(name: &str) -> Model {
    catalog_model(name, &Params::new()).unwrap()
}

fn dispatcher(m: &Model, alpha: f64, resolution: usize) -> EffectiveHamiltonian<f64> {
    let opts = HamiltonianOptions {
        resolution,
        ..Default::default()
    };
    EffectiveHamiltonian::new(m, classify_regime(alpha).unwrap(), opts).unwrap()
}

fn check_of(cfg: &Config, command: &str, criterion: u8) -> Vec<Check> {
    execute(command, cfg, None)
        .unwrap()
        .checks
        .into_iter()
        .filter(|c| c.criterion == Some(criterion))
        .collect()
}

fn c1_invariant_measure() -> Outcome {
    let m = model("gradient-drift");
    let n = 256;
    let grid = TorusGrid::uniform(1, n).unwrap();
    let mu = solve_invariant_measure(&m, &grid, 1e-12).unwrap();
    let q = 4096;
    let z = (0..q)
        .map(|i| (TAU * i as f64 / q as f64).cos().exp())
        .sum::<f64>()
        / q as f64;
    let worst = mu
        .density
        .values()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let exact = (TAU * i as f64 / n as f64).cos().exp() / z;
            (d - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    let mass = (mu.mass - 1.0).abs();
    outcome(
        worst < 1e-6 && mass < 1e-12,
        format!("max relative error {worst:.2e}, mass defect {mass:.1e}"),
    )
}

fn c2_supercritical_closed_form() -> Outcome {
    // defaults: b = 0, tau = 1
    let m = model("sine-1d");
    let grid = TorusGrid::uniform(1, 64).unwrap();
    let mu = solve_invariant_measure(&m, &grid, 1e-12).unwrap();
    let v = h_bar_supercritical(&m, &mu, &[0.0], &[1.0]).unwrap();
    outcome(
        (v - 1.125).abs() < 1e-6,
        format!("H/p^2 = {v:.12}, exact 1.125"),
    )
}

fn c3_critical_cross_validation() -> Outcome {
    let m = model("correlated-1d");
    let grid = TorusGrid::uniform(1, 64).unwrap();
    let tol = 1e-8;
    let e = solve_cell_critical_eigen(&m, &grid, &[0.0], &[1.0], tol).unwrap();
    let d =
        solve_cell_critical_discount(&m, &grid, &[0.0], &[1.0], &default_deltas(), tol).unwrap();
    let scale = e.h_bar.abs().max(1.0);
    let bound = 2.0 * (e.tol + d.tol).max(1e-3 * scale);
    let gap = (e.h_bar - d.h_bar).abs();
    let fk =
        feynman_kac_oracle(&m, &[0.0], &[1.0], &FkConfig::new(20.0, 10_000, 1e-3, 0, 1)).unwrap();
    let within = (fk.value - e.h_bar).abs() <= 3.0 * fk.std_error;
    outcome(
        gap <= bound && within,
        format!(
            "eigenvalue {:.6}, discount {:.6} (gap {gap:.1e} <= {bound:.1e}), Feynman-Kac {:.4} +/- {:.4}",
            e.h_bar, d.h_bar, fk.value, fk.std_error
        ),
    )
}

fn c4_subcritical_closed_forms() -> Outcome {
    let m = model("correlated-1d");
    let exact = h_bar_subcritical_closed_1d(
        |y: f64| 1.0 + 0.5 * (TAU * y).sin(),
        |y: f64| 1.0 + 0.25 * (TAU * y).cos(),
        1.0,
        8192,
    )
    .unwrap();
    let err = |n: usize| {
        let grid = TorusGrid::uniform(1, n).unwrap();
        let s =
            solve_cell_subcritical(&m, &grid, &[0.0], &[1.0], &default_deltas(), 1e-10).unwrap();
        (s.h_bar - exact).abs() / exact
    };
    let (e256, e512) = (err(256), err(512));
    let s = model("sine-1d");
    let grid = TorusGrid::uniform(1, 256).unwrap();
    let max = h_bar_uncorrelated_max(&s, &grid, &[0.0], &[1.0]);
    let cell = solve_cell_subcritical(&s, &grid, &[0.0], &[1.0], &default_deltas(), 1e-10)
        .unwrap()
        .h_bar;
    let e_max = (cell - max).abs() / max;
    outcome(
        e256 < 1e-2 && e512 <= 0.5 * e256 && e_max < 1e-2,
        format!(
            "quadrature: N=256 {e256:.2e}, N=512 {e512:.2e} (ratio {:.2}); max formula {e_max:.2e}",
            e512 / e256
        ),
    )
}

const XS: [f64; 5] = [-1.0, -0.3, 0.0, 0.4, 1.2];
const PS: [f64; 5] = [-2.0, -0.7, 0.3, 1.0, 1.8];

fn c5_structural_bounds() -> Outcome {
    let mut worst = 0.0f64;
    let mut zero_ok = true;
    let mut count = 0;
    for name in catalog_names() {
        let m = model(name);
        for alpha in [1.5, 2.0, 4.0] {
            let eh = dispatcher(&m, alpha, 32);
            let tol = 2.0 * eh.options().tol;
            for &x in &XS {
                zero_ok &= eh.evaluate(&[x], &[0.0]).unwrap().value == 0.0;
                for &p in &PS {
                    let v = eh.evaluate(&[x], &[p]).unwrap().value;
                    let (lo, hi) = potential_range(eh.model(), eh.grid(), &[x], &[p]);
                    let excess = (lo - v).max(v - hi).max(0.0) / hi.max(1.0);
                    worst = worst.max(excess / tol);
                    count += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1.0 && zero_ok,
        format!(
            "{count} evaluations, worst excursion {worst:.2} x (2 tol), H(x, 0) = 0: {zero_ok}"
        ),
    )
}

fn c6_homogeneity() -> Outcome {
    let mut super_worst = 0.0f64;
    let mut sub_worst = 0.0f64;
    let mut semi_worst = 0.0f64;
    let mut semi_models = Vec::new();
    for name in catalog_names() {
        let m = model(name);
        let eh = dispatcher(&m, 4.0, 64);
        for &x in &XS {
            let a = eh.evaluate(&[x], &[0.7]).unwrap().value;
            for lambda in [3.0, -0.5] {
                let b = eh.evaluate(&[x], &[0.7 * lambda]).unwrap().value;
                super_worst = super_worst.max((b - lambda * lambda * a).abs() / b.max(1e-300));
            }
        }
        let eh = dispatcher(&m, 1.5, 64);
        let tol = eh.options().tol;
        let a = eh.evaluate(&[0.2], &[0.8]).unwrap().value.sqrt();
        let b = eh.evaluate(&[0.2], &[1.6]).unwrap().value.sqrt();
        sub_worst = sub_worst.max((b - 2.0 * a).abs() / b / tol);
        let t = m.traits();
        if t.uncorrelated || t.sigma_y_independent {
            semi_models.push(*name);
            let eh = dispatcher(&m, 2.0, 48);
            let tol = eh.options().tol;
            for mu in [0.25, 0.5, 0.9f64] {
                for p in [0.6, 1.3] {
                    let lhs = mu * eh.evaluate(&[0.2], &[p / mu]).unwrap().value;
                    let rhs = eh.evaluate(&[0.2], &[p / mu.sqrt()]).unwrap().value;
                    semi_worst = semi_worst.max((rhs - lhs) / lhs.max(1.0) / tol);
                }
            }
        }
    }
    outcome(
        super_worst < 1e-12 && sub_worst <= 1.0 && semi_worst <= 1.0,
        format!(
            "supercritical {super_worst:.1e}; subcritical {sub_worst:.2} x tol; critical semi-homogeneity {semi_worst:.2} x tol on {}",
            semi_models.join(", ")
        ),
    )
}

fn c7_legendre_growth() -> Outcome {
    let l = EffectiveLagrangian::new(Arc::new(QuadraticHamiltonian::scalar(0.09).unwrap()));
    let conj = [-3.0, -0.4, 0.05, 1.0, 7.5]
        .iter()
        .map(|&q: &f64| {
            let exact = q * q / 0.36;
            (l.eval(&[0.0], &[q]).unwrap() - exact).abs() / exact.max(1.0)
        })
        .fold(0.0, f64::max);
    let mut fails = Vec::new();
    for name in catalog_names() {
        let cfg = Config {
            model: name.to_string(),
            alpha: 4.0,
            rate: twoscale_cli::config::RateSection {
                x_count: 5,
                segments: 32,
                restarts: 1,
                ..Default::default()
            },
            ..Config::default()
        };
        let checks = execute("rate", &cfg, None).unwrap().checks;
        let sandwich = checks
            .iter()
            .find(|c| c.name == "growth sandwich")
            .expect("rate reports the growth sandwich");
        if !sandwich.passed {
            fails.push(format!("{name} {}", sandwich.value));
        }
    }
    outcome(
        conj < 1e-8 && fails.is_empty(),
        format!(
            "quadratic conjugate error {conj:.1e}; growth sandwich on {} models, failures: [{}]",
            catalog_names().len(),
            fails.join(", ")
        ),
    )
}

fn ldp(name: &str, alpha: f64, eps: &[f64], paths: usize, depth: Option<f64>) -> Check {
    let mut cfg = Config {
        model: name.to_string(),
        alpha,
        ..Config::default()
    };
    cfg.ldp.eps = eps.to_vec();
    cfg.ldp.paths = paths;
    cfg.ldp.rate_depth = depth;
    check_of(&cfg, "ldp-verify", 8).remove(0)
}

fn c8_ldp() -> (Outcome, String) {
    let constant = ldp("const-sigma", 2.0, &[0.4, 0.2, 0.1, 0.05], 200_000, None);
    // same rate depth as the constant-volatility case, 0.5^2 / (4 * 0.09)
    let sine = ldp("sine-1d", 4.0, &[0.4, 0.2, 0.1], 200_000, Some(0.25 / 0.36));
    let literal = ldp("sine-1d", 4.0, &[0.4, 0.2, 0.1], 20_000, None);
    (
        outcome(
            constant.passed && sine.passed,
            format!(
                "const-sigma gap {:.3} ({}); sine-1d alpha 4 gap {:.3} ({})",
                constant.value, constant.detail, sine.value, sine.detail
            ),
        ),
        format!(
            "sine-1d alpha 4 at d = 0.5: gap {:.3} ({})",
            literal.value, literal.detail
        ),
    )
}

fn c9_v_eps() -> Outcome {
    let cfg = Config {
        alpha: 2.0,
        ..Config::default()
    };
    let c = check_of(&cfg, "pde", 9).remove(0);
    outcome(c.passed, format!("const-sigma: {}", c.detail))
}

fn c10_implied_vol() -> Outcome {
    let m = model("const-sigma");
    let shifted = m.with_phi(Arc::new(|x: &[f64], _, o: &mut [f64]| {
        o[0] = 0.7 + x[0].cos()
    }));
    let spec = OptionSpec::call(1.0, 1.2, 1.0).unwrap();
    let limit = |m: &Model, alpha: f64| {
        let eh = dispatcher(m, alpha, 64);
        let e = RateEvaluator::new(
            EffectiveLagrangian::new(Arc::new(eh)),
            RateOptions::default(),
        )
        .unwrap();
        implied_vol_limit(&e, &spec).unwrap()
    };
    let mut limit_ok = true;
    let mut shift_ok = true;
    let mut v = 0.0;
    for alpha in [1.5, 2.0, 4.0] {
        v = limit(&m, alpha);
        limit_ok &= (v - 0.18).abs() <= 1e-6;
        shift_ok &= limit(&shifted, alpha).to_bits() == v.to_bits();
    }
    let cfg = Config {
        alpha: 2.0,
        ..Config::default()
    };
    let checks = check_of(&cfg, "smile", 10);
    let gap = checks
        .iter()
        .find(|c| c.name.starts_with("smile final gap"))
        .unwrap();
    outcome(
        limit_ok && shift_ok && gap.passed,
        format!(
            "limit {v:.12}; drift shift bit-identical: {shift_ok}; final MC term gap {:.3}",
            gap.value
        ),
    )
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_twoscale");
    let run = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .env_remove("TWOSCALE_CONFIG")
            .env_remove("TWOSCALE_CATALOG")
            .env_remove("TWOSCALE_MODEL")
            .output()
            .unwrap()
    };
    let p = |p: &Path| p.to_str().unwrap().to_string();
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[ldp]\npaths = 50000\n[smile]\npaths = 20000\n").unwrap();
    run(&[
        "--config",
        &p(&cfg),
        "--catalog",
        "sine-1d",
        "--alpha",
        "2",
        "--out-dir",
        &p(&first),
        "pipeline",
    ]);
    let manifest = first.join("pipeline.manifest.json");
    if !manifest.is_file() {
        return outcome(false, "pipeline wrote no manifest");
    }
    run(&["--out-dir", &p(&second), "rerun", &p(&manifest)]);
    let mut names: Vec<_> = fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| fs::read(first.join(n)).ok() != fs::read(second.join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    outcome(
        differing.is_empty(),
        format!(
            "{} files compared, differing: [{}]",
            names.len(),
            differing.join(", ")
        ),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |n: u8, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2}: {tag} ({:.1} s) {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failed.push(n);
        }
    };
    report(1, &c1_invariant_measure);
    report(2, &c2_supercritical_closed_form);
    report(3, &c3_critical_cross_validation);
    report(4, &c4_subcritical_closed_forms);
    report(5, &c5_structural_bounds);
    report(6, &c6_homogeneity);
    report(7, &c7_legendre_growth);
    let info = std::cell::RefCell::new(String::new());
    report(8, &|| {
        let (o, literal) = c8_ldp();
        *info.borrow_mut() = literal;
        o
    });
    println!("     info: {}", info.borrow());
    report(9, &c9_v_eps);
    report(10, &c10_implied_vol);
    report(11, &c11_determinism);
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
