//! The individual commands. Each returns its files and checks without touching the disk.

use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use twoscale::cell::{
    h_bar_subcritical_closed_1d, h_bar_uncorrelated_max, solve_cell_critical_discount,
    solve_cell_critical_eigen, solve_cell_subcritical,
};
use twoscale::hamiltonian::{
    EffectiveHamiltonian, Hamiltonian, HamiltonianMethod, HamiltonianOptions, TabulatedHamiltonian,
};
use twoscale::invariant::{potential_range, solve_invariant_measure};
use twoscale::mc::{ldp_slope, simulate, v_eps_from_samples, Region, SimConfig};
use twoscale::model::{
    catalog_model, classify_regime, probe_model, validate_model, RegimeKind, TorusGrid,
};
use twoscale::pricing::{
    half_line_infimum, implied_vol_from_infimum, mc_smile, otm_rate_infimum, InfimumSearch,
    OptionSpec, RateEvaluator,
};
use twoscale::rate::{
    growth_bounds, hopf_lax, rate_general, rate_x_independent, solve_effective_pde,
    EffectiveLagrangian, LineGrid, RateOptions, TestFunction,
};
use twoscale::stats::effective_sample_size;
use twoscale::Model;

use crate::config::Config;
use crate::manifest::{opt, Artifact, CsvTable};
use crate::CliError;

/// One verified property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion number the check instantiates, if any.
    pub criterion: Option<u8>,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn at_most(
        name: &str,
        criterion: Option<u8>,
        value: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            criterion,
            value,
            threshold,
            passed: value <= threshold,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct CommandOutput {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
}

impl CommandOutput {
    fn extend(&mut self, other: CommandOutput) {
        self.artifacts.extend(other.artifacts);
        self.checks.extend(other.checks);
    }
}

pub fn model(cfg: &Config) -> Result<Model, CliError> {
    Ok(catalog_model::<f64>(&cfg.model, &cfg.params)?)
}

pub fn effective_hamiltonian(
    cfg: &Config,
    model: &Model,
) -> Result<Arc<EffectiveHamiltonian<f64>>, CliError> {
    let regime = classify_regime(cfg.alpha)?;
    let opts = HamiltonianOptions {
        resolution: cfg.resolution,
        tol: cfg.tol,
        ..HamiltonianOptions::default()
    };
    Ok(Arc::new(EffectiveHamiltonian::new(model, regime, opts)?))
}

fn cheap(method: HamiltonianMethod) -> bool {
    !matches!(
        method,
        HamiltonianMethod::Eigenvalue | HamiltonianMethod::CellSolver
    )
}

/// Hamiltonian used by the rate and PDE solvers: the dispatcher itself when it
/// has a closed form, otherwise a table over `[x_lo, x_hi] x [-p_max, p_max]`.
pub fn rate_hamiltonian(
    eh: &Arc<EffectiveHamiltonian<f64>>,
    x_lo: f64,
    x_hi: f64,
    p_max: f64,
) -> Result<Arc<dyn Hamiltonian<f64>>, CliError> {
    if eh.x_independent() {
        let probe = eh.evaluate(&[0.0], &[1.0])?;
        if cheap(probe.method) {
            return Ok(eh.clone());
        }
        return Ok(Arc::new(TabulatedHamiltonian::new(eh.as_ref(), p_max, 64)?));
    }
    Ok(Arc::new(TabulatedHamiltonian::with_x_range(
        eh.as_ref(),
        x_lo,
        x_hi,
        33,
        p_max,
        32,
    )?))
}

fn momentum_bound(eh: &EffectiveHamiltonian<f64>, span: f64, t: f64) -> f64 {
    let (nu, _) = eh.growth();
    (span / t / nu.max(1e-3)).max(1.0) * 1.5
}

fn rate_options(cfg: &Config) -> RateOptions {
    RateOptions {
        segments: cfg.rate.segments,
        restarts: cfg.rate.restarts,
        seed: cfg.seed,
        ..RateOptions::default()
    }
}

fn one_dimensional(model: &Model, what: &str) -> Result<(), CliError> {
    if model.n() != 1 {
        return Err(CliError::Config(format!(
            "{what} supports models with n = 1, got n = {}",
            model.n()
        )));
    }
    Ok(())
}

pub fn validate(cfg: &Config) -> Result<CommandOutput, CliError> {
    let m = model(cfg)?;
    let r = probe_model(&m, cfg.probe_resolution)?;
    validate_model(&m, cfg.probe_resolution)?;
    let report = json!({
        "model": m.name(),
        "n": m.n(), "m": m.m(), "r": m.r(),
        "probe_resolution": r.probe_resolution,
        "periodicity_defect": r.periodicity_defect,
        "ellipticity_ratio": r.ellipticity_ratio,
        "theta": r.theta,
        "sup_phi": r.sup_phi,
        "sup_sigma": r.sup_sigma,
        "sup_b": r.sup_b,
        "sup_tau": r.sup_tau,
        "lipschitz_estimate": r.lipschitz_estimate,
        "nu_hat": r.nu_hat,
        "c_hat": r.c_hat,
        "tau_sigma_max": r.tau_sigma_max,
        "passed": r.passed,
    });
    Ok(CommandOutput {
        artifacts: vec![Artifact::json("validate.json", &report)],
        checks: vec![Check {
            name: "model validation".into(),
            criterion: None,
            value: r.ellipticity_ratio,
            threshold: r.theta,
            passed: r.passed,
            detail: format!("periodicity defect {:e}", r.periodicity_defect),
        }],
    })
}

pub fn invariant(cfg: &Config) -> Result<CommandOutput, CliError> {
    let m = model(cfg)?;
    let grid = TorusGrid::uniform(m.m(), cfg.resolution)?;
    let mu = solve_invariant_measure(&m, &grid, cfg.tol)?;
    let mut header: Vec<String> = (0..m.m()).map(|k| format!("y{k}")).collect();
    header.push("density".into());
    let mut table = CsvTable::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut y = vec![0.0; m.m()];
    for (i, d) in mu.density.values().iter().enumerate() {
        grid.node(i, &mut y);
        table.row(y.iter().chain(std::iter::once(d)).map(|v| v.to_string()));
    }
    let summary = json!({
        "model": m.name(),
        "resolution": cfg.resolution,
        "residual": mu.residual_norm,
        "mass": mu.mass,
        "min_density": mu.density.min(),
        "max_density": mu.density.max(),
    });
    let mass_err = (mu.mass - 1.0).abs();
    Ok(CommandOutput {
        artifacts: vec![
            table.finish("invariant.csv"),
            Artifact::json("invariant.json", &summary),
        ],
        checks: vec![
            Check::at_most("invariant mass", Some(1), mass_err, 1e-12, "|mass - 1|"),
            Check::at_most(
                "invariant residual",
                Some(1),
                mu.residual_norm,
                cfg.tol,
                "relative Fokker-Planck residual",
            ),
        ],
    })
}

pub fn hamiltonian(cfg: &Config) -> Result<CommandOutput, CliError> {
    let m = model(cfg)?;
    let eh = effective_hamiltonian(cfg, &m)?;
    let n = m.n();
    let hs = &cfg.hamiltonian;
    let mut table = CsvTable::new(&["x", "p", "h_bar", "method", "residual", "lower", "upper"]);
    let mut worst_bound: f64 = f64::NEG_INFINITY;
    for &x0 in &hs.x {
        let x = vec![x0; n];
        for j in 0..hs.p_count {
            let p0 = if hs.p_count == 1 {
                hs.p_min
            } else {
                hs.p_min + (hs.p_max - hs.p_min) * j as f64 / (hs.p_count - 1) as f64
            };
            let mut p = vec![0.0; n];
            p[0] = p0;
            let v = eh.evaluate(&x, &p)?;
            let (lo, hi) = potential_range(&m, eh.grid(), &x, &p);
            let scale = hi.max(1.0);
            worst_bound = worst_bound
                .max((lo - v.value) / scale)
                .max((v.value - hi) / scale);
            table.row([
                x0.to_string(),
                p0.to_string(),
                v.value.to_string(),
                v.method.to_string(),
                v.residual.to_string(),
                lo.to_string(),
                hi.to_string(),
            ]);
        }
    }
    let mut checks = vec![Check::at_most(
        "potential bounds",
        Some(5),
        worst_bound.max(0.0),
        2.0 * cfg.tol,
        "largest excursion outside [min, max] of |sigma^T p|^2, relative",
    )];
    let x = vec![hs.x[0]; n];
    let zero = eh.evaluate(&x, &vec![0.0; n])?.value;
    checks.push(Check::at_most(
        "zero momentum",
        Some(5),
        zero.abs(),
        0.0,
        "|H(x, 0)|",
    ));
    checks.extend(regime_checks(cfg, &m, &eh, &x)?);
    let summary = json!({
        "model": m.name(),
        "alpha": cfg.alpha,
        "regime": eh.regime().kind.as_str(),
        "growth": eh.growth(),
        "nu": eh.nu(),
        "structural_condition": eh.structural_condition(),
        "checks": checks,
    });
    Ok(CommandOutput {
        artifacts: vec![
            table.finish("hamiltonian.csv"),
            Artifact::json("hamiltonian.json", &summary),
        ],
        checks,
    })
}

/// Cross-checks that depend on the regime, at `x` and unit momentum.
fn regime_checks(
    cfg: &Config,
    m: &Model,
    eh: &EffectiveHamiltonian<f64>,
    x: &[f64],
) -> Result<Vec<Check>, CliError> {
    let n = m.n();
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    let grid = eh.grid();
    let (_, vmax) = potential_range(m, grid, x, &p);
    let scale = vmax.max(1.0);
    let h = |q: f64| -> Result<f64, CliError> {
        let mut pp = vec![0.0; n];
        pp[0] = q;
        Ok(eh.evaluate(x, &pp)?.value)
    };
    let mut out = Vec::new();
    match eh.regime().kind {
        RegimeKind::Supercritical => {
            let (a, b) = (h(1.0)?, h(2.0)?);
            out.push(Check::at_most(
                "2-homogeneity",
                Some(6),
                (b - 4.0 * a).abs() / (4.0 * a.abs()).max(1e-300),
                1e-12,
                "|H(2p) - 4 H(p)| / |4 H(p)|",
            ));
        }
        RegimeKind::Critical => {
            let e = solve_cell_critical_eigen(m, grid, x, &p, cfg.tol)?;
            let d = solve_cell_critical_discount(
                m,
                grid,
                x,
                &p,
                &HamiltonianOptions::<f64>::default().deltas,
                cfg.tol,
            )?;
            let tol = (e.tol + d.tol).max(1e-3) * scale;
            out.push(Check::at_most(
                "eigenvalue vs discount",
                Some(3),
                (e.h_bar - d.h_bar).abs(),
                2.0 * tol,
                format!("eigenvalue {} discount {}", e.h_bar, d.h_bar),
            ));
            let traits = m.traits();
            if traits.uncorrelated || traits.sigma_y_independent {
                let mut worst: f64 = 0.0;
                for mu in [0.25, 0.5, 0.9] {
                    let lhs = mu * h(1.0 / mu)?;
                    let rhs = h(1.0 / mu.sqrt())?;
                    worst = worst.max((rhs - lhs) / lhs.abs().max(1.0));
                }
                out.push(Check::at_most(
                    "semi-homogeneity",
                    Some(6),
                    worst.max(0.0),
                    cfg.tol,
                    "largest relative excess of H(p / sqrt mu) over mu H(p / mu)",
                ));
            } else {
                log::info!("semi-homogeneity not checked: the fast drift depends on p for correlated models");
            }
        }
        RegimeKind::Subcritical => {
            let deltas = HamiltonianOptions::<f64>::default().deltas;
            let cell = solve_cell_subcritical(m, grid, x, &p, &deltas, cfg.tol)?;
            let traits = m.traits();
            let reference = if traits.uncorrelated {
                Some(("max formula", h_bar_uncorrelated_max(m, grid, x, &p)))
            } else if m.n() == 1 && m.m() == 1 && m.r() == 1 {
                let sigma = |y: f64| {
                    let mut o = [0.0];
                    m.sigma(x, &[y], &mut o);
                    o[0]
                };
                let tau = |y: f64| {
                    let mut o = [0.0];
                    m.tau(&[y], &mut o);
                    o[0]
                };
                Some((
                    "quadrature",
                    h_bar_subcritical_closed_1d(sigma, tau, 1.0, 4096)?,
                ))
            } else {
                None
            };
            if let Some((label, v)) = reference {
                out.push(Check::at_most(
                    "cell solver vs closed form",
                    Some(4),
                    (cell.h_bar - v).abs() / v.abs().max(1e-300),
                    1e-2,
                    format!("cell {} {label} {v}", cell.h_bar),
                ));
            }
            let mut p2 = p.clone();
            p2[0] = 2.0;
            let cell2 = solve_cell_subcritical(m, grid, x, &p2, &deltas, cfg.tol)?;
            out.push(Check::at_most(
                "1-homogeneity of H0",
                Some(6),
                (cell2.h_zero - 2.0 * cell.h_zero).abs() / (2.0 * cell.h_zero).max(1e-300),
                cell.tol.max(cfg.tol),
                "|H0(2p) - 2 H0(p)| / |2 H0(p)|",
            ));
        }
    }
    Ok(out)
}

fn lagrangian(
    eh: &Arc<EffectiveHamiltonian<f64>>,
    x_lo: f64,
    x_hi: f64,
    t: f64,
) -> Result<EffectiveLagrangian<f64>, CliError> {
    let span = (x_hi - x_lo).abs().max(1e-3);
    let hr = rate_hamiltonian(eh, x_lo - 0.5, x_hi + 0.5, momentum_bound(eh, span, t))?;
    Ok(EffectiveLagrangian::new(hr))
}

pub fn rate(cfg: &Config) -> Result<CommandOutput, CliError> {
    let m = model(cfg)?;
    one_dimensional(&m, "rate")?;
    let eh = effective_hamiltonian(cfg, &m)?;
    let rs = &cfg.rate;
    let xs: Vec<f64> = (0..rs.x_count)
        .map(|i| {
            if rs.x_count == 1 {
                rs.x_min
            } else {
                rs.x_min + (rs.x_max - rs.x_min) * i as f64 / (rs.x_count - 1) as f64
            }
        })
        .collect();
    let lo = xs.iter().copied().fold(rs.x0, f64::min);
    let hi = xs.iter().copied().fold(rs.x0, f64::max);
    let l = lagrangian(&eh, lo, hi, rs.t)?;
    let opts = rate_options(cfg);
    let mut table = CsvTable::new(&[
        "x",
        "rate",
        "straight_line",
        "lower_bound",
        "upper_bound",
        "converged",
        "iterations",
    ]);
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for &x in &xs {
        let r = if l.x_independent() {
            rate_x_independent(&l, &[rs.x0], &[x], rs.t, rs.segments)?
        } else {
            rate_general(&l, &[rs.x0], &[x], rs.t, &opts)?
        };
        let (glo, ghi) = growth_bounds(&l, &[rs.x0], &[x], rs.t);
        let slack = 1e-6 * r.value.abs().max(1e-12);
        worst = worst.max(glo - r.value - slack).max(r.value - ghi - slack);
        all_converged &= r.converged;
        table.row([
            x.to_string(),
            r.value.to_string(),
            r.straight_line.to_string(),
            glo.to_string(),
            ghi.to_string(),
            r.converged.to_string(),
            r.iterations.to_string(),
        ]);
    }
    let mut checks = vec![Check::at_most(
        "growth sandwich",
        Some(7),
        worst.max(0.0),
        0.0,
        "largest excursion of I outside |x - x0|^2 / (4 t) [1/c, 1/nu]",
    )];
    checks.push(Check {
        name: "path optimizer converged".into(),
        criterion: None,
        value: f64::from(u8::from(all_converged)),
        threshold: 1.0,
        passed: all_converged,
        detail: String::new(),
    });
    if eh.regime().kind == RegimeKind::Supercritical && eh.x_independent() {
        let s2 = eh.evaluate(&[rs.x0], &[1.0])?.value;
        let mut worst: f64 = 0.0;
        for q in [-2.0, -0.5, 0.3, 1.0, 2.5] {
            let v = l.eval(&[rs.x0], &[q])?;
            worst = worst.max((v - q * q / (4.0 * s2)).abs() / (q * q / (4.0 * s2)));
        }
        checks.push(Check::at_most(
            "quadratic conjugate",
            Some(7),
            worst,
            1e-8,
            "relative error of L(q) against q^2 / (4 H(1))",
        ));
    }
    let summary = json!({
        "model": m.name(),
        "alpha": cfg.alpha,
        "x0": rs.x0,
        "t": rs.t,
        "growth": l.growth(),
        "x_independent": l.x_independent(),
        "checks": checks,
    });
    Ok(CommandOutput {
        artifacts: vec![
            table.finish("rate.csv"),
            Artifact::json("rate.json", &summary),
        ],
        checks,
    })
}

pub fn pde(cfg: &Config) -> Result<CommandOutput, CliError> {
    let m = model(cfg)?;
    one_dimensional(&m, "pde")?;
    let eh = effective_hamiltonian(cfg, &m)?;
    let ps = &cfg.pde;
    let x0 = cfg.rate.x0;
    let (lo, hi) = (x0 - ps.half_width, x0 + ps.half_width);
    let hr = rate_hamiltonian(&eh, lo, hi, ps.slope.abs().max(1.0) * 2.0)?;
    let l = EffectiveLagrangian::new(hr.clone());
    let h = TestFunction::Cap {
        knot: x0 + ps.knot,
        slope: ps.slope,
        floor: ps.floor,
    };
    let fine = solve_effective_pde(
        hr.as_ref(),
        &h,
        ps.t,
        LineGrid::new(lo, hi, ps.nodes)?,
        ps.cfl,
    )?;
    let coarse_nodes = (ps.nodes - 1) / 2 + 1;
    let coarse = solve_effective_pde(
        hr.as_ref(),
        &h,
        ps.t,
        LineGrid::new(lo, hi, coarse_nodes)?,
        ps.cfl,
    )?;
    let probes: Vec<f64> = (0..ps.probes)
        .map(|i| {
            x0 - ps.half_width / 2.0 + ps.half_width * i as f64 / (ps.probes.max(2) - 1) as f64
        })
        .collect();
    let mut artifacts_extra = None;
    let mut table = CsvTable::new(&[
        "x",
        "pde",
        "pde_coarse",
        "hopf_lax",
        "error",
        "error_coarse",
    ]);
    let (mut err_f, mut err_c) = (0.0f64, 0.0f64);
    for &x in &probes {
        let (vf, vc) = (fine.interpolate(x), coarse.interpolate(x));
        let hl = if l.x_independent() {
            Some(hopf_lax(&l, &h, ps.t, x)?)
        } else {
            None
        };
        if let Some(v) = hl {
            err_f = err_f.max((vf - v).abs());
            err_c = err_c.max((vc - v).abs());
        }
        table.row([
            x.to_string(),
            vf.to_string(),
            vc.to_string(),
            opt(hl),
            opt(hl.map(|v| (vf - v).abs())),
            opt(hl.map(|v| (vc - v).abs())),
        ]);
    }
    let mut checks = Vec::new();
    if l.x_independent() {
        checks.push(Check {
            name: "PDE error shrinks under refinement".into(),
            criterion: None,
            value: err_f,
            threshold: err_c,
            passed: err_f < err_c,
            detail: format!(
                "{} nodes {err_f:e}, {coarse_nodes} nodes {err_c:e}",
                ps.nodes
            ),
        });
        let (check, mc_table) = v_eps_convergence(cfg, &m, &l, &h, &probes)?;
        checks.push(check);
        artifacts_extra = Some(mc_table);
    }
    let mut grid_table = CsvTable::new(&["x", "pde"]);
    for i in 0..fine.grid.n {
        grid_table.row([fine.grid.node(i).to_string(), fine.values[i].to_string()]);
    }
    let mut artifacts = vec![table.finish("pde.csv"), grid_table.finish("pde_grid.csv")];
    artifacts.extend(artifacts_extra);
    Ok(CommandOutput { artifacts, checks })
}

/// Largest probe error of the Monte Carlo `v^eps` against the Hopf–Lax value,
/// per scale level; it must decrease, with at most one increase no larger than
/// the standard error of the finer level.
/// Probes whose exponential weights have a smaller effective sample size are
/// reported but left out of the convergence check.
const MIN_EFFECTIVE_N: f64 = 100.0;

fn v_eps_convergence(
    cfg: &Config,
    m: &Model,
    l: &EffectiveLagrangian<f64>,
    h: &TestFunction<f64>,
    probes: &[f64],
) -> Result<(Check, Artifact), CliError> {
    let ps = &cfg.pde;
    let hf = |x: &[f64]| h.eval(x[0]);
    let mut table = CsvTable::new(&[
        "epsilon",
        "x",
        "v_eps",
        "std_error",
        "effective_n",
        "hopf_lax",
        "error",
        "used",
    ]);
    // (epsilon, x, estimate, effective n, Hopf-Lax value) per probe
    let mut rows = Vec::with_capacity(ps.eps.len() * probes.len());
    for &e in &ps.eps {
        for &x in probes {
            let sim = SimConfig::new(
                e,
                cfg.alpha,
                ps.t,
                ps.paths,
                cfg.seed,
                vec![x],
                vec![0.0; m.m()],
            );
            let samples = simulate(m, &sim)?;
            let est = v_eps_from_samples(&samples, &sim, &hf)?;
            let log_w: Vec<f64> = (0..samples.len())
                .map(|k| hf(samples.x_of(k)) / e)
                .collect();
            let ess = effective_sample_size(&log_w);
            rows.push((e, x, est, ess, hopf_lax(l, h, ps.t, x)?));
        }
    }
    let used: Vec<bool> = (0..probes.len())
        .map(|j| {
            rows.iter()
                .skip(j)
                .step_by(probes.len())
                .all(|r| r.3 >= MIN_EFFECTIVE_N)
        })
        .collect();
    let mut sups = Vec::with_capacity(ps.eps.len());
    for level in rows.chunks(probes.len()) {
        let (mut sup, mut se_at) = (0.0f64, 0.0f64);
        for ((e, x, est, ess, hl), &u) in level.iter().zip(&used) {
            let err = (est.value - hl).abs();
            if u && err > sup {
                sup = err;
                se_at = est.std_error;
            }
            table.row([
                e.to_string(),
                x.to_string(),
                est.value.to_string(),
                est.std_error.to_string(),
                ess.to_string(),
                hl.to_string(),
                err.to_string(),
                u.to_string(),
            ]);
        }
        sups.push((sup, se_at));
    }
    let n_used = used.iter().filter(|&&u| u).count();
    let mut violations = 0;
    let mut worst = 0.0f64;
    for w in sups.windows(2) {
        let rise = w[1].0 - w[0].0;
        if rise > 0.0 {
            violations += if rise <= w[1].1 { 1 } else { 2 };
            worst = worst.max(rise);
        }
    }
    let detail = sups
        .iter()
        .zip(&ps.eps)
        .map(|((s, se), e)| format!("eps {e}: {s:e} (se {se:e})"))
        .collect::<Vec<_>>()
        .join(", ")
        + &format!(", {n_used} of {} probes used", probes.len());
    let check = Check {
        name: "v_eps approaches Hopf-Lax".into(),
        criterion: Some(9),
        value: worst,
        threshold: sups.last().map_or(0.0, |s| s.1),
        passed: violations <= 1 && sups.len() >= 2 && n_used > 0,
        detail,
    };
    Ok((check, table.finish("v_eps.csv")))
}

/// Distance `d <= reach` with `I(x0 + side d) = depth`, by bisection on the coarse rate.
fn distance_at_depth(
    eval: &RateEvaluator<f64>,
    x0: f64,
    side: f64,
    reach: f64,
    t: f64,
    depth: f64,
) -> Result<f64, CliError> {
    if !(depth > 0.0) {
        return Err(CliError::Config(format!(
            "rate_depth must be positive, got {depth}"
        )));
    }
    let eval = eval.coarse();
    let (mut lo, mut hi) = (0.0, reach);
    if eval.rate(x0, x0 + side * hi, t)? < depth {
        return Err(CliError::Config(format!(
            "rate_depth {depth} is not reached within distance {reach}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval.rate(x0, x0 + side * mid, t)? < depth {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-8 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn ldp_verify(cfg: &Config, out_name: &str) -> Result<CommandOutput, CliError> {
    let m = model(cfg)?;
    one_dimensional(&m, "ldp-verify")?;
    let eh = effective_hamiltonian(cfg, &m)?;
    let ls = &cfg.ldp;
    let x0 = cfg.rate.x0;
    let side = if ls.threshold >= 0.0 { 1.0 } else { -1.0 };
    let reach = match ls.rate_depth {
        Some(depth) => (4.0 * eh.growth().1 * ls.t * depth).sqrt() * 1.01,
        None => ls.threshold.abs(),
    };
    let l = lagrangian(
        &eh,
        x0.min(x0 + side * reach),
        x0.max(x0 + side * reach),
        ls.t,
    )?;
    let eval = RateEvaluator::new(l, rate_options(cfg))?;
    let boundary = match ls.rate_depth {
        Some(depth) => x0 + side * distance_at_depth(&eval, x0, side, reach, ls.t, depth)?,
        None => x0 + ls.threshold,
    };
    let target = -half_line_infimum(&eval, x0, boundary, ls.t, InfimumSearch::Auto)?.value;
    let configs: Vec<SimConfig<f64>> = ls
        .eps
        .iter()
        .map(|&e| {
            SimConfig::new(
                e,
                cfg.alpha,
                ls.t,
                ls.paths,
                cfg.seed,
                vec![x0],
                vec![0.0; m.m()],
            )
        })
        .collect();
    let region = Region::HalfLine {
        threshold: boundary,
        upper: ls.threshold >= 0.0,
    };
    let report = ldp_slope(&m, &configs, &region, Some(target))?;
    let mut table = CsvTable::new(&[
        "kind",
        "epsilon",
        "hits",
        "n",
        "scaled_log_p",
        "lower",
        "upper",
        "steps",
        "seed",
        "dropped",
        "intercept",
        "intercept_se",
        "slope",
        "target",
        "relative_gap",
        "boundary",
    ]);
    for r in &report.rows {
        table.row([
            "level".to_string(),
            r.epsilon.to_string(),
            r.hits.to_string(),
            r.n.to_string(),
            r.scaled_log_p.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.steps.to_string(),
            r.seed.to_string(),
            r.dropped.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]);
    }
    table.row([
        "summary".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        report.intercept.to_string(),
        report.intercept_se.to_string(),
        report.slope.to_string(),
        target.to_string(),
        opt(report.relative_gap),
        boundary.to_string(),
    ]);
    let gap = report.relative_gap.unwrap_or(f64::INFINITY);
    Ok(CommandOutput {
        artifacts: vec![table.finish(out_name)],
        checks: vec![Check::at_most(
            "LDP intercept",
            Some(8),
            gap,
            ls.tolerance,
            format!(
                "intercept {} target {target} boundary {boundary}",
                report.intercept
            ),
        )],
    })
}

pub fn smile(cfg: &Config, out_name: &str) -> Result<CommandOutput, CliError> {
    let m = model(cfg)?;
    one_dimensional(&m, "smile")?;
    let eh = effective_hamiltonian(cfg, &m)?;
    let ss = &cfg.smile;
    let x0 = ss.s0.ln();
    let lo = ss.strikes.iter().map(|k| k.ln()).fold(x0, f64::min);
    let hi = ss.strikes.iter().map(|k| k.ln()).fold(x0, f64::max);
    let l = lagrangian(&eh, lo, hi, ss.t)?;
    let (nu, c) = l.growth();
    let eval = RateEvaluator::new(l, rate_options(cfg))?;
    let mut table = CsvTable::new(&[
        "kind",
        "strike",
        "epsilon",
        "maturity",
        "price",
        "price_se",
        "hits",
        "n",
        "implied_var",
        "implied_var_lower",
        "implied_var_upper",
        "target",
        "price_decay",
    ]);
    let mut checks = Vec::new();
    for &k in &ss.strikes {
        let spec = if k > ss.s0 {
            OptionSpec::call(ss.s0, k, ss.t)?
        } else {
            OptionSpec::put(ss.s0, k, ss.t)?
        };
        let inf = otm_rate_infimum(&eval, &spec, InfimumSearch::Auto)?.value;
        let limit = implied_vol_from_infimum(&spec, inf)?;
        let decay = -inf;
        let configs: Vec<SimConfig<f64>> = ss
            .eps
            .iter()
            .map(|&e| {
                SimConfig::new(
                    e,
                    cfg.alpha,
                    ss.t,
                    ss.paths,
                    cfg.seed,
                    vec![x0],
                    vec![0.0; m.m()],
                )
            })
            .collect();
        let report = mc_smile(&m, &spec, &configs, Some(limit))?;
        table.row([
            "limit".to_string(),
            k.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            limit.to_string(),
            decay.to_string(),
        ]);
        for r in &report.rows {
            table.row([
                "level".to_string(),
                k.to_string(),
                r.epsilon.to_string(),
                r.maturity.to_string(),
                r.price.to_string(),
                r.price_se.to_string(),
                r.hits.to_string(),
                r.n.to_string(),
                opt(r.implied_var),
                opt(r.implied_var_lower),
                opt(r.implied_var_upper),
                limit.to_string(),
                String::new(),
            ]);
        }
        let slack = 1e-9 * limit;
        checks.push(Check {
            name: format!("implied variance limit in growth band (K = {k})"),
            criterion: Some(10),
            value: limit,
            threshold: 2.0 * c,
            passed: limit >= 2.0 * nu - slack && limit <= 2.0 * c + slack,
            detail: format!("band [{}, {}]", 2.0 * nu, 2.0 * c),
        });
        checks.push(Check::at_most(
            &format!("smile final gap (K = {k})"),
            Some(10),
            report.final_gap.unwrap_or(f64::INFINITY),
            ss.tolerance,
            format!("target {limit}"),
        ));
    }
    Ok(CommandOutput {
        artifacts: vec![table.finish(out_name)],
        checks,
    })
}

/// validate, invariant measure (supercritical), Hamiltonian, rate, PDE, LDP and smile in sequence.
pub fn pipeline(cfg: &Config) -> Result<CommandOutput, CliError> {
    let mut out = validate(cfg)?;
    if classify_regime(cfg.alpha)?.kind == RegimeKind::Supercritical {
        out.extend(invariant(cfg)?);
    }
    out.extend(hamiltonian(cfg)?);
    out.extend(rate(cfg)?);
    out.extend(pde(cfg)?);
    out.extend(ldp_verify(cfg, "ldp.csv")?);
    out.extend(smile(cfg, "smile.csv")?);
    let passed = out.checks.iter().all(|c| c.passed);
    let report = json!({
        "model": cfg.model,
        "alpha": cfg.alpha,
        "passed": passed,
        "checks": out.checks,
    });
    out.artifacts.push(Artifact::json("report.json", &report));
    Ok(out)
}
