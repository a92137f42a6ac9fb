use crate::error::{Error, Result};
use crate::mc::{simulate, SimConfig};
use crate::model::VolatilityModel;
use crate::scalar::{lit, to_f64, Real};
use crate::stats::mean_var;

use super::{implied_vol, OptionKind, OptionSpec};

/// Monte Carlo price and implied variance at one `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmileRow {
    pub epsilon: f64,
    /// Option maturity `eps t`.
    pub maturity: f64,
    pub price: f64,
    pub price_se: f64,
    /// Paths finishing in the money.
    pub hits: u64,
    pub n: u64,
    /// Squared implied volatility; `None` without in-the-money paths or when
    /// the price leaves the no-arbitrage interval.
    pub implied_var: Option<f64>,
    /// Squared implied volatilities at `price -/+ price_se`, where defined.
    pub implied_var_lower: Option<f64>,
    pub implied_var_upper: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmileReport {
    pub rows: Vec<SmileRow>,
    /// Limit of the squared implied volatility, when supplied.
    pub target: Option<f64>,
    /// `|sigma^2_eps - target| / target` at the smallest `eps` with a value.
    pub final_gap: Option<f64>,
    /// Relative gaps shrink from row to row among rows with a value.
    pub gaps_shrinking: Option<bool>,
}

/// Prices the option by simulation at each `eps` (maturity `eps t`, spot
/// `e^X`) and inverts Black–Scholes for the implied variance.
pub fn mc_smile<T: Real>(
    model: &VolatilityModel<T>,
    spec: &OptionSpec<T>,
    configs: &[SimConfig<T>],
    target: Option<f64>,
) -> Result<SmileReport> {
    spec.check_otm()?;
    if model.n() != 1 {
        return Err(Error::DimensionMismatch {
            what: "mc_smile",
            detail: format!("option pricing needs n = 1, got {}", model.n()),
        });
    }
    if configs.is_empty() {
        return Err(Error::precondition("mc_smile needs at least one epsilon"));
    }
    if configs.windows(2).any(|w| !(w[1].epsilon < w[0].epsilon)) {
        return Err(Error::precondition(
            "epsilon levels must be strictly decreasing",
        ));
    }
    let x0 = spec.x0();
    for c in configs {
        if c.x0.len() != 1 || (c.x0[0] - x0).abs() > lit::<T>(1e-12) * (T::one() + x0.abs()) {
            return Err(Error::precondition("simulation start must equal log S0"));
        }
        if (c.t - spec.t).abs() > lit::<T>(1e-12) * spec.t {
            return Err(Error::precondition(
                "simulation horizon must equal the option's t",
            ));
        }
    }
    let s0 = to_f64(spec.s0);
    let k = to_f64(spec.k);
    let r = to_f64(spec.r);
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let s = simulate(model, cfg)?;
        let payoff: Vec<f64> =
            s.x.iter()
                .map(|&x| {
                    let st = to_f64(x).exp();
                    match spec.kind {
                        OptionKind::Call => (st - k).max(0.0),
                        OptionKind::Put => (k - st).max(0.0),
                    }
                })
                .collect();
        let hits = payoff.iter().filter(|&&v| v > 0.0).count() as u64;
        let (mean, var) = mean_var(&payoff);
        let maturity = to_f64(cfg.epsilon) * to_f64(spec.t);
        let price = mean * (-r * maturity).exp();
        let price_se = (var / payoff.len() as f64).sqrt() * (-r * maturity).exp();
        let inv = |p: f64| {
            if hits == 0 {
                return None;
            }
            implied_vol(spec.kind, p, s0, k, maturity, r)
                .ok()
                .map(|v| v * v)
        };
        let row = SmileRow {
            epsilon: to_f64(cfg.epsilon),
            maturity,
            price,
            price_se,
            hits,
            n: payoff.len() as u64,
            implied_var: inv(price),
            implied_var_lower: inv(price - price_se),
            implied_var_upper: inv(price + price_se),
            seed: cfg.seed,
        };
        if hits == 0 {
            log::warn!("mc_smile: no in-the-money paths at eps = {}", row.epsilon);
        }
        rows.push(row);
    }
    let gaps: Vec<f64> = match target {
        Some(tg) => rows
            .iter()
            .filter_map(|r| r.implied_var.map(|v| (v - tg).abs() / tg))
            .collect(),
        None => Vec::new(),
    };
    Ok(SmileReport {
        rows,
        target,
        final_gap: gaps.last().copied(),
        gaps_shrinking: if gaps.len() >= 2 {
            Some(gaps.windows(2).all(|w| w[1] <= w[0]))
        } else {
            None
        },
    })
}
