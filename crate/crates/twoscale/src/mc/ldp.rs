use super::{simulate, SimConfig};
use crate::error::{Error, Result};
use crate::model::VolatilityModel;
use crate::scalar::{to_f64, Real};
use crate::stats::{affine_fit, wilson_interval};

/// Target set `B` of the large-deviation estimate (open).
#[derive(Debug, Clone, PartialEq)]
pub enum Region<T> {
    /// `{x_0 > threshold}` when `upper`, `{x_0 < threshold}` otherwise.
    HalfLine { threshold: T, upper: bool },
    /// Open box `lo < x < hi` componentwise.
    Box { lo: Vec<T>, hi: Vec<T> },
}

impl<T: Real> Region<T> {
    pub fn contains(&self, x: &[T]) -> bool {
        match self {
            Region::HalfLine { threshold, upper } => {
                if *upper {
                    x[0] > *threshold
                } else {
                    x[0] < *threshold
                }
            }
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&a, &b))| v > a && v < b),
        }
    }
}

/// One epsilon level of [`ldp_slope`].
#[derive(Debug, Clone, PartialEq)]
pub struct LdpRow {
    pub epsilon: f64,
    pub hits: u64,
    pub n: u64,
    /// `eps log p_hat`; `-inf` without hits.
    pub scaled_log_p: f64,
    /// `eps log` of the Wilson interval ends.
    pub lower: f64,
    pub upper: f64,
    pub steps: usize,
    pub seed: u64,
    /// Excluded from the fit for lack of hits.
    pub dropped: bool,
}

/// Affine extrapolation of `eps log P(X_t in B)` to `eps = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpReport {
    pub rows: Vec<LdpRow>,
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    /// Expected limit `-inf_B I`, when supplied.
    pub target: Option<f64>,
    /// `|intercept - target| / |target|`.
    pub relative_gap: Option<f64>,
}

/// Normal quantile of the 95% Wilson interval.
const Z95: f64 = 1.959_963_984_540_054;

/// Estimates `eps log P(X^eps_t in B)` for each config and fits an affine
/// function of `eps` through the levels with hits. Uncertainty of each level is
/// the Wilson interval mapped through `eps log`; levels without hits are
/// dropped with a warning.
pub fn ldp_slope<T: Real>(
    model: &VolatilityModel<T>,
    configs: &[SimConfig<T>],
    region: &Region<T>,
    target: Option<f64>,
) -> Result<LdpReport> {
    if configs.len() < 3 {
        return Err(Error::precondition(
            "ldp_slope needs at least three epsilon levels",
        ));
    }
    if configs.windows(2).any(|w| !(w[1].epsilon < w[0].epsilon)) {
        return Err(Error::precondition(
            "epsilon levels must be strictly decreasing",
        ));
    }
    if let Region::Box { lo, hi } = region {
        if lo.len() != model.n() || hi.len() != model.n() {
            return Err(Error::DimensionMismatch {
                what: "ldp region",
                detail: format!("box bounds need length {}", model.n()),
            });
        }
    }
    let mut rows = Vec::with_capacity(configs.len());
    for (idx, cfg) in configs.iter().enumerate() {
        let s = simulate(model, cfg)?;
        let hits = (0..s.len()).filter(|&k| region.contains(s.x_of(k))).count() as u64;
        let n = s.len() as u64;
        let eps = to_f64(cfg.epsilon);
        if hits == 0 && idx == 0 {
            return Err(Error::ZeroHits { eps });
        }
        let (lo, hi) = wilson_interval(hits, n, Z95);
        let dropped = hits == 0;
        if dropped {
            log::warn!("ldp_slope: no hits at eps = {eps}; level dropped from the fit");
        }
        rows.push(LdpRow {
            epsilon: eps,
            hits,
            n,
            scaled_log_p: eps * (hits as f64 / n as f64).ln(),
            lower: eps * lo.ln(),
            upper: eps * hi.ln(),
            steps: cfg.steps(),
            seed: cfg.seed,
            dropped,
        });
    }
    let kept: Vec<&LdpRow> = rows.iter().filter(|r| !r.dropped).collect();
    if kept.len() < 3 {
        let eps = rows
            .iter()
            .find(|r| r.dropped)
            .map_or(f64::NAN, |r| r.epsilon);
        return Err(Error::ZeroHits { eps });
    }
    let xs: Vec<f64> = kept.iter().map(|r| r.epsilon).collect();
    let ys: Vec<f64> = kept.iter().map(|r| r.scaled_log_p).collect();
    let ss: Vec<f64> = kept
        .iter()
        .map(|r| (r.upper - r.lower) / (2.0 * Z95))
        .collect();
    let (intercept, slope, intercept_se) = affine_fit(&xs, &ys, &ss);
    let relative_gap = target.map(|t| (intercept - t).abs() / t.abs().max(f64::MIN_POSITIVE));
    Ok(LdpReport {
        rows,
        intercept,
        slope,
        intercept_se,
        target,
        relative_gap,
    })
}
