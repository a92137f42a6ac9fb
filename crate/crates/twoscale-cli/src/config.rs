//! Run configuration: defaults, TOML files and command line overrides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Catalog model name.
    pub model: String,
    /// Catalog parameters; missing keys take the catalog defaults.
    pub params: BTreeMap<String, f64>,
    pub alpha: f64,
    pub seed: u64,
    /// Cell and invariant-measure solver tolerance.
    pub tol: f64,
    /// Fast torus nodes per axis.
    pub resolution: usize,
    pub probe_resolution: usize,
    pub hamiltonian: HamiltonianSection,
    pub rate: RateSection,
    pub pde: PdeSection,
    pub ldp: LdpSection,
    pub smile: SmileSection,
}

/// Model file: `name`, optional `params` table and optional `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub alpha: Option<f64>,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Replaces the model, its parameters and, when given, alpha.
    pub fn apply(self, cfg: &mut Config) {
        cfg.model = self.name;
        cfg.params = self.params;
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianSection {
    pub x: Vec<f64>,
    pub p_min: f64,
    pub p_max: f64,
    pub p_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    pub x0: f64,
    pub t: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub x_count: usize,
    pub segments: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    pub t: f64,
    /// Grid is `x0 +/- half_width`.
    pub half_width: f64,
    pub nodes: usize,
    pub cfl: f64,
    /// Cap test function `max(floor, min(0, slope (y - knot)))`.
    pub knot: f64,
    pub slope: f64,
    pub floor: f64,
    /// Nodes compared with the Hopf–Lax formula, evenly spread over the middle half of the grid.
    pub probes: usize,
    /// Decreasing scale parameters of the Monte Carlo estimate of `v^eps`.
    pub eps: Vec<f64>,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpSection {
    pub t: f64,
    /// `B = (x0 + threshold, inf)`, or `(-inf, x0 + threshold)` when negative.
    pub threshold: f64,
    /// When set, `|threshold|` is replaced by the distance at which the rate
    /// function reaches this value; the sign of `threshold` keeps the side.
    pub rate_depth: Option<f64>,
    pub eps: Vec<f64>,
    pub paths: usize,
    /// Relative gap accepted by the pipeline check.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmileSection {
    pub s0: f64,
    pub strikes: Vec<f64>,
    pub t: f64,
    pub eps: Vec<f64>,
    pub paths: usize,
    /// Relative gap of the last implied variance accepted by the pipeline check.
    pub tolerance: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: "const-sigma".into(),
            params: BTreeMap::new(),
            alpha: 4.0,
            seed: 0,
            tol: 1e-6,
            resolution: 64,
            probe_resolution: 32,
            hamiltonian: HamiltonianSection::default(),
            rate: RateSection::default(),
            pde: PdeSection::default(),
            ldp: LdpSection::default(),
            smile: SmileSection::default(),
        }
    }
}

impl Default for HamiltonianSection {
    fn default() -> Self {
        HamiltonianSection {
            x: vec![0.0],
            p_min: -2.0,
            p_max: 2.0,
            p_count: 9,
        }
    }
}

impl Default for RateSection {
    fn default() -> Self {
        RateSection {
            x0: 0.0,
            t: 1.0,
            x_min: -1.0,
            x_max: 1.0,
            x_count: 9,
            segments: 64,
            restarts: 4,
        }
    }
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            t: 1.0,
            half_width: 3.0,
            nodes: 401,
            cfl: 0.5,
            knot: 0.5,
            slope: 2.0,
            floor: -2.0,
            probes: 9,
            eps: vec![0.4, 0.2, 0.1],
            paths: 10_000,
        }
    }
}

impl Default for LdpSection {
    fn default() -> Self {
        LdpSection {
            t: 1.0,
            threshold: 0.5,
            rate_depth: None,
            eps: vec![0.4, 0.2, 0.1],
            paths: 200_000,
            tolerance: 0.15,
        }
    }
}

impl Default for SmileSection {
    fn default() -> Self {
        SmileSection {
            s0: 1.0,
            strikes: vec![1.2],
            t: 1.0,
            eps: vec![0.4, 0.2, 0.1],
            paths: 100_000,
            tolerance: 0.2,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rejects settings that no command can use.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.model.is_empty() {
            return bad("model name is empty");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.hamiltonian.p_count < 1 || self.hamiltonian.x.is_empty() {
            return bad("hamiltonian needs at least one x and one p");
        }
        if self.rate.x_count < 1 || !(self.rate.t > 0.0) {
            return bad("rate needs x_count >= 1 and t > 0");
        }
        let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        if !decreasing(&self.pde.eps) || !decreasing(&self.ldp.eps) || !decreasing(&self.smile.eps)
        {
            return bad("epsilon lists must be strictly decreasing");
        }
        if self.smile.strikes.is_empty() {
            return bad("smile needs at least one strike");
        }
        Ok(())
    }
}

/// Parses `a,b,c` into numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect()
}

/// Parses `key=value`.
pub fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v = v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = Config::default();
        c.params.insert("sigma0".into(), 0.25);
        c.ldp.eps = vec![0.3, 0.1];
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c =
            Config::from_toml("model = \"sine-1d\"\nalpha = 2.0\n[ldp]\npaths = 500\n").unwrap();
        assert_eq!(c.model, "sine-1d");
        assert_eq!(c.ldp.paths, 500);
        assert_eq!(c.ldp.eps, LdpSection::default().eps);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("modle = \"x\"").is_err());
        assert!(Config::from_toml("alpha = \"four\"").is_err());
    }

    #[test]
    fn lists_and_params() {
        assert_eq!(parse_list("0.4, 0.2,0.1").unwrap(), vec![0.4, 0.2, 0.1]);
        assert!(parse_list("0.4,x").is_err());
        assert_eq!(
            parse_param("sigma0=0.3").unwrap(),
            ("sigma0".to_string(), 0.3)
        );
        assert!(parse_param("sigma0").is_err());
    }
}
