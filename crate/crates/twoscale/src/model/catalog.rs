use std::collections::BTreeMap;

use super::{validate_model, ModelTraits, VolatilityModel};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Named scalar parameters of a catalog entry.
pub type Params = BTreeMap<String, f64>;

const NAMES: [&str; 5] = [
    "const-sigma",
    "sine-1d",
    "correlated-1d",
    "gradient-drift",
    "x-modulated",
];

/// Names accepted by [`catalog_model`].
pub fn catalog_names() -> &'static [&'static str] {
    &NAMES
}

struct Reader<'a> {
    params: &'a Params,
    allowed: &'static [&'static str],
}

impl Reader<'_> {
    fn new<'a>(params: &'a Params, allowed: &'static [&'static str]) -> Result<Reader<'a>> {
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::BadParameter {
                name: k.clone(),
                reason: format!(
                    "not a parameter of this model (expected one of {})",
                    allowed.join(", ")
                ),
            });
        }
        if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::BadParameter {
                name: k.clone(),
                reason: format!("must be finite, got {v}"),
            });
        }
        Ok(Reader { params, allowed })
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        debug_assert!(self.allowed.contains(&key));
        self.params.get(key).copied().unwrap_or(default)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::BadParameter {
                name: key.into(),
                reason: format!("must be positive, got {v}"),
            })
        }
    }
}

fn bad(name: &str, reason: impl Into<String>) -> Error {
    Error::BadParameter {
        name: name.into(),
        reason: reason.into(),
    }
}

/// Builds a catalog model. Parameter schemas are listed in `MODELS.md`.
pub fn catalog_model<T: Real>(name: &str, params: &Params) -> Result<VolatilityModel<T>> {
    let two_pi = lit::<T>(std::f64::consts::TAU);
    let model = match name {
        "const-sigma" => {
            let rd = Reader::new(params, &["sigma0", "phi0"])?;
            let s0 = rd.positive("sigma0", 0.3)?;
            let phi0 = rd.get("phi0", 0.0);
            let (s, f) = (lit::<T>(s0), lit::<T>(phi0));
            VolatilityModel::builder(name, 1, 1, 2)
                .phi(move |_, _, o| o[0] = f)
                .sigma(move |_, _, o| {
                    o[0] = s;
                    o[1] = T::zero();
                })
                .tau(|_, o| {
                    o[0] = T::zero();
                    o[1] = T::one();
                })
                .theta(T::one())
                .lipschitz_bound(T::one())
                .traits(ModelTraits {
                    sigma_x_independent: true,
                    sigma_y_independent: true,
                    uncorrelated: true,
                })
                .param("sigma0", s0)
                .param("phi0", phi0)
        }
        "sine-1d" => {
            let rd = Reader::new(params, &["s0", "s1", "tau0", "kappa", "phi0"])?;
            let s0 = rd.get("s0", 1.0);
            let s1 = rd.get("s1", 0.5);
            let tau0 = rd.positive("tau0", 1.0)?;
            let kappa = rd.get("kappa", 0.0);
            let phi0 = rd.get("phi0", 0.0);
            let (a, c, t, k, f) = (
                lit::<T>(s0),
                lit::<T>(s1),
                lit::<T>(tau0),
                lit::<T>(kappa),
                lit::<T>(phi0),
            );
            VolatilityModel::builder(name, 1, 1, 2)
                .phi(move |_, _, o| o[0] = f)
                .sigma(move |_, y, o| {
                    o[0] = a + c * (two_pi * y[0]).sin();
                    o[1] = T::zero();
                })
                .b(move |y, o| o[0] = -k / two_pi * (two_pi * y[0]).sin())
                .tau(move |_, o| {
                    o[0] = T::zero();
                    o[1] = t;
                })
                .theta(lit(0.99 * tau0 * tau0))
                .lipschitz_bound(lit((std::f64::consts::TAU * s1.abs())
                    .max(kappa.abs())
                    .max(1.0)))
                .traits(ModelTraits {
                    sigma_x_independent: true,
                    sigma_y_independent: s1 == 0.0,
                    uncorrelated: true,
                })
                .param("s0", s0)
                .param("s1", s1)
                .param("tau0", tau0)
                .param("kappa", kappa)
                .param("phi0", phi0)
        }
        "correlated-1d" => {
            let rd = Reader::new(params, &["s0", "s1", "tau0", "tau1", "kappa", "phi0"])?;
            let s0 = rd.get("s0", 1.0);
            let s1 = rd.get("s1", 0.5);
            let tau0 = rd.positive("tau0", 1.0)?;
            let tau1 = rd.get("tau1", 0.25);
            let kappa = rd.get("kappa", 1.0);
            let phi0 = rd.get("phi0", 0.0);
            if tau1.abs() >= tau0 {
                return Err(bad(
                    "tau1",
                    format!("|tau1| must be below tau0 = {tau0}, got {tau1}"),
                ));
            }
            let (a, c, t0, t1, k, f) = (
                lit::<T>(s0),
                lit::<T>(s1),
                lit::<T>(tau0),
                lit::<T>(tau1),
                lit::<T>(kappa),
                lit::<T>(phi0),
            );
            let tmin = tau0 - tau1.abs();
            VolatilityModel::builder(name, 1, 1, 1)
                .phi(move |_, _, o| o[0] = f)
                .sigma(move |_, y, o| o[0] = a + c * (two_pi * y[0]).sin())
                .b(move |y, o| o[0] = -k / two_pi * (two_pi * y[0]).sin())
                .tau(move |y, o| o[0] = t0 + t1 * (two_pi * y[0]).cos())
                .theta(lit(0.99 * tmin * tmin))
                .lipschitz_bound(lit(std::f64::consts::TAU * s1.abs().max(tau1.abs())
                    + kappa.abs()
                    + 1.0))
                .traits(ModelTraits {
                    sigma_x_independent: true,
                    sigma_y_independent: s1 == 0.0,
                    uncorrelated: false,
                })
                .param("s0", s0)
                .param("s1", s1)
                .param("tau0", tau0)
                .param("tau1", tau1)
                .param("kappa", kappa)
                .param("phi0", phi0)
        }
        "gradient-drift" => {
            let rd = Reader::new(params, &["amp", "dim", "s0", "s1", "phi0"])?;
            let amp = rd.get("amp", 1.0);
            let dim = rd.get("dim", 1.0);
            let s0 = rd.get("s0", 1.0);
            let s1 = rd.get("s1", 0.5);
            let phi0 = rd.get("phi0", 0.0);
            if dim != 1.0 && dim != 2.0 {
                return Err(bad("dim", format!("must be 1 or 2, got {dim}")));
            }
            let m = dim as usize;
            let r = m + 1;
            let (u, a, c, f) = (lit::<T>(amp), lit::<T>(s0), lit::<T>(s1), lit::<T>(phi0));
            VolatilityModel::builder(name, 1, m, r)
                .phi(move |_, _, o| o[0] = f)
                .sigma(move |_, y, o| {
                    o.fill(T::zero());
                    o[0] = a + c * (two_pi * y[0]).sin();
                })
                // b = grad U with U(y) = amp * sum_k cos(2 pi y_k)
                .b(move |y, o| {
                    for (ok, &yk) in o.iter_mut().zip(y) {
                        *ok = -two_pi * u * (two_pi * yk).sin();
                    }
                })
                .tau(move |_, o| {
                    o.fill(T::zero());
                    for k in 0..m {
                        o[k * r + k + 1] = T::one();
                    }
                })
                .theta(lit(0.99))
                .lipschitz_bound(lit((std::f64::consts::TAU.powi(2) * amp.abs())
                    .max(std::f64::consts::TAU * s1.abs())
                    .max(1.0)))
                .traits(ModelTraits {
                    sigma_x_independent: true,
                    sigma_y_independent: s1 == 0.0,
                    uncorrelated: true,
                })
                .param("amp", amp)
                .param("dim", dim)
                .param("s0", s0)
                .param("s1", s1)
                .param("phi0", phi0)
        }
        "x-modulated" => {
            let rd = Reader::new(params, &["a", "ell", "s0", "s1", "tau0", "phi0"])?;
            let amod = rd.get("a", 0.5);
            let ell = rd.positive("ell", 1.0)?;
            let s0 = rd.get("s0", 1.0);
            let s1 = rd.get("s1", 0.5);
            let tau0 = rd.positive("tau0", 1.0)?;
            let phi0 = rd.get("phi0", 0.0);
            if amod.abs() >= 1.0 {
                return Err(bad("a", format!("|a| must be below 1, got {amod}")));
            }
            let (am, l, a, c, t, f) = (
                lit::<T>(amod),
                lit::<T>(ell),
                lit::<T>(s0),
                lit::<T>(s1),
                lit::<T>(tau0),
                lit::<T>(phi0),
            );
            VolatilityModel::builder(name, 1, 1, 2)
                .phi(move |_, _, o| o[0] = f)
                .sigma(move |x, y, o| {
                    o[0] = (T::one() + am * (x[0] / l).tanh()) * (a + c * (two_pi * y[0]).sin());
                    o[1] = T::zero();
                })
                .tau(move |_, o| {
                    o[0] = T::zero();
                    o[1] = t;
                })
                .theta(lit(0.99 * tau0 * tau0))
                .lipschitz_bound(lit(((1.0 + amod.abs()) * std::f64::consts::TAU * s1.abs())
                    .max(amod.abs() / ell * (s0.abs() + s1.abs()))
                    .max(1.0)))
                .traits(ModelTraits {
                    sigma_x_independent: amod == 0.0,
                    sigma_y_independent: s1 == 0.0,
                    uncorrelated: true,
                })
                .param("a", amod)
                .param("ell", ell)
                .param("s0", s0)
                .param("s1", s1)
                .param("tau0", tau0)
                .param("phi0", phi0)
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    let model = model.build()?;
    validate_model(&model, 16)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn every_entry_validates_at_64() {
        for name in catalog_names() {
            let m = catalog_model::<f64>(name, &Params::new()).unwrap();
            let rep = validate_model(&m, 64).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(rep.passed, "{name}");
        }
        let m2 = catalog_model::<f64>("gradient-drift", &params(&[("dim", 2.0)])).unwrap();
        assert!(validate_model(&m2, 64).unwrap().passed);
        let m32 = catalog_model::<f32>("correlated-1d", &Params::new()).unwrap();
        assert!(validate_model(&m32, 64).unwrap().passed);
    }

    #[test]
    fn const_sigma_is_constant() {
        let m = catalog_model::<f64>("const-sigma", &params(&[("sigma0", 0.3)])).unwrap();
        let mut o = [0.0; 2];
        for y in [0.0, 0.25, 0.7] {
            m.sigma(&[1.3], &[y], &mut o);
            assert_eq!(o, [0.3, 0.0]);
        }
    }

    #[test]
    fn sine_1d_layout_is_uncorrelated() {
        let m = catalog_model::<f64>("sine-1d", &params(&[("s0", 1.0), ("s1", 0.5)])).unwrap();
        let rep = validate_model(&m, 64).unwrap();
        assert_eq!(rep.tau_sigma_max, 0.0);
        // max of 1 + 0.5 sin on the 64-point probe grid is attained at y = 1/4
        assert_eq!(rep.sup_sigma, 1.5);
    }

    #[test]
    fn unknown_and_bad_parameters() {
        assert_eq!(
            catalog_model::<f64>("unknown", &Params::new()).unwrap_err(),
            Error::UnknownModel("unknown".into())
        );
        assert!(matches!(
            catalog_model::<f64>("const-sigma", &params(&[("sigma0", -1.0)])),
            Err(Error::BadParameter { .. })
        ));
        assert!(matches!(
            catalog_model::<f64>("const-sigma", &params(&[("s0", 1.0)])),
            Err(Error::BadParameter { .. })
        ));
        assert!(matches!(
            catalog_model::<f64>("correlated-1d", &params(&[("tau1", 1.0)])),
            Err(Error::BadParameter { .. })
        ));
        assert!(matches!(
            catalog_model::<f64>("gradient-drift", &params(&[("dim", 3.0)])),
            Err(Error::BadParameter { .. })
        ));
    }

    #[test]
    fn gradient_drift_is_gradient_of_cosine() {
        let m = catalog_model::<f64>("gradient-drift", &params(&[("amp", 1.0)])).unwrap();
        let y = 0.13;
        let h = 1e-6;
        let u = |y: f64| (std::f64::consts::TAU * y).cos();
        let mut o = [0.0];
        m.b(&[y], &mut o);
        assert!((o[0] - (u(y + h) - u(y - h)) / (2.0 * h)).abs() < 1e-6);
    }
}
