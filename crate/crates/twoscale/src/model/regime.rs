use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

/// Which homogenization limit applies for a given time-scale exponent alpha.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    /// alpha > 2: the fast process averages before it feels the slow momentum.
    Supercritical,
    /// alpha = 2: fully coupled eigenvalue problem.
    Critical,
    /// 1 < alpha < 2: first-order coercive cell problem.
    Subcritical,
}

impl RegimeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeKind::Supercritical => "supercritical",
            RegimeKind::Critical => "critical",
            RegimeKind::Subcritical => "subcritical",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime<T> {
    pub alpha: T,
    pub kind: RegimeKind,
}

/// Classifies `alpha` by exact comparison with 2.
pub fn classify_regime<T: Real>(alpha: T) -> Result<Regime<T>> {
    if !(alpha > T::one()) {
        return Err(Error::InvalidAlpha(to_f64(alpha)));
    }
    let two = T::one() + T::one();
    let kind = if alpha > two {
        RegimeKind::Supercritical
    } else if alpha == two {
        RegimeKind::Critical
    } else {
        RegimeKind::Subcritical
    };
    Ok(Regime { alpha, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn named_values() {
        assert_eq!(
            classify_regime(4.0).unwrap().kind,
            RegimeKind::Supercritical
        );
        assert_eq!(classify_regime(2.0).unwrap().kind, RegimeKind::Critical);
        assert_eq!(classify_regime(1.5).unwrap().kind, RegimeKind::Subcritical);
        assert_eq!(classify_regime(2.0f32).unwrap().kind, RegimeKind::Critical);
    }

    #[test]
    fn rejects_alpha_at_most_one() {
        assert_eq!(classify_regime(1.0), Err(Error::InvalidAlpha(1.0)));
        assert!(classify_regime(0.3).is_err());
        assert!(classify_regime(f64::NAN).is_err());
    }

    #[test]
    fn comparison_is_exact_next_to_two() {
        let above = f64::from_bits(2.0f64.to_bits() + 1);
        let below = f64::from_bits(2.0f64.to_bits() - 1);
        assert_eq!(
            classify_regime(above).unwrap().kind,
            RegimeKind::Supercritical
        );
        assert_eq!(
            classify_regime(below).unwrap().kind,
            RegimeKind::Subcritical
        );
    }

    proptest! {
        #[test]
        fn partition_of_the_half_line(alpha in 1.0f64..50.0) {
            prop_assume!(alpha > 1.0);
            let k = classify_regime(alpha).unwrap().kind;
            let expected = if alpha > 2.0 {
                RegimeKind::Supercritical
            } else if alpha == 2.0 {
                RegimeKind::Critical
            } else {
                RegimeKind::Subcritical
            };
            prop_assert_eq!(k, expected);
        }
    }
}
