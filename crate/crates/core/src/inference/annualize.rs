use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a multi-year growth effect is spread over single years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// sign(φ)·((1 + |φ|)^{1/n} − 1): the root is taken of the magnitude,
    /// so gains and losses of equal size annualize symmetrically.
    #[default]
    Magnitude,
    /// (1 + φ)^{1/n} − 1: the compounding identity, defined for φ > −1.
    Signed,
}

/// Annual equivalent of an effect accumulated over `years` years.
pub fn annualize<S: Scalar>(phi: S, years: u32, convention: Convention) -> Result<S> {
    let root = S::one() / S::lit(years as f64);
    match convention {
        Convention::Magnitude => {
            if !(phi.abs() < S::one()) {
                return Err(Error::Domain(format!("|{phi}| must be below 1")));
            }
            let m = (S::one() + phi.abs()).powf(root) - S::one();
            Ok(if phi < S::zero() { -m } else { m })
        }
        Convention::Signed => {
            if !(phi > -S::one()) {
                return Err(Error::Domain(format!("{phi} must exceed -1")));
            }
            Ok((S::one() + phi).powf(root) - S::one())
        }
    }
}

/// Inverse of [`annualize`].
pub fn deannualize<S: Scalar>(tau: S, years: u32, convention: Convention) -> Result<S> {
    let n = years as i32;
    match convention {
        Convention::Magnitude => {
            let m = (S::one() + tau.abs()).powi(n) - S::one();
            if !(m < S::one()) {
                return Err(Error::Domain(format!("{tau} maps outside (-1, 1)")));
            }
            Ok(if tau < S::zero() { -m } else { m })
        }
        Convention::Signed => {
            if !(tau > -S::one()) {
                return Err(Error::Domain(format!("{tau} must exceed -1")));
            }
            Ok((S::one() + tau).powi(n) - S::one())
        }
    }
}

/// Annual equivalent of a per-decade effect.
pub fn annualize_decadal<S: Scalar>(phi: S, convention: Convention) -> Result<S> {
    annualize(phi, 10, convention)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_oddness() {
        assert_eq!(annualize_decadal(0.0, Convention::Magnitude).unwrap(), 0.0);
        for phi in [0.01, 0.2, 0.5, 0.9] {
            let a = annualize_decadal(phi, Convention::Magnitude).unwrap();
            let b = annualize_decadal(-phi, Convention::Magnitude).unwrap();
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn signed_convention_is_compounding() {
        let t: f64 = annualize_decadal(-0.331, Convention::Signed).unwrap();
        assert!(((1.0 + t).powi(10) - 0.669).abs() < 1e-12);
        assert!(t < -0.039 && t > -0.041);
    }

    #[test]
    fn domain_errors() {
        assert!(annualize_decadal(1.0, Convention::Magnitude).is_err());
        assert!(annualize_decadal(-1.0, Convention::Signed).is_err());
        assert!(annualize_decadal(1.5, Convention::Signed).is_ok());
        assert!(deannualize(0.08, 10, Convention::Magnitude).is_err());
    }
}
