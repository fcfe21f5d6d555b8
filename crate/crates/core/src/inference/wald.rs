use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959964;

/// Two-sided Wald p-value `2·(1 − Φ(|estimate| / se))`.
pub fn wald_p_value(estimate: f64, se: f64) -> Result<f64> {
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::Config(format!("standard error must be positive, got {se}")));
    }
    let z = (estimate / se).abs();
    Ok(erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper normal tail by composite Simpson quadrature on [z, z + 40].
    fn upper_tail(z: f64) -> f64 {
        let n = 200_000;
        let (a, b) = (z, z + 40.0);
        let h = (b - a) / n as f64;
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = phi(a) + phi(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(x);
        }
        s * h / 3.0
    }

    #[test]
    fn known_quantiles() {
        assert_eq!(wald_p_value(0.0, 1.0).unwrap(), 1.0);
        assert!((wald_p_value(1.959964 * 0.3, 0.3).unwrap() - 0.05).abs() < 1e-6);
        let p = wald_p_value(-2.575829 * 2.0, 2.0).unwrap();
        let oracle = 2.0 * upper_tail(2.575829);
        assert!((oracle - 0.01).abs() < 1e-6);
        assert!((p - oracle).abs() < 1e-6);
    }

    #[test]
    fn bad_se() {
        assert!(wald_p_value(1.0, 0.0).is_err());
        assert!(wald_p_value(1.0, -1.0).is_err());
        assert!(wald_p_value(1.0, f64::NAN).is_err());
    }
}
