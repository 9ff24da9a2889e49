//! Standard-normal helpers shared by the probit model and the simulators.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Φ(z), the standard normal CDF.
pub fn cdf(z: f64) -> f64 {
    standard().cdf(z)
}

/// φ(z), the standard normal density.
pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Φ⁻¹(p), the standard normal quantile.
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// ln Φ(z), floored to avoid −∞ in deep tails.
pub fn log_cdf(z: f64) -> f64 {
    cdf(z).max(1e-300).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_reference_points() {
        assert_abs_diff_eq!(cdf(0.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cdf(1.959963984540054), 0.975, epsilon = 1e-9);
        assert_abs_diff_eq!(cdf(z_for(0.975)), 0.975, epsilon = 1e-9);
    }

    fn z_for(p: f64) -> f64 {
        quantile(p)
    }

    #[test]
    fn tails_stay_finite() {
        assert!(log_cdf(-40.0).is_finite());
        assert!(log_cdf(40.0) <= 0.0);
    }
}
