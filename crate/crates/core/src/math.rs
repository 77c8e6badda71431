//! Scalar special functions shared by the tape and the case catalog.

/// Error function via the Abramowitz-Stegun 7.1.26 rational approximation,
/// |erf_approx(x) - erf(x)| <= 1.5e-7, with odd symmetry applied explicitly
/// so that `erf(-x) == -erf(x)` holds exactly and `erf(0) == 0`.
pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x.is_nan() {
        return f64::NAN;
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let z = x.abs();
    const P: f64 = 0.327_591_1;
    const A1: f64 = 0.254_829_592;
    const A2: f64 = -0.284_496_736;
    const A3: f64 = 1.421_413_741;
    const A4: f64 = -1.453_152_027;
    const A5: f64 = 1.061_405_429;
    let t = 1.0 / (1.0 + P * z);
    let poly = ((((A5 * t + A4) * t + A3) * t + A2) * t + A1) * t;
    sign * (1.0 - poly * (-z * z).exp())
}

/// Derivative of the error function, `2/sqrt(pi) * exp(-x^2)`.
pub fn erf_derivative(x: f64) -> f64 {
    std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: Maclaurin series for |x| <= 4, Lentz-evaluated
    /// continued fraction for erfc beyond. Good to ~1e-12 on the series
    /// branch and ~1e-14 on the tail.
    pub(crate) fn erf_oracle(x: f64) -> f64 {
        let z = x.abs();
        let val = if z <= 4.0 {
            let mut term = z;
            let mut sum = z;
            for n in 1..=60 {
                let nf = n as f64;
                term *= -z * z / nf;
                sum += term / (2.0 * nf + 1.0);
            }
            std::f64::consts::FRAC_2_SQRT_PI * sum
        } else {
            // erfc(z) = exp(-z^2)/(z*sqrt(pi)) * 1/(1 + q/(1 + 2q/(1 + 3q/...)))
            // with q = 1/(2 z^2), evaluated bottom-up.
            let q = 1.0 / (2.0 * z * z);
            let mut cf = 1.0;
            for k in (1..=60).rev() {
                cf = 1.0 + k as f64 * q / cf;
            }
            let erfc = (-z * z).exp() / (z * std::f64::consts::PI.sqrt()) / cf;
            1.0 - erfc
        };
        if x < 0.0 {
            -val
        } else {
            val
        }
    }

    #[test]
    fn erf_zero_is_exact() {
        assert_eq!(erf(0.0), 0.0);
    }

    #[test]
    fn erf_odd_symmetry() {
        for i in 0..200 {
            let x = -5.0 + 0.05 * i as f64;
            assert_eq!(erf(-x), -erf(x));
        }
    }

    #[test]
    fn erf_one_matches_series_oracle() {
        // erf(1) = 0.8427007929... (series oracle value)
        let oracle = erf_oracle(1.0);
        assert!((oracle - 0.842_700_792_9).abs() < 1e-9);
        assert!((erf(1.0) - oracle).abs() <= 1.5e-7);
    }

    #[test]
    fn erf_abs_error_within_bound() {
        let mut worst = 0.0f64;
        for i in 0..=1200 {
            let x = -6.0 + 0.01 * i as f64;
            let err = (erf(x) - erf_oracle(x)).abs();
            worst = worst.max(err);
        }
        assert!(worst <= 1.5e-7, "worst |error| = {worst:e}");
    }

    #[test]
    fn erf_saturates_to_unity() {
        assert!((erf(10.0) - 1.0).abs() < 1e-12);
        assert!((erf(-10.0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn erf_derivative_at_zero() {
        assert!((erf_derivative(0.0) - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
    }
}
