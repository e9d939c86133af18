//! Numerically careful kernels shared by the analytic and optimizer layers.

/// Below this magnitude the series branches take over.
pub(crate) const SERIES_SWITCH: f64 = 1e-8;

/// `(1 - e^-x) / x`, continuously extended with value 1 at `x = 0`.
pub(crate) fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < SERIES_SWITCH {
        1.0 - x / 2.0 + x * x / 6.0
    } else {
        -libm::expm1(-x) / x
    }
}

/// `1 - (1 - e^-x) / x`, accurate for small `x` as well.
pub(crate) fn one_minus_refresh(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // x/2 - x^2/6 + x^3/24 - x^4/120
        x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    } else {
        1.0 + libm::expm1(-x) / x
    }
}

/// `1/x - 1/(e^x - 1)`, which falls from 1/2 at `x = 0` to 0.
pub(crate) fn reciprocal_gap(x: f64) -> f64 {
    if x < 1e-3 {
        // 1/2 - x/12 + x^3/720
        0.5 - x / 12.0 + x * x * x / 720.0
    } else {
        1.0 / x - 1.0 / libm::expm1(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches_meet_smoothly() {
        for &x in &[1e-9_f64, 1e-8, 0.9e-3, 1e-3, 1.1e-3] {
            let direct = -(-x).exp_m1() / x;
            assert!((one_minus_exp_over(x) - direct).abs() < 1e-12);
            assert!((one_minus_refresh(x) - (1.0 - one_minus_exp_over(x))).abs() < 1e-12);
        }
        let x: f64 = 1e-3;
        let direct = 1.0 / x - 1.0 / x.exp_m1();
        assert!((reciprocal_gap(x) - direct).abs() < 1e-9);
        assert!((reciprocal_gap(0.999e-3) - direct).abs() < 1e-6);
    }

    #[test]
    fn large_arguments() {
        assert!((one_minus_exp_over(1e6) - 1e-6).abs() < 1e-18);
        assert_eq!(reciprocal_gap(800.0), 1.0 / 800.0);
    }
}
