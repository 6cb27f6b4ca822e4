//! Scalar math routed through `std` or `libm` depending on features.

#[cfg(feature = "std")]
mod imp {
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    pub fn exp(x: f64) -> f64 {
        x.exp()
    }
    pub fn ln_1p(x: f64) -> f64 {
        x.ln_1p()
    }
    pub fn log2(x: f64) -> f64 {
        x.log2()
    }
    pub fn round(x: f64) -> f64 {
        x.round()
    }
    pub fn floor(x: f64) -> f64 {
        x.floor()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    pub fn ln_1p(x: f64) -> f64 {
        libm::log1p(x)
    }
    pub fn log2(x: f64) -> f64 {
        libm::log2(x)
    }
    pub fn round(x: f64) -> f64 {
        libm::round(x)
    }
    pub fn floor(x: f64) -> f64 {
        libm::floor(x)
    }
}

pub use imp::{exp, floor, ln_1p, log2, round, sqrt};

/// Logistic sigmoid, evaluated on the side that keeps the exponent negative.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// softplus(x) = ln(1 + e^x), stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_naive_in_safe_range() {
        for i in -30..=30 {
            let x = i as f64 * 0.5;
            let naive = 1.0 / (1.0 + (-x).exp());
            assert!((sigmoid(x) - naive).abs() < 1e-15);
        }
    }

    #[test]
    fn softplus_tails() {
        assert!(softplus(-800.0) == 0.0 || softplus(-800.0) < 1e-300);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn round_ties_away_from_zero() {
        assert_eq!(round(1.5), 2.0);
        assert_eq!(round(0.5), 1.0);
        assert_eq!(round(2.5), 3.0);
        assert_eq!(round(-1.5), -2.0);
    }
}
