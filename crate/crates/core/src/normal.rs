//! Standard normal distribution.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Φ(x) through the complementary error function, which keeps full
/// relative accuracy in the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}
