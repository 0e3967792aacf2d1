//! Distribution helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{MetaError, Result};

/// Standard-normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    // unit normal parameters are always valid
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Two-sided critical value for a confidence `level`, i.e. the quantile at
/// `(1 + level) / 2`.
pub fn critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetaError::InvalidLevel(level));
    }
    Ok(normal_quantile(0.5 * (1.0 + level)))
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).unwrap().sf(x).clamp(0.0, 1.0)
}

/// Neumaier-compensated sum. The result depends only on the order of `xs`.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}
