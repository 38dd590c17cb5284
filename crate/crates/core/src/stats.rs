//! Two-proportion z-test and small summary helpers.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
}

/// Pooled two-proportion z-test of `x1/n1` against `x2/n2`, two-sided.
///
/// A pooled proportion of 0 or 1 has zero variance; both groups then show the
/// same outcome and the test reports `z = 0, p = 1`. Empty groups give the
/// same answer.
pub fn two_proportion_z_test(x1: u64, n1: u64, x2: u64, n2: u64) -> ZTest {
    if n1 == 0 || n2 == 0 {
        return ZTest { z: 0.0, p_value: 1.0 };
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (x1 + x2) as f64 / (n1f + n2f);
    let variance = pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f);
    if variance <= 0.0 {
        return ZTest { z: 0.0, p_value: 1.0 };
    }
    let z = (x1 as f64 / n1f - x2 as f64 / n2f) / variance.sqrt();
    // 2 * (1 - Phi(|z|)) = erfc(|z| / sqrt 2), without cancellation in the tail
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    ZTest { z, p_value }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Standard error of the mean from the sample standard deviation; 0 for a
/// single value.
pub fn standard_error(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let n = values.len() as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    Some((var / n).sqrt())
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    Some(var.sqrt())
}

pub fn range(values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().reduce(f64::max)?;
    let min = values.iter().copied().reduce(f64::min)?;
    Some(max - min)
}
