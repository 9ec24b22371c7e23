//! Heteroskedasticity-robust test for first-order serial correlation in
//! fixed-effects panel residuals, with the bias of within residuals removed.
//!
//! Within residuals of a serially uncorrelated error have first-order
//! autocovariance `-σ²/T`. Adding `ê_it / (T - 1)` to the lagged residual
//! cancels that bias, so per sector
//!
//! ```text
//! s_i = Σ_{t=2..T} ê_it (ê_{i,t-1} + ê_it / (T - 1))
//! ```
//!
//! has mean zero under the null and `z = Σ s_i / √(Σ s_i²)` is asymptotically
//! standard normal as the number of sectors grows.

use crate::error::{Error, Result};
use crate::stats::two_sided_p;

pub const MIN_PERIODS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerialCorrTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Test residual groups (one per sector, in time order). Each group is
/// demeaned first, so raw or within residuals give the same answer.
pub fn serial_corr_test(groups: &[Vec<f64>]) -> Result<SerialCorrTest> {
    if groups.is_empty() {
        return Err(Error::input("no residual groups"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (g, e) in groups.iter().enumerate() {
        let t = e.len();
        if t < MIN_PERIODS {
            return Err(Error::input(format!(
                "residual group {g} has {t} periods; the test needs at least {MIN_PERIODS}"
            )));
        }
        let m = e.iter().sum::<f64>() / t as f64;
        let w: Vec<f64> = e.iter().map(|v| v - m).collect();
        let corr = 1.0 / (t as f64 - 1.0);
        let s: f64 = (1..t).map(|k| w[k] * (w[k - 1] + w[k] * corr)).sum();
        num += s;
        den += s * s;
    }
    // Scale-relative degeneracy check: all residuals constant within sector.
    let scale: f64 = groups
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    if !(den.sqrt() > 1e-12 * scale) {
        return Err(Error::numeric(
            "serial correlation statistic is degenerate (residuals constant within sectors)",
        ));
    }
    let statistic = num / den.sqrt();
    Ok(SerialCorrTest {
        statistic,
        p_value: two_sided_p(statistic),
    })
}
