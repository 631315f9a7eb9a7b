//! Stationary laws of finite birth-death chains, computed from the ratio
//! recursion `pi[i] / pi[i-1] = up[i-1] / down[i-1]` in log space so that
//! long chains with large rate ratios never overflow.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BirthDeathError {
    #[error("rate vectors have different lengths ({up} up, {down} down)")]
    LengthMismatch { up: usize, down: usize },
    #[error("negative or non-finite transition rate")]
    BadRate,
    #[error("chain has {0} closed classes; stationary law is not unique")]
    NotUnichain(usize),
}

/// Stationary distribution on states `0..=up.len()`.
///
/// `up[i]` is the rate `i -> i+1`, `down[i]` the rate `i+1 -> i`. Zero rates
/// are allowed: states outside the unique closed class get probability 0.
pub fn stationary(up: &[f64], down: &[f64]) -> Result<Vec<f64>, BirthDeathError> {
    if up.len() != down.len() {
        return Err(BirthDeathError::LengthMismatch { up: up.len(), down: down.len() });
    }
    if up.iter().chain(down).any(|&r| !(r.is_finite() && r >= 0.0)) {
        return Err(BirthDeathError::BadRate);
    }
    let states = up.len() + 1;

    // Split into maximal segments joined by two-way links; a segment is a
    // closed class when neither boundary link leads out of it.
    let mut closed = Vec::new();
    let mut start = 0;
    for i in 0..states {
        let last = i + 1 == states || up[i] == 0.0 || down[i] == 0.0;
        if last {
            let exits_down = start > 0 && down[start - 1] > 0.0;
            let exits_up = i + 1 < states && up[i] > 0.0;
            if !exits_down && !exits_up {
                closed.push((start, i));
            }
            start = i + 1;
        }
    }
    if closed.len() != 1 {
        return Err(BirthDeathError::NotUnichain(closed.len()));
    }
    let (lo, hi) = closed[0];

    let mut log_w = vec![f64::NEG_INFINITY; states];
    log_w[lo] = 0.0;
    for i in lo + 1..=hi {
        log_w[i] = log_w[i - 1] + up[i - 1].ln() - down[i - 1].ln();
    }
    let peak = log_w[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut pi: Vec<f64> = log_w.iter().map(|&l| (l - peak).exp()).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Numerically stable `ln(sum(exp(x)))` over an iterator of log terms.
/// Terms equal to `-inf` (zero summands) are ignored.
pub fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.into_iter().collect();
    let peak = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    peak + v.iter().map(|&x| (x - peak).exp()).sum::<f64>().ln()
}
