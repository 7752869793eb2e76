//! Code-rate selection from an error estimate.
//!
//! The estimate comes from a finite public subset, so the code is designed
//! for `ε_design = ε + 3σ`, `σ = sqrt(ε(1-ε)/subset)`, and the highest rate
//! whose measured decode success at `ε_design` was at least 99% is chosen.
//!
//! Table entries are `(largest design error, rate)`. Each was measured on
//! 200 blocks of 10^4 bits (column weight 3, sum-product, 100 iterations)
//! with independent random flips at exactly that design error; every listed
//! point decoded at least 199 of 200 blocks.

use crate::sifting::QBER_ABORT_THRESHOLD;

pub const RATE_TABLE: &[(f64, f64)] = &[
    (0.012, 0.80),
    (0.020, 0.75),
    (0.028, 0.70),
    (0.035, 0.65),
    (0.040, 0.60),
    (0.055, 0.55),
    (0.068, 0.50),
    (0.078, 0.45),
    (0.090, 0.40),
    (0.100, 0.35),
    (0.120, 0.30),
    (0.135, 0.25),
];

/// Subset size assumed by [`rate_for_error`].
pub const DEFAULT_DESIGN_SUBSET: usize = 4000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RateError {
    #[error("error rate {0} too high to reconcile")]
    ErrorTooHigh(f64),
    #[error("subset of {0} bits cannot bound the error rate")]
    EmptySubset(usize),
}

/// `ε + 3 sqrt(ε(1-ε)/subset)`. An estimate of zero is widened as if one
/// error had been seen.
pub fn design_error_for(epsilon: f64, subset_size: usize) -> Result<f64, RateError> {
    if !(0.0..QBER_ABORT_THRESHOLD).contains(&epsilon) {
        return Err(RateError::ErrorTooHigh(epsilon));
    }
    if subset_size == 0 {
        return Err(RateError::EmptySubset(0));
    }
    let n = subset_size as f64;
    let p = epsilon.max(1.0 / n);
    Ok(epsilon + 3.0 * (p * (1.0 - p) / n).sqrt())
}

/// [`design_error_for`] with [`DEFAULT_DESIGN_SUBSET`].
pub fn design_error(epsilon: f64) -> Result<f64, RateError> {
    design_error_for(epsilon, DEFAULT_DESIGN_SUBSET)
}

/// Highest table rate whose design error covers `design`.
pub fn rate_for_design(design: f64) -> Result<f64, RateError> {
    RATE_TABLE
        .iter()
        .find(|&&(e, _)| design <= e)
        .map(|&(_, r)| r)
        .ok_or(RateError::ErrorTooHigh(design))
}

pub fn rate_for_error(epsilon: f64) -> Result<f64, RateError> {
    rate_for_design(design_error(epsilon)?)
}
