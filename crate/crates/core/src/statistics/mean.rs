use crate::error::{Result, ShiftError};
use crate::scalar::Scalar;
use crate::statistics::reference::ReferenceSet;
use crate::summaries::Summary;

/// `mean(S) - mean(S~)` for scalar summaries.
pub fn mean_difference<T: Scalar>(reference: &ReferenceSet<T>, window: &[Summary<T>]) -> Result<T> {
    let ref_mean = reference
        .mean()
        .ok_or(ShiftError::NotScalar { statistic: "mean_diff", dim: reference.dim() })?;
    if window.is_empty() {
        return Err(ShiftError::TooFewSamples("mean_diff needs a non-empty window".into()));
    }
    if let Some(bad) = window.iter().find(|s| s.dim() != 1) {
        return Err(ShiftError::NotScalar { statistic: "mean_diff", dim: bad.dim() });
    }
    let win: T = window.iter().map(Summary::first).sum();
    Ok(ref_mean - win / T::from_count(window.len()))
}
