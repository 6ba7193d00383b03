//! Two-sample test statistics between a reference set and a sliding window,
//! with exact full computations and incremental update paths.

pub mod kernel;
pub mod ks;
pub mod mean;
pub mod mmd;
pub mod reference;
pub mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShiftError};
use crate::scalar::Scalar;

pub use kernel::{median_heuristic, Kernel};
pub use ks::{ks_scaled_sorted, KsScaled, KsTracker};
pub use mmd::{mmd2_u_for_kernel, mmd2_u_from_sums, mmd2_u_incremental, MmdSums};
pub use reference::ReferenceSet;
pub use window::SlidingWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Ks,
    #[serde(rename = "mmd2_u")]
    Mmd2U,
    MeanDiff,
}

impl StatisticKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ks => "ks",
            Self::Mmd2U => "mmd2_u",
            Self::MeanDiff => "mean_diff",
        }
    }

    pub fn needs_kernel(self) -> bool {
        self == Self::Mmd2U
    }

    pub fn scalar_only(self) -> bool {
        self != Self::Mmd2U
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticValue<T: Scalar> {
    pub value: T,
    pub kind: StatisticKind,
}

fn require_scalar<T: Scalar>(
    kind: StatisticKind,
    reference: &ReferenceSet<T>,
    window: &SlidingWindow<T>,
) -> Result<()> {
    let dim = window.dim().unwrap_or(1).max(reference.dim());
    if dim != 1 {
        return Err(ShiftError::NotScalar { statistic: kind.name(), dim });
    }
    Ok(())
}

/// `sup_u |F_n(u) - G_m(u)|`, merge-scanned against the pre-sorted reference.
pub fn ks_distance<T: Scalar>(
    reference: &ReferenceSet<T>,
    window: &SlidingWindow<T>,
) -> Result<StatisticValue<T>> {
    require_scalar(StatisticKind::Ks, reference, window)?;
    if window.is_empty() {
        return Err(ShiftError::TooFewSamples("ks needs a non-empty window".into()));
    }
    let sorted = reference.sorted_values().expect("scalar reference keeps a sorted copy");
    let d = ks_scaled_sorted(sorted, window.sorted_view());
    Ok(StatisticValue { value: d.value(), kind: StatisticKind::Ks })
}

pub fn mean_difference<T: Scalar>(
    reference: &ReferenceSet<T>,
    window: &SlidingWindow<T>,
) -> Result<StatisticValue<T>> {
    require_scalar(StatisticKind::MeanDiff, reference, window)?;
    let win = window
        .mean()
        .ok_or_else(|| ShiftError::TooFewSamples("mean_diff needs a non-empty window".into()))?;
    let value = reference.mean().expect("scalar reference keeps its mean") - win;
    Ok(StatisticValue { value, kind: StatisticKind::MeanDiff })
}

/// Full recomputation of MMD^2_u over the window contents.
pub fn mmd2_u<T: Scalar>(
    reference: &ReferenceSet<T>,
    window: &SlidingWindow<T>,
    kernel: &Kernel<T>,
) -> Result<StatisticValue<T>> {
    let contents = window.to_vec();
    let value = mmd::mmd2_u(reference, &contents, kernel)?;
    Ok(StatisticValue { value, kind: StatisticKind::Mmd2U })
}

/// Recomputes the chosen statistic from scratch.
pub fn compute<T: Scalar>(
    kind: StatisticKind,
    reference: &ReferenceSet<T>,
    window: &SlidingWindow<T>,
    kernel: Option<&Kernel<T>>,
) -> Result<StatisticValue<T>> {
    match kind {
        StatisticKind::Ks => ks_distance(reference, window),
        StatisticKind::MeanDiff => {
            let contents = window.to_vec();
            let value = mean::mean_difference(reference, &contents)?;
            Ok(StatisticValue { value, kind })
        }
        StatisticKind::Mmd2U => {
            let kernel = kernel.ok_or_else(|| ShiftError::InvalidKernel("mmd2_u needs a kernel".into()))?;
            mmd2_u(reference, window, kernel)
        }
    }
}
