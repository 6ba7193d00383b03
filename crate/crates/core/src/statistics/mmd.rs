//! Unbiased MMD^2 U-statistic with incremental window sums.

use crate::error::{Result, ShiftError};
use crate::scalar::Scalar;
use crate::statistics::kernel::Kernel;
use crate::statistics::reference::ReferenceSet;
use crate::summaries::Summary;

/// Cached window sums for a fixed reference and kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdSums<T: Scalar> {
    /// `sum_{i != j} k(y_i, y_j)` over the window.
    pub window_self: T,
    /// `sum_{i, j} k(x_i, y_j)` between reference and window.
    pub cross: T,
    pub dim: usize,
}

impl<T: Scalar> MmdSums<T> {
    pub fn empty(dim: usize) -> Self {
        Self { window_self: T::zero(), cross: T::zero(), dim }
    }

    pub fn recompute<'a, I>(kernel: &Kernel<T>, reference: &ReferenceSet<T>, window: I) -> Self
    where
        I: IntoIterator<Item = &'a Summary<T>>,
    {
        let window: Vec<&Summary<T>> = window.into_iter().collect();
        let mut half = T::zero();
        for (i, a) in window.iter().enumerate() {
            for b in &window[i + 1..] {
                half += kernel.eval(a, b);
            }
        }
        let cross = window.iter().map(|y| kernel.row_sum(reference.summaries(), y)).sum();
        Self { window_self: half + half, cross, dim: reference.dim() }
    }
}

/// Combines the three sums into the U-statistic.
pub fn mmd2_u_from_sums<T: Scalar>(ref_self: T, window_self: T, cross: T, n: usize, m: usize) -> T {
    let (nf, mf) = (T::from_count(n), T::from_count(m));
    ref_self / (nf * (nf - T::one())) + window_self / (mf * (mf - T::one()))
        - T::lit(2.0) * cross / (nf * mf)
}

/// [`mmd2_u_from_sums`] that is exactly zero for a constant kernel, whose
/// three terms cancel only up to rounding.
pub fn mmd2_u_for_kernel<T: Scalar>(kernel: &Kernel<T>, ref_self: T, window_self: T, cross: T, n: usize, m: usize) -> T {
    match kernel {
        Kernel::Constant { .. } => T::zero(),
        _ => mmd2_u_from_sums(ref_self, window_self, cross, n, m),
    }
}

/// Full `O((n + m)^2)` computation.
pub fn mmd2_u<T: Scalar>(
    reference: &ReferenceSet<T>,
    window: &[Summary<T>],
    kernel: &Kernel<T>,
) -> Result<T> {
    let (n, m) = (reference.len(), window.len());
    if n < 2 || m < 2 {
        return Err(ShiftError::TooFewSamples(format!("mmd2_u needs n, m >= 2 (n={n}, m={m})")));
    }
    if let Some(bad) = window.iter().find(|s| s.dim() != reference.dim()) {
        return Err(ShiftError::DimensionMismatch { expected: reference.dim(), actual: bad.dim() });
    }
    let sums = MmdSums::recompute(kernel, reference, window);
    Ok(mmd2_u_for_kernel(kernel, reference.kernel_self_sum(kernel), sums.window_self, sums.cross, n, m))
}

/// Updates `sums` for one slide of the window and returns the new MMD^2_u
/// (or `None` while the window holds fewer than two points).
///
/// `retained` is the window content after `removed` left and before `added`
/// arrives. Cost is `O(n + m)` kernel evaluations. A dimension mismatch
/// against the cached sums is reported as an error so the caller can rebuild
/// from scratch.
pub fn mmd2_u_incremental<'a, T, I>(
    sums: &mut MmdSums<T>,
    kernel: &Kernel<T>,
    reference: &ReferenceSet<T>,
    retained: I,
    removed: Option<&Summary<T>>,
    added: Option<&Summary<T>>,
) -> Result<Option<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a Summary<T>> + Clone,
{
    for s in removed.into_iter().chain(added) {
        if s.dim() != sums.dim {
            return Err(ShiftError::DimensionMismatch { expected: sums.dim, actual: s.dim() });
        }
    }
    let two = T::lit(2.0);
    let mut m = retained.clone().into_iter().count();
    if let Some(r) = removed {
        sums.window_self -= two * kernel.row_sum(retained.clone(), r);
        sums.cross -= kernel.row_sum(reference.summaries(), r);
    }
    if let Some(a) = added {
        sums.window_self += two * kernel.row_sum(retained, a);
        sums.cross += kernel.row_sum(reference.summaries(), a);
        m += 1;
    }
    if m < 2 {
        return Ok(None);
    }
    Ok(Some(mmd2_u_for_kernel(
        kernel,
        reference.kernel_self_sum(kernel),
        sums.window_self,
        sums.cross,
        reference.len(),
        m,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Summary<f64>> {
        xs.iter().map(|&x| Summary::scalar(x).unwrap()).collect()
    }

    #[test]
    fn constant_kernel_is_zero() {
        let r = ReferenceSet::from_scalars(&[0.0, 3.0, -2.0]).unwrap();
        let v = mmd2_u(&r, &pts(&[1.0, 7.0]), &Kernel::Constant { value: 2.5 }).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn linear_kernel_hand_example() {
        let r = ReferenceSet::from_scalars(&[0.0, 2.0]).unwrap();
        let v = mmd2_u(&r, &pts(&[1.0, 1.0]), &Kernel::Linear).unwrap();
        assert_eq!(v, -1.0);
    }

    #[test]
    fn identical_degenerate_samples() {
        let r = ReferenceSet::from_scalars(&[0.0, 0.0]).unwrap();
        let v = mmd2_u(&r, &pts(&[0.0, 0.0]), &Kernel::rbf(1.0).unwrap()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn too_small_samples() {
        let r = ReferenceSet::from_scalars(&[0.0, 1.0]).unwrap();
        assert!(mmd2_u(&r, &pts(&[1.0]), &Kernel::Linear).is_err());
    }

    #[test]
    fn empty_update_is_identity() {
        let r = ReferenceSet::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let k = Kernel::rbf(1.0).unwrap();
        let w = pts(&[0.5, 1.5, 2.5]);
        let mut sums = MmdSums::recompute(&k, &r, &w);
        let before = sums;
        mmd2_u_incremental(&mut sums, &k, &r, &w, None, None).unwrap();
        assert_eq!(sums, before);
    }

    #[test]
    fn remove_then_add_same_point() {
        let r = ReferenceSet::from_scalars(&[0.0, 1.0, 2.0, -0.7]).unwrap();
        let k = Kernel::rbf(0.9).unwrap();
        let w = pts(&[0.5, 1.5, 2.5, 0.1]);
        let mut sums = MmdSums::recompute(&k, &r, &w);
        let before = sums;
        let (x, rest) = (w[0].clone(), &w[1..]);
        mmd2_u_incremental(&mut sums, &k, &r, rest, Some(&x), None).unwrap();
        mmd2_u_incremental(&mut sums, &k, &r, rest, None, Some(&x)).unwrap();
        assert!((sums.window_self - before.window_self).abs() < 1e-12);
        assert!((sums.cross - before.cross).abs() < 1e-12);
    }

    #[test]
    fn dimension_change_invalidates_cache() {
        let r = ReferenceSet::from_scalars(&[0.0, 1.0]).unwrap();
        let mut sums = MmdSums::<f64>::empty(1);
        let bad = Summary::new([1.0, 2.0]).unwrap();
        let empty: &[Summary<f64>] = &[];
        assert!(mmd2_u_incremental(&mut sums, &Kernel::Linear, &r, empty, None, Some(&bad)).is_err());
    }
}
