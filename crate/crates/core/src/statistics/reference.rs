use crate::error::{Result, ShiftError};
use crate::scalar::{cmp, Scalar};
use crate::statistics::kernel::{median_heuristic, Kernel};
use crate::summaries::Summary;

#[derive(Debug, Clone, PartialEq)]
struct KernelCache<T: Scalar> {
    kernel: Kernel<T>,
    /// `sum_{i != j} k(x_i, x_j)`
    self_sum: T,
}

/// Pre-change reference summaries `S` with cached sort order and kernel sums.
///
/// Immutable once built, so it can be shared across detector runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet<T: Scalar> {
    summaries: Vec<Summary<T>>,
    dim: usize,
    sorted_values: Option<Vec<T>>,
    sum: Option<T>,
    kernel: Option<KernelCache<T>>,
}

impl<T: Scalar> ReferenceSet<T> {
    pub fn new(summaries: Vec<Summary<T>>) -> Result<Self> {
        if summaries.len() < 2 {
            return Err(ShiftError::TooFewSamples(format!(
                "reference set needs n >= 2, got {}",
                summaries.len()
            )));
        }
        let dim = summaries[0].dim();
        if let Some(bad) = summaries.iter().find(|s| s.dim() != dim) {
            return Err(ShiftError::DimensionMismatch { expected: dim, actual: bad.dim() });
        }
        let (sorted_values, sum) = if dim == 1 {
            let mut v: Vec<T> = summaries.iter().map(Summary::first).collect();
            let sum = v.iter().copied().sum();
            v.sort_unstable_by(cmp);
            (Some(v), Some(sum))
        } else {
            (None, None)
        };
        Ok(Self { summaries, dim, sorted_values, sum, kernel: None })
    }

    pub fn from_scalars(values: &[T]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Summary::scalar(v)).collect::<Result<_>>()?)
    }

    /// Caches `sum_{i != j} k(x_i, x_j)` for `kernel`.
    pub fn with_kernel(mut self, kernel: Kernel<T>) -> Result<Self> {
        kernel.validate()?;
        let self_sum = brute_self_sum(&self.summaries, &kernel);
        self.kernel = Some(KernelCache { kernel, self_sum });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_scalar(&self) -> bool {
        self.dim == 1
    }

    pub fn summaries(&self) -> &[Summary<T>] {
        &self.summaries
    }

    /// Ascending copy of scalar values; `None` for multivariate references.
    pub fn sorted_values(&self) -> Option<&[T]> {
        self.sorted_values.as_deref()
    }

    pub fn mean(&self) -> Option<T> {
        self.sum.map(|s| s / T::from_count(self.len()))
    }

    pub fn cached_kernel(&self) -> Option<&Kernel<T>> {
        self.kernel.as_ref().map(|c| &c.kernel)
    }

    /// `sum_{i != j} k(x_i, x_j)`, from cache when the kernel matches.
    pub fn kernel_self_sum(&self, kernel: &Kernel<T>) -> T {
        match &self.kernel {
            Some(c) if c.kernel == *kernel => c.self_sum,
            _ => brute_self_sum(&self.summaries, kernel),
        }
    }

    pub fn median_heuristic(&self) -> Result<T> {
        median_heuristic(&self.summaries)
    }
}

pub(crate) fn brute_self_sum<T: Scalar>(points: &[Summary<T>], kernel: &Kernel<T>) -> T {
    let mut total = T::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            total += kernel.eval(a, b);
        }
    }
    total + total
}

/// Free-function form of [`ReferenceSet::median_heuristic`].
pub fn reference_median_heuristic<T: Scalar>(reference: &ReferenceSet<T>) -> Result<T> {
    reference.median_heuristic()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(ReferenceSet::<f64>::from_scalars(&[1.0]).is_err());
        let mixed = vec![Summary::new([1.0]).unwrap(), Summary::new([1.0, 2.0]).unwrap()];
        assert!(matches!(ReferenceSet::new(mixed), Err(ShiftError::DimensionMismatch { .. })));
    }

    #[test]
    fn sorted_copy_is_a_permutation() {
        let r = ReferenceSet::from_scalars(&[3.0, -1.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.sorted_values().unwrap(), &[-1.0, 2.0, 2.0, 3.0]);
        assert_eq!(r.mean(), Some(1.5));
    }

    #[test]
    fn cached_self_sum_matches_recomputation() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let k = Kernel::rbf(0.8).unwrap();
        let r = ReferenceSet::from_scalars(&xs).unwrap().with_kernel(k).unwrap();
        let mut brute = 0.0;
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if i != j {
                    brute += k.eval(&[xs[i]], &[xs[j]]);
                }
            }
        }
        let cached = r.kernel_self_sum(&k);
        assert!((cached - brute).abs() <= 1e-9 * brute.abs());
    }
}
