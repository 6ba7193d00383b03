use std::collections::VecDeque;

use crate::error::{Result, ShiftError};
use crate::scalar::{cmp, Scalar};
use crate::statistics::kernel::Kernel;
use crate::statistics::mmd::{mmd2_u_for_kernel, mmd2_u_incremental, MmdSums};
use crate::statistics::reference::ReferenceSet;
use crate::summaries::Summary;

/// Full recomputation period for incrementally maintained sums.
pub const DEFAULT_REFRESH_EVERY: usize = 10_000;

/// The `w` most recent deployment summaries, with a sorted view (scalar
/// case) and optional kernel sums against a reference set.
#[derive(Debug, Clone)]
pub struct SlidingWindow<T: Scalar> {
    capacity: usize,
    dim: Option<usize>,
    buffer: VecDeque<Summary<T>>,
    sorted_view: Vec<T>,
    sum: T,
    kernel: Option<(Kernel<T>, MmdSums<T>)>,
    slides_since_refresh: usize,
    refresh_every: usize,
}

impl<T: Scalar> SlidingWindow<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(ShiftError::InvalidParameter("window capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            dim: None,
            buffer: VecDeque::with_capacity(capacity + 1),
            sorted_view: Vec::with_capacity(capacity + 1),
            sum: T::zero(),
            kernel: None,
            slides_since_refresh: 0,
            refresh_every: DEFAULT_REFRESH_EVERY,
        })
    }

    pub fn with_refresh_every(mut self, steps: usize) -> Self {
        self.refresh_every = steps.max(1);
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Contents in arrival order, oldest first.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Summary<T>> + Clone {
        self.buffer.iter()
    }

    pub fn to_vec(&self) -> Vec<Summary<T>> {
        self.buffer.iter().cloned().collect()
    }

    /// Ascending scalar values; empty for multivariate windows.
    pub fn sorted_view(&self) -> &[T] {
        &self.sorted_view
    }

    pub fn newest(&self) -> Option<&Summary<T>> {
        self.buffer.back()
    }

    /// Running mean of a scalar window.
    pub fn mean(&self) -> Option<T> {
        (self.dim == Some(1) && !self.buffer.is_empty())
            .then(|| self.sum / T::from_count(self.buffer.len()))
    }

    pub fn kernel_sums(&self) -> Option<&MmdSums<T>> {
        self.kernel.as_ref().map(|(_, s)| s)
    }

    /// MMD^2_u from the cached sums, if they were maintained for `kernel`.
    pub fn cached_mmd2_u(&self, kernel: &Kernel<T>, reference: &ReferenceSet<T>) -> Option<T> {
        let (k, sums) = self.kernel.as_ref()?;
        if k != kernel || self.buffer.len() < 2 {
            return None;
        }
        Some(mmd2_u_for_kernel(
            kernel,
            reference.kernel_self_sum(kernel),
            sums.window_self,
            sums.cross,
            reference.len(),
            self.buffer.len(),
        ))
    }

    /// Appends `s`, evicting the oldest summary once the window is full.
    /// With a kernel context, the MMD sums are updated in `O(n + w)`.
    pub fn push(
        &mut self,
        s: Summary<T>,
        kernel_context: Option<(&Kernel<T>, &ReferenceSet<T>)>,
    ) -> Result<Option<Summary<T>>> {
        let dim = *self.dim.get_or_insert(s.dim());
        if s.dim() != dim {
            return Err(ShiftError::DimensionMismatch { expected: dim, actual: s.dim() });
        }
        if let Some((_, reference)) = kernel_context {
            if reference.dim() != dim {
                return Err(ShiftError::DimensionMismatch { expected: reference.dim(), actual: dim });
            }
        }

        let evicted = if self.buffer.len() == self.capacity { self.buffer.pop_front() } else { None };

        if dim == 1 {
            let v = s.first();
            if let Some(old) = &evicted {
                let o = old.first();
                let pos = self.sorted_view.partition_point(|x| cmp(x, &o) == std::cmp::Ordering::Less);
                debug_assert!(pos < self.sorted_view.len() && self.sorted_view[pos] == o);
                self.sorted_view.remove(pos);
                self.sum -= o;
            }
            let pos = self.sorted_view.partition_point(|x| cmp(x, &v) != std::cmp::Ordering::Greater);
            self.sorted_view.insert(pos, v);
            self.sum += v;
        }

        let mut rebuild = false;
        match (kernel_context, &mut self.kernel) {
            (Some((kernel, reference)), Some((k, sums))) if k == kernel && sums.dim == dim => {
                if mmd2_u_incremental(sums, kernel, reference, &self.buffer, evicted.as_ref(), Some(&s))
                    .is_err()
                {
                    rebuild = true;
                }
            }
            (Some(_), _) => rebuild = true,
            (None, _) => self.kernel = None,
        }

        self.buffer.push_back(s);
        self.slides_since_refresh += 1;

        if rebuild || self.slides_since_refresh >= self.refresh_every {
            self.refresh(kernel_context);
        }
        Ok(evicted)
    }

    /// Recomputes every cached quantity from the buffer.
    pub fn refresh(&mut self, kernel_context: Option<(&Kernel<T>, &ReferenceSet<T>)>) {
        self.slides_since_refresh = 0;
        if self.dim == Some(1) {
            self.sum = self.buffer.iter().map(Summary::first).sum();
        }
        if let Some((kernel, reference)) = kernel_context {
            self.kernel = Some((*kernel, MmdSums::recompute(kernel, reference, &self.buffer)));
        }
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
        self.sorted_view.clear();
        self.sum = T::zero();
        self.kernel = None;
        self.slides_since_refresh = 0;
    }
}
