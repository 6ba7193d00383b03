use serde::{Deserialize, Serialize};

use crate::error::{Result, ShiftError};
use crate::scalar::Scalar;
use crate::summaries::Summary;

/// Positive-definite kernel on summary space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum Kernel<T: Scalar> {
    /// `exp(-|x - y|^2 / (2 bandwidth^2))`
    Rbf { bandwidth: T },
    /// `<x, y>`
    Linear,
    /// `value` everywhere.
    Constant { value: T },
}

impl<T: Scalar> Kernel<T> {
    pub fn rbf(bandwidth: T) -> Result<Self> {
        let k = Self::Rbf { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Rbf { bandwidth } if !(bandwidth > T::zero() && bandwidth.is_finite()) => Err(
                ShiftError::InvalidKernel(format!("rbf bandwidth must be positive, got {bandwidth}")),
            ),
            Self::Constant { value } if !value.is_finite() => {
                Err(ShiftError::InvalidKernel("constant kernel value must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        match *self {
            Self::Rbf { bandwidth } => {
                let d2: T = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum();
                (-d2 / (T::lit(2.0) * bandwidth * bandwidth)).exp()
            }
            Self::Linear => x.iter().zip(y).map(|(&a, &b)| a * b).sum(),
            Self::Constant { value } => value,
        }
    }

    /// `sum_i k(x_i, y)` over a set of points.
    pub fn row_sum<'a, I>(&self, points: I, y: &[T]) -> T
    where
        I: IntoIterator<Item = &'a Summary<T>>,
    {
        points.into_iter().map(|x| self.eval(x, y)).sum()
    }
}

/// Median of all pairwise Euclidean distances (mean of the two middle values
/// for an even count).
pub fn median_heuristic<T: Scalar>(points: &[Summary<T>]) -> Result<T> {
    if points.len() < 2 {
        return Err(ShiftError::TooFewSamples("median heuristic needs at least 2 points".into()));
    }
    let mut dists = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d2: T = a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum();
            dists.push(d2.sqrt());
        }
    }
    let len = dists.len();
    let mid = len / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, crate::scalar::cmp);
    let median = if len % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(T::neg_infinity(), T::max);
        (lower + upper) / T::lit(2.0)
    };
    if median <= T::zero() {
        return Err(ShiftError::DegenerateBandwidth);
    }
    Ok(median)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Summary<f64>> {
        xs.iter().map(|&x| Summary::scalar(x).unwrap()).collect()
    }

    #[test]
    fn median_of_three_points() {
        assert_eq!(median_heuristic(&pts(&[0.0, 1.0, 3.0])).unwrap(), 2.0);
    }

    #[test]
    fn median_even_count_averages_middle() {
        // distances: 1, 3, 6, 2, 5, 3 -> sorted 1 2 3 3 5 6 -> 3
        assert_eq!(median_heuristic(&pts(&[0.0, 1.0, 3.0, 6.0])).unwrap(), 3.0);
        // 1 2 3 -> odd; 0,1,2,4: 1 2 4 1 3 2 -> 1 1 2 2 3 4 -> 2
        assert_eq!(median_heuristic(&pts(&[0.0, 1.0, 2.0, 4.0])).unwrap(), 2.0);
    }

    #[test]
    fn median_degenerate_reference() {
        assert_eq!(median_heuristic(&pts(&[2.5; 10])), Err(ShiftError::DegenerateBandwidth));
    }

    #[test]
    fn median_is_homogeneous() {
        let base = [0.3, -1.0, 2.2, 5.0, 0.9];
        let s = median_heuristic(&pts(&base)).unwrap();
        let scaled: Vec<f64> = base.iter().map(|x| x * 4.0).collect();
        let s4 = median_heuristic(&pts(&scaled)).unwrap();
        assert!((s4 - 4.0 * s).abs() < 1e-12);
    }

    #[test]
    fn kernel_values() {
        let k = Kernel::rbf(1.0).unwrap();
        assert_eq!(k.eval(&[1.0], &[1.0]), 1.0);
        assert!((k.eval(&[0.0], &[1.0]) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(Kernel::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(Kernel::Constant { value: 0.7 }.eval(&[1.0], &[9.0]), 0.7);
        assert!(Kernel::rbf(0.0).is_err());
        assert!(Kernel::rbf(-1.0).is_err());
    }
}
