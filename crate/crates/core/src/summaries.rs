//! Summary statistics: projections of raw instances into the space where
//! two-sample statistics are computed.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{Result, ShiftError};
use crate::scalar::Scalar;

pub(crate) type Values<T> = SmallVec<[T; 2]>;

/// A point in summary space. Entries are always finite.
#[derive(Clone, PartialEq, Default)]
pub struct Summary<T: Scalar>(Values<T>);

impl<T: Scalar> Summary<T> {
    pub fn new(values: impl IntoIterator<Item = T>) -> Result<Self> {
        let values: Values<T> = values.into_iter().collect();
        if values.is_empty() {
            return Err(ShiftError::InvalidSummary("summary must have at least one entry".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ShiftError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn scalar(value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(ShiftError::NonFinite);
        }
        Ok(Self(smallvec::smallvec![value]))
    }

    /// Caller guarantees finiteness (used by the synthetic generators).
    pub(crate) fn from_values_unchecked(values: Values<T>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    /// First coordinate; the value of a scalar summary.
    pub fn first(&self) -> T {
        self.0[0]
    }
}

impl<T: Scalar> Deref for Summary<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Scalar> fmt::Debug for Summary<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Summary").field(&self.0.as_slice()).finish()
    }
}

/// A raw deployment instance: features plus an optional label.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T: Scalar> {
    pub x: Values<T>,
    pub y: Option<Values<T>>,
}

impl<T: Scalar> Instance<T> {
    pub fn unlabelled(x: impl IntoIterator<Item = T>) -> Self {
        Self { x: x.into_iter().collect(), y: None }
    }

    pub fn labelled(x: impl IntoIterator<Item = T>, y: impl IntoIterator<Item = T>) -> Self {
        Self { x: x.into_iter().collect(), y: Some(y.into_iter().collect()) }
    }
}

impl<T: Scalar> From<Summary<T>> for Instance<T> {
    fn from(s: Summary<T>) -> Self {
        Self { x: s.0, y: None }
    }
}

/// Black-box model `M`. Must be free of side effects when shared across workers.
pub type Model<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
/// Black-box performance metric `loss(y, M(x))`.
pub type Loss<T> = Arc<dyn Fn(&[T], &[T]) -> T + Send + Sync>;

pub fn squared_error<T: Scalar>() -> Loss<T> {
    Arc::new(|y: &[T], p: &[T]| y.iter().zip(p).map(|(&a, &b)| (a - b) * (a - b)).sum())
}

/// Cross-entropy of predicted probabilities `p` against a one-hot/soft label `y`.
pub fn cross_entropy<T: Scalar>() -> Loss<T> {
    Arc::new(|y: &[T], p: &[T]| {
        let eps = T::lit(1e-12);
        -y.iter().zip(p).map(|(&a, &b)| a * (b.max(eps)).ln()).sum::<T>()
    })
}

/// Fixed linear-softmax classifier used as a stand-in for a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmax<T: Scalar> {
    /// `classes x in_dim`
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearSoftmax<T> {
    pub fn new(weights: Vec<Vec<T>>, bias: Vec<T>) -> Result<Self> {
        if weights.is_empty() || weights.len() != bias.len() {
            return Err(ShiftError::InvalidSummary(
                "linear-softmax needs one bias per weight row".into(),
            ));
        }
        let in_dim = weights[0].len();
        if in_dim == 0 || weights.iter().any(|r| r.len() != in_dim) {
            return Err(ShiftError::InvalidSummary("ragged linear-softmax weights".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &[T]) -> Vec<T> {
        let logits: Vec<T> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + b)
            .collect();
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    pub fn into_model(self) -> Model<T> {
        Arc::new(move |x: &[T]| self.predict(x))
    }
}

#[derive(Clone)]
pub enum SummaryKind<T: Scalar> {
    Identity,
    ModelOutput { model: Model<T> },
    ModelLoss { model: Model<T>, loss: Loss<T> },
    /// Row-major `out_dim x in_dim` matrix.
    AffineProjection { matrix: Vec<Vec<T>> },
}

impl<T: Scalar> fmt::Debug for SummaryKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => f.write_str("Identity"),
            Self::ModelOutput { .. } => f.write_str("ModelOutput"),
            Self::ModelLoss { .. } => f.write_str("ModelLoss"),
            Self::AffineProjection { matrix } => {
                write!(f, "AffineProjection({}x{})", matrix.len(), matrix.first().map_or(0, Vec::len))
            }
        }
    }
}

/// Stage-2 projection `s: X x Y -> S`.
#[derive(Debug, Clone)]
pub struct SummaryStatistic<T: Scalar> {
    kind: SummaryKind<T>,
    in_dim: usize,
    out_dim: usize,
}

impl<T: Scalar> SummaryStatistic<T> {
    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { kind: SummaryKind::Identity, in_dim: dim, out_dim: dim })
    }

    pub fn model_output(model: Model<T>, in_dim: usize, out_dim: usize) -> Result<Self> {
        check_dim(in_dim)?;
        check_dim(out_dim)?;
        Ok(Self { kind: SummaryKind::ModelOutput { model }, in_dim, out_dim })
    }

    pub fn model_loss(model: Model<T>, loss: Loss<T>, in_dim: usize) -> Result<Self> {
        check_dim(in_dim)?;
        Ok(Self { kind: SummaryKind::ModelLoss { model, loss }, in_dim, out_dim: 1 })
    }

    pub fn affine_projection(matrix: Vec<Vec<T>>) -> Result<Self> {
        let out_dim = matrix.len();
        check_dim(out_dim)?;
        let in_dim = matrix[0].len();
        check_dim(in_dim)?;
        if matrix.iter().any(|r| r.len() != in_dim) {
            return Err(ShiftError::InvalidSummary("projection matrix rows differ in length".into()));
        }
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ShiftError::InvalidSummary("projection matrix has non-finite entries".into()));
        }
        Ok(Self { kind: SummaryKind::AffineProjection { matrix }, in_dim, out_dim })
    }

    pub fn kind(&self) -> &SummaryKind<T> {
        &self.kind
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, SummaryKind::Identity)
    }

    /// Projects one instance. A label must be given exactly when the summary is a model loss.
    pub fn apply(&self, x: &[T], y: Option<&[T]>) -> Result<Summary<T>> {
        if x.len() != self.in_dim {
            return Err(ShiftError::DimensionMismatch { expected: self.in_dim, actual: x.len() });
        }
        let out = match &self.kind {
            SummaryKind::ModelLoss { model, loss } => {
                let y = y.ok_or(ShiftError::MissingLabel)?;
                let pred = model(x);
                Summary::scalar(loss(y, &pred))?
            }
            _ if y.is_some() => return Err(ShiftError::UnexpectedLabel),
            SummaryKind::Identity => Summary::new(x.iter().copied())?,
            SummaryKind::ModelOutput { model } => Summary::new(model(x))?,
            SummaryKind::AffineProjection { matrix } => Summary::new(
                matrix.iter().map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>()),
            )?,
        };
        if out.dim() != self.out_dim {
            return Err(ShiftError::DimensionMismatch { expected: self.out_dim, actual: out.dim() });
        }
        Ok(out)
    }

    pub fn apply_instance(&self, instance: &Instance<T>) -> Result<Summary<T>> {
        self.apply(&instance.x, instance.y.as_deref())
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(ShiftError::InvalidSummary("dimensions must be positive".into()))
    } else {
        Ok(())
    }
}

/// Free-function form of [`SummaryStatistic::apply`].
pub fn apply_summary<T: Scalar>(
    stat: &SummaryStatistic<T>,
    x: &[T],
    y: Option<&[T]>,
) -> Result<Summary<T>> {
    stat.apply(x, y)
}
