//! Sudden change-point stream model and synthetic/file-backed summary streams.
//!
//! A stream draws from the pre-change distribution `p` for `t < tau` and from
//! the post-change distribution `q` for `t >= tau`. The draw at index `t` is
//! a pure function of `(master seed, stream id, t)`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::num::NonZeroUsize;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShiftError};
use crate::scalar::Scalar;
use crate::seed::StreamSeed;
use crate::summaries::{Summary, Values};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct MixtureComponent<T: Scalar> {
    pub weight: T,
    pub mean: Vec<T>,
    /// Diagonal covariance.
    pub var: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound(deserialize = "T: Scalar"))]
pub enum DistributionSpec<T: Scalar> {
    /// `N(mean, diag(var))`.
    Gaussian { mean: Vec<T>, var: Vec<T> },
    GaussianMixture { components: Vec<MixtureComponent<T>> },
    /// Independent coordinates, `U[low_i, high_i)`.
    Uniform { low: Vec<T>, high: Vec<T> },
}

impl<T: Scalar> DistributionSpec<T> {
    pub fn standard_normal() -> Self {
        Self::Gaussian { mean: vec![T::zero()], var: vec![T::one()] }
    }

    pub fn normal(mean: T, var: T) -> Self {
        Self::Gaussian { mean: vec![mean], var: vec![var] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } => mean.len(),
            Self::GaussianMixture { components } => components.first().map_or(0, |c| c.mean.len()),
            Self::Uniform { low, .. } => low.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ShiftError::InvalidDistribution(m.to_string()));
        let check_gauss = |mean: &[T], var: &[T]| -> Result<()> {
            if mean.is_empty() {
                return bad("dimension must be positive");
            }
            if mean.len() != var.len() {
                return bad("mean and variance lengths differ");
            }
            if mean.iter().any(|m| !m.is_finite()) {
                return bad("means must be finite");
            }
            if var.iter().any(|&v| !(v > T::zero() && v.is_finite())) {
                return bad("variances must be strictly positive and finite");
            }
            Ok(())
        };
        match self {
            Self::Gaussian { mean, var } => check_gauss(mean, var),
            Self::GaussianMixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component");
                }
                let dim = components[0].mean.len();
                let mut total = 0.0;
                for c in components {
                    check_gauss(&c.mean, &c.var)?;
                    if c.mean.len() != dim {
                        return bad("mixture components differ in dimension");
                    }
                    if c.weight.is_nan() || c.weight < T::zero() {
                        return bad("mixture weights must be non-negative");
                    }
                    total += c.weight.as_f64();
                }
                if (total - 1.0).abs() > 1e-12 {
                    return bad("mixture weights must sum to 1");
                }
                Ok(())
            }
            Self::Uniform { low, high } => {
                if low.is_empty() || low.len() != high.len() {
                    return bad("uniform bounds must be non-empty and equal length");
                }
                if low.iter().zip(high).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
                    return bad("uniform bounds need low < high, both finite");
                }
                Ok(())
            }
        }
    }

    /// One draw. Assumes the spec has been validated.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Summary<T> {
        let values: Values<T> = match self {
            Self::Gaussian { mean, var } => gaussian(mean, var, rng),
            Self::GaussianMixture { components } => {
                let u = T::unit_uniform(rng);
                let mut acc = T::zero();
                let mut pick = components.len() - 1;
                for (i, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let c = &components[pick];
                gaussian(&c.mean, &c.var, rng)
            }
            Self::Uniform { low, high } => low
                .iter()
                .zip(high)
                .map(|(&l, &h)| l + (h - l) * T::unit_uniform(rng))
                .collect(),
        };
        Summary::from_values_unchecked(values)
    }
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(mean: &[T], var: &[T], rng: &mut R) -> Values<T> {
    mean.iter().zip(var).map(|(&m, &v)| m + v.sqrt() * T::standard_normal(rng)).collect()
}

/// `p_t = p` for `t < tau`, `q` for `t >= tau`. `change_point = None` means `tau = infinity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct ChangePointModel<T: Scalar> {
    pre: DistributionSpec<T>,
    post: DistributionSpec<T>,
    change_point: Option<u64>,
}

impl<T: Scalar> ChangePointModel<T> {
    pub fn new(
        pre: DistributionSpec<T>,
        post: DistributionSpec<T>,
        change_point: Option<u64>,
    ) -> Result<Self> {
        pre.validate()?;
        post.validate()?;
        if pre.dim() != post.dim() {
            return Err(ShiftError::InvalidDistribution(format!(
                "pre-change dimension {} differs from post-change dimension {}",
                pre.dim(),
                post.dim()
            )));
        }
        if change_point == Some(0) {
            return Err(ShiftError::InvalidDistribution("change point must be >= 1".into()));
        }
        Ok(Self { pre, post, change_point })
    }

    /// A model that never changes.
    pub fn stationary(p: DistributionSpec<T>) -> Result<Self> {
        Self::new(p.clone(), p, None)
    }

    pub fn pre(&self) -> &DistributionSpec<T> {
        &self.pre
    }

    pub fn post(&self) -> &DistributionSpec<T> {
        &self.post
    }

    pub fn change_point(&self) -> Option<u64> {
        self.change_point
    }

    pub fn dim(&self) -> usize {
        self.pre.dim()
    }

    /// Distribution in force at time `t >= 1`.
    pub fn distribution_at(&self, t: u64) -> &DistributionSpec<T> {
        match self.change_point {
            Some(tau) if t >= tau => &self.post,
            _ => &self.pre,
        }
    }

    pub fn sample_at(&self, t: u64, seed: &StreamSeed) -> Summary<T> {
        assert!(t >= 1, "stream time starts at 1");
        self.distribution_at(t).sample(&mut seed.rng_at(t))
    }

    pub fn generate_stream(&self, length: NonZeroUsize, seed: &StreamSeed) -> Vec<Summary<T>> {
        (1..=length.get() as u64).map(|t| self.sample_at(t, seed)).collect()
    }

    /// Lazy generator over `t = 1, 2, ...`.
    pub fn iter(&self, seed: StreamSeed) -> impl Iterator<Item = Summary<T>> + '_ {
        (1u64..).map(move |t| self.sample_at(t, &seed))
    }
}

/// Free-function form of [`ChangePointModel::sample_at`].
pub fn sample_at<T: Scalar>(model: &ChangePointModel<T>, t: u64, seed: &StreamSeed) -> Summary<T> {
    model.sample_at(t, seed)
}

pub fn generate_stream<T: Scalar>(
    model: &ChangePointModel<T>,
    length: NonZeroUsize,
    seed: &StreamSeed,
) -> Vec<Summary<T>> {
    model.generate_stream(length, seed)
}

/// Reads a stream file: one summary per line, comma-separated reals, with an
/// optional `# dim=<d>` header. Blank lines and other `#` lines are skipped.
pub fn read_stream<T: Scalar, R: BufRead>(reader: R) -> Result<Vec<Summary<T>>> {
    let mut declared: Option<usize> = None;
    let mut out: Vec<Summary<T>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ShiftError::StreamFile(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(d) = comment.trim().strip_prefix("dim=") {
                if lineno != 0 {
                    return Err(ShiftError::StreamFile("dim header must be the first line".into()));
                }
                let d = d.trim().parse::<usize>().map_err(|_| {
                    ShiftError::StreamFile(format!("bad dim header `{line}`"))
                })?;
                if d == 0 {
                    return Err(ShiftError::StreamFile("dim must be positive".into()));
                }
                declared = Some(d);
            }
            continue;
        }
        let values = line
            .split(',')
            .map(|f| {
                f.trim().parse::<T>().map_err(|_| {
                    ShiftError::StreamFile(format!("line {}: cannot parse `{}`", lineno + 1, f.trim()))
                })
            })
            .collect::<Result<Vec<T>>>()?;
        let expected = *declared.get_or_insert(values.len());
        if values.len() != expected {
            return Err(ShiftError::StreamFile(format!(
                "line {}: expected {expected} values, found {}",
                lineno + 1,
                values.len()
            )));
        }
        out.push(Summary::new(values).map_err(|e| {
            ShiftError::StreamFile(format!("line {}: {e}", lineno + 1))
        })?);
    }
    Ok(out)
}

pub fn write_stream<T: Scalar, W: Write>(mut writer: W, stream: &[Summary<T>]) -> Result<()> {
    let io = |e: std::io::Error| ShiftError::StreamFile(e.to_string());
    let dim = stream.first().map_or(1, |s| s.dim());
    writeln!(writer, "# dim={dim}").map_err(io)?;
    let mut line = String::new();
    for s in stream {
        line.clear();
        for (i, v) in s.values().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{v}").expect("write to String");
        }
        writeln!(writer, "{line}").map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> StreamSeed {
        StreamSeed::new(2024, 1)
    }

    fn nz(n: usize) -> NonZeroUsize {
        NonZeroUsize::new(n).unwrap()
    }

    #[test]
    fn infinite_change_point_draws_only_from_p() {
        let p = DistributionSpec::Uniform { low: vec![0.0], high: vec![1.0] };
        let q = DistributionSpec::Uniform { low: vec![10.0], high: vec![11.0] };
        let m = ChangePointModel::new(p, q, None).unwrap();
        for t in [1, 5, 1_000_000] {
            let v = m.sample_at(t, &seed()).first();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn immediate_change_draws_from_q() {
        let p = DistributionSpec::Uniform { low: vec![0.0], high: vec![1.0] };
        let q = DistributionSpec::Uniform { low: vec![10.0], high: vec![11.0] };
        let m = ChangePointModel::new(p, q, Some(1)).unwrap();
        let v = m.sample_at(1, &seed()).first();
        assert!((10.0..11.0).contains(&v));
    }

    #[test]
    fn post_change_mean_matches_q() {
        let m = ChangePointModel::new(
            DistributionSpec::standard_normal(),
            DistributionSpec::normal(1.0, 1.0),
            Some(100),
        )
        .unwrap();
        let s = seed();
        let mean: f64 = (100..10_100).map(|t| m.sample_at(t, &s).first()).sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 3.0 / 100.0, "mean {mean}");
    }

    #[test]
    fn streams_are_deterministic() {
        let m = ChangePointModel::stationary(DistributionSpec::<f64>::standard_normal()).unwrap();
        let a = m.generate_stream(nz(500), &seed());
        let b = m.generate_stream(nz(500), &seed());
        assert_eq!(a, b);
        let c = m.generate_stream(nz(500), &StreamSeed::new(2024, 2));
        assert_ne!(a, c);
    }

    #[test]
    fn change_point_beyond_horizon() {
        let p = DistributionSpec::Uniform { low: vec![0.0], high: vec![1.0] };
        let q = DistributionSpec::Uniform { low: vec![5.0], high: vec![6.0] };
        let m = ChangePointModel::new(p, q, Some(50)).unwrap();
        assert!(m.generate_stream(nz(49), &seed()).iter().all(|s| s.first() < 1.0));
    }

    #[test]
    fn stationary_moments() {
        let m = ChangePointModel::stationary(DistributionSpec::<f64>::standard_normal()).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = m.generate_stream(nz(n), &seed()).iter().map(|s| s.first()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (1.0 / n as f64).sqrt();
        let se_var = (2.0 / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 5.0 * se_mean, "mean {mean}");
        assert!((var - 1.0).abs() < 5.0 * se_var, "var {var}");
    }

    #[test]
    fn split_generation_matches_whole() {
        let p = DistributionSpec::<f64>::standard_normal();
        let q = DistributionSpec::normal(3.0, 2.0);
        let tau = 40;
        let len = 100;
        let s = seed();
        let whole = ChangePointModel::new(p.clone(), q.clone(), Some(tau))
            .unwrap()
            .generate_stream(nz(len), &s);
        let pre_only = ChangePointModel::stationary(p).unwrap();
        let post_only = ChangePointModel::stationary(q).unwrap();
        let mut stitched: Vec<_> = (1..tau).map(|t| pre_only.sample_at(t, &s)).collect();
        stitched.extend((tau..=len as u64).map(|t| post_only.sample_at(t, &s)));
        assert_eq!(whole, stitched);
    }

    #[test]
    fn validation() {
        let bad_var = DistributionSpec::Gaussian { mean: vec![0.0], var: vec![0.0] };
        assert!(bad_var.validate().is_err());
        let bad_weights = DistributionSpec::GaussianMixture {
            components: vec![
                MixtureComponent { weight: 0.5, mean: vec![0.0], var: vec![1.0] },
                MixtureComponent { weight: 0.4, mean: vec![1.0], var: vec![1.0] },
            ],
        };
        assert!(bad_weights.validate().is_err());
        let dim_mismatch = ChangePointModel::new(
            DistributionSpec::<f64>::standard_normal(),
            DistributionSpec::Gaussian { mean: vec![0.0, 0.0], var: vec![1.0, 1.0] },
            None,
        );
        assert!(dim_mismatch.is_err());
        assert!(ChangePointModel::new(
            DistributionSpec::<f64>::standard_normal(),
            DistributionSpec::standard_normal(),
            Some(0)
        )
        .is_err());
    }

    #[test]
    fn mixture_samples_both_modes() {
        let spec = DistributionSpec::GaussianMixture {
            components: vec![
                MixtureComponent { weight: 0.5, mean: vec![-10.0], var: vec![0.01] },
                MixtureComponent { weight: 0.5, mean: vec![10.0], var: vec![0.01] },
            ],
        };
        let m = ChangePointModel::stationary(spec).unwrap();
        let xs = m.generate_stream(nz(2000), &seed());
        let high = xs.iter().filter(|s| s.first() > 0.0).count();
        assert!((800..1200).contains(&high), "{high}");
    }

    #[test]
    fn stream_file_round_trip_and_errors() {
        let m = ChangePointModel::stationary(DistributionSpec::<f64>::Gaussian {
            mean: vec![0.0, 1.0],
            var: vec![1.0, 2.0],
        })
        .unwrap();
        let xs = m.generate_stream(nz(20), &seed());
        let mut buf = Vec::new();
        write_stream(&mut buf, &xs).unwrap();
        let back: Vec<Summary<f64>> = read_stream(buf.as_slice()).unwrap();
        assert_eq!(back, xs);

        let no_header: Vec<Summary<f64>> = read_stream("1.5\n-2\n\n3e-1\n".as_bytes()).unwrap();
        assert_eq!(no_header.len(), 3);
        assert!(read_stream::<f64, _>("# dim=2\n1,2\n3\n".as_bytes()).is_err());
        assert!(read_stream::<f64, _>("1,x\n".as_bytes()).is_err());
        assert!(read_stream::<f64, _>("1,inf\n".as_bytes()).is_err());
    }
}
