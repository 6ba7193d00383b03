//! Experiment configuration: JSON schema, validation and hashing.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqdrift_core::calibration::{
    calibrate_schedule, ks_asymptotic_threshold, permutation_threshold, required_streams, CalibrationOptions,
    CalibrationTarget, SurvivorFloorPolicy, ThresholdSchedule, DEFAULT_SURVIVOR_FLOOR,
};
use seqdrift_core::detector::DetectorConfig;
use seqdrift_core::evaluation::default_cap;
use seqdrift_core::seed::STREAM_REFERENCE;
use seqdrift_core::statistics::{Kernel, ReferenceSet};
use seqdrift_core::streams::{read_stream, ChangePointModel, DistributionSpec};
use seqdrift_core::summaries::{LinearSoftmax, Summary, SummaryStatistic};
use seqdrift_core::{StatisticKind, StreamSeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub detector: DetectorSection,
    pub reference: ReferenceSection,
    pub stream: StreamSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    /// Scalar identity when omitted.
    #[serde(default)]
    pub summary: Option<SummaryConfig>,
    pub statistic: StatisticKind,
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    pub w: usize,
    pub threshold: ThresholdConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SummaryConfig {
    /// Raw features; `dim` defaults to 1.
    Identity {
        #[serde(default)]
        dim: Option<usize>,
    },
    AffineProjection { matrix: Vec<Vec<f64>> },
    /// Class probabilities of a fixed linear-softmax model.
    LinearSoftmax { weights: Vec<Vec<f64>>, bias: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// RBF with the given bandwidth, or the reference median heuristic when omitted.
    Rbf {
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    Linear,
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdConfig {
    Fixed {
        h: f64,
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// Closed-form two-sample KS quantile.
    Asymptotic { alpha: f64 },
    Permutation { alpha: f64, n_perm: usize },
    /// Simulation-calibrated time-varying schedule.
    Calibrated {
        alpha: f64,
        t_max: usize,
        b: usize,
        #[serde(default = "default_floor")]
        survivor_floor: usize,
        #[serde(default)]
        floor_policy: SurvivorFloorPolicy,
    },
    /// A schedule written earlier by `calibrate`.
    File { path: PathBuf },
}

fn default_floor() -> usize {
    DEFAULT_SURVIVOR_FLOOR
}

/// Either `{distribution, n}` (sampled from the seed) or `{path}` (a stream file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    pub pre: DistributionSpec<f64>,
    #[serde(default)]
    pub post: Option<DistributionSpec<f64>>,
    #[serde(default)]
    pub change_point: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default)]
    pub n_runs: Option<usize>,
    #[serde(default)]
    pub cap: Option<u64>,
    #[serde(default)]
    pub lambda: Option<u64>,
    /// Window sizes for an `arl` sweep; defaults to the detector's `w`.
    #[serde(default)]
    pub w_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// Lowercase hex SHA-256 of the canonical (key-sorted, compact) JSON of `value`.
pub fn canonical_hash<S: Serialize>(value: &S) -> String {
    let canonical = serde_json::to_value(value).expect("config serializes").to_string();
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    /// Parses and validates; relative paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = File::open(path).with_context(|| format!("cannot open config {}", path.display()))?;
        let config: Self = serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate(&base)?;
        Ok((config, base))
    }

    pub fn hash(&self) -> String {
        canonical_hash(self)
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        let d = &self.detector;
        ensure!(d.w >= 1, "detector.w must be at least 1");
        let summary = self.summary()?;
        let r = &self.reference;
        match (&r.distribution, r.n, &r.path) {
            (Some(_), Some(_), None) => {}
            (None, None, Some(path)) => {
                let p = base.join(path);
                ensure!(p.is_file(), "reference file {} does not exist", p.display());
            }
            _ => bail!("reference needs either `distribution` and `n`, or `path`"),
        }
        if let (Some(distribution), Some(n)) = (&r.distribution, r.n) {
            ensure!(n >= 2, "reference.n must be at least 2 (got {n})");
            distribution.validate().context("reference.distribution")?;
            ensure!(
                distribution.dim() == summary.in_dim(),
                "reference.distribution has dimension {} but the summary expects {}",
                distribution.dim(),
                summary.in_dim()
            );
        }
        self.stream.pre.validate().context("stream.pre")?;
        ensure!(
            self.stream.pre.dim() == summary.in_dim(),
            "stream.pre has dimension {} but the summary expects {}",
            self.stream.pre.dim(),
            summary.in_dim()
        );
        if let Some(post) = &self.stream.post {
            post.validate().context("stream.post")?;
            ensure!(post.dim() == self.stream.pre.dim(), "stream.post and stream.pre differ in dimension");
        }
        ensure!(
            self.stream.post.is_some() == self.stream.change_point.is_some(),
            "stream.post and stream.change_point must be given together"
        );
        if d.statistic == StatisticKind::Mmd2U {
            ensure!(d.kernel.is_some(), "detector.kernel is required for mmd2_u");
        } else if d.kernel.is_some() {
            bail!("detector.kernel is only used by mmd2_u; remove it for {}", d.statistic.name());
        }
        if d.statistic.scalar_only() {
            ensure!(
                summary.out_dim() == 1,
                "{} needs scalar summaries but the summary produces dimension {}",
                d.statistic.name(),
                summary.out_dim()
            );
        }
        match &d.threshold {
            ThresholdConfig::Asymptotic { alpha } => {
                check_alpha(*alpha)?;
                ensure!(d.statistic == StatisticKind::Ks, "the asymptotic threshold exists only for ks");
            }
            ThresholdConfig::Permutation { alpha, n_perm } => {
                check_alpha(*alpha)?;
                let min = (10.0 / alpha).ceil() as usize;
                ensure!(*n_perm >= min, "threshold.n_perm must be at least ceil(10 / alpha) = {min}");
            }
            ThresholdConfig::Calibrated { alpha, t_max, b, survivor_floor, floor_policy } => {
                check_alpha(*alpha)?;
                ensure!(*t_max >= d.w, "threshold.t_max must be at least w");
                let required = required_streams(*survivor_floor, *alpha, d.w, *t_max);
                ensure!(
                    *floor_policy == SurvivorFloorPolicy::Plateau || *b >= required,
                    "threshold.b = {b} leaves fewer than {survivor_floor} surviving streams before T_max; \
                     need b >= {required}, a shorter t_max, or floor_policy \"plateau\""
                );
            }
            ThresholdConfig::Fixed { alpha, .. } => {
                if let Some(a) = alpha {
                    check_alpha(*a)?;
                }
            }
            ThresholdConfig::File { path } => {
                let p = base.join(path);
                ensure!(p.is_file(), "threshold schedule file {} does not exist", p.display());
            }
        }
        if let Some(grid) = &self.evaluation.w_grid {
            ensure!(!grid.is_empty() && grid.iter().all(|&w| w >= 1), "evaluation.w_grid must list positive sizes");
        }
        Ok(())
    }

    pub fn summary(&self) -> Result<SummaryStatistic<f64>> {
        Ok(match &self.detector.summary {
            None => SummaryStatistic::identity(1)?,
            Some(SummaryConfig::Identity { dim }) => SummaryStatistic::identity(dim.unwrap_or(1))?,
            Some(SummaryConfig::AffineProjection { matrix }) => SummaryStatistic::affine_projection(matrix.clone())?,
            Some(SummaryConfig::LinearSoftmax { weights, bias }) => {
                let model = LinearSoftmax::new(weights.clone(), bias.clone())?;
                let (in_dim, classes) = (model.in_dim(), model.classes());
                SummaryStatistic::model_output(model.into_model(), in_dim, classes)?
            }
        })
    }

    /// Reference set in summary space.
    pub fn reference_set(&self, base: &Path, seed: u64) -> Result<ReferenceSet<f64>> {
        let r = &self.reference;
        let raw: Vec<Summary<f64>> = match (&r.distribution, r.n, &r.path) {
            (Some(distribution), Some(n), _) => {
                let s = StreamSeed::new(seed, STREAM_REFERENCE);
                (1..=n as u64).map(|i| distribution.sample(&mut s.rng_at(i))).collect()
            }
            (_, _, Some(path)) => {
                let p = base.join(path);
                let file = File::open(&p).with_context(|| format!("cannot open reference {}", p.display()))?;
                read_stream(BufReader::new(file)).with_context(|| format!("reading reference {}", p.display()))?
            }
            _ => bail!("reference needs either `distribution` and `n`, or `path`"),
        };
        let summary = self.summary()?;
        let points = raw.iter().map(|x| summary.apply(x, None)).collect::<seqdrift_core::Result<Vec<_>>>()?;
        Ok(ReferenceSet::new(points)?)
    }

    pub fn kernel(&self, reference: &ReferenceSet<f64>) -> Result<Option<Kernel<f64>>> {
        Ok(match &self.detector.kernel {
            None => None,
            Some(KernelConfig::Rbf { bandwidth: Some(b) }) => Some(Kernel::rbf(*b)?),
            Some(KernelConfig::Rbf { bandwidth: None }) => Some(Kernel::rbf(reference.median_heuristic()?)?),
            Some(KernelConfig::Linear) => Some(Kernel::Linear),
            Some(KernelConfig::Constant { value }) => {
                let k = Kernel::Constant { value: *value };
                k.validate()?;
                Some(k)
            }
        })
    }

    pub fn model(&self) -> Result<ChangePointModel<f64>> {
        let s = &self.stream;
        Ok(match (&s.post, s.change_point) {
            (Some(post), Some(tau)) => ChangePointModel::new(s.pre.clone(), post.clone(), Some(tau))?,
            _ => ChangePointModel::stationary(s.pre.clone())?,
        })
    }

    /// Null model: the pre-change distribution forever.
    pub fn null_model(&self) -> Result<ChangePointModel<f64>> {
        Ok(ChangePointModel::stationary(self.stream.pre.clone())?)
    }

    /// Nominal per-step false-alarm rate of the threshold policy, if it has one.
    pub fn alpha(&self) -> Option<f64> {
        match &self.detector.threshold {
            ThresholdConfig::Fixed { alpha, .. } => *alpha,
            ThresholdConfig::Asymptotic { alpha }
            | ThresholdConfig::Permutation { alpha, .. }
            | ThresholdConfig::Calibrated { alpha, .. } => Some(*alpha),
            ThresholdConfig::File { .. } => None,
        }
    }

    pub fn cap(&self, alpha: Option<f64>) -> Result<u64> {
        match (self.evaluation.cap, alpha) {
            (Some(cap), _) => Ok(cap),
            (None, Some(a)) => Ok(default_cap(a)),
            (None, None) => bail!("evaluation.cap is required when the threshold policy has no alpha"),
        }
    }

    /// Builds the threshold for window size `w`, simulating if the policy asks for it.
    pub fn schedule(
        &self,
        base: &Path,
        reference: &ReferenceSet<f64>,
        kernel: Option<&Kernel<f64>>,
        w: usize,
        seed: u64,
    ) -> Result<ThresholdSchedule<f64>> {
        let kind = self.detector.statistic;
        Ok(match &self.detector.threshold {
            ThresholdConfig::Fixed { h, alpha } => {
                let s = ThresholdSchedule::fixed(*h, w)?;
                match alpha {
                    Some(a) => s.with_alpha(*a),
                    None => s,
                }
            }
            ThresholdConfig::Asymptotic { alpha } => ks_asymptotic_threshold(reference.len(), w, *alpha)?,
            ThresholdConfig::Permutation { alpha, n_perm } => {
                permutation_threshold(reference, w, *alpha, *n_perm, kind, kernel, seed)?
            }
            ThresholdConfig::Calibrated { alpha, t_max, b, survivor_floor, floor_policy } => {
                let options = CalibrationOptions { survivor_floor: *survivor_floor, floor_policy: *floor_policy };
                let target = CalibrationTarget::new(*alpha)?;
                calibrate_schedule(reference, w, target, *t_max, *b, kind, kernel, seed, options)?.schedule
            }
            ThresholdConfig::File { path } => {
                let p = base.join(path);
                let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
                let s = ThresholdSchedule::from_json(&text).with_context(|| format!("invalid schedule {}", p.display()))?;
                ensure!(s.w() == w, "schedule {} was built for w={} but the detector uses w={w}", p.display(), s.w());
                s
            }
        })
    }

    pub fn detector(
        &self,
        reference: Arc<ReferenceSet<f64>>,
        kernel: Option<Kernel<f64>>,
        w: usize,
        schedule: ThresholdSchedule<f64>,
    ) -> Result<DetectorConfig<f64>> {
        Ok(DetectorConfig::new(self.summary()?, self.detector.statistic, kernel, w, schedule, reference)?)
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    ensure!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1), got {alpha}");
    Ok(())
}
