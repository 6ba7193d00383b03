//! The sequential detector: at each step project the instance, slide the
//! window, compute the statistic and compare it with the step's threshold.

use std::io::Write;
use std::sync::Arc;

use crate::calibration::{Provenance, ThresholdSchedule};
use crate::error::{Result, ShiftError};
use crate::scalar::Scalar;
use crate::statistics::{self, window::DEFAULT_REFRESH_EVERY};
use crate::statistics::{Kernel, KsTracker, ReferenceSet, SlidingWindow, StatisticKind, StatisticValue};
use crate::summaries::{Instance, Summary, SummaryStatistic};

/// How the statistic is obtained at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Maintained sums and order structures, `O(log(n + w))` for KS and
    /// `O(n + w)` for MMD per step.
    #[default]
    Incremental,
    /// Full recomputation every step. Slow; used as a cross-check.
    Recompute,
}

#[derive(Debug, Clone)]
pub struct DetectorConfig<T: Scalar> {
    summary: SummaryStatistic<T>,
    statistic: StatisticKind,
    kernel: Option<Kernel<T>>,
    w: usize,
    schedule: ThresholdSchedule<T>,
    reference: Arc<ReferenceSet<T>>,
    mode: UpdateMode,
    refresh_every: usize,
}

impl<T: Scalar> DetectorConfig<T> {
    pub fn new(
        summary: SummaryStatistic<T>,
        statistic: StatisticKind,
        kernel: Option<Kernel<T>>,
        w: usize,
        schedule: ThresholdSchedule<T>,
        reference: Arc<ReferenceSet<T>>,
    ) -> Result<Self> {
        if w == 0 {
            return Err(ShiftError::InvalidParameter("window size must be positive".into()));
        }
        if schedule.w() != w {
            return Err(ShiftError::InvalidParameter(format!(
                "schedule was built for w={} but the detector uses w={w}",
                schedule.w()
            )));
        }
        if reference.dim() != summary.out_dim() {
            return Err(ShiftError::DimensionMismatch { expected: summary.out_dim(), actual: reference.dim() });
        }
        if statistic.scalar_only() && reference.dim() != 1 {
            return Err(ShiftError::NotScalar { statistic: statistic.name(), dim: reference.dim() });
        }
        let reference = match (statistic, kernel) {
            (StatisticKind::Mmd2U, None) => {
                return Err(ShiftError::InvalidKernel("mmd2_u needs a kernel".into()))
            }
            (StatisticKind::Mmd2U, Some(_)) if w < 2 => {
                return Err(ShiftError::TooFewSamples("mmd2_u needs w >= 2".into()))
            }
            (StatisticKind::Mmd2U, Some(k)) if reference.cached_kernel() != Some(&k) => {
                Arc::new(ReferenceSet::clone(&reference).with_kernel(k)?)
            }
            _ => reference,
        };
        Ok(Self {
            summary,
            statistic,
            kernel: if statistic.needs_kernel() { kernel } else { None },
            w,
            schedule,
            reference,
            mode: UpdateMode::Incremental,
            refresh_every: DEFAULT_REFRESH_EVERY,
        })
    }

    /// Identity summary on scalar data.
    pub fn scalar(
        statistic: StatisticKind,
        kernel: Option<Kernel<T>>,
        w: usize,
        schedule: ThresholdSchedule<T>,
        reference: Arc<ReferenceSet<T>>,
    ) -> Result<Self> {
        Self::new(SummaryStatistic::identity(1)?, statistic, kernel, w, schedule, reference)
    }

    pub fn with_mode(mut self, mode: UpdateMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_refresh_every(mut self, steps: usize) -> Self {
        self.refresh_every = steps.max(1);
        self
    }

    pub fn with_schedule(mut self, schedule: ThresholdSchedule<T>) -> Result<Self> {
        if schedule.w() != self.w {
            return Err(ShiftError::InvalidParameter("schedule window differs from detector window".into()));
        }
        self.schedule = schedule;
        Ok(self)
    }

    pub fn summary(&self) -> &SummaryStatistic<T> {
        &self.summary
    }

    pub fn statistic(&self) -> StatisticKind {
        self.statistic
    }

    pub fn kernel(&self) -> Option<&Kernel<T>> {
        self.kernel.as_ref()
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn schedule(&self) -> &ThresholdSchedule<T> {
        &self.schedule
    }

    pub fn reference(&self) -> &Arc<ReferenceSet<T>> {
        &self.reference
    }

    pub fn mode(&self) -> UpdateMode {
        self.mode
    }

    pub fn new_state(&self) -> DetectorState<T> {
        DetectorState::new(self)
    }
}

/// Outcome of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome<T: Scalar> {
    pub t: u64,
    /// `None` during warm-up.
    pub statistic: Option<StatisticValue<T>>,
    pub threshold: Option<T>,
    pub detected: bool,
}

/// Mutable per-run state. Owned by a single run.
#[derive(Debug, Clone)]
pub struct DetectorState<T: Scalar> {
    t: u64,
    window: SlidingWindow<T>,
    ks: Option<KsTracker<T>>,
    last_statistic: Option<StatisticValue<T>>,
    detected_at: Option<u64>,
}

impl<T: Scalar> DetectorState<T> {
    pub fn new(config: &DetectorConfig<T>) -> Self {
        let window = SlidingWindow::new(config.w)
            .expect("validated window size")
            .with_refresh_every(config.refresh_every);
        let ks = (config.mode == UpdateMode::Incremental && config.statistic == StatisticKind::Ks).then(|| {
            KsTracker::new(config.reference.sorted_values().expect("scalar reference"), config.w)
        });
        Self { t: 0, window, ks, last_statistic: None, detected_at: None }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn window(&self) -> &SlidingWindow<T> {
        &self.window
    }

    pub fn last_statistic(&self) -> Option<StatisticValue<T>> {
        self.last_statistic
    }

    pub fn detected_at(&self) -> Option<u64> {
        self.detected_at
    }

    /// Projects `instance` through the configured summary, then steps.
    pub fn step(&mut self, config: &DetectorConfig<T>, instance: &Instance<T>) -> Result<StepOutcome<T>> {
        if let Some(at) = self.detected_at {
            return Err(ShiftError::AlreadyDetected(at));
        }
        let summary = config.summary.apply_instance(instance)?;
        self.step_summary(config, summary)
    }

    /// Steps with an already-projected summary.
    pub fn step_summary(&mut self, config: &DetectorConfig<T>, summary: Summary<T>) -> Result<StepOutcome<T>> {
        if let Some(at) = self.detected_at {
            return Err(ShiftError::AlreadyDetected(at));
        }
        if summary.dim() != config.reference.dim() {
            return Err(ShiftError::DimensionMismatch { expected: config.reference.dim(), actual: summary.dim() });
        }
        let incremental = config.mode == UpdateMode::Incremental;
        let kernel_context = match (&config.kernel, incremental) {
            (Some(k), true) => Some((k, config.reference.as_ref())),
            _ => None,
        };
        let value = summary.first();
        let evicted = self.window.push(summary, kernel_context)?;
        if let Some(tracker) = &mut self.ks {
            tracker.insert(value);
            if let Some(old) = &evicted {
                tracker.remove(old.first());
            }
        }
        self.t += 1;
        let t = self.t;

        let Some(threshold) = config.schedule.threshold_at(t) else {
            return Ok(StepOutcome { t, statistic: None, threshold: None, detected: false });
        };
        debug_assert!(self.window.is_full());

        let statistic = if incremental {
            let value = match config.statistic {
                StatisticKind::Ks => self.ks.as_ref().expect("tracker").value(),
                StatisticKind::MeanDiff => {
                    config.reference.mean().expect("scalar") - self.window.mean().expect("scalar window")
                }
                StatisticKind::Mmd2U => self
                    .window
                    .cached_mmd2_u(config.kernel.as_ref().expect("kernel"), &config.reference)
                    .expect("kernel sums maintained"),
            };
            StatisticValue { value, kind: config.statistic }
        } else {
            statistics::compute(config.statistic, &config.reference, &self.window, config.kernel.as_ref())?
        };
        self.last_statistic = Some(statistic);
        let detected = statistic.value > threshold;
        if detected {
            self.detected_at = Some(t);
        }
        Ok(StepOutcome { t, statistic: Some(statistic), threshold: Some(threshold), detected })
    }
}

/// Free-function form of [`DetectorState::step`].
pub fn step<T: Scalar>(
    state: &mut DetectorState<T>,
    instance: &Instance<T>,
    config: &DetectorConfig<T>,
) -> Result<StepOutcome<T>> {
    state.step(config, instance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T: Scalar> {
    pub t: u64,
    pub statistic: Option<T>,
    pub threshold: Option<T>,
    pub detected: bool,
}

impl<T: Scalar> From<StepOutcome<T>> for TraceRow<T> {
    fn from(o: StepOutcome<T>) -> Self {
        Self { t: o.t, statistic: o.statistic.map(|s| s.value), threshold: o.threshold, detected: o.detected }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult<T: Scalar> {
    /// `T`, if a detection happened.
    pub detection_time: Option<u64>,
    /// No exceedance happened before the cap (or the stream ran out).
    pub censored: bool,
    /// Steps processed.
    pub steps: u64,
    pub trace: Option<Vec<TraceRow<T>>>,
}

impl<T: Scalar> DetectionResult<T> {
    /// Detection time, or the number of steps survived when censored.
    pub fn run_length(&self) -> u64 {
        self.detection_time.unwrap_or(self.steps)
    }
}

/// Runs a fresh detector over `stream` until detection or `cap` steps.
pub fn run<T, I>(config: &DetectorConfig<T>, stream: I, cap: u64, trace: bool) -> Result<DetectionResult<T>>
where
    T: Scalar,
    I: IntoIterator<Item = Instance<T>>,
{
    let summary = config.summary.clone();
    run_projected(config, stream.into_iter().map(move |i| summary.apply_instance(&i)), cap, trace)
}

/// Like [`run`] for streams that are already in summary space.
pub fn run_summaries<T, I>(config: &DetectorConfig<T>, stream: I, cap: u64, trace: bool) -> Result<DetectionResult<T>>
where
    T: Scalar,
    I: IntoIterator<Item = Summary<T>>,
{
    run_projected(config, stream.into_iter().map(Ok), cap, trace)
}

fn run_projected<T, I>(config: &DetectorConfig<T>, stream: I, cap: u64, trace: bool) -> Result<DetectionResult<T>>
where
    T: Scalar,
    I: Iterator<Item = Result<Summary<T>>>,
{
    if cap < config.w as u64 {
        return Err(ShiftError::InvalidParameter(format!("cap {cap} is below the window size {}", config.w)));
    }
    let mut state = config.new_state();
    let mut rows = trace.then(Vec::new);
    let mut stream = stream;
    while state.t < cap {
        let Some(summary) = stream.next() else {
            if (state.t as usize) < config.w {
                return Err(ShiftError::StreamTooShort { got: state.t as usize, needed: config.w });
            }
            break;
        };
        let outcome = state.step_summary(config, summary?)?;
        if let Some(rows) = &mut rows {
            rows.push(outcome.into());
        }
        if outcome.detected {
            return Ok(DetectionResult { detection_time: Some(outcome.t), censored: false, steps: outcome.t, trace: rows });
        }
    }
    Ok(DetectionResult { detection_time: None, censored: true, steps: state.t, trace: rows })
}

/// CSV with columns `t,statistic,threshold,detected`; warm-up rows leave the
/// statistic and threshold empty.
pub fn write_trace_csv<T: Scalar, W: Write>(
    mut out: W,
    rows: &[TraceRow<T>],
    provenance: Option<&Provenance>,
) -> std::io::Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "# config_hash={} seed={}", p.config_hash, p.seed)?;
    }
    writeln!(out, "t,statistic,threshold,detected")?;
    let opt = |v: Option<T>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(out, "{},{},{},{}", r.t, opt(r.statistic), opt(r.threshold), r.detected)?;
    }
    Ok(())
}
