//! Monte Carlo measurement of run length to false detection and of detection
//! delay.
//!
//! Run `r` draws its stream from a seed derived from `(master seed, r)` and
//! results are collected in run order, so reports are bit-identical for any
//! worker count.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::calibration::{check_alpha, ks_asymptotic_threshold, Provenance};
use crate::detector::{run, run_summaries, DetectionResult, DetectorConfig};
use crate::error::{Result, ShiftError};
use crate::exec::with_workers;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, StreamSeed, STREAM_DEPLOY, STREAM_REFERENCE, STREAM_RUNS};
use crate::statistics::{ReferenceSet, StatisticKind};
use crate::streams::{ChangePointModel, DistributionSpec};
use crate::summaries::{Instance, Summary};

/// Censoring cap used when none is given: `100 / alpha` steps.
pub fn default_cap(alpha: f64) -> u64 {
    (100.0 / alpha).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub n_runs: usize,
    pub cap: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Never affects results.
    pub workers: Option<usize>,
}

impl MonteCarlo {
    pub fn new(n_runs: usize, cap: u64, seed: u64) -> Self {
        Self { n_runs, cap, seed, workers: None }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    /// Seed family owned by run `run_id`.
    pub fn run_seed(&self, run_id: usize) -> u64 {
        derive_seed(self.seed, STREAM_RUNS, run_id as u64)
    }
}

/// One simulated run: the detection time, or the cap when censored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    #[serde(rename = "T")]
    pub t: u64,
    pub censored: bool,
}

/// Runs `n_runs` independent simulations in parallel; `f(run_id, run_seed)`
/// must depend only on its arguments.
pub fn simulate<T, F>(mc: &MonteCarlo, f: F) -> Result<Vec<RunRecord>>
where
    T: Scalar,
    F: Fn(usize, u64) -> Result<DetectionResult<T>> + Sync + Send,
{
    if mc.n_runs == 0 {
        return Err(ShiftError::InvalidParameter("n_runs must be positive".into()));
    }
    with_workers(mc.workers, || {
        (0..mc.n_runs)
            .into_par_iter()
            .map(|r| {
                let res = f(r, mc.run_seed(r))?;
                Ok(RunRecord { run_id: r, t: res.run_length(), censored: res.detection_time.is_none() })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLengthReport {
    pub n_runs: usize,
    pub alpha: f64,
    /// Estimate of `E[T]` with censored runs counted at the cap.
    #[serde(rename = "mean_T")]
    pub mean_t: f64,
    #[serde(rename = "median_T")]
    pub median_t: f64,
    pub q10: f64,
    pub q90: f64,
    pub lambda: Option<u64>,
    /// Fraction of runs with `T <= lambda`.
    pub p_leq_lambda: Option<f64>,
    pub censored_count: usize,
    /// True when censoring biases `mean_T` downward.
    pub censoring_biased: bool,
    pub cap: u64,
    /// `alpha * mean_T`: measured mean run length over the `1 / alpha` bound.
    pub slackness: f64,
    pub standard_error: f64,
}

/// Nearest-rank quantile of an ascending slice.
fn quantile(sorted: &[u64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1] as f64
}

pub fn summarize_run_lengths(records: &[RunRecord], alpha: f64, cap: u64, lambda: Option<u64>) -> RunLengthReport {
    let n = records.len();
    let mut ts: Vec<u64> = records.iter().map(|r| r.t).collect();
    ts.sort_unstable();
    let nf = n as f64;
    let mean = ts.iter().map(|&t| t as f64).sum::<f64>() / nf;
    let var = if n > 1 { ts.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
    let censored_count = records.iter().filter(|r| r.censored).count();
    RunLengthReport {
        n_runs: n,
        alpha,
        mean_t: mean,
        median_t: quantile(&ts, 0.5),
        q10: quantile(&ts, 0.1),
        q90: quantile(&ts, 0.9),
        lambda,
        p_leq_lambda: lambda.map(|l| records.iter().filter(|r| !r.censored && r.t <= l).count() as f64 / nf),
        censored_count,
        censoring_biased: censored_count > 0,
        cap,
        slackness: alpha * mean,
        standard_error: (var / nf).sqrt(),
    }
}

/// `alpha * mean_T`.
pub fn slackness(report: &RunLengthReport, alpha: f64) -> f64 {
    alpha * report.mean_t
}

fn run_one<T: Scalar>(
    config: &DetectorConfig<T>,
    model: &ChangePointModel<T>,
    seed: StreamSeed,
    cap: u64,
) -> Result<DetectionResult<T>> {
    if config.summary().is_identity() {
        run_summaries(config, model.iter(seed), cap, false)
    } else {
        run(config, model.iter(seed).map(Instance::from), cap, false)
    }
}

fn deploy_seed(run_seed: u64) -> StreamSeed {
    StreamSeed::new(run_seed, STREAM_DEPLOY)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArlOutcome {
    pub report: RunLengthReport,
    pub runs: Vec<RunRecord>,
}

/// Run length to false detection of a fixed detector on null streams.
pub fn estimate_arl0<T: Scalar>(
    config: &DetectorConfig<T>,
    null_model: &ChangePointModel<T>,
    alpha: f64,
    lambda: Option<u64>,
    mc: &MonteCarlo,
) -> Result<ArlOutcome> {
    check_alpha(alpha)?;
    if null_model.change_point().is_some() {
        return Err(ShiftError::InvalidParameter("estimate_arl0 needs a null model with no change point".into()));
    }
    if mc.cap < config.w() as u64 {
        return Err(ShiftError::InvalidParameter("cap must be at least the window size".into()));
    }
    let runs = simulate(mc, |_, s| run_one(config, null_model, deploy_seed(s), mc.cap))?;
    Ok(ArlOutcome { report: summarize_run_lengths(&runs, alpha, mc.cap, lambda), runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub n_runs: usize,
    pub change_point: u64,
    /// Mean of `T - tau` over runs that detected at or after the change.
    pub mean_delay: Option<f64>,
    pub median_delay: Option<f64>,
    /// Fraction of runs with `T < tau`.
    pub false_alarm_fraction: f64,
    pub detected_after_change: usize,
    pub censored_count: usize,
    pub cap: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayOutcome {
    pub report: DelayReport,
    pub runs: Vec<RunRecord>,
}

pub fn summarize_delays(records: &[RunRecord], tau: u64, cap: u64) -> DelayReport {
    let n = records.len();
    let false_alarms = records.iter().filter(|r| !r.censored && r.t < tau).count();
    let mut delays: Vec<u64> = records.iter().filter(|r| !r.censored && r.t >= tau).map(|r| r.t - tau).collect();
    delays.sort_unstable();
    let mean_delay =
        (!delays.is_empty()).then(|| delays.iter().map(|&d| d as f64).sum::<f64>() / delays.len() as f64);
    DelayReport {
        n_runs: n,
        change_point: tau,
        mean_delay,
        median_delay: (!delays.is_empty()).then(|| quantile(&delays, 0.5)),
        false_alarm_fraction: false_alarms as f64 / n as f64,
        detected_after_change: delays.len(),
        censored_count: records.iter().filter(|r| r.censored).count(),
        cap,
    }
}

/// Detection delay after a change at `tau >= w`.
pub fn estimate_delay<T: Scalar>(
    config: &DetectorConfig<T>,
    model: &ChangePointModel<T>,
    mc: &MonteCarlo,
) -> Result<DelayOutcome> {
    let tau = model
        .change_point()
        .ok_or_else(|| ShiftError::InvalidParameter("estimate_delay needs a finite change point; use estimate_arl0".into()))?;
    if tau < config.w() as u64 {
        return Err(ShiftError::InvalidParameter(format!("change point {tau} precedes the first test at t={}", config.w())));
    }
    if mc.cap < tau {
        return Err(ShiftError::InvalidParameter("cap must reach the change point".into()));
    }
    let runs = simulate(mc, |_, s| run_one(config, model, deploy_seed(s), mc.cap))?;
    Ok(DelayOutcome { report: summarize_delays(&runs, tau, mc.cap), runs })
}

/// Fraction of runs still alive at `t` that detect exactly at `t`, for
/// `t = w ..= t_max`.
pub fn empirical_hazard(records: &[RunRecord], w: u64, t_max: u64) -> Vec<f64> {
    let mut ts: Vec<(u64, bool)> = records.iter().map(|r| (r.t, r.censored)).collect();
    ts.sort_unstable();
    let mut out = Vec::with_capacity((t_max + 1).saturating_sub(w) as usize);
    let mut idx = 0;
    // runs ending before w never happen for detectors (no tests in warm-up)
    while idx < ts.len() && ts[idx].0 < w {
        idx += 1;
    }
    for t in w..=t_max {
        let at_risk = ts.len() - idx;
        let mut events = 0usize;
        while idx < ts.len() && ts[idx].0 == t {
            if !ts[idx].1 {
                events += 1;
            }
            idx += 1;
        }
        if at_risk == 0 {
            break;
        }
        out.push(events as f64 / at_risk as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson chi-square test of `lengths` (values `>= 1`) against
/// `Geom(alpha)` on support `{1, 2, ...}`, using roughly equiprobable bins
/// with the last bin open-ended.
pub fn geometric_gof(lengths: &[u64], alpha: f64) -> Result<GofResult> {
    check_alpha(alpha)?;
    let n = lengths.len();
    if n < 50 {
        return Err(ShiftError::TooFewSamples("goodness of fit needs at least 50 run lengths".into()));
    }
    let target_bins = (n / 20).clamp(2, 25);
    let cdf = |x: u64| 1.0 - (1.0 - alpha).powf(x as f64);
    // upper edges (inclusive) of all but the last bin
    let mut edges: Vec<u64> = Vec::new();
    for k in 1..target_bins {
        let p = k as f64 / target_bins as f64;
        let x = ((1.0 - p).ln() / (1.0 - alpha).ln()).ceil().max(1.0) as u64;
        let x = if cdf(x - 1) >= p { x - 1 } else { x }.max(1);
        if edges.last().is_none_or(|&e| x > e) {
            edges.push(x);
        }
    }
    let bins = edges.len() + 1;
    let mut observed = vec![0usize; bins];
    for &l in lengths {
        let b = edges.partition_point(|&e| e < l);
        observed[b] += 1;
    }
    let mut chi2 = 0.0;
    let mut lower = 0u64;
    for (b, &obs) in observed.iter().enumerate() {
        let p = match edges.get(b) {
            Some(&e) => cdf(e) - cdf(lower),
            None => 1.0 - cdf(lower),
        };
        lower = edges.get(b).copied().unwrap_or(lower);
        let expected = p * n as f64;
        chi2 += (obs as f64 - expected).powi(2) / expected;
    }
    let dof = bins - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(chi2);
    Ok(GofResult { statistic: chi2, dof, p_value, bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalBandCheck {
    pub max_deviation: f64,
    pub epsilon: f64,
    pub within_band: bool,
}

/// Compares the empirical survival function of `lengths` (values `>= 1`)
/// with `(1 - alpha)^x` against the Dvoretzky-Kiefer-Wolfowitz band at
/// confidence `1 - level`, over `x = 0 ..= horizon`.
pub fn geometric_survival_band(lengths: &[u64], alpha: f64, level: f64, horizon: u64) -> SurvivalBandCheck {
    let n = lengths.len() as f64;
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let mut max_dev: f64 = 0.0;
    let mut idx = 0;
    for x in 0..=horizon {
        while idx < sorted.len() && sorted[idx] <= x {
            idx += 1;
        }
        let empirical = (sorted.len() - idx) as f64 / n;
        let model = (1.0 - alpha).powf(x as f64);
        max_dev = max_dev.max((empirical - model).abs());
    }
    let epsilon = ((2.0 / level).ln() / (2.0 * n)).sqrt();
    SurvivalBandCheck { max_deviation: max_dev, epsilon, within_band: max_dev <= epsilon }
}

/// Draws a reference set of `n` points from `dist` under `seed`.
pub fn sample_reference<T: Scalar>(dist: &DistributionSpec<T>, n: usize, seed: u64) -> Result<ReferenceSet<T>> {
    dist.validate()?;
    let s = StreamSeed::new(seed, STREAM_REFERENCE);
    let points: Vec<Summary<T>> = (1..=n as u64).map(|i| dist.sample(&mut s.rng_at(i))).collect();
    ReferenceSet::new(points)
}

/// Slackness experiment for one `(n, w)` grid point: every run draws its own
/// N(0, 1) reference of size `n` and a fresh N(0, 1) stream, and uses the
/// fixed asymptotic KS threshold at level `alpha`.
pub fn fixed_threshold_slackness<T: Scalar>(n: usize, w: usize, alpha: f64, mc: &MonteCarlo) -> Result<ArlOutcome> {
    check_alpha(alpha)?;
    if mc.cap < w as u64 {
        return Err(ShiftError::InvalidParameter("cap must be at least the window size".into()));
    }
    let schedule = ks_asymptotic_threshold::<T>(n, w, alpha)?;
    let null = ChangePointModel::stationary(DistributionSpec::standard_normal())?;
    let runs = simulate(mc, |_, run_seed| {
        let reference = Arc::new(sample_reference(null.pre(), n, run_seed)?);
        let config = DetectorConfig::scalar(StatisticKind::Ks, None, w, schedule.clone(), reference)?;
        run_summaries(&config, null.iter(deploy_seed(run_seed)), mc.cap, false)
    })?;
    Ok(ArlOutcome { report: summarize_run_lengths(&runs, alpha, mc.cap, None), runs })
}

/// One row of a slackness sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: usize,
    pub n: usize,
    pub alpha: f64,
    #[serde(rename = "mean_T")]
    pub mean_t: f64,
    pub se: f64,
    pub slackness: f64,
}

impl SweepRow {
    pub fn from_report(n: usize, w: usize, report: &RunLengthReport) -> Self {
        Self {
            w,
            n,
            alpha: report.alpha,
            mean_t: report.mean_t,
            se: report.standard_error,
            slackness: report.slackness,
        }
    }
}

fn provenance_line<W: Write>(out: &mut W, provenance: Option<&Provenance>) -> std::io::Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "# config_hash={} seed={}", p.config_hash, p.seed)?;
    }
    Ok(())
}

/// CSV `run_id,T,censored`.
pub fn write_runs_csv<W: Write>(mut out: W, runs: &[RunRecord], provenance: Option<&Provenance>) -> std::io::Result<()> {
    provenance_line(&mut out, provenance)?;
    writeln!(out, "run_id,T,censored")?;
    for r in runs {
        writeln!(out, "{},{},{}", r.run_id, r.t, r.censored)?;
    }
    Ok(())
}

/// CSV `w,n,alpha,mean_T,se,slackness`.
pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow], provenance: Option<&Provenance>) -> std::io::Result<()> {
    provenance_line(&mut out, provenance)?;
    writeln!(out, "w,n,alpha,mean_T,se,slackness")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.w, r.n, r.alpha, r.mean_t, r.se, r.slackness)?;
    }
    Ok(())
}
