//! Detection thresholds.
//!
//! Two policies are provided:
//!
//! * fixed thresholds `h` estimated as the `1 - alpha` quantile of a single
//!   offline test statistic (closed-form KS critical value or permutation
//!   quantile). Comparing every step against the same `h` only lower-bounds
//!   the expected run length to false detection by `1 / alpha`.
//! * time-varying schedules `h_t` calibrated by simulating pseudo-null
//!   streams bootstrapped from the reference set. At each step the threshold
//!   is the `1 - alpha` quantile among streams that have not yet exceeded an
//!   earlier threshold, so the per-step hazard stays near `alpha` and the run
//!   length is approximately `Geom(alpha)`.
//!
//! Exceedance is strict (`statistic > threshold`) everywhere.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShiftError};
use crate::scalar::{cmp, Scalar};
use crate::seed::{rng_for, STREAM_BOOTSTRAP, STREAM_PERMUTATION};
use crate::statistics::{ks_scaled_sorted, Kernel, KsTracker, ReferenceSet, StatisticKind};

/// Minimum number of surviving simulated streams for a quantile estimate.
pub const DEFAULT_SURVIVOR_FLOOR: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    /// Per-step false-positive hazard; the run-length target is `Geom(alpha)`
    /// with mean `1 / alpha`.
    pub alpha: f64,
    /// Optional horizon for reporting `P(T <= lambda)`.
    #[serde(default)]
    pub lambda: Option<u64>,
}

impl CalibrationTarget {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, lambda: None })
    }

    pub fn with_lambda(mut self, lambda: u64) -> Self {
        self.lambda = Some(lambda);
        self
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ShiftError::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed,
    TimeVarying,
}

/// Per-step thresholds for `t >= w`. Steps before `w` are warm-up (no test);
/// steps beyond `t_max` reuse the threshold at `t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule<T: Scalar> {
    kind: ScheduleKind,
    w: usize,
    t_max: usize,
    alpha: Option<f64>,
    /// One value for fixed schedules; `h_w ..= h_{t_max}` otherwise.
    values: Vec<T>,
}

impl<T: Scalar> ThresholdSchedule<T> {
    /// `h` may be infinite (never detect) or negative (always detect).
    pub fn fixed(h: T, w: usize) -> Result<Self> {
        if w == 0 || h.is_nan() {
            return Err(ShiftError::Schedule("fixed schedule needs w >= 1 and a non-NaN h".into()));
        }
        Ok(Self { kind: ScheduleKind::Fixed, w, t_max: w, alpha: None, values: vec![h] })
    }

    pub fn time_varying(values: Vec<T>, w: usize, alpha: Option<f64>) -> Result<Self> {
        if w == 0 || values.is_empty() {
            return Err(ShiftError::Schedule("time-varying schedule needs w >= 1 and values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ShiftError::Schedule("schedule values must be finite".into()));
        }
        let t_max = w + values.len() - 1;
        Ok(Self { kind: ScheduleKind::TimeVarying, w, t_max, alpha, values })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn fixed_h(&self) -> Option<T> {
        (self.kind == ScheduleKind::Fixed).then(|| self.values[0])
    }

    /// `None` during warm-up (`t < w`).
    #[inline]
    pub fn threshold_at(&self, t: u64) -> Option<T> {
        let t = usize::try_from(t).unwrap_or(usize::MAX);
        if t < self.w {
            return None;
        }
        Some(match self.kind {
            ScheduleKind::Fixed => self.values[0],
            ScheduleKind::TimeVarying => self.values[t.min(self.t_max) - self.w],
        })
    }

    /// True when every threshold of `self` is `>=` the matching one of `other`.
    pub fn dominates(&self, other: &Self, horizon: u64) -> bool {
        (self.w.min(other.w) as u64..=horizon).all(|t| {
            match (self.threshold_at(t), other.threshold_at(t)) {
                (Some(a), Some(b)) => a >= b,
                (None, _) => true,
                (Some(_), None) => false,
            }
        })
    }

    pub fn to_document(&self, provenance: Option<Provenance>) -> ScheduleDocument {
        ScheduleDocument {
            kind: self.kind,
            w: self.w,
            t_max: self.t_max,
            alpha: self.alpha,
            values: self.values.iter().map(|v| v.as_f64()).collect(),
            provenance,
        }
    }

    pub fn from_document(doc: &ScheduleDocument) -> Result<Self> {
        let values: Vec<T> = doc.values.iter().map(|&v| T::lit(v)).collect();
        let schedule = match doc.kind {
            ScheduleKind::Fixed => {
                if values.len() != 1 {
                    return Err(ShiftError::Schedule("fixed schedule must hold exactly one value".into()));
                }
                Self::fixed(values[0], doc.w)?
            }
            ScheduleKind::TimeVarying => Self::time_varying(values, doc.w, doc.alpha)?,
        };
        if schedule.t_max != doc.t_max {
            return Err(ShiftError::Schedule(format!(
                "T_max {} inconsistent with w={} and {} values",
                doc.t_max,
                doc.w,
                doc.values.len()
            )));
        }
        Ok(Self { alpha: doc.alpha, ..schedule })
    }

    pub fn to_json(&self, provenance: Option<Provenance>) -> String {
        serde_json::to_string_pretty(&self.to_document(provenance)).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScheduleDocument =
            serde_json::from_str(text).map_err(|e| ShiftError::Schedule(e.to_string()))?;
        Self::from_document(&doc)
    }
}

/// Free-function form of [`ThresholdSchedule::threshold_at`].
pub fn threshold_at<T: Scalar>(schedule: &ThresholdSchedule<T>, t: u64) -> Option<T> {
    schedule.threshold_at(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

/// Serialized form `{kind, w, T_max, alpha, values[]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDocument {
    pub kind: ScheduleKind,
    pub w: usize,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    pub alpha: Option<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// 1-based rank `ceil((1 - alpha) * m)` of the upper order statistic, clamped to `[1, m]`.
pub fn upper_quantile_rank(alpha: f64, m: usize) -> usize {
    let am = alpha * m as f64;
    // floor with tolerance for products such as 0.02 * 50 = 1.0000000000000002
    let nearest = am.round();
    let floor = if (am - nearest).abs() < 1e-9 { nearest } else { am.floor() };
    (m - (floor as usize).min(m)).max(1)
}

/// `ceil((1 - alpha) * m)`-th smallest value; `values` is reordered.
pub fn upper_order_statistic<T: Scalar>(values: &mut [T], alpha: f64) -> T {
    let k = upper_quantile_rank(alpha, values.len());
    let (_, v, _) = values.select_nth_unstable_by(k - 1, cmp);
    *v
}

/// Classical asymptotic two-sample KS critical value
/// `sqrt(ln(2 / alpha) / 2) * sqrt((n + w) / (n w))`.
pub fn ks_asymptotic_threshold<T: Scalar>(n: usize, w: usize, alpha: f64) -> Result<ThresholdSchedule<T>> {
    check_alpha(alpha)?;
    if n == 0 || w == 0 {
        return Err(ShiftError::InvalidParameter("n and w must be positive".into()));
    }
    let h = ks_critical_value(n, w, alpha);
    Ok(ThresholdSchedule::fixed(T::lit(h), w)?.with_alpha(alpha))
}

pub fn ks_critical_value(n: usize, w: usize, alpha: f64) -> f64 {
    let c = ((2.0 / alpha).ln() / 2.0).sqrt();
    let (n, w) = (n as f64, w as f64);
    c * ((n + w) / (n * w)).sqrt()
}

/// Offline permutation estimate of the `1 - alpha` quantile of the statistic
/// between a random size-`w` subset of the reference and the remaining
/// `n - w` points. Permutation `p` uses its own generator derived from
/// `(seed, p)`, so growing `n_perm` extends rather than reshuffles the sample.
pub fn permutation_threshold<T: Scalar>(
    reference: &ReferenceSet<T>,
    w: usize,
    alpha: f64,
    n_perm: usize,
    kind: StatisticKind,
    kernel: Option<&Kernel<T>>,
    seed: u64,
) -> Result<ThresholdSchedule<T>> {
    check_alpha(alpha)?;
    let n = reference.len();
    let min_perm = (10.0 / alpha).ceil() as usize;
    if n_perm < min_perm {
        return Err(ShiftError::InvalidParameter(format!(
            "n_perm={n_perm} cannot resolve the alpha={alpha} tail; need n_perm >= ceil(10 / alpha) = {min_perm}"
        )));
    }
    if w == 0 || w >= n {
        return Err(ShiftError::InvalidParameter(format!("need 1 <= w < n (w={w}, n={n})")));
    }
    let mut stats = permutation_statistics(reference, w, n_perm, kind, kernel, seed)?;
    let h = upper_order_statistic(&mut stats, alpha);
    Ok(ThresholdSchedule::fixed(h, w)?.with_alpha(alpha))
}

/// The raw permuted statistics, in permutation order.
pub fn permutation_statistics<T: Scalar>(
    reference: &ReferenceSet<T>,
    w: usize,
    n_perm: usize,
    kind: StatisticKind,
    kernel: Option<&Kernel<T>>,
    seed: u64,
) -> Result<Vec<T>> {
    let n = reference.len();
    let points = reference.summaries();
    match kind {
        StatisticKind::Ks => {
            scalar_only(kind, reference)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| cmp(&points[a].first(), &points[b].first()));
            Ok((0..n_perm)
                .into_par_iter()
                .map_init(
                    || (vec![false; n], Vec::with_capacity(n), Vec::with_capacity(w)),
                    |(picked, pseudo_ref, pseudo_win), p| {
                        let mut rng = rng_for(seed, STREAM_PERMUTATION, p as u64);
                        picked.iter_mut().for_each(|x| *x = false);
                        pseudo_win.clear();
                        for i in index::sample(&mut rng, n, w) {
                            picked[i] = true;
                            pseudo_win.push(points[i].first());
                        }
                        pseudo_win.sort_unstable_by(cmp);
                        pseudo_ref.clear();
                        pseudo_ref.extend(order.iter().filter(|&&i| !picked[i]).map(|&i| points[i].first()));
                        ks_scaled_sorted(pseudo_ref, pseudo_win).value()
                    },
                )
                .collect())
        }
        StatisticKind::MeanDiff => {
            scalar_only(kind, reference)?;
            let total: T = points.iter().map(|s| s.first()).sum();
            let (nr, nw) = (T::from_count(n - w), T::from_count(w));
            Ok((0..n_perm)
                .into_par_iter()
                .map(|p| {
                    let mut rng = rng_for(seed, STREAM_PERMUTATION, p as u64);
                    let win: T = index::sample(&mut rng, n, w).into_iter().map(|i| points[i].first()).sum();
                    (total - win) / nr - win / nw
                })
                .collect())
        }
        StatisticKind::Mmd2U => {
            let kernel = kernel.ok_or_else(|| ShiftError::InvalidKernel("mmd2_u needs a kernel".into()))?;
            if w < 2 || n - w < 2 {
                return Err(ShiftError::TooFewSamples("mmd2_u permutations need w >= 2 and n - w >= 2".into()));
            }
            // row[i] = sum_{j != i} k(x_i, x_j)
            let row: Vec<T> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut acc = T::zero();
                    for (j, x) in points.iter().enumerate() {
                        if j != i {
                            acc += kernel.eval(&points[i], x);
                        }
                    }
                    acc
                })
                .collect();
            let total: T = row.iter().copied().sum();
            Ok((0..n_perm)
                .into_par_iter()
                .map(|p| {
                    let mut rng = rng_for(seed, STREAM_PERMUTATION, p as u64);
                    let picks = index::sample(&mut rng, n, w).into_vec();
                    let mut half = T::zero();
                    for (a, &i) in picks.iter().enumerate() {
                        for &j in &picks[a + 1..] {
                            half += kernel.eval(&points[i], &points[j]);
                        }
                    }
                    let within_w = half + half;
                    let cross = picks.iter().map(|&i| row[i]).sum::<T>() - within_w;
                    let within_r = total - T::lit(2.0) * cross - within_w;
                    crate::statistics::mmd2_u_for_kernel(kernel, within_r, within_w, cross, n - w, w)
                })
                .collect())
        }
    }
}

fn scalar_only<T: Scalar>(kind: StatisticKind, reference: &ReferenceSet<T>) -> Result<()> {
    if reference.is_scalar() {
        Ok(())
    } else {
        Err(ShiftError::NotScalar { statistic: kind.name(), dim: reference.dim() })
    }
}

/// What to do when fewer than the survivor floor of simulated streams remain
/// before `T_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivorFloorPolicy {
    /// Refuse the configuration (checked up front against the
    /// `B >= B_min / (1 - alpha)^(T_max - w + 1)` requirement).
    #[default]
    Error,
    /// Stop estimating once survivors would drop below the floor and extend
    /// the last estimated threshold to `T_max`.
    Plateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationOptions {
    pub survivor_floor: usize,
    pub floor_policy: SurvivorFloorPolicy,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { survivor_floor: DEFAULT_SURVIVOR_FLOOR, floor_policy: SurvivorFloorPolicy::Error }
    }
}

/// A calibrated schedule plus the survivor count entering each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration<T: Scalar> {
    pub schedule: ThresholdSchedule<T>,
    /// `survivors[i]` streams were alive when `h_{w+i}` was estimated.
    pub survivors: Vec<usize>,
    /// First step whose threshold was copied forward rather than estimated.
    pub plateau_from: Option<usize>,
}

/// Number of bootstrap streams that keeps at least `floor` survivors through `T_max`.
pub fn required_streams(floor: usize, alpha: f64, w: usize, t_max: usize) -> usize {
    let steps = (t_max + 1).saturating_sub(w) as f64;
    (floor as f64 / (1.0 - alpha).powf(steps)).ceil() as usize
}

/// Simulation-based time-varying thresholds.
///
/// `b` pseudo-null streams are drawn with replacement from the reference set
/// (which also serves as the reference for every stream). For
/// `t = w ..= t_max` the threshold is the upper `1 - alpha` order statistic
/// of the surviving streams' statistics, and streams strictly above it are
/// eliminated.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_schedule<T: Scalar>(
    reference: &ReferenceSet<T>,
    w: usize,
    target: CalibrationTarget,
    t_max: usize,
    b: usize,
    kind: StatisticKind,
    kernel: Option<&Kernel<T>>,
    seed: u64,
    options: CalibrationOptions,
) -> Result<Calibration<T>> {
    check_alpha(target.alpha)?;
    if w == 0 || t_max < w {
        return Err(ShiftError::InvalidParameter(format!("need 1 <= w <= T_max (w={w}, T_max={t_max})")));
    }
    if kind == StatisticKind::Mmd2U && w < 2 {
        return Err(ShiftError::TooFewSamples("mmd2_u needs w >= 2".into()));
    }
    let required = required_streams(options.survivor_floor, target.alpha, w, t_max);
    if options.floor_policy == SurvivorFloorPolicy::Error && b < required {
        return Err(ShiftError::SurvivorFloor {
            t: t_max,
            survivors: (b as f64 * (1.0 - target.alpha).powf((t_max + 1 - w) as f64)) as usize,
            floor: options.survivor_floor,
            required,
        });
    }
    let trajectories = bootstrap_trajectories(reference, w, t_max, b, kind, kernel, seed)?;
    schedule_from_trajectories(&trajectories, w, target.alpha, options)
}

/// Statistic paths `t = w ..= t_max` for `b` bootstrap streams, in stream order.
pub fn bootstrap_trajectories<T: Scalar>(
    reference: &ReferenceSet<T>,
    w: usize,
    t_max: usize,
    b: usize,
    kind: StatisticKind,
    kernel: Option<&Kernel<T>>,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    let n = reference.len();
    let points = reference.summaries();
    let steps = t_max + 1 - w;
    match kind {
        StatisticKind::Ks => {
            scalar_only(kind, reference)?;
            let template = KsTracker::new(reference.sorted_values().expect("scalar"), w);
            Ok((0..b)
                .into_par_iter()
                .map(|stream| {
                    let mut rng = rng_for(seed, STREAM_BOOTSTRAP, stream as u64);
                    let mut tracker = template.clone();
                    let mut ring = VecDeque::with_capacity(w + 1);
                    let mut out = Vec::with_capacity(steps);
                    for t in 1..=t_max {
                        let v = points[rng.random_range(0..n)].first();
                        tracker.insert(v);
                        ring.push_back(v);
                        if ring.len() > w {
                            let old = ring.pop_front().expect("non-empty");
                            tracker.remove(old);
                        }
                        if t >= w {
                            out.push(tracker.value());
                        }
                    }
                    out
                })
                .collect())
        }
        StatisticKind::MeanDiff => {
            scalar_only(kind, reference)?;
            let ref_mean = reference.mean().expect("scalar");
            let wf = T::from_count(w);
            Ok((0..b)
                .into_par_iter()
                .map(|stream| {
                    let mut rng = rng_for(seed, STREAM_BOOTSTRAP, stream as u64);
                    let mut ring = VecDeque::with_capacity(w + 1);
                    let mut sum = T::zero();
                    let mut out = Vec::with_capacity(steps);
                    for t in 1..=t_max {
                        let v = points[rng.random_range(0..n)].first();
                        ring.push_back(v);
                        sum += v;
                        if ring.len() > w {
                            sum -= ring.pop_front().expect("non-empty");
                        }
                        if t % crate::statistics::window::DEFAULT_REFRESH_EVERY == 0 {
                            sum = ring.iter().copied().sum();
                        }
                        if t >= w {
                            out.push(ref_mean - sum / wf);
                        }
                    }
                    out
                })
                .collect())
        }
        StatisticKind::Mmd2U => {
            let kernel = kernel.ok_or_else(|| ShiftError::InvalidKernel("mmd2_u needs a kernel".into()))?;
            // Bootstrap draws are reference points, so each cross-term row is
            // computed once and reused by every stream.
            let cross_row: Vec<T> = (0..n)
                .into_par_iter()
                .map(|j| kernel.row_sum(points, &points[j]))
                .collect();
            let ref_self = reference.kernel_self_sum(kernel);
            let two = T::lit(2.0);
            Ok((0..b)
                .into_par_iter()
                .map(|stream| {
                    let mut rng = rng_for(seed, STREAM_BOOTSTRAP, stream as u64);
                    let mut ring: VecDeque<usize> = VecDeque::with_capacity(w + 1);
                    let (mut win_self, mut cross) = (T::zero(), T::zero());
                    let mut out = Vec::with_capacity(steps);
                    for t in 1..=t_max {
                        let j = rng.random_range(0..n);
                        if ring.len() == w {
                            let old = ring.pop_front().expect("non-empty");
                            let k_sum: T = ring.iter().map(|&i| kernel.eval(&points[old], &points[i])).sum();
                            win_self -= two * k_sum;
                            cross -= cross_row[old];
                        }
                        let k_sum: T = ring.iter().map(|&i| kernel.eval(&points[j], &points[i])).sum();
                        win_self += two * k_sum;
                        cross += cross_row[j];
                        ring.push_back(j);
                        if t % crate::statistics::window::DEFAULT_REFRESH_EVERY == 0 {
                            let idx: Vec<usize> = ring.iter().copied().collect();
                            let mut half = T::zero();
                            for (a, &i) in idx.iter().enumerate() {
                                for &k in &idx[a + 1..] {
                                    half += kernel.eval(&points[i], &points[k]);
                                }
                            }
                            win_self = half + half;
                            cross = idx.iter().map(|&i| cross_row[i]).sum();
                        }
                        if t >= w {
                            out.push(crate::statistics::mmd2_u_for_kernel(kernel, ref_self, win_self, cross, n, w));
                        }
                    }
                    out
                })
                .collect())
        }
    }
}

/// Step-synchronous quantile/elimination pass over precomputed trajectories.
/// Each trajectory holds the statistics for `t = w, w + 1, ...`; all must have
/// equal length.
pub fn schedule_from_trajectories<T: Scalar>(
    trajectories: &[Vec<T>],
    w: usize,
    alpha: f64,
    options: CalibrationOptions,
) -> Result<Calibration<T>> {
    check_alpha(alpha)?;
    let steps = trajectories.first().map_or(0, Vec::len);
    if steps == 0 || trajectories.iter().any(|t| t.len() != steps) {
        return Err(ShiftError::InvalidParameter("trajectories must be non-empty and of equal length".into()));
    }
    let t_max = w + steps - 1;
    let floor = options.survivor_floor.max(1);
    let mut alive: Vec<usize> = (0..trajectories.len()).collect();
    let mut values = Vec::with_capacity(steps);
    let mut survivors = Vec::with_capacity(steps);
    let mut plateau_from = None;
    let mut scratch: Vec<T> = Vec::with_capacity(alive.len());
    #[allow(clippy::needless_range_loop)]
    for step in 0..steps {
        if alive.len() < floor {
            let t = w + step;
            match options.floor_policy {
                SurvivorFloorPolicy::Plateau if step > 0 => {
                    plateau_from = Some(t);
                    let last = *values.last().expect("at least one estimated threshold");
                    values.resize(steps, last);
                    break;
                }
                _ => {
                    return Err(ShiftError::SurvivorFloor {
                        t,
                        survivors: alive.len(),
                        floor,
                        required: required_streams(floor, alpha, w, t_max),
                    })
                }
            }
        }
        scratch.clear();
        scratch.extend(alive.iter().map(|&s| trajectories[s][step]));
        let h = upper_order_statistic(&mut scratch, alpha);
        survivors.push(alive.len());
        values.push(h);
        alive.retain(|&s| trajectories[s][step] <= h);
    }
    let schedule = ThresholdSchedule::time_varying(values, w, Some(alpha))?;
    Ok(Calibration { schedule, survivors, plateau_from })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_rank_rule() {
        assert_eq!(upper_quantile_rank(0.25, 4), 3);
        assert_eq!(upper_quantile_rank(0.02, 50), 49);
        assert_eq!(upper_quantile_rank(0.05, 2000), 1900);
        assert_eq!(upper_quantile_rank(0.001, 10), 10);
        assert_eq!(upper_quantile_rank(0.9, 1), 1);
    }

    #[test]
    fn ks_asymptotic_values() {
        let h = ks_critical_value(100, 100, 0.05);
        assert!((h - 0.192065).abs() < 5e-6, "{h}");
        let h = ks_critical_value(3000, 100, 0.001);
        assert!((h - 0.19817).abs() < 5e-5, "{h}");
        let c = ((2.0f64 / 0.05).ln() / 2.0).sqrt();
        assert!((c - 1.35810).abs() < 5e-6);
        let h = ks_critical_value(100_000_000, 100, 0.05);
        assert!((h - 0.135810).abs() < 1e-5);
        let s: ThresholdSchedule<f64> = ks_asymptotic_threshold(100, 100, 0.05).unwrap();
        assert_eq!(s.threshold_at(100), Some(h_of(100, 100, 0.05)));
    }

    fn h_of(n: usize, w: usize, a: f64) -> f64 {
        ks_critical_value(n, w, a)
    }

    #[test]
    fn threshold_lookup_rules() {
        let f = ThresholdSchedule::fixed(0.3, 10).unwrap();
        assert_eq!(f.threshold_at(9), None);
        assert_eq!(f.threshold_at(10), Some(0.3));
        assert_eq!(f.threshold_at(1_000_000), Some(0.3));
        let tv = ThresholdSchedule::time_varying(vec![1.0, 2.0, 3.0], 5, Some(0.1)).unwrap();
        assert_eq!(tv.t_max(), 7);
        assert_eq!(tv.threshold_at(4), None);
        assert_eq!(tv.threshold_at(5), Some(1.0));
        assert_eq!(tv.threshold_at(7), Some(3.0));
        assert_eq!(tv.threshold_at(7 + 500), Some(3.0));
    }

    #[test]
    fn hand_traced_elimination() {
        let trajectories = vec![vec![0.1], vec![0.2], vec![0.3], vec![0.4]];
        let opts = CalibrationOptions { survivor_floor: 1, ..Default::default() };
        let cal = schedule_from_trajectories(&trajectories, 3, 0.25, opts).unwrap();
        assert_eq!(cal.schedule.values(), &[0.3]);
        assert_eq!(cal.survivors, vec![4]);

        // second step shows which three streams survived
        let trajectories = vec![vec![0.1, 5.0], vec![0.2, 6.0], vec![0.3, 7.0], vec![0.4, 100.0]];
        let cal = schedule_from_trajectories(&trajectories, 3, 0.25, opts).unwrap();
        assert_eq!(cal.survivors, vec![4, 3]);
        assert_eq!(cal.schedule.values(), &[0.3, 7.0]);
    }

    #[test]
    fn ties_eliminate_nothing() {
        let trajectories = vec![vec![0.5; 6]; 40];
        let opts = CalibrationOptions { survivor_floor: 1, ..Default::default() };
        let cal = schedule_from_trajectories(&trajectories, 2, 0.1, opts).unwrap();
        assert!(cal.schedule.values().iter().all(|&h| h == 0.5));
        assert!(cal.survivors.iter().all(|&s| s == 40));
    }

    #[test]
    fn floor_policies() {
        let trajectories: Vec<Vec<f64>> =
            (0..20).map(|i| (0..10).map(|t| ((i * 7 + t * 3) % 20) as f64).collect()).collect();
        let strict = CalibrationOptions { survivor_floor: 15, floor_policy: SurvivorFloorPolicy::Error };
        let err = schedule_from_trajectories(&trajectories, 1, 0.1, strict).unwrap_err();
        assert!(matches!(err, ShiftError::SurvivorFloor { .. }));
        assert!(err.to_string().contains("B >= B_min"));
        let plateau = CalibrationOptions { floor_policy: SurvivorFloorPolicy::Plateau, ..strict };
        let cal = schedule_from_trajectories(&trajectories, 1, 0.1, plateau).unwrap();
        let from = cal.plateau_from.unwrap();
        assert_eq!(cal.schedule.values().len(), 10);
        let last = cal.schedule.values()[from - 2];
        assert!(cal.schedule.values()[from - 1..].iter().all(|&h| h == last));
    }

    #[test]
    fn required_streams_formula() {
        assert_eq!(required_streams(500, 0.5, 1, 1), 1000);
        assert_eq!(required_streams(500, 0.02, 50, 300), 79_658);
    }

    #[test]
    fn document_round_trip() {
        let tv = ThresholdSchedule::time_varying(vec![0.25, 0.125, 0.1], 4, Some(0.05)).unwrap();
        let prov = Provenance { config_hash: "abc".into(), seed: 7 };
        let text = tv.to_json(Some(prov));
        assert!(text.contains("\"T_max\": 6"));
        let back: ThresholdSchedule<f64> = ThresholdSchedule::from_json(&text).unwrap();
        assert_eq!(back, tv);
        assert!(ThresholdSchedule::<f64>::from_json(r#"{"kind":"fixed","w":3,"T_max":3,"alpha":null,"values":[1,2]}"#).is_err());
        assert!(ThresholdSchedule::<f64>::from_json(r#"{"kind":"fixed","w":3,"T_max":3,"alpha":null,"values":[1],"extra":1}"#).is_err());
    }

    #[test]
    fn parameter_errors() {
        let r = ReferenceSet::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(permutation_threshold(&r, 2, 0.1, 50, StatisticKind::Ks, None, 1).is_err());
        assert!(permutation_threshold(&r, 4, 0.1, 100, StatisticKind::Ks, None, 1).is_err());
        assert!(ks_asymptotic_threshold::<f64>(10, 10, 1.5).is_err());
        let target = CalibrationTarget::new(0.1).unwrap();
        let err = calibrate_schedule(&r, 2, target, 10, 100, StatisticKind::Ks, None, 1, Default::default());
        assert!(matches!(err, Err(ShiftError::SurvivorFloor { .. })));
    }

    #[test]
    fn degenerate_reference_permutation_threshold_is_zero() {
        let r = ReferenceSet::from_scalars(&[1.5; 50]).unwrap();
        let s = permutation_threshold(&r, 10, 0.1, 100, StatisticKind::Ks, None, 3).unwrap();
        assert_eq!(s.fixed_h(), Some(0.0));
    }
}
