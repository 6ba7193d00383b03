//! Sequential distribution-shift detection.
//!
//! A detector compares a sliding window of recent deployment summaries with a
//! fixed reference set at every step and raises a detection when the
//! two-sample statistic exceeds the threshold for that step. Thresholds are
//! either fixed offline quantiles or time-varying schedules calibrated by
//! simulation so that the run length to false detection is approximately
//! geometric. The [`evaluation`] module measures run-length and delay
//! distributions by Monte Carlo.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar type for the common cases.

pub mod calibration;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod scalar;
pub mod seed;
pub mod statistics;
pub mod streams;
pub mod summaries;

pub use error::{Result, ShiftError};
pub use scalar::Scalar;
pub use seed::{derive_seed, StreamSeed};
pub use statistics::StatisticKind;

pub type Summary64 = summaries::Summary<f64>;
pub type Summary32 = summaries::Summary<f32>;
pub type ReferenceSet64 = statistics::ReferenceSet<f64>;
pub type ReferenceSet32 = statistics::ReferenceSet<f32>;
pub type SlidingWindow64 = statistics::SlidingWindow<f64>;
pub type SlidingWindow32 = statistics::SlidingWindow<f32>;
pub type Kernel64 = statistics::Kernel<f64>;
pub type Kernel32 = statistics::Kernel<f32>;
pub type DistributionSpec64 = streams::DistributionSpec<f64>;
pub type DistributionSpec32 = streams::DistributionSpec<f32>;
pub type ChangePointModel64 = streams::ChangePointModel<f64>;
pub type ChangePointModel32 = streams::ChangePointModel<f32>;
pub type ThresholdSchedule64 = calibration::ThresholdSchedule<f64>;
pub type ThresholdSchedule32 = calibration::ThresholdSchedule<f32>;
pub type DetectorConfig64 = detector::DetectorConfig<f64>;
pub type DetectorConfig32 = detector::DetectorConfig<f32>;
