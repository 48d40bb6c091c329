//! Time-varying network estimation for high-dimensional nonstationary time series.
//!
//! The pipeline has two stages. [`changepoint`] locates abrupt changes in the
//! covariance path with a localized difference statistic. [`clime`] then
//! estimates sparse precision matrices between the breaks by kernel smoothing
//! the covariance ([`kernel`]) and solving column-wise L1 programs ([`lp`]),
//! mirroring samples across a break when the kernel window straddles it.
//! [`sim`] produces panels with known ground truth and [`eval`] scores
//! estimates against it.

pub mod changepoint;
pub mod clime;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernel;
pub mod lp;
pub mod panel;
pub mod rates;
pub mod rng;
pub mod sim;

pub use changepoint::{detect, scan, ChangePointReport, ScanCurve, Threshold};
pub use clime::{clime, clime_column, support, tv_clime_path, PrecisionEstimate};
pub use error::{Error, Result};
pub use graph::GraphEstimate;
pub use kernel::{CovarianceSnapshot, KernelFamily, KernelSpec};
pub use panel::TimeSeriesPanel;
pub use sim::{build_sim_design, SimDesign};
