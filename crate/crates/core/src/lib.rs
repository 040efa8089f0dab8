//! Score post-processing with optimal transport.
//!
//! Raw per-individual scores are grouped by their protected attributes, the
//! Wasserstein-2 barycenter of the per-group score distributions is computed,
//! and each group is displaced toward that barycenter by a per-group degree
//! `theta` in `[0, 1]`:
//!
//! * `theta = 0` leaves every raw score untouched;
//! * `theta = 1` maps every group onto the barycenter, so all groups share one
//!   score distribution (statistical parity);
//! * anything in between follows the displacement-interpolation geodesic,
//!   which keeps the ranking inside each group intact.
//!
//! One-dimensional scores use exact quantile arithmetic ([`transport1d`],
//! [`interpolation`]). Vector-valued scores go through entropic transport
//! ([`transportnd`]). [`metrics`] measures the resulting trade-off and
//! [`oracle`] holds naive brute-force solvers used to cross-check every
//! transport computation.

pub mod empirical;
pub mod error;
pub mod interpolation;
pub mod metrics;
pub mod oracle;
pub mod population;
pub mod synth;
pub mod transport1d;
pub mod transportnd;

pub use empirical::{EmpiricalDistribution, QuantileGrid};
pub use error::{Error, Result};
pub use interpolation::{interpolate_scores, FairScores, ThetaPolicy, TransportTarget};
pub use metrics::{FairnessReport, SelectionRule};
pub use population::{build_population, validate_population, GroupKey, ScoreRecord, ScoredPopulation};
pub use transport1d::{barycenter_1d, w2_distance, Barycenter1D, BarycenterWeights};
pub use transportnd::{DiscreteMeasure, SinkhornParams, TransportPlan};

/// Grid size used for quantile arithmetic when the caller does not pick one.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// Groups smaller than this trigger a warning.
pub const DEFAULT_MIN_GROUP_SIZE: usize = 100;
