//! Molecular communication via diffusion: a Brownian-dynamics simulator for
//! point and reflecting spherical transmitters with an absorbing spherical
//! receiver, the closed-form point-source channel, and angular pattern
//! metrics (half-power pattern width, directivity gain, peak time).

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod rng;
pub mod sim;

pub use channel::{analytic_peak_time, expected_hits, f_hit_cumulative, f_hit_rate, ChannelParams};
pub use error::{Error, Result};
pub use geometry::{PivotConvention, Sphere, Topology, Vector3};
pub use metrics::{
    compute_gain, compute_hppw, compute_pattern_metrics, compute_peak_time, counts_until, AngleSeries,
    AngularPattern, PatternMetrics, HPPW_NO_CROSSING,
};
pub use sim::{run_single, run_sweep, AbsorptionRule, HittingHistogram, SimConfig, SweepPoint};
