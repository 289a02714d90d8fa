//! Closed-form point-source channel with a perfectly absorbing spherical
//! receiver in unbounded 3-D space.
//!
//! A molecule released at distance `d` from the surface of a receiver of
//! radius `r_rx` is absorbed by time `t` with probability
//!
//! ```text
//! F(t) = r_rx / (d + r_rx) * erfc(d / sqrt(4 D t))
//! ```
//!
//! The hitting rate is `dF/dt`, which peaks at `t = d^2 / (6 D)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complementary error function, accurate to about one ulp.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Diffusion coefficient, µm²/s.
    pub diffusion: f64,
    /// Emission point to receiver surface, µm.
    pub distance: f64,
    /// Receiver radius, µm.
    pub r_rx: f64,
}

impl ChannelParams {
    pub fn new(diffusion: f64, distance: f64, r_rx: f64) -> Result<Self> {
        let p = Self { diffusion, distance, r_rx };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("D", self.diffusion), ("d", self.distance), ("r_rx", self.r_rx)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v, "(0, inf)"));
            }
        }
        Ok(())
    }

    /// Fraction of molecules that are eventually absorbed.
    pub fn capture_limit(&self) -> f64 {
        self.r_rx / (self.distance + self.r_rx)
    }
}

/// Fraction of emitted molecules absorbed by time `t`.
pub fn f_hit_cumulative(p: &ChannelParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("t", t, "[0, inf)"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(p.capture_limit());
    }
    let arg = p.distance / (4.0 * p.diffusion * t).sqrt();
    Ok(p.capture_limit() * erfc(arg))
}

/// Same quantity through the Gaussian-CDF form `2 r/(d+r) Φ(-d/√(2Dt))`.
pub fn f_hit_cumulative_via_cdf(p: &ChannelParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("t", t, "[0, inf)"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let z = -p.distance / (2.0 * p.diffusion * t).sqrt();
    Ok(2.0 * p.capture_limit() * std_normal_cdf(z))
}

/// Time derivative of [`f_hit_cumulative`], in 1/s.
pub fn f_hit_rate(p: &ChannelParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let d = p.distance;
    let four_dt = 4.0 * p.diffusion * t;
    let exponent = -d * d / four_dt;
    // d / sqrt(4 pi D t^3), written to avoid overflow of t^3
    let prefactor = d / ((PI * four_dt).sqrt() * t);
    Ok(p.capture_limit() * prefactor * exponent.exp())
}

/// Maximizer of the hitting rate, `d^2 / (6 D)`.
pub fn analytic_peak_time(p: &ChannelParams) -> f64 {
    p.distance * p.distance / (6.0 * p.diffusion)
}

/// Expected number of absorbed molecules out of `emitted` by time `t`.
pub fn expected_hits(p: &ChannelParams, emitted: u64, t: f64) -> Result<f64> {
    Ok(emitted as f64 * f_hit_cumulative(p, t)?)
}
