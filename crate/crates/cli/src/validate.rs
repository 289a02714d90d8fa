//! Point-source validation: the simulated cumulative hit fraction against
//! the closed-form channel at evenly spaced checkpoints.

use mcvd_core::channel::f_hit_cumulative;
use mcvd_core::sim::{run_single, DEFAULT_DT};
use mcvd_core::{counts_until, AbsorptionRule, ChannelParams, PivotConvention, SimConfig, Topology};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::spec::T_END_PER_UM2;

pub const DEFAULT_CHECKPOINTS: usize = 20;
/// Allowed deviation in binomial standard deviations.
pub const SIGMA_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSourceCheck {
    pub d: f64,
    pub molecules: u64,
    pub diffusion: f64,
    /// Diffusion coefficient fed to the analytic curve. Differs from
    /// `diffusion` only when deliberately mismatched as a negative control.
    pub analytic_diffusion: f64,
    pub r_rx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub checkpoints: usize,
    pub absorption: AbsorptionRule,
}

impl PointSourceCheck {
    pub fn new(d: f64) -> Self {
        Self {
            d,
            molecules: 40_000,
            diffusion: 100.0,
            analytic_diffusion: 100.0,
            r_rx: 5.0,
            dt: DEFAULT_DT,
            t_end: d * d * T_END_PER_UM2,
            seed: 1,
            checkpoints: DEFAULT_CHECKPOINTS,
            absorption: AbsorptionRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t_s: f64,
    pub empirical: f64,
    pub analytic: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSourceReport {
    pub check: PointSourceCheck,
    pub checkpoints: Vec<Checkpoint>,
    pub max_abs_deviation: f64,
    /// Largest |deviation| / bound over all checkpoints.
    pub worst_ratio: f64,
    pub passed: bool,
}

/// Compares a histogram from a point source against `F(t)` at
/// `t_end · k / checkpoints` for `k = 1..=checkpoints`.
pub fn compare_to_analytic(
    h: &mcvd_core::HittingHistogram,
    channel: &ChannelParams,
    checkpoints: usize,
) -> Result<Vec<Checkpoint>, CliError> {
    let n = h.total_emitted() as f64;
    (1..=checkpoints)
        .map(|k| {
            let t_s = h.t_end() * k as f64 / checkpoints as f64;
            let empirical = counts_until(h, t_s)? / n;
            let analytic = f_hit_cumulative(channel, t_s)?;
            // floor the variance at one molecule so F ≈ 0 does not demand exact zeros
            let var = (analytic * (1.0 - analytic)).max(1.0 / n) / n;
            let bound = SIGMA_BOUND * var.sqrt();
            Ok(Checkpoint { t_s, empirical, analytic, bound, passed: (empirical - analytic).abs() <= bound })
        })
        .collect()
}

pub fn summarize(check: PointSourceCheck, checkpoints: Vec<Checkpoint>) -> PointSourceReport {
    let max_abs_deviation = checkpoints.iter().map(|c| (c.empirical - c.analytic).abs()).fold(0.0, f64::max);
    let worst_ratio = checkpoints
        .iter()
        .map(|c| (c.empirical - c.analytic).abs() / c.bound)
        .fold(0.0, f64::max);
    let passed = checkpoints.iter().all(|c| c.passed);
    PointSourceReport { check, checkpoints, max_abs_deviation, worst_ratio, passed }
}

pub fn validate_point_source(check: PointSourceCheck) -> Result<PointSourceReport, CliError> {
    if check.checkpoints == 0 {
        return Err(CliError::Config("need at least one checkpoint".into()));
    }
    let topology = Topology::new(check.d, 0.0, check.r_rx, 0.0, PivotConvention::TransmitterCenter)?;
    let config = SimConfig::new(topology, check.molecules, check.diffusion, check.t_end, check.seed)
        .with_dt(check.dt)
        .with_absorption(check.absorption);
    let channel = ChannelParams::new(check.analytic_diffusion, check.d, check.r_rx)?;
    log::info!("point-source validation at d = {} with N = {}", check.d, check.molecules);
    let h = run_single(&config)?;
    let checkpoints = compare_to_analytic(&h, &channel, check.checkpoints)?;
    Ok(summarize(check, checkpoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcvd_core::HittingHistogram;

    #[test]
    fn exact_expectation_passes_and_shifted_fails() {
        let channel = ChannelParams::new(100.0, 2.0, 5.0).unwrap();
        let n = 40_000u64;
        let bins = 400;
        let w = 0.4 / bins as f64;
        // expected counts per bin, rounded
        let mut prev = 0.0;
        let counts: Vec<u64> = (1..=bins)
            .map(|i| {
                let f = f_hit_cumulative(&channel, i as f64 * w).unwrap() * n as f64;
                let c = (f - prev).round();
                prev += c;
                c as u64
            })
            .collect();
        let h = HittingHistogram::from_counts(w, counts, n, "x").unwrap();
        let good = summarize(PointSourceCheck::new(2.0), compare_to_analytic(&h, &channel, 20).unwrap());
        assert!(good.passed, "{good:?}");
        assert_eq!(good.checkpoints.len(), 20);
        assert!((good.checkpoints[19].t_s - 0.4).abs() < 1e-12);

        let wrong = ChannelParams::new(150.0, 2.0, 5.0).unwrap();
        let bad = summarize(PointSourceCheck::new(2.0), compare_to_analytic(&h, &wrong, 20).unwrap());
        assert!(!bad.passed);
        assert!(bad.worst_ratio > 1.0);
    }
}
