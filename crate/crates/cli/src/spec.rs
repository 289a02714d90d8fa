//! Experiment description files and the built-in figure presets.
//!
//! Specs are flat TOML: scalar keys for fixed parameters, arrays for grids.
//! Unknown keys are rejected.
//!
//! ```toml
//! name = "fig3"
//! d = [2.0]                  # µm, emission point to receiver surface
//! r_tx = [2.5, 5.0, 7.5]
//! t_s = [0.2]                # s, one per distance (or a single value for all)
//! N = 40000
//! D = 100.0                  # µm²/s
//! r_rx = 5.0
//! dt = 1e-4
//! seed = 1
//! ```

use std::path::PathBuf;

use mcvd_core::metrics::DEFAULT_SMOOTHING_WINDOW;
use mcvd_core::sim::{default_angles, DEFAULT_BINS, DEFAULT_DT};
use mcvd_core::{AbsorptionRule, PivotConvention, Topology};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// `t_end = d² · 0.1 s/µm²` unless overridden.
pub const T_END_PER_UM2: f64 = 0.1;

pub const PRESETS: &[&str] = &["fig3", "fig4", "fig5", "fig6"];

/// Where the point-source reference for the directivity gain comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSource {
    /// `N · F(t_s)` from the closed-form channel.
    #[default]
    Analytic,
    /// Counts from a simulated point source at 0°.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(rename = "d")]
    pub distances: Vec<f64>,
    pub r_tx: Vec<f64>,
    /// One symbol time per distance, or a single value used for all.
    pub t_s: Vec<f64>,
    #[serde(rename = "N")]
    pub molecules: u64,
    #[serde(rename = "D")]
    pub diffusion: f64,
    pub r_rx: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `t_end / 1000` per distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    /// Overrides `d² · 0.1`; one per distance or a single value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<Vec<f64>>,
    #[serde(default = "default_angles")]
    pub angles_deg: Vec<f64>,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
    #[serde(default)]
    pub pivot: PivotConvention,
    #[serde(default)]
    pub absorption: AbsorptionRule,
    #[serde(default)]
    pub reference: ReferenceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_window() -> usize {
    DEFAULT_SMOOTHING_WINDOW
}

/// Per-distance timing after defaults are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceTiming {
    pub d: f64,
    pub t_s: f64,
    pub t_end: f64,
    pub bin_width: f64,
}

fn per_distance(values: &[f64], n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        len if len == n => Ok(values.to_vec()),
        len => Err(CliError::Config(format!(
            "{what} has {len} entries; expected 1 or one per distance ({n})"
        ))),
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("bad spec file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Figure presets: N = 40000, D = 100 µm²/s, r_rx = 5 µm, dt = 1e-4 s.
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let base = |name: &str, distances: Vec<f64>, r_tx: Vec<f64>, t_s: Vec<f64>| ExperimentSpec {
            name: name.to_string(),
            distances,
            r_tx,
            t_s,
            molecules: 40_000,
            diffusion: 100.0,
            r_rx: 5.0,
            dt: DEFAULT_DT,
            seed: 1,
            bin_width: None,
            t_end: None,
            angles_deg: default_angles(),
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            pivot: PivotConvention::default(),
            absorption: AbsorptionRule::default(),
            reference: ReferenceSource::default(),
            output_dir: None,
        };
        let spherical = vec![2.5, 5.0, 7.5];
        match name {
            // polar patterns; the point source is the analytic reference circle
            "fig3" => Ok(base("fig3", vec![2.0], spherical.clone(), vec![0.2])),
            // peak time against angle
            "fig4" | "peak" => Ok(base("fig4", vec![4.0], spherical, vec![0.8])),
            // HPPW against r_tx for every distance, same symbol time
            "fig5" | "hppw" => Ok(base("fig5", vec![2.0, 4.0, 6.0], spherical, vec![0.2])),
            // directivity gain against angle
            "fig6" | "gain" => Ok(base("fig6", vec![6.0], spherical, vec![1.8])),
            other => Err(CliError::Config(format!(
                "unknown preset {other:?}; available: {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn timings(&self) -> Result<Vec<DistanceTiming>, CliError> {
        let n = self.distances.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let t_s = per_distance(&self.t_s, n, "t_s")?;
        let t_end = match &self.t_end {
            Some(v) => per_distance(v, n, "t_end")?,
            None => self.distances.iter().map(|d| d * d * T_END_PER_UM2).collect(),
        };
        Ok(self
            .distances
            .iter()
            .zip(t_s)
            .zip(t_end)
            .map(|((&d, t_s), t_end)| DistanceTiming {
                d,
                t_s,
                t_end,
                bin_width: self.bin_width.unwrap_or(t_end / DEFAULT_BINS as f64),
            })
            .collect())
    }

    /// Checks everything that can be checked before any simulation starts.
    pub fn validate(&self) -> Result<Vec<DistanceTiming>, CliError> {
        if self.name.trim().is_empty() {
            return Err(CliError::Config("name must not be empty".into()));
        }
        if self.molecules == 0 {
            return Err(CliError::Config("N must be at least 1".into()));
        }
        for (what, v) in [("D", self.diffusion), ("r_rx", self.r_rx), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{what} must be positive, got {v}")));
            }
        }
        if let Some(w) = self.bin_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(CliError::Config(format!("bin_width must be positive, got {w}")));
            }
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(CliError::Config(format!(
                "smoothing_window must be odd and >= 1, got {}",
                self.smoothing_window
            )));
        }
        if self.angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("angles_deg must be strictly increasing".into()));
        }
        if !self.angles_deg.is_empty() && self.angles_deg[0] != 0.0 {
            return Err(CliError::Config("angles_deg must start at 0".into()));
        }
        if self.t_s.is_empty() && !self.distances.is_empty() {
            return Err(CliError::Config("t_s is required".into()));
        }
        let timings = self.timings()?;
        for t in &timings {
            if !(t.t_end > 0.0 && t.t_end.is_finite()) {
                return Err(CliError::Config(format!("t_end must be positive for d = {}", t.d)));
            }
            if !(t.t_s > 0.0 && t.t_s <= t.t_end) {
                return Err(CliError::Config(format!(
                    "t_s = {} must lie in (0, t_end = {}] for d = {}",
                    t.t_s, t.t_end, t.d
                )));
            }
            if self.dt > t.t_end {
                return Err(CliError::Config(format!("dt exceeds t_end for d = {}", t.d)));
            }
            for &r_tx in &self.r_tx {
                for &alpha in &self.angles_deg {
                    Topology::new(t.d, r_tx, self.r_rx, alpha, self.pivot).map_err(|e| {
                        CliError::Config(format!("d = {}, r_tx = {r_tx}, angle {alpha}: {e}", t.d))
                    })?;
                }
            }
        }
        Ok(timings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_figure_setups() {
        let fig3 = ExperimentSpec::preset("fig3").unwrap();
        assert_eq!(fig3.distances, vec![2.0]);
        assert_eq!(fig3.t_s, vec![0.2]);
        assert_eq!(fig3.r_tx, vec![2.5, 5.0, 7.5]);
        let fig4 = ExperimentSpec::preset("peak").unwrap();
        assert_eq!((fig4.distances[0], fig4.t_s[0]), (4.0, 0.8));
        let fig5 = ExperimentSpec::preset("fig5").unwrap();
        assert_eq!(fig5.distances, vec![2.0, 4.0, 6.0]);
        let timings = fig5.validate().unwrap();
        assert!(timings.iter().all(|t| t.t_s == 0.2));
        let fig6 = ExperimentSpec::preset("gain").unwrap();
        assert_eq!((fig6.distances[0], fig6.t_s[0]), (6.0, 1.8));
        for name in PRESETS {
            let spec = ExperimentSpec::preset(name).unwrap();
            assert_eq!(spec.molecules, 40_000);
            assert_eq!(spec.angles_deg.len(), 19);
            spec.validate().unwrap();
        }
        assert!(ExperimentSpec::preset("fig7").is_err());
    }

    #[test]
    fn t_end_follows_distance_squared() {
        let t = ExperimentSpec::preset("fig6").unwrap().timings().unwrap();
        assert!((t[0].t_end - 3.6).abs() < 1e-12);
        assert!((t[0].bin_width - 0.0036).abs() < 1e-15);
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let text = r#"
            name = "mini"
            d = [2.0, 4.0]
            r_tx = [5.0]
            t_s = [0.2]
            N = 100
            D = 100.0
            r_rx = 5.0
        "#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.dt, 1e-4);
        assert_eq!(spec.angles_deg.len(), 19);
        assert_eq!(spec.smoothing_window, 11);
        assert_eq!(spec.pivot, PivotConvention::TransmitterCenter);
        assert_eq!(spec.reference, ReferenceSource::Analytic);
        let timings = spec.validate().unwrap();
        assert_eq!(timings.len(), 2);
        assert_eq!(ExperimentSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
            name = "typo"
            d = [2.0]
            r_tx = [5.0]
            t_s = [0.2]
            N = 100
            D = 100.0
            r_rx = 5.0
            diffusion_coefficent = 3.0
        "#;
        let err = ExperimentSpec::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("diffusion_coefficent"), "{err}");
    }

    #[test]
    fn invalid_grids_fail_before_running() {
        let mut spec = ExperimentSpec::preset("fig3").unwrap();
        spec.t_s = vec![1.0];
        assert!(matches!(spec.validate(), Err(CliError::Config(_))));

        let mut spec = ExperimentSpec::preset("fig5").unwrap();
        spec.t_s = vec![0.2, 0.3];
        assert!(spec.validate().is_err());

        // emission-point pivot collides with a large transmitter on the back side
        let mut spec = ExperimentSpec::preset("fig3").unwrap();
        spec.pivot = PivotConvention::EmissionPoint;
        assert!(spec.validate().is_err());

        let mut spec = ExperimentSpec::preset("fig3").unwrap();
        spec.smoothing_window = 4;
        assert!(spec.validate().is_err());

        let mut spec = ExperimentSpec::preset("fig3").unwrap();
        spec.angles_deg = vec![10.0, 20.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn empty_grid_is_valid() {
        let mut spec = ExperimentSpec::preset("fig3").unwrap();
        spec.distances.clear();
        assert!(spec.validate().unwrap().is_empty());
    }
}
