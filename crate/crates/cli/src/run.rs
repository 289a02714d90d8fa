//! Grid driver: sweeps every (d, r_tx) point over the angle list, writes the
//! CSVs and assembles `summary.json`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mcvd_core::metrics::{compute_pattern_metrics, counts_until};
use mcvd_core::sim::{run_single, RunDiagnostics};
use mcvd_core::{
    expected_hits, run_sweep, ChannelParams, HittingHistogram, PatternMetrics, SimConfig, Topology,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{
    histogram_file_name, pattern_file_name, read_histograms, read_json, write_histograms, write_json,
    write_pattern,
};
use crate::spec::{DistanceTiming, ExperimentSpec, ReferenceSource};
use crate::validate::{compare_to_analytic, summarize, PointSourceCheck, PointSourceReport, DEFAULT_CHECKPOINTS};

pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTOGRAM_DIR: &str = "histograms";
pub const PATTERN_DIR: &str = "patterns";
pub const VERSION: &str = concat!("mcvd ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: ExperimentSpec,
    pub timings: Vec<DistanceTiming>,
    pub placement_convention: String,
    pub smoothing_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleFailure {
    pub angle_deg: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub d: f64,
    pub r_tx: f64,
    pub t_end: f64,
    pub bin_width: f64,
    /// Paths relative to the output directory.
    pub histogram_file: Option<String>,
    pub pattern_file: Option<String>,
    pub error: Option<String>,
    #[serde(default)]
    pub failed_angles: Vec<AngleFailure>,
    #[serde(default)]
    pub diagnostics: Option<RunDiagnostics>,
    #[serde(flatten)]
    pub metrics: Option<PatternMetrics>,
}

impl GridResult {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.failed_angles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub passed: bool,
    pub failures: Vec<String>,
    pub point_source: Vec<PointSourceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub generated_unix_s: u64,
    pub config: RunConfig,
    pub metrics: Vec<GridResult>,
    pub validation: Validation,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn base_config(spec: &ExperimentSpec, timing: &DistanceTiming, r_tx: f64) -> Result<SimConfig, CliError> {
    let topology = Topology::new(timing.d, r_tx, spec.r_rx, 0.0, spec.pivot)?;
    Ok(SimConfig::new(topology, spec.molecules, spec.diffusion, timing.t_end, spec.seed)
        .with_dt(spec.dt)
        .with_bin_width(timing.bin_width)
        .with_absorption(spec.absorption))
}

/// Point-source counts at `t_s` that normalize the gain.
fn point_reference(spec: &ExperimentSpec, timing: &DistanceTiming) -> Result<f64, CliError> {
    match spec.reference {
        ReferenceSource::Analytic => {
            let p = ChannelParams::new(spec.diffusion, timing.d, spec.r_rx)?;
            Ok(expected_hits(&p, spec.molecules, timing.t_s)?)
        }
        ReferenceSource::Simulated => {
            // offset seed so the reference is independent of the grid's 0° run
            let config = base_config(spec, timing, 0.0)?.with_seed(spec.seed ^ 0x5EED_0FF5_E700);
            let h = run_single(&config)?;
            Ok(counts_until(&h, timing.t_s)?)
        }
    }
}

fn total_diagnostics(histograms: &[(f64, HittingHistogram)]) -> RunDiagnostics {
    histograms
        .iter()
        .fold(RunDiagnostics::default(), |acc, (_, h)| acc.merge(*h.diagnostics()))
}

fn run_grid_point(
    spec: &ExperimentSpec,
    timing: &DistanceTiming,
    r_tx: f64,
    reference: f64,
    out: &Path,
    validation: &mut Validation,
) -> GridResult {
    let mut result = GridResult {
        d: timing.d,
        r_tx,
        t_end: timing.t_end,
        bin_width: timing.bin_width,
        histogram_file: None,
        pattern_file: None,
        error: None,
        failed_angles: Vec::new(),
        diagnostics: None,
        metrics: None,
    };
    let base = match base_config(spec, timing, r_tx) {
        Ok(c) => c,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    log::info!("d = {} r_tx = {r_tx}: {} angles, N = {}", timing.d, spec.angles_deg.len(), spec.molecules);
    let mut histograms = Vec::new();
    for point in run_sweep(&base, &spec.angles_deg) {
        match point.result {
            Ok(h) => histograms.push((point.angle_deg, h)),
            Err(e) => {
                log::error!("d = {} r_tx = {r_tx} angle {}: {e}", timing.d, point.angle_deg);
                result.failed_angles.push(AngleFailure { angle_deg: point.angle_deg, error: e.to_string() });
            }
        }
    }
    result.diagnostics = Some(total_diagnostics(&histograms));
    if histograms.is_empty() {
        result.error = Some("no angle completed".into());
        return result;
    }

    let hist_rel = format!("{HISTOGRAM_DIR}/{}", histogram_file_name(timing.d, r_tx));
    let refs: Vec<(f64, &HittingHistogram)> = histograms.iter().map(|(a, h)| (*a, h)).collect();
    match write_histograms(&out.join(&hist_rel), &refs) {
        Ok(()) => result.histogram_file = Some(hist_rel),
        Err(e) => result.error = Some(e.to_string()),
    }

    match compute_pattern_metrics(&refs, timing.t_s, reference, spec.smoothing_window) {
        Ok(m) => {
            let pattern_rel = format!("{PATTERN_DIR}/{}", pattern_file_name(timing.d, r_tx));
            match write_pattern(&out.join(&pattern_rel), &m) {
                Ok(()) => result.pattern_file = Some(pattern_rel),
                Err(e) => result.error = Some(e.to_string()),
            }
            result.metrics = Some(m);
        }
        Err(e) => result.error = Some(format!("metrics: {e}")),
    }

    if r_tx == 0.0 {
        if let Some((_, h)) = histograms.iter().find(|(a, _)| *a == 0.0) {
            let check = PointSourceCheck {
                d: timing.d,
                molecules: spec.molecules,
                diffusion: spec.diffusion,
                analytic_diffusion: spec.diffusion,
                r_rx: spec.r_rx,
                dt: spec.dt,
                t_end: timing.t_end,
                seed: spec.seed,
                checkpoints: DEFAULT_CHECKPOINTS,
                absorption: spec.absorption,
            };
            match ChannelParams::new(spec.diffusion, timing.d, spec.r_rx)
                .map_err(CliError::from)
                .and_then(|p| compare_to_analytic(h, &p, DEFAULT_CHECKPOINTS))
            {
                Ok(points) => {
                    let report = summarize(check, points);
                    if !report.passed {
                        validation.failures.push(format!(
                            "point source at d = {} deviates from the analytic curve ({:.2}x the 4-sigma bound)",
                            timing.d, report.worst_ratio
                        ));
                    }
                    validation.point_source.push(report);
                }
                Err(e) => validation.failures.push(format!("point source at d = {}: {e}", timing.d)),
            }
        }
    }
    if let Some(e) = &result.error {
        validation.failures.push(format!("d = {} r_tx = {r_tx}: {e}", timing.d));
    }
    for f in &result.failed_angles {
        validation
            .failures
            .push(format!("d = {} r_tx = {r_tx} angle {}: {}", timing.d, f.angle_deg, f.error));
    }
    result
}

/// Runs the whole grid. Failing grid points are recorded and the rest
/// continue; the caller decides the exit status from `validation.passed`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<Summary, CliError> {
    let timings = spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut validation = Validation { passed: true, failures: Vec::new(), point_source: Vec::new() };
    let mut metrics = Vec::new();
    for timing in &timings {
        let reference = match point_reference(spec, timing) {
            Ok(r) => r,
            Err(e) => {
                validation.failures.push(format!("reference at d = {}: {e}", timing.d));
                continue;
            }
        };
        for &r_tx in &spec.r_tx {
            metrics.push(run_grid_point(spec, timing, r_tx, reference, out, &mut validation));
        }
    }
    validation.passed = validation.failures.is_empty();
    let summary = Summary {
        version: VERSION.to_string(),
        generated_unix_s: now_unix(),
        config: RunConfig {
            spec: spec.clone(),
            timings,
            placement_convention: spec.pivot.as_str().to_string(),
            smoothing_window: spec.smoothing_window,
        },
        metrics,
        validation,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Recomputes pattern metrics from the histogram CSVs of an earlier run.
/// `t_s` and `smoothing_window` override the values recorded in the summary.
pub fn metrics_from_dir(
    dir: &Path,
    t_s: Option<f64>,
    smoothing_window: Option<usize>,
) -> Result<Vec<GridResult>, CliError> {
    let summary: Summary = read_json(&dir.join(SUMMARY_FILE))?;
    let spec = &summary.config.spec;
    let window = smoothing_window.unwrap_or(summary.config.smoothing_window);
    let mut out = Vec::new();
    for entry in &summary.metrics {
        let Some(file) = &entry.histogram_file else { continue };
        let timing = summary
            .config
            .timings
            .iter()
            .find(|t| t.d == entry.d)
            .ok_or_else(|| CliError::format(dir.join(SUMMARY_FILE), format!("no timing for d = {}", entry.d)))?;
        let t_s = t_s.unwrap_or(timing.t_s);
        let path: PathBuf = dir.join(file);
        let histograms = read_histograms(&path, spec.molecules)?;
        let reference = match (&entry.metrics, spec.reference) {
            (_, ReferenceSource::Analytic) => {
                expected_hits(&ChannelParams::new(spec.diffusion, entry.d, spec.r_rx)?, spec.molecules, t_s)?
            }
            (Some(m), ReferenceSource::Simulated) if t_s == m.t_s => m.point_reference,
            _ => {
                return Err(CliError::Config(
                    "a simulated reference cannot be recomputed at a new t_s; rerun instead".into(),
                ))
            }
        };
        let refs: Vec<(f64, &HittingHistogram)> = histograms.iter().map(|(a, h)| (*a, h)).collect();
        let metrics = compute_pattern_metrics(&refs, t_s, reference, window)?;
        out.push(GridResult {
            metrics: Some(metrics),
            error: None,
            failed_angles: Vec::new(),
            diagnostics: None,
            ..entry.clone()
        });
    }
    Ok(out)
}
