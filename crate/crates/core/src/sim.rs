//! Brownian-dynamics engine.
//!
//! Molecules start at the emission point at `t = 0` and take Gaussian steps
//! of per-axis variance `2 D dt`. After every step the transmitter body (if
//! any) reflects the molecule, then the receiver tests for absorption. An
//! absorbed molecule is binned at the end time of its step and removed.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{reflect_off_sphere, Sphere, Topology, Vector3, SURFACE_TOLERANCE};
use crate::rng::{angle_seed, molecule_stream};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_BINS: usize = 1000;

/// Molecules per work item. Fixed so partial histograms are merged the same
/// way whatever the thread count.
const CHUNK: u64 = 512;

/// Bridge exponents above this give a crossing probability below e^-40.
const BRIDGE_CUTOFF: f64 = 40.0;

/// How absorption is detected within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsorptionRule {
    /// Only the step end point is tested against the receiver.
    EndOfStep,
    /// End point test, plus a Brownian-bridge test for paths that touched
    /// the receiver during the step but ended outside it. The crossing
    /// probability uses the planar approximation `exp(-h0 h1 / (D dt))` with
    /// `h0`, `h1` the start and end distances to the surface.
    #[default]
    BrownianBridge,
}

impl AbsorptionRule {
    pub fn as_str(self) -> &'static str {
        match self {
            AbsorptionRule::EndOfStep => "end-of-step",
            AbsorptionRule::BrownianBridge => "brownian-bridge",
        }
    }
}

impl std::str::FromStr for AbsorptionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "end-of-step" => Ok(AbsorptionRule::EndOfStep),
            "brownian-bridge" => Ok(AbsorptionRule::BrownianBridge),
            other => Err(Error::Config(format!("unknown absorption rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub molecules: u64,
    /// µm²/s
    pub diffusion: f64,
    /// s
    pub dt: f64,
    /// s
    pub t_end: f64,
    pub topology: Topology,
    pub seed: u64,
    /// s
    pub bin_width: f64,
    pub absorption: AbsorptionRule,
}

impl SimConfig {
    /// Config with the default step, `t_end / 1000` bins and bridge absorption.
    pub fn new(topology: Topology, molecules: u64, diffusion: f64, t_end: f64, seed: u64) -> Self {
        Self {
            molecules,
            diffusion,
            dt: DEFAULT_DT,
            t_end,
            topology,
            seed,
            bin_width: t_end / DEFAULT_BINS as f64,
            absorption: AbsorptionRule::default(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_bin_width(mut self, bin_width: f64) -> Self {
        self.bin_width = bin_width;
        self
    }

    pub fn with_absorption(mut self, absorption: AbsorptionRule) -> Self {
        self.absorption = absorption;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Per-axis RMS displacement of one step.
    pub fn step_sigma(&self) -> f64 {
        (2.0 * self.diffusion * self.dt).sqrt()
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt - 1e-9).ceil().max(1.0) as u64
    }

    pub fn n_bins(&self) -> usize {
        (self.t_end / self.bin_width - 1e-9).ceil().max(1.0) as usize
    }

    /// Checks hard constraints and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.molecules == 0 {
            return Err(Error::Config("molecule count must be at least 1".into()));
        }
        for (what, v) in [
            ("D", self.diffusion),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("bin_width", self.bin_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{what} must be positive and finite, got {v}")));
            }
        }
        if self.dt > self.t_end {
            return Err(Error::Config(format!("dt {} exceeds t_end {}", self.dt, self.t_end)));
        }
        self.topology.validate()?;

        let mut warnings = Vec::new();
        let scale = self.topology.rx.radius.min(self.topology.distance);
        if self.step_sigma() > scale / 10.0 {
            warnings.push(format!(
                "RMS step {:.4} µm exceeds a tenth of min(r_rx, d) = {scale} µm; \
                 boundary crossings may be skipped",
                self.step_sigma()
            ));
        }
        Ok(warnings)
    }

    /// Short stable identifier of the full configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&json);
        format!("{hash:x}")[..16].to_string()
    }
}

/// Counters collected during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub survivors: u64,
    /// Step end positions strictly inside the transmitter body.
    pub containment_violations: u64,
    pub reflections: u64,
    pub rollbacks: u64,
    /// Absorptions detected by the bridge test rather than the end point.
    pub bridge_absorptions: u64,
}

impl RunDiagnostics {
    pub fn merge(mut self, other: RunDiagnostics) -> Self {
        self.survivors += other.survivors;
        self.containment_violations += other.containment_violations;
        self.reflections += other.reflections;
        self.rollbacks += other.rollbacks;
        self.bridge_absorptions += other.bridge_absorptions;
        self
    }
}

/// Time histogram of absorption events: the received signal.
///
/// Bin `i` covers `(i w, (i + 1) w]`, so an absorption at exactly `t` is
/// counted by every prefix ending at or after `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingHistogram {
    bin_width: f64,
    counts: Vec<u64>,
    total_emitted: u64,
    total_absorbed: u64,
    config_digest: String,
    diagnostics: RunDiagnostics,
}

impl HittingHistogram {
    /// Rebuilds a histogram from stored counts, e.g. a CSV on disk.
    pub fn from_counts(
        bin_width: f64,
        counts: Vec<u64>,
        total_emitted: u64,
        config_digest: impl Into<String>,
    ) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::Config(format!("bin width must be positive, got {bin_width}")));
        }
        if counts.is_empty() {
            return Err(Error::Config("histogram has no bins".into()));
        }
        let total_absorbed: u64 = counts.iter().sum();
        if total_absorbed > total_emitted {
            return Err(Error::Invariant(format!(
                "{total_absorbed} absorbed out of {total_emitted} emitted"
            )));
        }
        Ok(Self {
            bin_width,
            counts,
            total_emitted,
            total_absorbed,
            config_digest: config_digest.into(),
            diagnostics: RunDiagnostics {
                survivors: total_emitted - total_absorbed,
                ..RunDiagnostics::default()
            },
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Uniform edges, `n_bins + 1` of them.
    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.counts.len()).map(|i| i as f64 * self.bin_width).collect()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width
    }

    pub fn t_end(&self) -> f64 {
        self.counts.len() as f64 * self.bin_width
    }

    pub fn total_emitted(&self) -> u64 {
        self.total_emitted
    }

    pub fn total_absorbed(&self) -> u64 {
        self.total_absorbed
    }

    pub fn absorbed_fraction(&self) -> f64 {
        self.total_absorbed as f64 / self.total_emitted as f64
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn diagnostics(&self) -> &RunDiagnostics {
        &self.diagnostics
    }
}

/// One Euler-Maruyama step of free diffusion.
#[inline]
pub fn brownian_step<R: Rng + ?Sized>(pos: Vector3, diffusion: f64, dt: f64, rng: &mut R) -> Vector3 {
    displace(pos, (2.0 * diffusion * dt).sqrt(), rng)
}

#[inline]
fn displace<R: Rng + ?Sized>(pos: Vector3, sigma: f64, rng: &mut R) -> Vector3 {
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let dz: f64 = rng.sample(StandardNormal);
    pos + Vector3::new(dx, dy, dz) * sigma
}

/// What happened to a single molecule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoleculeFate {
    /// Absorbed at the end of step `step` (1-based), i.e. at `step * dt`.
    Absorbed { step: u64 },
    Survived,
}

/// Precomputed per-run constants for the inner loop.
struct Kernel {
    start: Vector3,
    tx: Option<Sphere>,
    rx: Sphere,
    sigma: f64,
    inv_d_dt: f64,
    n_steps: u64,
    bridge: bool,
    seed: u64,
}

impl Kernel {
    fn new(config: &SimConfig) -> Self {
        let topo = &config.topology;
        Self {
            start: topo.emission_point,
            tx: (topo.tx_body.radius > 0.0).then_some(topo.tx_body),
            rx: topo.rx,
            sigma: config.step_sigma(),
            inv_d_dt: 1.0 / (config.diffusion * config.dt),
            n_steps: config.n_steps(),
            bridge: config.absorption == AbsorptionRule::BrownianBridge,
            seed: config.seed,
        }
    }

    fn run(&self, index: u64, diag: &mut RunDiagnostics) -> MoleculeFate {
        let mut rng = molecule_stream(self.seed, index);
        let rx_c = self.rx.center;
        let rx_r = self.rx.radius;
        let rx_r2 = rx_r * rx_r;
        let mut pos = self.start;
        let mut gap = (pos - rx_c).norm() - rx_r;

        for step in 1..=self.n_steps {
            let prev = pos;
            pos = displace(prev, self.sigma, &mut rng);

            if let Some(tx) = &self.tx {
                let proposed = pos;
                pos = reflect_off_sphere(prev, proposed, tx);
                if pos != proposed {
                    if pos == prev {
                        diag.rollbacks += 1;
                    } else {
                        diag.reflections += 1;
                    }
                }
                let inner = tx.radius - SURFACE_TOLERANCE;
                if (pos - tx.center).norm_squared() < inner * inner {
                    diag.containment_violations += 1;
                }
            }

            let dist2 = (pos - rx_c).norm_squared();
            if dist2 <= rx_r2 {
                return MoleculeFate::Absorbed { step };
            }
            if self.bridge {
                let prev_gap = gap;
                gap = dist2.sqrt() - rx_r;
                let exponent = prev_gap * gap * self.inv_d_dt;
                if exponent < BRIDGE_CUTOFF {
                    let u: f64 = rng.random();
                    if u < (-exponent).exp() {
                        diag.bridge_absorptions += 1;
                        return MoleculeFate::Absorbed { step };
                    }
                }
            }
        }
        diag.survivors += 1;
        MoleculeFate::Survived
    }
}

/// Runs molecule `index` of `config` in isolation. Mostly useful for tests;
/// [`run_single`] produces the same fates.
pub fn simulate_molecule(config: &SimConfig, index: u64) -> MoleculeFate {
    Kernel::new(config).run(index, &mut RunDiagnostics::default())
}

fn bin_index(time: f64, bin_width: f64, n_bins: usize) -> usize {
    let i = (time / bin_width - 1e-9).ceil() as i64 - 1;
    i.clamp(0, n_bins as i64 - 1) as usize
}

/// Simulates all molecules of one configuration.
///
/// Molecules run in parallel on the current rayon pool; each draws from its
/// own `(seed, index)` stream and partial histograms are summed, so the
/// output is identical for any thread count.
pub fn run_single(config: &SimConfig) -> Result<HittingHistogram> {
    for warning in config.validate()? {
        log::warn!("{warning}");
    }
    let kernel = Kernel::new(config);
    let n_bins = config.n_bins();
    let n_chunks = config.molecules.div_ceil(CHUNK);

    let (counts, diagnostics) = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut counts = vec![0u64; n_bins];
            let mut diag = RunDiagnostics::default();
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(config.molecules);
            for index in lo..hi {
                if let MoleculeFate::Absorbed { step } = kernel.run(index, &mut diag) {
                    let t = step as f64 * config.dt;
                    counts[bin_index(t, config.bin_width, n_bins)] += 1;
                }
            }
            (counts, diag)
        })
        .reduce(
            || (vec![0u64; n_bins], RunDiagnostics::default()),
            |(mut a, da), (b, db)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, da.merge(db))
            },
        );

    let total_absorbed: u64 = counts.iter().sum();
    if total_absorbed + diagnostics.survivors != config.molecules {
        return Err(Error::Invariant(format!(
            "{total_absorbed} absorbed + {} survivors != {} emitted",
            diagnostics.survivors, config.molecules
        )));
    }
    if diagnostics.containment_violations > 0 {
        return Err(Error::Invariant(format!(
            "{} step end positions inside the transmitter body",
            diagnostics.containment_violations
        )));
    }
    Ok(HittingHistogram {
        bin_width: config.bin_width,
        counts,
        total_emitted: config.molecules,
        total_absorbed,
        config_digest: config.digest(),
        diagnostics,
    })
}

/// One entry of a sweep result.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub angle_deg: f64,
    pub result: Result<HittingHistogram>,
}

/// Runs `base` with the receiver moved to each angle in turn. Each angle gets
/// its own sub-seed derived from the base seed and the angle; a failing
/// angle does not stop the others.
pub fn run_sweep(base: &SimConfig, angles_deg: &[f64]) -> Vec<SweepPoint> {
    angles_deg
        .iter()
        .map(|&angle_deg| {
            let result = base.topology.at_angle(angle_deg).and_then(|topology| {
                let config = SimConfig {
                    topology,
                    seed: angle_seed(base.seed, angle_deg),
                    ..*base
                };
                run_single(&config)
            });
            SweepPoint { angle_deg, result }
        })
        .collect()
}

/// 0°, 10°, ..., 180°.
pub fn default_angles() -> Vec<f64> {
    (0..=18).map(|i| i as f64 * 10.0).collect()
}
