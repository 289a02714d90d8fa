//! Angular pattern metrics: counts up to the symbol time, half-power pattern
//! width, directivity gain relative to the point source, and peak time.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::HittingHistogram;

/// HPPW reported when the pattern never drops to half its boresight value.
pub const HPPW_NO_CROSSING: f64 = 360.0;

pub const DEFAULT_SMOOTHING_WINDOW: usize = 11;

/// Formats an angle the way it appears in CSV cells and JSON keys.
pub fn format_angle(angle_deg: f64) -> String {
    let s = format!("{angle_deg:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Values keyed by angle, kept in the order given. Serializes as a JSON
/// object whose keys are formatted angles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AngleSeries<T>(pub Vec<(f64, T)>);

impl<T> AngleSeries<T> {
    pub fn get(&self, angle_deg: f64) -> Option<&T> {
        self.0
            .iter()
            .find(|(a, _)| (a - angle_deg).abs() < 1e-9)
            .map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, T)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T: Serialize> Serialize for AngleSeries<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (a, v) in &self.0 {
            map.serialize_entry(&format_angle(*a), v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for AngleSeries<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct SeriesVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for SeriesVisitor<T> {
            type Value = AngleSeries<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from angle in degrees to value")
            }

            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> std::result::Result<Self::Value, M::Error> {
                let mut out = Vec::new();
                while let Some((key, value)) = access.next_entry::<String, T>()? {
                    let angle: f64 = key.parse().map_err(de::Error::custom)?;
                    out.push((angle, value));
                }
                out.sort_by(|a, b| a.0.total_cmp(&b.0));
                Ok(AngleSeries(out))
            }
        }

        deserializer.deserialize_map(SeriesVisitor(std::marker::PhantomData))
    }
}

/// Absorptions up to `t_s`: whole bins ending at or before `t_s` plus a linear
/// share of the bin that straddles it.
pub fn counts_until(h: &HittingHistogram, t_s: f64) -> Result<f64> {
    let t_end = h.t_end();
    if !(t_s >= 0.0) || t_s > t_end * (1.0 + 1e-12) {
        return Err(Error::Domain { what: "t_s", value: t_s, domain: "[0, t_end]" });
    }
    let mut x = t_s / h.bin_width();
    if (x - x.round()).abs() < 1e-9 {
        x = x.round();
    }
    let counts = h.counts();
    let full = (x.floor() as usize).min(counts.len());
    let mut total: u64 = counts[..full].iter().sum();
    let mut partial = 0.0;
    if full < counts.len() {
        partial = (x - full as f64) * counts[full] as f64;
    }
    if full == counts.len() {
        total = h.total_absorbed();
    }
    Ok(total as f64 + partial)
}

/// Counts at the symbol time for each sampled angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularPattern {
    angles_deg: Vec<f64>,
    counts_at_ts: Vec<f64>,
    t_s: f64,
    point_reference: f64,
}

impl AngularPattern {
    pub fn new(angles_deg: Vec<f64>, counts_at_ts: Vec<f64>, t_s: f64, point_reference: f64) -> Result<Self> {
        if angles_deg.len() != counts_at_ts.len() {
            return Err(Error::Metric(format!(
                "{} angles but {} counts",
                angles_deg.len(),
                counts_at_ts.len()
            )));
        }
        if angles_deg.iter().any(|a| !(0.0..=180.0).contains(a)) {
            return Err(Error::Metric("angles must lie in [0, 180]".into()));
        }
        if angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Metric("angles must be strictly increasing".into()));
        }
        if counts_at_ts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Metric("counts must be finite and non-negative".into()));
        }
        if !(point_reference.is_finite() && point_reference >= 0.0) {
            return Err(Error::Metric(format!("bad point reference {point_reference}")));
        }
        Ok(Self { angles_deg, counts_at_ts, t_s, point_reference })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn counts_at_ts(&self) -> &[f64] {
        &self.counts_at_ts
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn point_reference(&self) -> f64 {
        self.point_reference
    }
}

/// Position of the first half-power crossing scanning outward from 0°.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Crossing {
    /// index of the first sample at or below half power
    upper: usize,
    alpha: f64,
}

fn boresight_counts(p: &AngularPattern) -> Result<f64> {
    match (p.angles_deg.first(), p.counts_at_ts.first()) {
        (Some(&0.0), Some(&n0)) => {
            if n0 > 0.0 {
                Ok(n0)
            } else {
                Err(Error::Metric("no molecules received at 0°; pattern undefined".into()))
            }
        }
        _ => Err(Error::Metric("pattern has no 0° sample".into())),
    }
}

fn find_crossing(p: &AngularPattern) -> Result<Option<Crossing>> {
    let half = 0.5 * boresight_counts(p)?;
    let (a, n) = (&p.angles_deg, &p.counts_at_ts);
    for i in 1..n.len() {
        if n[i] <= half {
            let alpha = if n[i] == half {
                a[i]
            } else {
                a[i - 1] + (a[i] - a[i - 1]) * (n[i - 1] - half) / (n[i - 1] - n[i])
            };
            return Ok(Some(Crossing { upper: i, alpha }));
        }
    }
    Ok(None)
}

/// Half-power pattern width in degrees: twice the first angle at which the
/// counts fall to half the boresight value, linearly interpolated between
/// samples. [`HPPW_NO_CROSSING`] when there is no crossing.
pub fn compute_hppw(p: &AngularPattern) -> Result<f64> {
    Ok(find_crossing(p)?.map_or(HPPW_NO_CROSSING, |c| 2.0 * c.alpha))
}

/// One-sigma uncertainty of [`compute_hppw`] from binomial count noise,
/// propagated through the interpolation. Samples at different angles are
/// treated as independent. `None` when there is no crossing.
pub fn hppw_sigma(p: &AngularPattern, emitted: u64) -> Result<Option<f64>> {
    let Some(c) = find_crossing(p)? else {
        return Ok(None);
    };
    let n = emitted as f64;
    let var = |count: f64| {
        let q = (count / n).clamp(0.0, 1.0);
        n * q * (1.0 - q)
    };
    let (a, counts) = (&p.angles_deg, &p.counts_at_ts);
    let (lo, hi) = (c.upper - 1, c.upper);
    let (n0, n1, n2) = (counts[0], counts[lo], counts[hi]);
    let span = a[hi] - a[lo];
    let denom = n1 - n2;
    if denom <= 0.0 {
        return Ok(Some(0.0));
    }
    let half = 0.5 * n0;
    let d_n0 = -0.5 * span / denom;
    let d_n1 = span * (half - n2) / (denom * denom);
    let d_n2 = span * (n1 - half) / (denom * denom);
    let alpha_var = if lo == 0 {
        // boresight sample is also the lower interpolation point
        (d_n0 + d_n1).powi(2) * var(n0) + d_n2.powi(2) * var(n2)
    } else {
        d_n0.powi(2) * var(n0) + d_n1.powi(2) * var(n1) + d_n2.powi(2) * var(n2)
    };
    Ok(Some(2.0 * alpha_var.sqrt()))
}

/// Directivity gain at each angle: counts divided by the point-source
/// reference.
pub fn compute_gain(p: &AngularPattern) -> Result<AngleSeries<f64>> {
    if !(p.point_reference > 0.0) {
        return Err(Error::Metric("point-source reference must be positive".into()));
    }
    Ok(AngleSeries(
        p.angles_deg
            .iter()
            .zip(&p.counts_at_ts)
            .map(|(&a, &c)| (a, c / p.point_reference))
            .collect(),
    ))
}

/// Centered moving average; windows are truncated at the ends.
pub fn smooth(counts: &[u64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let mut prefix = Vec::with_capacity(counts.len() + 1);
    prefix.push(0u64);
    for &c in counts {
        prefix.push(prefix.last().unwrap() + c);
    }
    (0..counts.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(counts.len());
            (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64
        })
        .collect()
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Metric(format!("smoothing window must be odd and >= 1, got {window}")));
    }
    Ok(())
}

fn argmax_earliest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Bin-center time of the maximum of the smoothed histogram, ties going to
/// the earliest bin.
pub fn compute_peak_time(h: &HittingHistogram, smoothing_window: usize) -> Result<f64> {
    check_window(smoothing_window)?;
    if h.total_absorbed() == 0 {
        return Err(Error::Metric("histogram is empty; no peak".into()));
    }
    let smoothed = smooth(h.counts(), smoothing_window);
    Ok(h.bin_center(argmax_earliest(&smoothed)))
}

/// Standard deviation of [`compute_peak_time`] over Poisson resamplings of
/// the histogram counts (parametric bootstrap).
pub fn peak_time_spread(h: &HittingHistogram, smoothing_window: usize, resamples: usize, seed: u64) -> Result<f64> {
    check_window(smoothing_window)?;
    if h.total_absorbed() == 0 {
        return Err(Error::Metric("histogram is empty; no peak".into()));
    }
    if resamples < 2 {
        return Err(Error::Metric("need at least two resamples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samplers: Vec<Option<Poisson<f64>>> = h
        .counts()
        .iter()
        .map(|&c| (c > 0).then(|| Poisson::new(c as f64).expect("positive mean")))
        .collect();
    let mut resampled = vec![0u64; h.n_bins()];
    let peaks: Vec<f64> = (0..resamples)
        .map(|_| {
            for (slot, sampler) in resampled.iter_mut().zip(&samplers) {
                *slot = sampler.as_ref().map_or(0, |p| rng.sample(p) as u64);
            }
            h.bin_center(argmax_earliest(&smooth(&resampled, smoothing_window)))
        })
        .collect();
    let mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
    let var = peaks.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (peaks.len() - 1) as f64;
    Ok(var.sqrt())
}

/// All pattern metrics for one transmitter configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMetrics {
    pub t_s: f64,
    pub point_reference: f64,
    pub smoothing_window: usize,
    pub hppw_deg: f64,
    /// True when `hppw_deg` is the no-crossing sentinel.
    pub hppw_no_crossing: bool,
    pub hppw_sigma_deg: Option<f64>,
    pub counts_at_ts: AngleSeries<f64>,
    pub gain_by_angle: AngleSeries<f64>,
    /// `None` where the receiver caught nothing.
    pub peak_time_by_angle: AngleSeries<Option<f64>>,
}

/// Computes [`PatternMetrics`] from per-angle histograms (sorted by angle,
/// starting at 0°).
pub fn compute_pattern_metrics(
    histograms: &[(f64, &HittingHistogram)],
    t_s: f64,
    point_reference: f64,
    smoothing_window: usize,
) -> Result<PatternMetrics> {
    check_window(smoothing_window)?;
    let emitted = histograms
        .first()
        .map(|(_, h)| h.total_emitted())
        .ok_or_else(|| Error::Metric("no histograms".into()))?;
    let angles: Vec<f64> = histograms.iter().map(|(a, _)| *a).collect();
    let counts = histograms
        .iter()
        .map(|(_, h)| counts_until(h, t_s))
        .collect::<Result<Vec<_>>>()?;
    let pattern = AngularPattern::new(angles.clone(), counts.clone(), t_s, point_reference)?;
    let hppw_deg = compute_hppw(&pattern)?;
    let peak_time_by_angle = histograms
        .iter()
        .map(|(a, h)| (*a, compute_peak_time(h, smoothing_window).ok()))
        .collect();
    Ok(PatternMetrics {
        t_s,
        point_reference,
        smoothing_window,
        hppw_deg,
        hppw_no_crossing: hppw_deg == HPPW_NO_CROSSING,
        hppw_sigma_deg: hppw_sigma(&pattern, emitted)?,
        counts_at_ts: AngleSeries(angles.into_iter().zip(counts).collect()),
        gain_by_angle: compute_gain(&pattern)?,
        peak_time_by_angle: AngleSeries(peak_time_by_angle),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(counts: Vec<u64>, bin_width: f64, emitted: u64) -> HittingHistogram {
        HittingHistogram::from_counts(bin_width, counts, emitted, "test").unwrap()
    }

    fn pattern(samples: &[(f64, f64)]) -> AngularPattern {
        AngularPattern::new(
            samples.iter().map(|s| s.0).collect(),
            samples.iter().map(|s| s.1).collect(),
            0.2,
            1000.0,
        )
        .unwrap()
    }

    #[test]
    fn counts_until_examples() {
        let h = hist(vec![10; 10], 0.1, 200);
        assert_eq!(counts_until(&h, h.t_end()).unwrap(), 100.0);
        assert_eq!(counts_until(&h, 0.0).unwrap(), 0.0);
        assert!((counts_until(&h, 0.45).unwrap() - 45.0).abs() < 1e-9);
        assert_eq!(counts_until(&h, 0.3).unwrap(), 30.0);
        assert!(counts_until(&h, 1.01).is_err());
        assert!(counts_until(&h, -0.1).is_err());
    }

    #[test]
    fn hppw_cosine_pattern() {
        let samples: Vec<(f64, f64)> = (0..=18)
            .map(|i| {
                let a = i as f64 * 10.0;
                (a, (1000.0 * a.to_radians().cos()).max(0.0))
            })
            .collect();
        let hppw = compute_hppw(&pattern(&samples)).unwrap();
        assert!((hppw - 120.0).abs() < 1e-9, "{hppw}");
    }

    #[test]
    fn hppw_flat_pattern_is_sentinel() {
        let samples: Vec<(f64, f64)> = (0..=18).map(|i| (i as f64 * 10.0, 500.0)).collect();
        let p = pattern(&samples);
        assert_eq!(compute_hppw(&p).unwrap(), HPPW_NO_CROSSING);
        assert_eq!(hppw_sigma(&p, 1000).unwrap(), None);
    }

    #[test]
    fn hppw_linear_interpolation() {
        let p = pattern(&[(0.0, 1000.0), (10.0, 800.0), (20.0, 400.0)]);
        assert!((compute_hppw(&p).unwrap() - 35.0).abs() < 1e-12);
    }

    #[test]
    fn hppw_requires_boresight_signal() {
        let p = pattern(&[(0.0, 0.0), (10.0, 0.0)]);
        assert!(compute_hppw(&p).is_err());
        let p = pattern(&[(10.0, 100.0), (20.0, 10.0)]);
        assert!(compute_hppw(&p).is_err());
    }

    #[test]
    fn hppw_sigma_matches_finite_differences() {
        // perturb each count by one and compare with the analytic derivatives
        let base = [(0.0, 1000.0), (10.0, 800.0), (20.0, 400.0), (30.0, 100.0)];
        let emitted = 4000;
        let sigma = hppw_sigma(&pattern(&base), emitted).unwrap().unwrap();
        let h0 = compute_hppw(&pattern(&base)).unwrap();
        let mut var = 0.0;
        for i in 0..base.len() {
            let eps = 1e-3;
            let mut s = base;
            s[i].1 += eps;
            let deriv = (compute_hppw(&pattern(&s)).unwrap() - h0) / eps;
            let q = base[i].1 / emitted as f64;
            var += deriv * deriv * emitted as f64 * q * (1.0 - q);
        }
        assert!((sigma - var.sqrt()).abs() < 1e-3 * sigma, "{sigma} vs {}", var.sqrt());
    }

    #[test]
    fn hppw_sigma_when_crossing_follows_boresight() {
        let base = [(0.0, 1000.0), (10.0, 300.0)];
        let emitted = 4000;
        let sigma = hppw_sigma(&pattern(&base), emitted).unwrap().unwrap();
        let h0 = compute_hppw(&pattern(&base)).unwrap();
        let mut var = 0.0;
        for i in 0..2 {
            let mut s = base;
            s[i].1 += 1e-3;
            let deriv = (compute_hppw(&pattern(&s)).unwrap() - h0) / 1e-3;
            let q = base[i].1 / emitted as f64;
            var += deriv * deriv * emitted as f64 * q * (1.0 - q);
        }
        assert!((sigma - var.sqrt()).abs() < 1e-3 * sigma);
    }

    #[test]
    fn gain_examples() {
        let p = AngularPattern::new(vec![0.0], vec![1500.0], 0.2, 1000.0).unwrap();
        assert_eq!(compute_gain(&p).unwrap().get(0.0), Some(&1.5));
        let p = AngularPattern::new(vec![0.0], vec![1500.0], 0.2, 0.0).unwrap();
        assert!(compute_gain(&p).is_err());
    }

    #[test]
    fn pattern_validation() {
        assert!(AngularPattern::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.2, 1.0).is_err());
        assert!(AngularPattern::new(vec![10.0, 0.0], vec![1.0, 1.0], 0.2, 1.0).is_err());
        assert!(AngularPattern::new(vec![0.0, 190.0], vec![1.0, 1.0], 0.2, 1.0).is_err());
        assert!(AngularPattern::new(vec![0.0], vec![-1.0], 0.2, 1.0).is_err());
        assert!(AngularPattern::new(vec![0.0], vec![f64::NAN], 0.2, 1.0).is_err());
        assert!(AngularPattern::new(vec![0.0], vec![1.0, 2.0], 0.2, 1.0).is_err());
    }

    #[test]
    fn peak_time_examples() {
        let h = hist(vec![0, 0, 7, 0, 0], 0.1, 10);
        assert!((compute_peak_time(&h, 1).unwrap() - 0.25).abs() < 1e-12);
        let h = hist(vec![0, 4, 0, 4, 0], 0.1, 10);
        assert!((compute_peak_time(&h, 1).unwrap() - 0.15).abs() < 1e-12);
        let h = hist(vec![0, 0, 0], 0.1, 10);
        assert!(compute_peak_time(&h, 1).is_err());
        let h = hist(vec![1, 0, 0], 0.1, 10);
        assert!(compute_peak_time(&h, 2).is_err());
        assert!(compute_peak_time(&h, 0).is_err());
    }

    #[test]
    fn smoothing_truncates_at_edges() {
        assert_eq!(smooth(&[3, 0, 0, 6], 3), vec![1.5, 1.0, 2.0, 3.0]);
        assert_eq!(smooth(&[3, 0, 0, 6], 1), vec![3.0, 0.0, 0.0, 6.0]);
    }

    #[test]
    fn smoothing_suppresses_isolated_spikes() {
        let mut counts = vec![0u64; 40];
        for (i, c) in counts.iter_mut().enumerate().take(30).skip(10) {
            *c = 10 + (i as u64 % 3);
        }
        counts[2] = 15;
        let h = hist(counts, 0.01, 1000);
        assert!(compute_peak_time(&h, 1).unwrap() < 0.05);
        assert!(compute_peak_time(&h, 11).unwrap() > 0.1);
    }

    #[test]
    fn peak_spread_is_zero_for_a_dominant_peak() {
        let h = hist(vec![0, 1, 100_000, 1, 0], 0.1, 200_000);
        assert_eq!(peak_time_spread(&h, 1, 20, 3).unwrap(), 0.0);
        let h = hist(vec![50, 50, 50, 50, 50], 0.1, 1000);
        assert!(peak_time_spread(&h, 1, 50, 3).unwrap() > 0.0);
    }

    #[test]
    fn format_angles() {
        assert_eq!(format_angle(0.0), "0");
        assert_eq!(format_angle(10.0), "10");
        assert_eq!(format_angle(12.5), "12.5");
        assert_eq!(format_angle(-0.0), "0");
    }

    #[test]
    fn angle_series_json_round_trip() {
        let s = AngleSeries(vec![(0.0, 1.5), (12.5, 0.25)]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"0":1.5,"12.5":0.25}"#);
        let back: AngleSeries<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
