//! On-disk formats shared with the plotting scripts.
//!
//! Histogram CSV, one file per (d, r_tx), every bin of every angle:
//! `angle_deg,bin_start_s,bin_end_s,count`, sorted by angle then bin.
//! Bin `i` covers `(bin_start_s, bin_end_s]`.
//!
//! Pattern CSV, one file per (d, r_tx):
//! `angle_deg,counts_at_ts,gain,peak_time_s`. An empty `peak_time_s` means
//! nothing was absorbed at that angle.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mcvd_core::metrics::format_angle;
use mcvd_core::{HittingHistogram, PatternMetrics};

use crate::error::CliError;

pub const HISTOGRAM_HEADER: [&str; 4] = ["angle_deg", "bin_start_s", "bin_end_s", "count"];
pub const PATTERN_HEADER: [&str; 4] = ["angle_deg", "counts_at_ts", "gain", "peak_time_s"];

pub fn histogram_file_name(d: f64, r_tx: f64) -> String {
    format!("hist_d{}_rtx{}.csv", format_angle(d), format_angle(r_tx))
}

pub fn pattern_file_name(d: f64, r_tx: f64) -> String {
    format!("pattern_d{}_rtx{}.csv", format_angle(d), format_angle(r_tx))
}

/// Bin edges are `i · w`; rounding to 1e-12 s keeps `0.1 * 3` printing as 0.3.
fn edge(i: usize, bin_width: f64) -> f64 {
    (i as f64 * bin_width * 1e12).round() / 1e12
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, format!("{other:?}")),
    }
}

pub fn write_histograms(path: &Path, histograms: &[(f64, &HittingHistogram)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(HISTOGRAM_HEADER).map_err(|e| csv_error(path, e))?;
    let mut sorted = histograms.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (angle, h) in sorted {
        let angle = format_angle(angle);
        for (i, count) in h.counts().iter().enumerate() {
            w.write_record([
                angle.clone(),
                edge(i, h.bin_width()).to_string(),
                edge(i + 1, h.bin_width()).to_string(),
                count.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a histogram CSV back into per-angle histograms, sorted by angle.
pub fn read_histograms(path: &Path, total_emitted: u64) -> Result<Vec<(f64, HittingHistogram)>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != HISTOGRAM_HEADER {
        return Err(CliError::format(path, format!("unexpected header {header:?}")));
    }
    // (angle, first bin start, bin width, counts)
    let mut groups: Vec<(f64, f64, Vec<u64>)> = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| CliError::format(path, format!("row {}: bad {what}", line + 2));
        let field = |i: usize| record.get(i).unwrap_or("");
        let angle: f64 = field(0).parse().map_err(|_| bad("angle_deg"))?;
        let start: f64 = field(1).parse().map_err(|_| bad("bin_start_s"))?;
        let end: f64 = field(2).parse().map_err(|_| bad("bin_end_s"))?;
        let count: u64 = field(3).parse().map_err(|_| bad("count"))?;
        if !(end > start) {
            return Err(bad("bin edges"));
        }
        match groups.last_mut() {
            Some((a, w, counts)) if *a == angle => {
                let expected = edge(counts.len(), *w);
                if (start - expected).abs() > 1e-9 * w.max(1.0) {
                    return Err(CliError::format(path, format!("row {}: bins are not contiguous", line + 2)));
                }
                counts.push(count);
            }
            Some((a, _, _)) if *a > angle => {
                return Err(CliError::format(path, format!("row {}: angles out of order", line + 2)));
            }
            _ => {
                if start != 0.0 {
                    return Err(CliError::format(path, format!("row {}: first bin must start at 0", line + 2)));
                }
                groups.push((angle, end - start, vec![count]));
            }
        }
    }
    let digest = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    groups
        .into_iter()
        .map(|(angle, w, counts)| {
            HittingHistogram::from_counts(w, counts, total_emitted, digest.clone())
                .map(|h| (angle, h))
                .map_err(|e| CliError::format(path, e))
        })
        .collect()
}

pub fn write_pattern(path: &Path, metrics: &PatternMetrics) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(PATTERN_HEADER).map_err(|e| csv_error(path, e))?;
    for (angle, counts) in metrics.counts_at_ts.iter() {
        let gain = metrics.gain_by_angle.get(*angle).copied().unwrap_or(f64::NAN);
        let peak = metrics
            .peak_time_by_angle
            .get(*angle)
            .copied()
            .flatten()
            .map(|t| t.to_string())
            .unwrap_or_default();
        w.write_record([format_angle(*angle), counts.to_string(), gain.to_string(), peak])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| CliError::format(path, e))
}
