use std::path::Path;
use std::process::{Command, Output};

use mcvd_cli::output::read_histograms;
use mcvd_cli::Summary;

fn mcvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcvd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const TINY: &str = r#"
name = "tiny"
d = [2.0]
r_tx = [0.0, 5.0]
t_s = [0.2]
N = 300
D = 100.0
r_rx = 5.0
seed = 11
angles_deg = [0.0, 90.0, 180.0]
"#;

fn write_spec(dir: &Path, text: &str) -> String {
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn error_kind(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("error record");
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn run_writes_csvs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), TINY);
    let out = dir.path().join("out");
    let res = mcvd(&["run", &spec, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let hist = std::fs::read_to_string(out.join("histograms/hist_d2_rtx5.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("angle_deg,bin_start_s,bin_end_s,count"));
    // 1000 bins for each of 3 angles
    assert_eq!(hist.lines().count(), 1 + 3 * 1000);
    let pattern = std::fs::read_to_string(out.join("patterns/pattern_d2_rtx5.csv")).unwrap();
    assert_eq!(pattern.lines().next(), Some("angle_deg,counts_at_ts,gain,peak_time_s"));
    assert_eq!(pattern.lines().count(), 4);

    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.config.placement_convention, "transmitter-center");
    assert_eq!(summary.config.smoothing_window, 11);
    assert_eq!(summary.metrics.len(), 2);
    let sphere = summary.metrics.iter().find(|m| m.r_tx == 5.0).unwrap();
    let m = sphere.metrics.as_ref().unwrap();
    assert_eq!(m.gain_by_angle.len(), 3);
    assert!(m.gain_by_angle.get(0.0).unwrap() > m.gain_by_angle.get(180.0).unwrap());
    assert!(summary.validation.passed);
    assert_eq!(summary.validation.point_source.len(), 1);

    let back = read_histograms(&out.join("histograms/hist_d2_rtx5.csv"), 300).unwrap();
    let total: u64 = back.iter().map(|(_, h)| h.total_absorbed()).sum();
    assert!(total > 0);

    // raw summary carries the flattened metric keys the plotting scripts read
    let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for key in ["hppw_deg", "gain_by_angle", "peak_time_by_angle"] {
        assert!(raw["metrics"][0].get(key).is_some(), "missing {key}");
    }
    assert!(raw["config"]["spec"]["pivot"].is_string());
    assert!(raw["version"].as_str().unwrap().starts_with("mcvd "));
}

#[test]
fn same_seed_gives_identical_outputs_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(mcvd(&["run", &spec, "--out", a.to_str().unwrap(), "--threads", "1"]).status.success());
    assert!(mcvd(&["run", &spec, "--out", b.to_str().unwrap(), "--threads", "4"]).status.success());
    for f in ["histograms/hist_d2_rtx0.csv", "histograms/hist_d2_rtx5.csv", "patterns/pattern_d2_rtx5.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    assert!(mcvd(&["run", &spec, "--out", c.to_str().unwrap(), "--seed", "12"]).status.success());
    assert_ne!(
        std::fs::read(a.join("histograms/hist_d2_rtx5.csv")).unwrap(),
        std::fs::read(c.join("histograms/hist_d2_rtx5.csv")).unwrap()
    );
}

#[test]
fn metrics_subcommand_reproduces_run_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), TINY);
    let out = dir.path().join("out");
    assert!(mcvd(&["run", &spec, "--out", out.to_str().unwrap()]).status.success());
    let res = mcvd(&["metrics", out.to_str().unwrap(), "--format", "json"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let recomputed: Vec<mcvd_cli::GridResult> = serde_json::from_slice(&res.stdout).unwrap();
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for (a, b) in recomputed.iter().zip(&summary.metrics) {
        let (ma, mb) = (a.metrics.as_ref().unwrap(), b.metrics.as_ref().unwrap());
        assert_eq!(ma.hppw_deg, mb.hppw_deg);
        for ((_, x), (_, y)) in ma.gain_by_angle.iter().zip(mb.gain_by_angle.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(ma.peak_time_by_angle, mb.peak_time_by_angle);
    }

    let csv = mcvd(&["metrics", out.to_str().unwrap()]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("d,r_tx,angle_deg,counts_at_ts,gain,peak_time_s"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &format!("{TINY}\nbogus_key = 1\n"));
    let res = mcvd(&["run", &spec, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_kind(&res), "config");

    let spec = write_spec(dir.path(), &TINY.replace("t_s = [0.2]", "t_s = [9.0]"));
    let res = mcvd(&["run", &spec, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));

    let res = mcvd(&["run", "--preset", "fig9"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let res = mcvd(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
    assert_eq!(error_kind(&res), "io");
    let res = mcvd(&["metrics", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn empty_grid_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &TINY.replace("d = [2.0]", "d = []"));
    let out = dir.path().join("out");
    let res = mcvd(&["run", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary.metrics.is_empty());
}

#[test]
fn validate_passes_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = mcvd(&["validate", "--d", "2", "--N", "3000", "--out", dir.path().to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("t_s,empirical,analytic,bound,passed"));
    assert_eq!(text.lines().count(), 21);
    assert!(dir.path().join("validation.json").exists());

    // analytic curve with the wrong diffusion coefficient must be rejected
    let bad = mcvd(&["validate", "--d", "2", "-N", "3000", "--analytic-diffusion", "150"]);
    assert_eq!(bad.status.code(), Some(3));
    assert_eq!(error_kind(&bad), "validation");
}

#[test]
fn preset_prints_parseable_toml() {
    let res = mcvd(&["preset", "fig5"]);
    assert!(res.status.success());
    let spec = mcvd_cli::ExperimentSpec::from_toml(&String::from_utf8(res.stdout).unwrap()).unwrap();
    assert_eq!(spec, mcvd_cli::ExperimentSpec::preset("fig5").unwrap());
}
