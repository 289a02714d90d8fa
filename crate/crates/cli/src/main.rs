use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mcvd_core::metrics::format_angle;
use mcvd_core::AbsorptionRule;
use mcvd_cli::run::{GridResult, SUMMARY_FILE};
use mcvd_cli::spec::PRESETS;
use mcvd_cli::{
    metrics_from_dir, run_experiment, validate_point_source, CliError, ExperimentSpec, PointSourceCheck,
    ReferenceSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "mcvd", version, about = "Brownian-dynamics experiments for molecular communication via diffusion")]
struct Cli {
    /// Base RNG seed (overrides the spec).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time step in seconds (overrides the spec).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Format of the report printed to stdout.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment grid from a spec file or a preset.
    Run {
        /// TOML experiment spec.
        #[arg(conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        /// One of fig3, fig4 (peak), fig5 (hppw), fig6 (gain).
        #[arg(long)]
        preset: Option<String>,
        /// Molecule count (overrides the spec).
        #[arg(long = "molecules", short = 'N', visible_alias = "N")]
        molecules: Option<u64>,
        /// Normalize the gain by a simulated point source instead of the closed form.
        #[arg(long)]
        simulated_reference: bool,
    },
    /// Check a simulated point source against the closed-form channel.
    Validate {
        #[arg(long, default_value_t = 2.0)]
        d: f64,
        #[arg(long = "molecules", short = 'N', visible_alias = "N", default_value_t = 40_000)]
        molecules: u64,
        #[arg(long = "diffusion", default_value_t = 100.0)]
        diffusion: f64,
        /// Diffusion coefficient for the analytic curve; set it wrong to
        /// confirm the check can fail.
        #[arg(long)]
        analytic_diffusion: Option<f64>,
        #[arg(long, default_value_t = 5.0)]
        r_rx: f64,
        /// Defaults to d² · 0.1 s.
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 20)]
        checkpoints: usize,
        #[arg(long, default_value = "brownian-bridge")]
        absorption: AbsorptionRule,
    },
    /// Recompute pattern metrics from the outputs of an earlier run.
    Metrics {
        /// Directory holding summary.json and the histogram CSVs.
        dir: PathBuf,
        #[arg(long)]
        t_s: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Print a preset as a TOML spec.
    Preset { name: String },
}

fn stdout_line(s: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{s}").map_err(|e| CliError::io("<stdout>", e))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    stdout_line(&serde_json::to_string_pretty(value).expect("serializable"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn print_grid_csv(results: &[GridResult]) -> Result<(), CliError> {
    stdout_line("d,r_tx,hppw_deg,hppw_sigma_deg,status")?;
    for r in results {
        let status = if r.ok() { "ok" } else { "failed" };
        let (hppw, sigma) = r.metrics.as_ref().map(|m| (Some(m.hppw_deg), m.hppw_sigma_deg)).unwrap_or_default();
        stdout_line(&format!("{},{},{},{},{status}", r.d, r.r_tx, opt(hppw), opt(sigma)))?;
    }
    Ok(())
}

fn cmd_run(
    cli: &Cli,
    spec_path: Option<&Path>,
    preset: Option<&str>,
    molecules: Option<u64>,
    simulated_reference: bool,
) -> Result<(), CliError> {
    let mut spec = match (spec_path, preset) {
        (_, Some(name)) => ExperimentSpec::preset(name)?,
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentSpec::from_toml(&text)?
        }
        (None, None) => return Err(CliError::Config("give a spec file or --preset".into())),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(dt) = cli.dt {
        spec.dt = dt;
    }
    if let Some(n) = molecules {
        spec.molecules = n;
    }
    if simulated_reference {
        spec.reference = ReferenceSource::Simulated;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
    let summary = run_experiment(&spec, &out)?;
    log::info!("wrote {}", out.join(SUMMARY_FILE).display());
    match cli.format {
        Format::Json => print_json(&summary)?,
        Format::Csv => print_grid_csv(&summary.metrics)?,
    }
    if summary.validation.passed {
        Ok(())
    } else {
        Err(CliError::Validation(summary.validation.failures.join("; ")))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_validate(
    cli: &Cli,
    d: f64,
    molecules: u64,
    diffusion: f64,
    analytic_diffusion: Option<f64>,
    r_rx: f64,
    t_end: Option<f64>,
    checkpoints: usize,
    absorption: AbsorptionRule,
) -> Result<(), CliError> {
    let mut check = PointSourceCheck::new(d);
    check.molecules = molecules;
    check.diffusion = diffusion;
    check.analytic_diffusion = analytic_diffusion.unwrap_or(diffusion);
    check.r_rx = r_rx;
    check.checkpoints = checkpoints;
    check.absorption = absorption;
    if let Some(t) = t_end {
        check.t_end = t;
    }
    if let Some(seed) = cli.seed {
        check.seed = seed;
    }
    if let Some(dt) = cli.dt {
        check.dt = dt;
    }
    let report = validate_point_source(check)?;
    if let Some(dir) = &cli.out {
        mcvd_cli::output::write_json(&dir.join("validation.json"), &report)?;
    }
    match cli.format {
        Format::Json => print_json(&report)?,
        Format::Csv => {
            stdout_line("t_s,empirical,analytic,bound,passed")?;
            for c in &report.checkpoints {
                stdout_line(&format!("{},{},{},{},{}", c.t_s, c.empirical, c.analytic, c.bound, c.passed))?;
            }
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "point source exceeds the 4-sigma bound (worst {:.2}x, max deviation {:.5})",
            report.worst_ratio, report.max_abs_deviation
        )))
    }
}

fn cmd_metrics(cli: &Cli, dir: &Path, t_s: Option<f64>, window: Option<usize>) -> Result<(), CliError> {
    let results = metrics_from_dir(dir, t_s, window)?;
    match cli.format {
        Format::Json => print_json(&results)?,
        Format::Csv => {
            stdout_line("d,r_tx,angle_deg,counts_at_ts,gain,peak_time_s")?;
            for r in &results {
                let Some(m) = &r.metrics else { continue };
                for (angle, counts) in m.counts_at_ts.iter() {
                    let gain = m.gain_by_angle.get(*angle).copied();
                    let peak = m.peak_time_by_angle.get(*angle).copied().flatten();
                    stdout_line(&format!(
                        "{},{},{},{counts},{},{}",
                        r.d,
                        r.r_tx,
                        format_angle(*angle),
                        opt(gain),
                        opt(peak)
                    ))?;
                }
            }
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Run { spec, preset, molecules, simulated_reference } => {
            cmd_run(cli, spec.as_deref(), preset.as_deref(), *molecules, *simulated_reference)
        }
        Command::Validate { d, molecules, diffusion, analytic_diffusion, r_rx, t_end, checkpoints, absorption } => {
            cmd_validate(cli, *d, *molecules, *diffusion, *analytic_diffusion, *r_rx, *t_end, *checkpoints, *absorption)
        }
        Command::Metrics { dir, t_s, window } => cmd_metrics(cli, dir, *t_s, *window),
        Command::Preset { name } => {
            let spec = ExperimentSpec::preset(name).map_err(|_| {
                CliError::Config(format!("unknown preset {name:?}; available: {}", PRESETS.join(", ")))
            })?;
            stdout_line(spec.to_toml().trim_end())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
