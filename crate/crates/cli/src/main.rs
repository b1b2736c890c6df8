use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bbconv::config::{scenario_to_toml, ConfigDocument};
use bbconv::io::{write_trace_csv, RunSummary};
use bbconv::scenario::{build_report, parse_names, preset, run_scenarios, suite_scenarios};
use bbconv::sim::Stepper;
use bbconv::{verify, Error, Integrator, Trace};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bbconv", version, about = "Buck-boost converter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a TOML configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV path; the metric summary goes to the same path with a
        /// `.metrics.json` extension.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_integrator)]
        integrator: Option<Integrator>,
        #[arg(long)]
        steps_per_period: Option<u32>,
    },
    /// Run preset scenarios and write their traces plus a comparison report.
    Suite {
        /// Comma-separated preset names, or `all`.
        names: String,
        /// Add supply- and load-step variants of the closed-loop presets and
        /// the matched-component comparison.
        #[arg(long)]
        step_tests: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in property checks and print their residuals.
    Verify {
        /// Substitute a deliberately wrong propagator (negative control).
        #[arg(long, hide = true)]
        corrupt_integrator: bool,
    },
    /// Print the configuration of a preset.
    Preset { name: String },
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for a failure: 2 when the simulation itself failed, 1 for
/// everything caught before or around it.
fn failure_code(err: &Error) -> u8 {
    match err.root() {
        Error::UnrealizableDuty { .. } | Error::Divergence { .. } => 2,
        _ => 1,
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(failure_code(err))
}

fn io_fail(path: &Path, err: std::io::Error) -> ExitCode {
    eprintln!("error: {}: {err}", path.display());
    ExitCode::from(1)
}

fn write_csv(path: &Path, trace: &Trace) -> std::io::Result<()> {
    write_trace_csv(trace, BufWriter::new(File::create(path)?))
}

fn simulate(
    config: &Path,
    out: &Path,
    integrator: Option<Integrator>,
    steps_per_period: Option<u32>,
) -> ExitCode {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => return io_fail(config, e),
    };
    let mut scenario = match ConfigDocument::parse(&text).and_then(|doc| {
        let mut s = doc.to_scenario()?;
        if doc.name.is_none() {
            if let Some(stem) = config.file_stem() {
                s.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(s)
    }) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    if let Some(i) = integrator {
        scenario.sim.integrator = i;
    }
    if let Some(n) = steps_per_period {
        scenario.sim.steps_per_period = n;
    }
    if let Err(e) = scenario.validate() {
        return fail(&e);
    }
    let full = match scenario.run_full_rate() {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let trace = full.decimate(scenario.sim.record_decimation);
    let summary = RunSummary::new(&scenario, &full, trace.len());
    if let Err(e) = write_csv(out, &trace) {
        return io_fail(out, e);
    }
    let summary_path = out.with_extension("metrics.json");
    if let Err(e) = fs::write(&summary_path, summary.to_json() + "\n") {
        return io_fail(&summary_path, e);
    }
    println!(
        "{}: {} samples -> {}",
        scenario.name,
        trace.len(),
        out.display()
    );
    ExitCode::SUCCESS
}

fn suite(names: &str, step_tests: bool, out: &Path) -> ExitCode {
    let scenarios = match parse_names(names).and_then(|n| suite_scenarios(&n, step_tests)) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    if let Err(e) = fs::create_dir_all(out) {
        return io_fail(out, e);
    }
    let outcomes = match run_scenarios(&scenarios) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    for o in &outcomes {
        let path = out.join(format!("{}.csv", o.scenario.name));
        if let Err(e) = write_csv(&path, &o.trace) {
            return io_fail(&path, e);
        }
    }
    let report = match build_report(&outcomes, step_tests) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let report_path = out.join("report.json");
    if let Err(e) = fs::write(&report_path, report.to_json() + "\n") {
        return io_fail(&report_path, e);
    }

    let mut stdout = std::io::stdout().lock();
    for row in report.rows.iter().chain(&report.matched_rows) {
        let _ = writeln!(
            stdout,
            "{:<34} {:>8.4} V  settle {:>10}  overshoot {:>6.2}%  {}",
            row.name,
            row.metrics.final_mean,
            row.metrics
                .settling_time
                .seconds()
                .map_or("unsettled".to_string(), |s| format!("{s:.3e}s")),
            row.metrics.overshoot_pct,
            if row.passed() { "pass" } else { "FAIL" }
        );
    }
    for d in &report.matched {
        let _ = writeln!(
            stdout,
            "matched {:?}/{:?}: settling delta {}, overshoot delta {:+.2} pp, digital not slower: {}",
            d.mode,
            d.step.expect("matched pairs are step tests"),
            d.settling_delta.map_or("n/a".to_string(), |s| format!("{s:+.3e}s")),
            d.overshoot_delta_pct,
            d.digital_not_slower
        );
    }
    let _ = writeln!(stdout, "report: {}", report_path.display());
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        for row in report.rows.iter().filter(|r| !r.passed()) {
            eprintln!("failed: {}", row.name);
        }
        for d in report.matched.iter().filter(|d| !d.digital_not_slower) {
            eprintln!("failed: {} settles later than {}", d.digital, d.analog);
        }
        ExitCode::from(1)
    }
}

fn run_verify(corrupt: bool) -> ExitCode {
    let step: Option<&Stepper> = if corrupt {
        Some(&verify::corrupted_rk4)
    } else {
        None
    };
    match verify::run_checks(step) {
        Ok(report) => {
            print!("{}", report.table());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                for c in report.failures() {
                    eprintln!("failed: {}", c.name);
                }
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            out,
            integrator,
            steps_per_period,
        } => simulate(&config, &out, integrator, steps_per_period),
        Command::Suite {
            names,
            step_tests,
            out,
        } => suite(&names, step_tests, &out),
        Command::Verify { corrupt_integrator } => run_verify(corrupt_integrator),
        Command::Preset { name } => match preset(&name) {
            Ok(s) => {
                print!("{}", scenario_to_toml(&s));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
