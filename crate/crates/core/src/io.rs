//! Trace files and metric summaries.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use serde::Serialize;

use crate::analysis::{balance_check, transient_metrics, BalanceCheck, TransientMetrics};
use crate::converter::PhaseTopology;
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sim::{Sample, Trace};

pub const CSV_HEADER: &str = "t,i_l,v_c,v_out,duty,phase";

/// Writes `trace` as CSV. Floats use Rust's shortest round-trip formatting,
/// so identical traces always produce identical bytes.
pub fn write_trace_csv<W: Write>(trace: &Trace, mut out: W) -> io::Result<()> {
    let mut line = String::with_capacity(96);
    writeln!(out, "{CSV_HEADER}")?;
    for s in &trace.samples {
        line.clear();
        let _ = write!(
            line,
            "{},{},{},{},{},{}",
            s.t, s.i_l, s.v_c, s.v_out, s.duty, s.phase
        );
        writeln!(out, "{line}")?;
    }
    out.flush()
}

pub fn trace_to_csv(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn parse_phase(s: &str) -> Option<PhaseTopology> {
    match s {
        "ON" => Some(PhaseTopology::On),
        "OFF" => Some(PhaseTopology::Off),
        "DEAD" => Some(PhaseTopology::Dead),
        _ => None,
    }
}

/// Reads a trace written by [`write_trace_csv`].
pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Trace> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::Config(e.to_string()))?
        .unwrap_or_default();
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Config(format!("unexpected trace header {header:?}")));
    }
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Config(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("malformed trace row {}", row + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        samples.push(Sample {
            t: num(0)?,
            i_l: num(1)?,
            v_c: num(2)?,
            v_out: num(3)?,
            duty: num(4)?,
            phase: parse_phase(f[5]).ok_or_else(bad)?,
        });
    }
    Ok(Trace { samples })
}

/// Metrics written beside a single-run trace.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub controller: crate::control::ControllerKind,
    /// Rows in the written trace.
    pub trace_rows: usize,
    pub t_end: f64,
    pub v_ref: f64,
    pub final_duty: f64,
    pub final_i_l: f64,
    pub transient: Option<TransientMetrics>,
    /// `None` when the run is shorter than one full period.
    pub balance: Option<BalanceCheck>,
}

impl RunSummary {
    /// `trace` should be the full-rate trace; `trace_rows` is the length of
    /// the decimated trace actually written.
    pub fn new(scenario: &Scenario, trace: &Trace, trace_rows: usize) -> Self {
        let period = scenario.params.period();
        let window = crate::analysis::FINAL_WINDOW_PERIODS * period;
        RunSummary {
            name: scenario.name.clone(),
            controller: scenario.controller.kind(),
            trace_rows,
            t_end: trace.last().map_or(0.0, |s| s.t),
            v_ref: scenario.controller.v_ref,
            final_duty: trace.last().map_or(f64::NAN, |s| s.duty),
            final_i_l: trace.tail_mean(window, |s| s.i_l),
            transient: transient_metrics(trace, scenario.controller.v_ref, period).ok(),
            balance: balance_check(trace, &scenario.final_params()).ok(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, phase: PhaseTopology) -> Sample {
        Sample {
            t,
            i_l: 0.1 + t,
            v_c: 1.0 / 3.0,
            v_out: 2.5e-7,
            duty: 0.566406,
            phase,
        }
    }

    #[test]
    fn header_and_row_count() {
        let trace = Trace {
            samples: vec![
                sample(0.0, PhaseTopology::On),
                sample(1e-9, PhaseTopology::Dead),
                sample(2e-9, PhaseTopology::Off),
            ],
        };
        let csv = trace_to_csv(&trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[2].ends_with(",DEAD"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let trace = Trace {
            samples: (0..50)
                .map(|k| sample(k as f64 * 2e-8 / 64.0, PhaseTopology::Off))
                .collect(),
        };
        let back = read_trace_csv(trace_to_csv(&trace).as_bytes()).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_trace_csv("time,x\n".as_bytes()).is_err());
    }
}
