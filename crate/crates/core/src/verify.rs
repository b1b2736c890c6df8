//! Self-checks run by `bbconv verify`: the lossless conversion-ratio sweep,
//! RK4 against the exact propagator, and the steady-state balances.

use std::fmt::Write as _;

use crate::analysis::{balance_check, ideal_ratio, BALANCE_TOLERANCE};
use crate::control::ControllerSpec;
use crate::converter::{active_affine, phase_dynamics, PhaseTopology, StateVector};
use crate::error::Result;
use crate::scenario::{preset, preset_params, Mode};
use crate::sim::{self, Integrator, SimConfig, Stepper, Trace};

pub const SWEEP_DUTIES: [f64; 3] = [0.25, 0.5, 0.75];
pub const SWEEP_PERIODS: u32 = 2000;
pub const SWEEP_WINDOW_PERIODS: u32 = 20;
pub const SWEEP_TOLERANCE: f64 = 0.01;
pub const INTEGRATOR_PERIODS: u32 = 1000;
pub const INTEGRATOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyCheck {
    fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        PropertyCheck {
            name: name.into(),
            residual,
            tolerance,
            passed: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<PropertyCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn table(&self) -> String {
        let width = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(5)
            .max(8);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>12}  {:>10}  status",
            "property", "residual", "tolerance"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.3e}  {:>10.1e}  {}",
                c.name,
                c.residual,
                c.tolerance,
                if c.passed { "ok" } else { "FAIL" }
            );
        }
        out
    }
}

/// Mean `v_out/vin` over the last 20 of 2000 periods of the lossless boost
/// stage at duty `d`.
pub fn lossless_ratio(d: f64, step: Option<&Stepper>) -> Result<f64> {
    let params = preset_params(Mode::Boost, false).lossless();
    let period = params.period();
    let sim = SimConfig {
        record_decimation: 4,
        ..SimConfig::new(SWEEP_PERIODS as f64 * period)
    };
    let ctrl = ControllerSpec::open_loop(d);
    let trace = match step {
        Some(step) => sim::run_with_stepper(&params, &ctrl, &sim, &[], step)?,
        None => sim::run(&params, &ctrl, &sim, &[])?,
    };
    Ok(trace.tail_mean(SWEEP_WINDOW_PERIODS as f64 * period, |s| s.v_out) / params.vin)
}

/// Largest per-component deviation between two traces on the same time grid,
/// relative to the component's peak magnitude in `reference`.
pub fn max_relative_state_error(candidate: &Trace, reference: &Trace) -> f64 {
    let peak_i = reference
        .samples
        .iter()
        .map(|s| s.i_l.abs())
        .fold(0.0, f64::max);
    let peak_v = reference
        .samples
        .iter()
        .map(|s| s.v_c.abs())
        .fold(0.0, f64::max);
    if candidate.len() != reference.len() {
        return f64::INFINITY;
    }
    candidate
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(a, b)| {
            let ei = (a.i_l - b.i_l).abs() / peak_i.max(f64::MIN_POSITIVE);
            let ev = (a.v_c - b.v_c).abs() / peak_v.max(f64::MIN_POSITIVE);
            ei.max(ev)
        })
        .fold(0.0, f64::max)
}

/// RK4 (or `step`) against the exact propagator over 1000 periods of the
/// open-loop boost preset.
pub fn integrator_agreement(step: Option<&Stepper>) -> Result<f64> {
    let s = preset("boost-open")?;
    let sim = SimConfig {
        record_decimation: 1,
        ..SimConfig::new(INTEGRATOR_PERIODS as f64 * s.params.period())
    };
    let exact = sim::run(
        &s.params,
        &s.controller,
        &SimConfig {
            integrator: Integrator::Exact,
            ..sim
        },
        &[],
    )?;
    let rk4 = match step {
        Some(step) => sim::run_with_stepper(&s.params, &s.controller, &sim, &[], step)?,
        None => sim::run(&s.params, &s.controller, &sim, &[])?,
    };
    Ok(max_relative_state_error(&rk4, &exact))
}

fn affine_consistency() -> f64 {
    let mut worst: f64 = 0.0;
    for (mode, analog) in [
        (Mode::Boost, false),
        (Mode::Boost, true),
        (Mode::Buck, false),
        (Mode::Buck, true),
    ] {
        let p = preset_params(mode, analog);
        for phase in [PhaseTopology::On, PhaseTopology::Off, PhaseTopology::Dead] {
            for x in [
                StateVector::new(0.3, 2.0),
                StateVector::new(1.7, 3.3),
                StateVector::new(0.0, 0.5),
            ] {
                let f = phase_dynamics(&p, phase, x);
                let g = active_affine(&p, phase, x).eval(x);
                let scale = f.0.abs().max(f.1.abs()).max(1.0);
                worst = worst
                    .max((f.0 - g.0).abs() / scale)
                    .max((f.1 - g.1).abs() / scale);
            }
        }
    }
    worst
}

/// Runs every property with the configured integrators, or with `step`
/// standing in for RK4 (used to confirm that a broken propagator is caught).
pub fn run_checks(step: Option<&Stepper>) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    for d in SWEEP_DUTIES {
        let ratio = lossless_ratio(d, step)?;
        let ideal = ideal_ratio(d);
        report.checks.push(PropertyCheck::new(
            format!("lossless ratio d={d}"),
            (ratio - ideal).abs() / ideal,
            SWEEP_TOLERANCE,
        ));
    }
    report.checks.push(PropertyCheck::new(
        "rk4 vs exact (1000 periods)",
        integrator_agreement(step)?,
        INTEGRATOR_TOLERANCE,
    ));
    for name in ["boost-open", "buck-open"] {
        let s = preset(name)?;
        let sim = SimConfig {
            record_decimation: 1,
            ..s.sim
        };
        let trace = match step {
            Some(step) => sim::run_with_stepper(&s.params, &s.controller, &sim, &[], step)?,
            None => sim::run(&s.params, &s.controller, &sim, &[])?,
        };
        let b = balance_check(&trace, &s.params)?;
        report.checks.push(PropertyCheck::new(
            format!("{name} volt-second"),
            b.volt_seconds_norm,
            BALANCE_TOLERANCE,
        ));
        report.checks.push(PropertyCheck::new(
            format!("{name} charge"),
            b.charge_norm,
            BALANCE_TOLERANCE,
        ));
    }
    report.checks.push(PropertyCheck::new(
        "affine form vs dynamics",
        affine_consistency(),
        1e-12,
    ));
    Ok(report)
}

/// RK4 with the input vector scaled by 0.9: a deliberately wrong propagator.
pub fn corrupted_rk4(sys: &crate::converter::AffineSystem, x: StateVector, dt: f64) -> StateVector {
    let broken = crate::converter::AffineSystem {
        a: sys.a,
        b: [0.9 * sys.b[0], 0.9 * sys.b[1]],
    };
    sim::rk4_step(&broken, x, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_build_passes() {
        let r = run_checks(None).unwrap();
        assert!(r.all_passed(), "{}", r.table());
        assert!(r.table().contains("d=0.75"));
    }

    #[test]
    fn corrupted_integrator_is_caught() {
        let r = run_checks(Some(&corrupted_rk4)).unwrap();
        assert!(!r.all_passed(), "{}", r.table());
        assert!(r.failures().any(|c| c.name.starts_with("rk4 vs exact")));
    }
}
