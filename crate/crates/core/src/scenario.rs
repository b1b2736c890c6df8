//! Preset scenarios for the boost and buck operating points, step-test
//! expansion, and the comparison report.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    averaged_steady_state, transient_metrics, TransientMetrics, FINAL_WINDOW_PERIODS,
};
use crate::control::{design_defaults, ControllerKind, ControllerSpec, DEFAULT_V_REF};
use crate::converter::ConverterParams;
use crate::error::{Error, Result};
use crate::sim::{self, EventTarget, SimConfig, StepEvent, Trace};

pub const PRESET_NAMES: [&str; 6] = [
    "boost-open",
    "boost-analog",
    "boost-digital",
    "buck-open",
    "buck-analog",
    "buck-digital",
];

/// Run length of every preset.
pub const PRESET_T_END: f64 = 400e-6;
/// Recording decimation of the presets (four samples per period at 64 steps).
pub const PRESET_DECIMATION: u32 = 16;
/// Regulation band for closed-loop acceptance, as a fraction of `v_ref`.
pub const REGULATION_BAND: f64 = 0.01;
/// Fractional output shift demonstrating that an open loop does not reject a step.
pub const OPEN_LOOP_SHIFT: f64 = 0.05;
/// Load used by the load-step variants.
pub const STEPPED_LOAD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Boost,
    Buck,
}

impl Mode {
    pub fn vin(&self) -> f64 {
        match self {
            Mode::Boost => 2.5,
            Mode::Buck => 5.0,
        }
    }

    /// Input after the supply step: the other end of the 2.5 to 5 V range.
    pub fn stepped_vin(&self) -> f64 {
        match self {
            Mode::Boost => 5.0,
            Mode::Buck => 2.5,
        }
    }
}

/// Component set: the one used with the analog controller, or the one
/// shared by the open-loop and digital presets.
pub fn preset_params(mode: Mode, analog_parts: bool) -> ConverterParams {
    if analog_parts {
        ConverterParams::lumped(mode.vin(), 1e-6, 22e-6, 8e-2, 60e-3, 10.0)
    } else {
        ConverterParams::lumped(mode.vin(), 280e-9, 250e-9, 0.5, 1e-4, 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: ConverterParams,
    pub controller: ControllerSpec,
    pub sim: SimConfig,
    pub events: Vec<StepEvent>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.controller.validate()?;
        self.sim.validate(self.params.f_sw)?;
        for ev in &self.events {
            ev.validate(&self.params)?;
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Trace> {
        sim::run(&self.params, &self.controller, &self.sim, &self.events).map_err(|e| {
            Error::Scenario {
                name: self.name.clone(),
                source: Box::new(e),
            }
        })
    }

    /// Runs with every integration step recorded, ignoring `record_decimation`.
    /// Metrics are computed on this trace; decimation only thins the output.
    pub fn run_full_rate(&self) -> Result<Trace> {
        Scenario {
            sim: SimConfig {
                record_decimation: 1,
                ..self.sim
            },
            ..self.clone()
        }
        .run()
    }

    /// Parameters in force after every event has fired.
    pub fn final_params(&self) -> ConverterParams {
        let mut p = self.params;
        for ev in &self.events {
            ev.apply(&mut p);
        }
        p
    }

    /// Time of the first event, if any.
    pub fn step_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.t)
    }

    pub fn mode(&self) -> Mode {
        if self.params.vin < self.controller.v_ref {
            Mode::Boost
        } else {
            Mode::Buck
        }
    }

    pub fn with_step(&self, kind: StepKind) -> Scenario {
        let t = 0.5 * self.sim.t_end;
        let event = match kind {
            StepKind::Vin => StepEvent {
                t,
                target: EventTarget::Vin,
                new_value: self.mode().stepped_vin(),
            },
            StepKind::Load => StepEvent {
                t,
                target: EventTarget::Rload,
                new_value: STEPPED_LOAD,
            },
        };
        Scenario {
            name: format!("{}+{}", self.name, kind.suffix()),
            events: vec![event],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Vin,
    Load,
}

impl StepKind {
    pub fn suffix(&self) -> &'static str {
        match self {
            StepKind::Vin => "vin-step",
            StepKind::Load => "load-step",
        }
    }
}

/// Scenario for a preset name.
pub fn preset(name: &str) -> Result<Scenario> {
    let (mode_str, ctrl_str) = name
        .split_once('-')
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    let mode = match mode_str {
        "boost" => Mode::Boost,
        "buck" => Mode::Buck,
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    let (kind, analog_parts) = match ctrl_str {
        "open" => (ControllerKind::OpenLoop, false),
        "analog" => (ControllerKind::AnalogType3, true),
        "digital" => (ControllerKind::Digital2p2z, false),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    let params = preset_params(mode, analog_parts);
    let controller = design_defaults(&params, kind, DEFAULT_V_REF)?;
    Ok(Scenario {
        name: name.to_string(),
        params,
        controller,
        sim: SimConfig {
            record_decimation: PRESET_DECIMATION,
            ..SimConfig::new(PRESET_T_END)
        },
        events: Vec::new(),
    })
}

/// Resolves `"all"` or a comma-separated list of preset names.
pub fn parse_names(spec: &str) -> Result<Vec<String>> {
    if spec.trim() == "all" {
        return Ok(PRESET_NAMES.iter().map(|s| s.to_string()).collect());
    }
    let names: Vec<String> = spec
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    for n in &names {
        preset(n)?;
    }
    Ok(names)
}

/// Expands preset names into the scenarios a suite run executes: each preset,
/// plus supply-step and load-step variants of closed-loop presets when
/// `step_tests` is set.
pub fn suite_scenarios(names: &[String], step_tests: bool) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for name in names {
        let base = preset(name)?;
        let closed = base.controller.is_closed_loop();
        out.push(base.clone());
        if step_tests && closed {
            out.push(base.with_step(StepKind::Vin));
            out.push(base.with_step(StepKind::Load));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRow {
    pub name: String,
    pub controller: ControllerKind,
    pub mode: Mode,
    pub step: Option<StepKind>,
    /// Metrics of the window after the step, or of the whole run.
    pub metrics: TransientMetrics,
    pub final_duty: f64,
    pub checks: Vec<Check>,
}

impl ScenarioRow {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Digital-minus-analog differences for the same mode and step.
#[derive(Debug, Clone, Serialize)]
pub struct PairDelta {
    pub mode: Mode,
    pub step: Option<StepKind>,
    pub analog: String,
    pub digital: String,
    /// `None` when either side did not settle.
    pub settling_delta: Option<f64>,
    pub overshoot_delta_pct: f64,
    /// Both controllers ran on identical component values.
    pub matched_components: bool,
    /// Digital settled no later than analog (or analog never settled).
    pub digital_not_slower: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ScenarioRow>,
    pub deltas: Vec<PairDelta>,
    /// Analog and digital default designs on the analog-controller components,
    /// under the same step tests.
    pub matched: Vec<PairDelta>,
    pub matched_rows: Vec<ScenarioRow>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    /// Every preset check passes and, when the matched comparison ran, the
    /// digital design settles no later than the analog one in each pair.
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(ScenarioRow::passed)
            && self.matched.iter().all(|d| d.digital_not_slower)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Result of simulating one scenario.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    pub trace: Trace,
    pub row: ScenarioRow,
}

/// Metrics and pass/fail checks for a finished run.
pub fn evaluate(scenario: &Scenario, trace: &Trace) -> Result<ScenarioRow> {
    let period = scenario.params.period();
    let v_ref = scenario.controller.v_ref;
    let step = scenario.events.first().map(|e| match e.target {
        EventTarget::Vin => StepKind::Vin,
        EventTarget::Rload => StepKind::Load,
    });
    let window = match scenario.step_time() {
        Some(t) => trace.since(t),
        None => trace.clone(),
    };
    let metrics = transient_metrics(&window, v_ref, period)?;
    let final_duty = trace.last().map(|s| s.duty).unwrap_or(f64::NAN);
    let mut checks = Vec::new();
    if scenario.controller.is_closed_loop() {
        let err = metrics.ss_error;
        checks.push(Check {
            name: "regulation".into(),
            value: err / v_ref,
            threshold: REGULATION_BAND,
            passed: err <= REGULATION_BAND * v_ref,
        });
        if step.is_none() {
            let want_boost = scenario.mode() == Mode::Boost;
            checks.push(Check {
                name: if want_boost { "duty>0.5" } else { "duty<0.5" }.into(),
                value: final_duty,
                threshold: 0.5,
                passed: if want_boost {
                    final_duty > 0.5
                } else {
                    final_duty < 0.5
                },
            });
        }
    } else if let Some(t_step) = scenario.step_time() {
        let before = trace.since(t_step - FINAL_WINDOW_PERIODS * period);
        let before = Trace {
            samples: before
                .samples
                .into_iter()
                .filter(|s| s.t <= t_step)
                .collect(),
        };
        let pre = before.tail_mean(FINAL_WINDOW_PERIODS * period, |s| s.v_out);
        let shift = (metrics.final_mean - pre).abs() / pre;
        checks.push(Check {
            name: "open-loop-shift".into(),
            value: shift,
            threshold: OPEN_LOOP_SHIFT,
            passed: shift > OPEN_LOOP_SHIFT,
        });
    } else {
        let predicted = averaged_steady_state(&scenario.params, open_duty(scenario)).v_out_avg;
        let rel = (metrics.final_mean - predicted).abs() / predicted;
        checks.push(Check {
            name: "averaged-model".into(),
            value: rel,
            threshold: 0.02,
            passed: rel <= 0.02,
        });
    }
    Ok(ScenarioRow {
        name: scenario.name.clone(),
        controller: scenario.controller.kind(),
        mode: scenario.mode(),
        step,
        metrics,
        final_duty,
        checks,
    })
}

fn open_duty(s: &Scenario) -> f64 {
    match s.controller.law {
        crate::control::ControlLaw::OpenLoop { d } => d,
        _ => f64::NAN,
    }
}

/// Simulates and evaluates scenarios in parallel; results keep input order.
/// Each outcome carries the trace at the scenario's recording decimation.
pub fn run_scenarios(scenarios: &[Scenario]) -> Result<Vec<Outcome>> {
    scenarios
        .par_iter()
        .map(|s| {
            let full = s.run_full_rate()?;
            let row = evaluate(s, &full).map_err(|e| Error::Scenario {
                name: s.name.clone(),
                source: Box::new(e),
            })?;
            Ok(Outcome {
                scenario: s.clone(),
                trace: full.decimate(s.sim.record_decimation),
                row,
            })
        })
        .collect()
}

/// Analog and digital default designs on the analog-controller components of
/// `mode`, each with the given step applied.
pub fn matched_pair(mode: Mode, step: StepKind) -> Result<[Scenario; 2]> {
    let params = preset_params(mode, true);
    let make = |kind: ControllerKind, tag: &str| -> Result<Scenario> {
        let base = Scenario {
            name: format!("matched-{}-{tag}", mode_name(mode)),
            params,
            controller: design_defaults(&params, kind, DEFAULT_V_REF)?,
            sim: SimConfig {
                record_decimation: PRESET_DECIMATION,
                ..SimConfig::new(PRESET_T_END)
            },
            events: Vec::new(),
        };
        Ok(base.with_step(step))
    };
    Ok([
        make(ControllerKind::AnalogType3, "analog")?,
        make(ControllerKind::Digital2p2z, "digital")?,
    ])
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Boost => "boost",
        Mode::Buck => "buck",
    }
}

fn delta(analog: &ScenarioRow, digital: &ScenarioRow, matched: bool) -> PairDelta {
    let settling_delta = match (
        analog.metrics.settling_time.seconds(),
        digital.metrics.settling_time.seconds(),
    ) {
        (Some(a), Some(d)) => Some(d - a),
        _ => None,
    };
    PairDelta {
        mode: analog.mode,
        step: analog.step,
        analog: analog.name.clone(),
        digital: digital.name.clone(),
        settling_delta,
        overshoot_delta_pct: digital.metrics.overshoot_pct - analog.metrics.overshoot_pct,
        matched_components: matched,
        digital_not_slower: digital_not_slower(analog, digital),
    }
}

fn digital_not_slower(analog: &ScenarioRow, digital: &ScenarioRow) -> bool {
    match (
        analog.metrics.settling_time.seconds(),
        digital.metrics.settling_time.seconds(),
    ) {
        (Some(a), Some(d)) => d <= a,
        (None, Some(_)) => true,
        _ => false,
    }
}

fn pair_rows(rows: &[ScenarioRow], matched: bool) -> Vec<PairDelta> {
    let mut out = Vec::new();
    for a in rows
        .iter()
        .filter(|r| r.controller == ControllerKind::AnalogType3)
    {
        if let Some(d) = rows.iter().find(|r| {
            r.controller == ControllerKind::Digital2p2z && r.mode == a.mode && r.step == a.step
        }) {
            out.push(delta(a, d, matched));
        }
    }
    out
}

/// Assembles the report for already-finished outcomes. When `step_tests` is
/// set the matched-component comparison is run as well.
pub fn build_report(outcomes: &[Outcome], step_tests: bool) -> Result<ComparisonReport> {
    let rows: Vec<ScenarioRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    let deltas = pair_rows(&rows, false);
    let (matched, matched_rows) = if step_tests {
        let mut scenarios = Vec::new();
        for mode in [Mode::Boost, Mode::Buck] {
            for step in [StepKind::Vin, StepKind::Load] {
                scenarios.extend(matched_pair(mode, step)?);
            }
        }
        let outs = run_scenarios(&scenarios)?;
        let rows: Vec<ScenarioRow> = outs.into_iter().map(|o| o.row).collect();
        (pair_rows(&rows, true), rows)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut notes = vec![
        "deltas are digital minus analog; settling uses a 2% band around the final mean"
            .to_string(),
    ];
    if !deltas.is_empty() {
        notes.push(
            "preset deltas compare different component values (analog-controller set vs digital-controller set)"
                .to_string(),
        );
    }
    if !matched.is_empty() {
        notes.push(format!(
            "matched comparison: both default designs on the analog-controller components \
             (L = 1 uH, C = 22 uF), identical supply and load steps at {} s",
            0.5 * PRESET_T_END
        ));
    }
    Ok(ComparisonReport {
        rows,
        deltas,
        matched,
        matched_rows,
        notes,
    })
}

/// Runs the named presets (with step variants when requested) and builds
/// the comparison report.
pub fn run_suite(names: &[String], step_tests: bool) -> Result<ComparisonReport> {
    let scenarios = suite_scenarios(names, step_tests)?;
    let outcomes = run_scenarios(&scenarios)?;
    build_report(&outcomes, step_tests && !scenarios.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlLaw;

    #[test]
    fn boost_open_component_set() {
        let s = preset("boost-open").unwrap();
        let p = s.params;
        assert_eq!(
            (p.vin, p.l, p.c, p.r_l, p.r_load, p.r_esr),
            (2.5, 280e-9, 250e-9, 0.5, 10.0, 1e-4)
        );
        assert_eq!((p.r_on1, p.r_on2, p.r_on3, p.r_on4), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(p.f_sw, 50e6);
        let ControlLaw::OpenLoop { d } = s.controller.law else {
            panic!()
        };
        assert!((d - 0.564459).abs() < 1e-6);
    }

    #[test]
    fn buck_analog_component_set() {
        let p = preset("buck-analog").unwrap().params;
        assert_eq!(
            (p.vin, p.l, p.c, p.r_l, p.r_load, p.r_esr),
            (5.0, 1e-6, 22e-6, 8e-2, 10.0, 60e-3)
        );
    }

    #[test]
    fn digital_components_equal_open_loop_components() {
        for mode in ["boost", "buck"] {
            let a = preset(&format!("{mode}-open")).unwrap().params;
            let b = preset(&format!("{mode}-digital")).unwrap().params;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn all_presets_regulate_to_3_24() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            assert_eq!(s.controller.v_ref, 3.24, "{name}");
            assert_eq!(s.params.f_sw, 50e6);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            preset("boost-fuzzy"),
            Err(Error::UnknownPreset(_))
        ));
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn step_expansion_counts() {
        let all = parse_names("all").unwrap();
        assert_eq!(suite_scenarios(&all, false).unwrap().len(), 6);
        assert_eq!(suite_scenarios(&all, true).unwrap().len(), 14);
        let two = parse_names("boost-open,boost-digital").unwrap();
        assert_eq!(suite_scenarios(&two, false).unwrap().len(), 2);
    }

    #[test]
    fn empty_suite_is_empty_report() {
        let r = run_suite(&[], true).unwrap();
        assert!(r.rows.is_empty());
        assert!(r.deltas.is_empty());
        assert!(r.matched.is_empty());
    }

    #[test]
    fn step_variants() {
        let s = preset("buck-digital").unwrap();
        let v = s.with_step(StepKind::Vin);
        assert_eq!(v.events[0].new_value, 2.5);
        assert_eq!(v.events[0].t, 0.5 * s.sim.t_end);
        assert_eq!(v.final_params().vin, 2.5);
        let l = s.with_step(StepKind::Load);
        assert_eq!(l.final_params().r_load, 5.0);
        assert_eq!(l.name, "buck-digital+load-step");
    }
}
