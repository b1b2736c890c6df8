//! Fixed-step time-domain engine for the switched converter.
//!
//! Time is tracked as a period index plus an offset inside the period, so
//! period boundaries are exact multiples of `1/f_sw` however long the run.
//! Integration steps never straddle a conduction-phase boundary or a
//! parameter event.

pub mod integrate;

use serde::{Deserialize, Serialize};

use crate::control::{Controller, ControllerSpec};
use crate::converter::{
    active_affine, output_voltage, AffineSystem, ConverterParams, PhaseTopology, StateVector,
};
use crate::error::{Error, Result};
use crate::pwm::schedule_period;

pub use integrate::{exact_step, rk4_step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rk4,
    Exact,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Integrator::Rk4),
            "exact" => Ok(Integrator::Exact),
            other => Err(Error::invalid(
                "integrator",
                format!("expected rk4 or exact, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps_per_period: u32,
    pub t_end: f64,
    pub record_decimation: u32,
    pub integrator: Integrator,
    pub initial_state: StateVector,
}

pub const DEFAULT_STEPS_PER_PERIOD: u32 = 64;

impl SimConfig {
    pub fn new(t_end: f64) -> Self {
        SimConfig {
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
            t_end,
            record_decimation: 1,
            integrator: Integrator::Rk4,
            initial_state: StateVector::ZERO,
        }
    }

    pub fn validate(&self, f_sw: f64) -> Result<()> {
        if self.steps_per_period < 4 {
            return Err(Error::invalid("steps_per_period", "must be >= 4"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid("t_end", "must be > 0"));
        }
        if self.record_decimation < 1 {
            return Err(Error::invalid("record_decimation", "must be >= 1"));
        }
        let total_steps = self.t_end * f_sw * self.steps_per_period as f64;
        if total_steps > 2f64.powi(53) {
            return Err(Error::invalid(
                "t_end",
                "step count exceeds the integer range",
            ));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::invalid("initial_state", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventTarget {
    Vin,
    Rload,
}

/// Parameter change applied at an exact instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub t: f64,
    pub target: EventTarget,
    pub new_value: f64,
}

impl StepEvent {
    pub fn apply(&self, params: &mut ConverterParams) {
        match self.target {
            EventTarget::Vin => params.vin = self.new_value,
            EventTarget::Rload => params.r_load = self.new_value,
        }
    }

    pub fn validate(&self, params: &ConverterParams) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::invalid("events.t", "must be >= 0"));
        }
        let mut p = *params;
        self.apply(&mut p);
        p.validate().map_err(|e| match e {
            Error::InvalidParameter { key, reason } => {
                Error::invalid(format!("events.{key}"), reason)
            }
            other => other,
        })
    }
}

/// One recorded point. `phase` is the topology that governed the interval
/// ending at `t` (for the first sample, the topology about to start), and
/// `duty` the command of the period containing that interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub i_l: f64,
    pub v_c: f64,
    pub v_out: f64,
    pub duty: f64,
    pub phase: PhaseTopology,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub samples: Vec<Sample>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Every `k`-th sample plus the last one: the trace a run with
    /// `record_decimation = k` would have produced from this full-rate trace.
    pub fn decimate(&self, k: u32) -> Trace {
        let k = k.max(1) as usize;
        let last = self.samples.len().saturating_sub(1);
        Trace {
            samples: self
                .samples
                .iter()
                .enumerate()
                .filter(|(j, _)| j.is_multiple_of(k) || *j == last)
                .map(|(_, s)| *s)
                .collect(),
        }
    }

    /// Samples with `t >= t0`.
    pub fn since(&self, t0: f64) -> Trace {
        Trace {
            samples: self.samples.iter().filter(|s| s.t >= t0).copied().collect(),
        }
    }

    /// Mean of `f` over samples in the trailing `window` seconds,
    /// trapezoid-weighted.
    pub fn tail_mean(&self, window: f64, f: impl Fn(&Sample) -> f64) -> f64 {
        let Some(last) = self.samples.last() else {
            return f64::NAN;
        };
        let t0 = last.t - window;
        let start = self.samples.partition_point(|s| s.t < t0 - 1e-18);
        let tail = &self.samples[start..];
        if tail.len() < 2 {
            return tail.first().map(&f).unwrap_or(f64::NAN);
        }
        let mut area = 0.0;
        for w in tail.windows(2) {
            area += 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t);
        }
        area / (tail[tail.len() - 1].t - tail[0].t)
    }
}

pub type Stepper = dyn Fn(&AffineSystem, StateVector, f64) -> StateVector + Sync;

fn stepper_for(integrator: Integrator) -> &'static Stepper {
    match integrator {
        Integrator::Rk4 => &rk4_step,
        Integrator::Exact => &exact_step,
    }
}

/// Runs one simulation. Events must be sorted by time.
pub fn run(
    params: &ConverterParams,
    controller: &ControllerSpec,
    sim: &SimConfig,
    events: &[StepEvent],
) -> Result<Trace> {
    run_with_stepper(params, controller, sim, events, stepper_for(sim.integrator))
}

/// [`run`] with a caller-supplied one-step propagator in place of the
/// configured integrator.
pub fn run_with_stepper(
    params: &ConverterParams,
    controller: &ControllerSpec,
    sim: &SimConfig,
    events: &[StepEvent],
    step: &Stepper,
) -> Result<Trace> {
    params.validate()?;
    controller.validate()?;
    sim.validate(params.f_sw)?;
    for ev in events {
        ev.validate(params)?;
    }
    if events.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::invalid("events", "must be sorted by time"));
    }

    let mut engine = Engine {
        params: *params,
        ctrl: Controller::new(*controller),
        state: sim.initial_state,
        events,
        next_event: 0,
        step,
        decimation: sim.record_decimation as u64,
        step_count: 0,
        trace: Trace::default(),
    };
    engine.run(sim)?;
    Ok(engine.trace)
}

struct Engine<'a> {
    params: ConverterParams,
    ctrl: Controller,
    state: StateVector,
    events: &'a [StepEvent],
    next_event: usize,
    step: &'a Stepper,
    decimation: u64,
    step_count: u64,
    trace: Trace,
}

impl Engine<'_> {
    fn run(&mut self, sim: &SimConfig) -> Result<()> {
        let period = self.params.period();
        let h_max = period / sim.steps_per_period as f64;
        let t_end = sim.t_end;
        let t_eps = 1e-9 * h_max;
        let expected = (t_end / h_max) as usize / self.decimation as usize + 2;
        self.trace.samples.reserve(expected);

        let mut last_phase = PhaseTopology::On;
        let mut n: u64 = 0;
        loop {
            let t0 = n as f64 * period;
            if t0 >= t_end - t_eps {
                break;
            }
            self.apply_events(t0 + t_eps);
            let v_sample = output_voltage(&self.params, last_phase, self.state);
            let cmd = self.ctrl.period_duty(n, t0, v_sample)?;
            let duty = cmd.effective();
            let schedule = schedule_period(&cmd, &self.params)?;
            if n == 0 {
                let first = schedule.segments[0].phase;
                self.record(0.0, first, duty);
            }

            let bounds = schedule.boundaries();
            let mut seg_start = 0.0;
            for (seg, &seg_end) in schedule.segments.iter().zip(&bounds) {
                if seg.duration <= 0.0 {
                    continue;
                }
                let n_steps = ((seg_end - seg_start) / h_max - 1e-9).ceil().max(1.0) as u64;
                let h = (seg_end - seg_start) / n_steps as f64;
                for j in 0..n_steps {
                    let off_a = seg_start + j as f64 * h;
                    let off_b = if j + 1 == n_steps { seg_end } else { off_a + h };
                    let done = self.advance_interval(t0, off_a, off_b, t_end, seg.phase, duty)?;
                    if done {
                        return Ok(());
                    }
                }
                seg_start = seg_end;
                last_phase = seg.phase;
            }
            n += 1;
        }
        self.finish(t_end);
        Ok(())
    }

    /// Integrates from offset `off_a` to `off_b` within the period starting at
    /// `t0`, splitting at events and stopping at `t_end`. Returns true once
    /// `t_end` is reached.
    fn advance_interval(
        &mut self,
        t0: f64,
        off_a: f64,
        off_b: f64,
        t_end: f64,
        phase: PhaseTopology,
        duty: f64,
    ) -> Result<bool> {
        let end_off = t_end - t0;
        let mut off = off_a;
        let target = off_b.min(end_off);
        let reaches_end = end_off <= off_b + 1e-9 * (off_b - off_a);
        let target = if reaches_end { end_off } else { target };
        while off < target {
            self.apply_events(t0 + off + 1e-9 * (off_b - off_a));
            let mut stop = target;
            if let Some(ev) = self.events.get(self.next_event) {
                let ev_off = ev.t - t0;
                if ev_off > off && ev_off < stop {
                    stop = ev_off;
                }
            }
            let dt = stop - off;
            self.integrate(t0 + off, dt, phase)?;
            off = stop;
            self.step_count += 1;
            let final_point = reaches_end && off >= target;
            if final_point || self.step_count.is_multiple_of(self.decimation) {
                self.record(t0 + off, phase, duty);
            }
        }
        Ok(reaches_end)
    }

    fn integrate(&mut self, t: f64, dt: f64, phase: PhaseTopology) -> Result<()> {
        if phase == PhaseTopology::Dead && self.state.i_l < 0.0 {
            self.state.i_l = 0.0;
        }
        let sys = active_affine(&self.params, phase, self.state);
        let start = self.state;
        let mut next = (self.step)(&sys, start, dt);
        if phase == PhaseTopology::Dead && next.i_l < 0.0 {
            next.i_l = 0.0;
        }
        if !next.is_finite() {
            return Err(Error::Divergence { t: t + dt });
        }
        if self.ctrl.is_continuous() {
            let mut mid = (self.step)(&sys, start, 0.5 * dt);
            if phase == PhaseTopology::Dead && mid.i_l < 0.0 {
                mid.i_l = 0.0;
            }
            let v = [
                output_voltage(&self.params, phase, start),
                output_voltage(&self.params, phase, mid),
                output_voltage(&self.params, phase, next),
            ];
            self.ctrl.advance(t, dt, v)?;
        }
        self.state = next;
        Ok(())
    }

    fn apply_events(&mut self, t: f64) {
        while let Some(ev) = self.events.get(self.next_event) {
            if ev.t <= t {
                ev.apply(&mut self.params);
                self.next_event += 1;
            } else {
                break;
            }
        }
    }

    fn record(&mut self, t: f64, phase: PhaseTopology, duty: f64) {
        let v_out = output_voltage(&self.params, phase, self.state);
        self.trace.samples.push(Sample {
            t,
            i_l: self.state.i_l,
            v_c: self.state.v_c,
            v_out,
            duty,
            phase,
        });
    }

    fn finish(&mut self, t_end: f64) {
        // t_end fell exactly on a period boundary
        if let Some(last) = self.trace.samples.last() {
            if (last.t - t_end).abs() > 1e-12 * t_end {
                let (phase, duty) = (last.phase, last.duty);
                self.record(t_end, phase, duty);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwm::duty_for_ratio;

    fn boost_open() -> ConverterParams {
        ConverterParams::lumped(2.5, 280e-9, 250e-9, 0.5, 1e-4, 10.0)
    }

    #[test]
    fn one_period_eight_steps_gives_nine_uniform_samples() {
        let p = boost_open();
        let sim = SimConfig {
            steps_per_period: 8,
            ..SimConfig::new(p.period())
        };
        let tr = run(&p, &ControllerSpec::open_loop(0.5), &sim, &[]).unwrap();
        assert_eq!(tr.len(), 9);
        let h = p.period() / 8.0;
        for (k, s) in tr.samples.iter().enumerate() {
            assert!((s.t - k as f64 * h).abs() < 1e-21, "{k}: {}", s.t);
        }
    }

    #[test]
    fn final_time_is_exact_and_times_increase() {
        let p = boost_open();
        let t_end = 1234.5 * p.period();
        let sim = SimConfig {
            record_decimation: 7,
            ..SimConfig::new(t_end)
        };
        let tr = run(&p, &ControllerSpec::open_loop(0.56), &sim, &[]).unwrap();
        assert_eq!(tr.samples[0].t, 0.0);
        assert!((tr.last().unwrap().t - t_end).abs() <= 1e-12 * t_end);
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn events_split_steps_and_change_parameters() {
        let p = boost_open();
        let t_ev = 10.3 * p.period() + 1e-12;
        let ev = StepEvent {
            t: t_ev,
            target: EventTarget::Vin,
            new_value: 5.0,
        };
        let tr = run(
            &p,
            &ControllerSpec::open_loop(0.5),
            &SimConfig::new(20.0 * p.period()),
            &[ev],
        )
        .unwrap();
        assert!(tr.samples.iter().any(|s| (s.t - t_ev).abs() < 1e-20));
    }

    #[test]
    fn deterministic() {
        let p = boost_open();
        let sim = SimConfig::new(300.0 * p.period());
        let c = ControllerSpec::open_loop(duty_for_ratio(2.5, 3.24));
        assert_eq!(
            run(&p, &c, &sim, &[]).unwrap(),
            run(&p, &c, &sim, &[]).unwrap()
        );
    }

    #[test]
    fn decimating_full_trace_equals_decimated_recording() {
        let p = ConverterParams {
            t_dead: 1e-9,
            ..boost_open()
        };
        let c = ControllerSpec::open_loop(0.55);
        let full = run(&p, &c, &SimConfig::new(37.3 * p.period()), &[]).unwrap();
        for k in [2, 7, 16, 64] {
            let sim = SimConfig {
                record_decimation: k,
                ..SimConfig::new(37.3 * p.period())
            };
            assert_eq!(full.decimate(k), run(&p, &c, &sim, &[]).unwrap(), "k = {k}");
        }
    }

    #[test]
    fn unrealizable_duty_propagates() {
        let p = ConverterParams {
            t_dead: 4e-9,
            ..boost_open()
        };
        let err = run(
            &p,
            &ControllerSpec::open_loop(0.9),
            &SimConfig::new(1e-6),
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnrealizableDuty { .. }));
    }

    #[test]
    fn dead_time_current_never_reverses_in_dead_segments() {
        // light load with large ripple forces the current to reach zero
        let p = ConverterParams {
            t_dead: 2e-9,
            r_load: 200.0,
            ..boost_open()
        };
        let tr = run(
            &p,
            &ControllerSpec::open_loop(0.4),
            &SimConfig::new(200.0 * p.period()),
            &[],
        )
        .unwrap();
        assert!(tr
            .samples
            .iter()
            .filter(|s| s.phase == PhaseTopology::Dead)
            .all(|s| s.i_l >= 0.0));
        assert!(tr.samples.iter().any(|s| s.phase == PhaseTopology::Dead));
    }
}
