//! Duty-cycle controllers: fixed open-loop duty, a continuous Type-III
//! compensator, and a discrete two-pole/two-zero recurrence.

mod design;

pub use design::{design_defaults, loop_gain, plant_duty_to_output, ControllerKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pwm::{DutyCommand, DutyLimits};
use crate::sim::integrate::rk4_forced;

/// Regulation target used by every closed-loop preset.
pub const DEFAULT_V_REF: f64 = 3.24;
/// Duration of the reference ramp applied at start-up by closed-loop controllers.
pub const DEFAULT_SOFT_START: f64 = 50e-6;

/// Type-III compensator
/// `Gc(s) = k·(1 + s/wz1)(1 + s/wz2) / [s·(1 + s/wp1)(1 + s/wp2)]`
/// driving a PWM carrier of amplitude `v_ramp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Type3Params {
    pub k: f64,
    pub wz1: f64,
    pub wz2: f64,
    pub wp1: f64,
    pub wp2: f64,
    pub v_ramp: f64,
}

impl Type3Params {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("k", self.k),
            ("wz1", self.wz1),
            ("wz2", self.wz2),
            ("wp1", self.wp1),
            ("wp2", self.wp2),
            ("v_ramp", self.v_ramp),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    key,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if self.wz1 > self.wz2 {
            return Err(Error::invalid("wz2", "must be >= wz1"));
        }
        if self.wz2 >= self.wp1 {
            return Err(Error::invalid("wp1", "must be above both zeros"));
        }
        if self.wp1 > self.wp2 {
            return Err(Error::invalid("wp2", "must be >= wp1"));
        }
        Ok(())
    }

    /// `Gc(s)` evaluated at a complex frequency.
    pub fn response(&self, s: num_complex::Complex64) -> num_complex::Complex64 {
        let one = num_complex::Complex64::new(1.0, 0.0);
        self.k * (one + s / self.wz1) * (one + s / self.wz2)
            / (s * (one + s / self.wp1) * (one + s / self.wp2))
    }
}

/// Coefficients of `u[n] = b0·e[n] + b1·e[n−1] + b2·e[n−2] − a1·u[n−1] − a2·u[n−2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPoleTwoZero {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
    /// DPWM resolution; 0 keeps the duty continuous.
    pub resolution_bits: u32,
}

impl TwoPoleTwoZero {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("b0", self.b0),
            ("b1", self.b1),
            ("b2", self.b2),
            ("a1", self.a1),
            ("a2", self.a2),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(key, "must be finite"));
            }
        }
        let residue = 1.0 + self.a1 + self.a2;
        if residue.abs() > 1e-9 {
            return Err(Error::invalid(
                "a2",
                format!("1 + a1 + a2 must vanish (integrator), got {residue}"),
            ));
        }
        if self.resolution_bits > 52 {
            return Err(Error::invalid("resolution_bits", "must be <= 52"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlLaw {
    OpenLoop { d: f64 },
    AnalogType3(Type3Params),
    Digital2p2z(TwoPoleTwoZero),
}

/// A controller configuration together with its regulation target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub law: ControlLaw,
    pub v_ref: f64,
    pub limits: DutyLimits,
    /// Length of the linear reference ramp from 0 to `v_ref`; 0 disables it.
    pub soft_start: f64,
    /// ADC resolution for the digital sampler; 0 samples exactly.
    pub adc_bits: u32,
    /// ADC input range `[0, adc_full_scale]`.
    pub adc_full_scale: f64,
}

impl ControllerSpec {
    pub fn open_loop(d: f64) -> Self {
        ControllerSpec {
            law: ControlLaw::OpenLoop { d },
            v_ref: DEFAULT_V_REF,
            limits: DutyLimits::default(),
            soft_start: 0.0,
            adc_bits: 0,
            adc_full_scale: 8.0,
        }
    }

    pub fn closed_loop(law: ControlLaw, v_ref: f64) -> Self {
        ControllerSpec {
            law,
            v_ref,
            soft_start: DEFAULT_SOFT_START,
            ..ControllerSpec::open_loop(0.5)
        }
    }

    pub fn is_closed_loop(&self) -> bool {
        !matches!(self.law, ControlLaw::OpenLoop { .. })
    }

    pub fn kind(&self) -> ControllerKind {
        match self.law {
            ControlLaw::OpenLoop { .. } => ControllerKind::OpenLoop,
            ControlLaw::AnalogType3(_) => ControllerKind::AnalogType3,
            ControlLaw::Digital2p2z(_) => ControllerKind::Digital2p2z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.limits.validate()?;
        if !(self.v_ref.is_finite() && self.v_ref > 0.0) {
            return Err(Error::invalid("v_ref", "must be > 0"));
        }
        if !(self.soft_start.is_finite() && self.soft_start >= 0.0) {
            return Err(Error::invalid("soft_start", "must be >= 0"));
        }
        if self.adc_bits > 0 && !(self.adc_full_scale.is_finite() && self.adc_full_scale > 0.0) {
            return Err(Error::invalid("adc_full_scale", "must be > 0"));
        }
        match &self.law {
            ControlLaw::OpenLoop { d } => {
                if !(*d > 0.0 && *d < 1.0) {
                    return Err(Error::invalid("d", format!("must lie in (0, 1), got {d}")));
                }
                Ok(())
            }
            ControlLaw::AnalogType3(p) => p.validate(),
            ControlLaw::Digital2p2z(p) => p.validate(),
        }
    }

    /// Reference seen by the loop at time `t`, including the start-up ramp.
    pub fn reference_at(&self, t: f64) -> f64 {
        if self.soft_start > 0.0 && t < self.soft_start {
            self.v_ref * (t / self.soft_start)
        } else {
            self.v_ref
        }
    }

    fn sample(&self, v: f64) -> f64 {
        if self.adc_bits == 0 {
            return v;
        }
        let lsb = self.adc_full_scale / (self.adc_bits as f64).exp2();
        ((v / lsb).round() * lsb).clamp(0.0, self.adc_full_scale)
    }
}

/// Integrator plus two lead-lag stages realizing [`Type3Params`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Type3State {
    pub x: [f64; 3],
}

impl Type3State {
    fn derivative(p: &Type3Params, x: &[f64; 3], e: f64) -> [f64; 3] {
        let w1 = x[0];
        let r1 = p.wp1 / p.wz1;
        let w2 = r1 * w1 + (1.0 - r1) * x[1];
        [p.k * e, p.wp1 * (w1 - x[1]), p.wp2 * (w2 - x[2])]
    }

    /// Compensator output voltage (no direct feedthrough from the error).
    pub fn control_voltage(&self, p: &Type3Params) -> f64 {
        let r1 = p.wp1 / p.wz1;
        let r2 = p.wp2 / p.wz2;
        let w2 = r1 * self.x[0] + (1.0 - r1) * self.x[1];
        r2 * w2 + (1.0 - r2) * self.x[2]
    }

    /// RK4 step with the error sampled at the step start, midpoint and end.
    pub fn advance(&mut self, p: &Type3Params, errors: [f64; 3], dt: f64) {
        self.x = rk4_forced(self.x, dt, errors, |x, e| Self::derivative(p, x, e));
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

/// History of the 2p2z recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwoPoleTwoZeroState {
    pub e1: f64,
    pub e2: f64,
    pub u1: f64,
    pub u2: f64,
}

impl TwoPoleTwoZeroState {
    /// Evaluates one recurrence step, clamps it to `[lo, hi]`, and stores the
    /// clamped value as history.
    pub fn update(&mut self, c: &TwoPoleTwoZero, e: f64, lo: f64, hi: f64) -> f64 {
        let raw = c.b0 * e + c.b1 * self.e1 + c.b2 * self.e2 - c.a1 * self.u1 - c.a2 * self.u2;
        let u = raw.clamp(lo, hi);
        self.e2 = self.e1;
        self.e1 = e;
        self.u2 = self.u1;
        self.u1 = u;
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerState {
    Open,
    Analog(Type3State),
    Digital(TwoPoleTwoZeroState),
}

impl ControllerState {
    pub fn initial(spec: &ControllerSpec) -> Self {
        match spec.law {
            ControlLaw::OpenLoop { .. } => ControllerState::Open,
            ControlLaw::AnalogType3(_) => ControllerState::Analog(Type3State::default()),
            ControlLaw::Digital2p2z(_) => ControllerState::Digital(TwoPoleTwoZeroState::default()),
        }
    }
}

/// Fixed duty of an open-loop configuration; `n` is ignored.
pub fn open_loop_duty(spec: &ControllerSpec, _n: u64) -> Result<DutyCommand> {
    match spec.law {
        ControlLaw::OpenLoop { d } => Ok(DutyCommand::continuous(d)),
        _ => Err(Error::Config(
            "open_loop_duty needs an open-loop controller".into(),
        )),
    }
}

/// Advances the Type-III compensator by `dt` with `v_out` held constant and
/// returns the new control voltage.
pub fn type3_update(
    spec: &ControllerSpec,
    state: Type3State,
    v_out: f64,
    dt: f64,
) -> Result<(Type3State, f64)> {
    let ControlLaw::AnalogType3(p) = spec.law else {
        return Err(Error::Config(
            "type3_update needs an analog controller".into(),
        ));
    };
    let e = spec.v_ref - v_out;
    let mut next = state;
    next.advance(&p, [e; 3], dt);
    if !next.is_finite() {
        return Err(Error::Divergence { t: f64::NAN });
    }
    let vc = next.control_voltage(&p);
    Ok((next, vc))
}

/// Duty produced by a Type-III control voltage.
pub fn type3_duty(spec: &ControllerSpec, control_voltage: f64) -> DutyCommand {
    let v_ramp = match spec.law {
        ControlLaw::AnalogType3(p) => p.v_ramp,
        _ => 1.0,
    };
    DutyCommand::continuous(spec.limits.clamp(control_voltage / v_ramp))
}

/// One period of the digital controller, fed the sample taken at the
/// period start.
pub fn digital_2p2z_update(
    spec: &ControllerSpec,
    state: TwoPoleTwoZeroState,
    v_out_sampled: f64,
) -> Result<(TwoPoleTwoZeroState, DutyCommand)> {
    digital_2p2z_update_with_ref(spec, state, v_out_sampled, spec.v_ref)
}

fn digital_2p2z_update_with_ref(
    spec: &ControllerSpec,
    mut state: TwoPoleTwoZeroState,
    v_out_sampled: f64,
    v_ref: f64,
) -> Result<(TwoPoleTwoZeroState, DutyCommand)> {
    let ControlLaw::Digital2p2z(c) = spec.law else {
        return Err(Error::Config(
            "digital_2p2z_update needs a digital controller".into(),
        ));
    };
    let e = v_ref - spec.sample(v_out_sampled);
    let u = state.update(&c, e, spec.limits.d_min, spec.limits.d_max);
    Ok((
        state,
        DutyCommand {
            d: u,
            resolution_bits: c.resolution_bits,
        },
    ))
}

/// A controller instance owned by one simulation run.
#[derive(Debug, Clone)]
pub struct Controller {
    spec: ControllerSpec,
    state: ControllerState,
}

impl Controller {
    pub fn new(spec: ControllerSpec) -> Self {
        Controller {
            state: ControllerState::initial(&spec),
            spec,
        }
    }

    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    /// Whether the compensator must be co-simulated with the plant.
    pub fn is_continuous(&self) -> bool {
        matches!(self.state, ControllerState::Analog(_))
    }

    /// Duty latched at the start of period `n` (time `t`).
    pub fn period_duty(&mut self, n: u64, t: f64, v_out_sampled: f64) -> Result<DutyCommand> {
        match &mut self.state {
            ControllerState::Open => open_loop_duty(&self.spec, n),
            ControllerState::Analog(x) => {
                let ControlLaw::AnalogType3(p) = self.spec.law else {
                    unreachable!()
                };
                Ok(type3_duty(&self.spec, x.control_voltage(&p)))
            }
            ControllerState::Digital(h) => {
                let v_ref = self.spec.reference_at(t);
                let (next, cmd) =
                    digital_2p2z_update_with_ref(&self.spec, *h, v_out_sampled, v_ref)?;
                *h = next;
                Ok(cmd)
            }
        }
    }

    /// Co-simulates the analog compensator across one plant step starting at
    /// `t`, given the output voltage at the start, midpoint and end.
    pub fn advance(&mut self, t: f64, dt: f64, v_out: [f64; 3]) -> Result<()> {
        if let ControllerState::Analog(x) = &mut self.state {
            let ControlLaw::AnalogType3(p) = self.spec.law else {
                unreachable!()
            };
            let errors = [
                self.spec.reference_at(t) - v_out[0],
                self.spec.reference_at(t + 0.5 * dt) - v_out[1],
                self.spec.reference_at(t + dt) - v_out[2],
            ];
            x.advance(&p, errors, dt);
            if !x.is_finite() {
                return Err(Error::Divergence { t: t + dt });
            }
        }
        Ok(())
    }
}
