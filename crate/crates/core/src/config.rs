//! Scenario configuration files.
//!
//! A configuration is a TOML document with `[converter]`, `[controller]`,
//! `[sim]` sections and an optional `[[events]]` array. Keys carry the field
//! names of the in-memory types, in SI base units. Unknown keys are rejected;
//! missing keys take the defaults documented on each section.

use serde::{Deserialize, Serialize};

use crate::control::{
    design_defaults, ControlLaw, ControllerKind, ControllerSpec, TwoPoleTwoZero, Type3Params,
    DEFAULT_SOFT_START, DEFAULT_V_REF,
};
use crate::converter::{ConverterParams, StateVector, DEFAULT_F_SW, DEFAULT_V_DIODE};
use crate::error::{Error, Result};
use crate::pwm::{duty_for_ratio, DutyLimits};
use crate::scenario::{Scenario, PRESET_T_END};
use crate::sim::{EventTarget, Integrator, SimConfig, StepEvent, DEFAULT_STEPS_PER_PERIOD};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub converter: ConverterSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventSection>,
}

/// Defaults: the open-loop boost component set (2.5 V, 280 nH, 250 nF, 0.5 Ω
/// lumped, 0.1 mΩ ESR, 10 Ω), 50 MHz, no dead-time, 0.7 V diodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_on1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_on2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_on3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_on4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_esr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_load: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_sw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_dead: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_diode: Option<f64>,
}

/// `kind` is one of `open_loop` (default), `analog_type3`, `digital_2p2z`.
/// Compensator keys left out are filled from the default design for the
/// converter section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ControllerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_ref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adc_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adc_full_scale: Option<f64>,
    // open loop
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    // analog Type-III
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wz1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wz2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wp1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wp2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_ramp: Option<f64>,
    // digital 2p2z
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_bits: Option<u32>,
}

/// Defaults: 64 steps per period, 400 µs, every step recorded, RK4, cold start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_decimation: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_i_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_v_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub t: f64,
    pub target: EventTarget,
    pub new_value: f64,
}

fn in_section(section: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { key, reason } if !key.contains('.') => {
            Error::invalid(format!("{section}.{key}"), reason)
        }
        other => other,
    }
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config document serializes")
    }

    /// Resolves defaults and validates every section.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let cv = &self.converter;
        let params = ConverterParams {
            vin: cv.vin.unwrap_or(2.5),
            l: cv.l.unwrap_or(280e-9),
            c: cv.c.unwrap_or(250e-9),
            r_l: cv.r_l.unwrap_or(0.5),
            r_on1: cv.r_on1.unwrap_or(0.0),
            r_on2: cv.r_on2.unwrap_or(0.0),
            r_on3: cv.r_on3.unwrap_or(0.0),
            r_on4: cv.r_on4.unwrap_or(0.0),
            r_esr: cv.r_esr.unwrap_or(1e-4),
            r_load: cv.r_load.unwrap_or(10.0),
            f_sw: cv.f_sw.unwrap_or(DEFAULT_F_SW),
            t_dead: cv.t_dead.unwrap_or(0.0),
            v_diode: cv.v_diode.unwrap_or(DEFAULT_V_DIODE),
        };
        params.validate().map_err(|e| in_section("converter", e))?;

        let controller = self
            .controller
            .resolve(&params)
            .map_err(|e| in_section("controller", e))?;

        let s = &self.sim;
        let sim = SimConfig {
            steps_per_period: s.steps_per_period.unwrap_or(DEFAULT_STEPS_PER_PERIOD),
            t_end: s.t_end.unwrap_or(PRESET_T_END),
            record_decimation: s.record_decimation.unwrap_or(1),
            integrator: s.integrator.unwrap_or(Integrator::Rk4),
            initial_state: StateVector::new(
                s.initial_i_l.unwrap_or(0.0),
                s.initial_v_c.unwrap_or(0.0),
            ),
        };
        sim.validate(params.f_sw)
            .map_err(|e| in_section("sim", e))?;

        let events: Vec<StepEvent> = self
            .events
            .iter()
            .map(|e| StepEvent {
                t: e.t,
                target: e.target,
                new_value: e.new_value,
            })
            .collect();
        for ev in &events {
            ev.validate(&params)?;
        }
        if events.windows(2).any(|w| w[1].t < w[0].t) {
            return Err(Error::invalid("events", "must be sorted by time"));
        }
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "custom".to_string()),
            params,
            controller,
            sim,
            events,
        })
    }

    /// Fully specified document for a scenario.
    pub fn from_scenario(s: &Scenario) -> Self {
        let p = &s.params;
        let converter = ConverterSection {
            vin: Some(p.vin),
            l: Some(p.l),
            c: Some(p.c),
            r_l: Some(p.r_l),
            r_on1: Some(p.r_on1),
            r_on2: Some(p.r_on2),
            r_on3: Some(p.r_on3),
            r_on4: Some(p.r_on4),
            r_esr: Some(p.r_esr),
            r_load: Some(p.r_load),
            f_sw: Some(p.f_sw),
            t_dead: Some(p.t_dead),
            v_diode: Some(p.v_diode),
        };
        let c = &s.controller;
        let mut controller = ControllerSection {
            kind: Some(c.kind()),
            v_ref: Some(c.v_ref),
            d_min: Some(c.limits.d_min),
            d_max: Some(c.limits.d_max),
            soft_start: Some(c.soft_start),
            adc_bits: Some(c.adc_bits),
            adc_full_scale: Some(c.adc_full_scale),
            ..Default::default()
        };
        match c.law {
            ControlLaw::OpenLoop { d } => controller.d = Some(d),
            ControlLaw::AnalogType3(g) => {
                controller.k = Some(g.k);
                controller.wz1 = Some(g.wz1);
                controller.wz2 = Some(g.wz2);
                controller.wp1 = Some(g.wp1);
                controller.wp2 = Some(g.wp2);
                controller.v_ramp = Some(g.v_ramp);
            }
            ControlLaw::Digital2p2z(q) => {
                controller.b0 = Some(q.b0);
                controller.b1 = Some(q.b1);
                controller.b2 = Some(q.b2);
                controller.a1 = Some(q.a1);
                controller.a2 = Some(q.a2);
                controller.resolution_bits = Some(q.resolution_bits);
            }
        }
        let sim = SimSection {
            steps_per_period: Some(s.sim.steps_per_period),
            t_end: Some(s.sim.t_end),
            record_decimation: Some(s.sim.record_decimation),
            integrator: Some(s.sim.integrator),
            initial_i_l: Some(s.sim.initial_state.i_l),
            initial_v_c: Some(s.sim.initial_state.v_c),
        };
        let events = s
            .events
            .iter()
            .map(|e| EventSection {
                t: e.t,
                target: e.target,
                new_value: e.new_value,
            })
            .collect();
        ConfigDocument {
            name: Some(s.name.clone()),
            converter,
            controller,
            sim,
            events,
        }
    }
}

impl ControllerSection {
    fn reject_foreign(&self, kind: ControllerKind) -> Result<()> {
        let open = [("d", self.d.is_some())];
        let analog = [
            ("k", self.k.is_some()),
            ("wz1", self.wz1.is_some()),
            ("wz2", self.wz2.is_some()),
            ("wp1", self.wp1.is_some()),
            ("wp2", self.wp2.is_some()),
            ("v_ramp", self.v_ramp.is_some()),
        ];
        let digital = [
            ("b0", self.b0.is_some()),
            ("b1", self.b1.is_some()),
            ("b2", self.b2.is_some()),
            ("a1", self.a1.is_some()),
            ("a2", self.a2.is_some()),
            ("resolution_bits", self.resolution_bits.is_some()),
        ];
        let foreign: Vec<(&str, bool)> = match kind {
            ControllerKind::OpenLoop => analog.iter().chain(digital.iter()).copied().collect(),
            ControllerKind::AnalogType3 => open.iter().chain(digital.iter()).copied().collect(),
            ControllerKind::Digital2p2z => open.iter().chain(analog.iter()).copied().collect(),
        };
        if let Some((key, _)) = foreign.into_iter().find(|(_, set)| *set) {
            return Err(Error::invalid(
                key,
                format!("not used by a {kind:?} controller"),
            ));
        }
        Ok(())
    }

    fn resolve(&self, params: &ConverterParams) -> Result<ControllerSpec> {
        let kind = self.kind.unwrap_or(ControllerKind::OpenLoop);
        self.reject_foreign(kind)?;
        let v_ref = self.v_ref.unwrap_or(DEFAULT_V_REF);
        let base_limits = DutyLimits::default();
        let limits = DutyLimits {
            d_min: self.d_min.unwrap_or(base_limits.d_min),
            d_max: self.d_max.unwrap_or(base_limits.d_max),
        };
        let law = match kind {
            ControllerKind::OpenLoop => ControlLaw::OpenLoop {
                d: self.d.unwrap_or_else(|| duty_for_ratio(params.vin, v_ref)),
            },
            ControllerKind::AnalogType3 => {
                let designed = || -> Result<Type3Params> {
                    match design_defaults(params, kind, v_ref)?.law {
                        ControlLaw::AnalogType3(g) => Ok(g),
                        _ => unreachable!(),
                    }
                };
                let all_given = [self.k, self.wz1, self.wz2, self.wp1, self.wp2, self.v_ramp]
                    .iter()
                    .all(Option::is_some);
                let g = if all_given {
                    Type3Params {
                        k: 0.0,
                        wz1: 0.0,
                        wz2: 0.0,
                        wp1: 0.0,
                        wp2: 0.0,
                        v_ramp: 0.0,
                    }
                } else {
                    designed()?
                };
                ControlLaw::AnalogType3(Type3Params {
                    k: self.k.unwrap_or(g.k),
                    wz1: self.wz1.unwrap_or(g.wz1),
                    wz2: self.wz2.unwrap_or(g.wz2),
                    wp1: self.wp1.unwrap_or(g.wp1),
                    wp2: self.wp2.unwrap_or(g.wp2),
                    v_ramp: self.v_ramp.unwrap_or(g.v_ramp),
                })
            }
            ControllerKind::Digital2p2z => {
                let all_given = [self.b0, self.b1, self.b2, self.a1, self.a2]
                    .iter()
                    .all(Option::is_some);
                let q = if all_given {
                    TwoPoleTwoZero {
                        b0: 0.0,
                        b1: 0.0,
                        b2: 0.0,
                        a1: 0.0,
                        a2: 0.0,
                        resolution_bits: 0,
                    }
                } else {
                    match design_defaults(params, kind, v_ref)?.law {
                        ControlLaw::Digital2p2z(q) => q,
                        _ => unreachable!(),
                    }
                };
                ControlLaw::Digital2p2z(TwoPoleTwoZero {
                    b0: self.b0.unwrap_or(q.b0),
                    b1: self.b1.unwrap_or(q.b1),
                    b2: self.b2.unwrap_or(q.b2),
                    a1: self.a1.unwrap_or(q.a1),
                    a2: self.a2.unwrap_or(q.a2),
                    resolution_bits: self.resolution_bits.unwrap_or(0),
                })
            }
        };
        let closed = kind != ControllerKind::OpenLoop;
        let spec = ControllerSpec {
            law,
            v_ref,
            limits,
            soft_start: self
                .soft_start
                .unwrap_or(if closed { DEFAULT_SOFT_START } else { 0.0 }),
            adc_bits: self.adc_bits.unwrap_or(0),
            adc_full_scale: self.adc_full_scale.unwrap_or(8.0),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses configuration text straight into a validated scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    ConfigDocument::parse(text)?.to_scenario()
}

pub fn scenario_to_toml(s: &Scenario) -> String {
    ConfigDocument::from_scenario(s).to_toml()
}
