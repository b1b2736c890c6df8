//! Power-stage model of the four-switch non-inverting buck-boost converter.
//!
//! The plant has two states, inductor current `i_l` and capacitor voltage
//! `v_c`. The resistive load is folded into the algebra: the output node
//! satisfies both the ESR branch equation and `i_out = v_out / r_load`, so no
//! separate load state exists. Each conduction topology is affine in the
//! state, `dx/dt = a·x + b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical constants of the power stage, SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterParams {
    pub vin: f64,
    pub l: f64,
    pub c: f64,
    /// Inductor series resistance. Holds the lumped `R_L + 2·R_DS` value when
    /// the switch resistances are left at zero.
    pub r_l: f64,
    pub r_on1: f64,
    pub r_on2: f64,
    pub r_on3: f64,
    pub r_on4: f64,
    pub r_esr: f64,
    pub r_load: f64,
    pub f_sw: f64,
    pub t_dead: f64,
    /// Body-diode forward drop.
    pub v_diode: f64,
}

pub const DEFAULT_F_SW: f64 = 50e6;
pub const DEFAULT_V_DIODE: f64 = 0.7;

impl ConverterParams {
    /// Parameters with a single lumped conduction resistance applied in
    /// both phases, 50 MHz switching and no dead-time.
    pub fn lumped(vin: f64, l: f64, c: f64, r_lumped: f64, r_esr: f64, r_load: f64) -> Self {
        ConverterParams {
            vin,
            l,
            c,
            r_l: r_lumped,
            r_on1: 0.0,
            r_on2: 0.0,
            r_on3: 0.0,
            r_on4: 0.0,
            r_esr,
            r_load,
            f_sw: DEFAULT_F_SW,
            t_dead: 0.0,
            v_diode: DEFAULT_V_DIODE,
        }
    }

    /// Same parameters with every parasitic resistance set to zero.
    pub fn lossless(&self) -> Self {
        ConverterParams {
            r_l: 0.0,
            r_on1: 0.0,
            r_on2: 0.0,
            r_on3: 0.0,
            r_on4: 0.0,
            r_esr: 0.0,
            ..*self
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_sw
    }

    /// Series resistance of the ON path (M1/M3).
    pub fn r_on_path(&self) -> f64 {
        self.r_l + self.r_on1 + self.r_on3
    }

    /// Series resistance of the OFF path (M2/M4).
    pub fn r_off_path(&self) -> f64 {
        self.r_l + self.r_on2 + self.r_on4
    }

    /// `r_load / (r_load + r_esr)`, the divider formed by the output loop.
    fn load_divider(&self) -> f64 {
        self.r_load / (self.r_load + self.r_esr)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("vin", self.vin),
            ("l", self.l),
            ("c", self.c),
            ("r_l", self.r_l),
            ("r_on1", self.r_on1),
            ("r_on2", self.r_on2),
            ("r_on3", self.r_on3),
            ("r_on4", self.r_on4),
            ("r_esr", self.r_esr),
            ("r_load", self.r_load),
            ("f_sw", self.f_sw),
            ("t_dead", self.t_dead),
            ("v_diode", self.v_diode),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(key, "must be finite"));
            }
        }
        for (key, v) in [
            ("l", self.l),
            ("c", self.c),
            ("r_load", self.r_load),
            ("f_sw", self.f_sw),
        ] {
            if v <= 0.0 {
                return Err(Error::invalid(key, format!("must be > 0, got {v}")));
            }
        }
        for (key, v) in [
            ("r_l", self.r_l),
            ("r_on1", self.r_on1),
            ("r_on2", self.r_on2),
            ("r_on3", self.r_on3),
            ("r_on4", self.r_on4),
            ("r_esr", self.r_esr),
            ("t_dead", self.t_dead),
            ("v_diode", self.v_diode),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(key, format!("must be >= 0, got {v}")));
            }
        }
        if 2.0 * self.t_dead >= self.period() {
            return Err(Error::invalid(
                "t_dead",
                format!("2·t_dead must be shorter than the period {}", self.period()),
            ));
        }
        Ok(())
    }
}

/// Which conduction path carries the inductor current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PhaseTopology {
    /// M1 and M3 conduct; the input is impressed across the inductor.
    On,
    /// M2 and M4 conduct; the inductor feeds the output.
    Off,
    /// All switches open; current freewheels through body diodes D2 and D4.
    Dead,
}

impl PhaseTopology {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseTopology::On => "ON",
            PhaseTopology::Off => "OFF",
            PhaseTopology::Dead => "DEAD",
        }
    }
}

impl std::fmt::Display for PhaseTopology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub i_l: f64,
    pub v_c: f64,
}

impl StateVector {
    pub const ZERO: StateVector = StateVector { i_l: 0.0, v_c: 0.0 };

    pub fn new(i_l: f64, v_c: f64) -> Self {
        StateVector { i_l, v_c }
    }

    pub fn is_finite(&self) -> bool {
        self.i_l.is_finite() && self.v_c.is_finite()
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.i_l, self.v_c]
    }

    pub fn from_array(x: [f64; 2]) -> Self {
        StateVector {
            i_l: x[0],
            v_c: x[1],
        }
    }
}

/// `dx/dt = a·x + b` over the state `(i_l, v_c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSystem {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl AffineSystem {
    pub fn new(a: [[f64; 2]; 2], b: [f64; 2]) -> Self {
        AffineSystem { a, b }
    }

    #[inline]
    pub fn derivative(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.b[0],
            self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.b[1],
        ]
    }

    pub fn eval(&self, s: StateVector) -> (f64, f64) {
        let d = self.derivative(s.to_array());
        (d[0], d[1])
    }

    pub fn trace(&self) -> f64 {
        self.a[0][0] + self.a[1][1]
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.a
            .iter()
            .flatten()
            .chain(self.b.iter())
            .all(|v| v.is_finite())
    }

    /// Eigenvalues of `a` as `(re, im)` pairs.
    pub fn eigenvalues(&self) -> [(f64, f64); 2] {
        let half_tr = 0.5 * self.trace();
        let half_diff = 0.5 * (self.a[0][0] - self.a[1][1]);
        let disc = half_diff * half_diff + self.a[0][1] * self.a[1][0];
        if disc >= 0.0 {
            let r = disc.sqrt();
            [(half_tr + r, 0.0), (half_tr - r, 0.0)]
        } else {
            let w = (-disc).sqrt();
            [(half_tr, w), (half_tr, -w)]
        }
    }

    /// Duty-weighted blend `d·self + (1 − d)·other`.
    pub fn blend(&self, other: &AffineSystem, d: f64) -> AffineSystem {
        let mix = |x: f64, y: f64| d * x + (1.0 - d) * y;
        AffineSystem {
            a: [
                [
                    mix(self.a[0][0], other.a[0][0]),
                    mix(self.a[0][1], other.a[0][1]),
                ],
                [
                    mix(self.a[1][0], other.a[1][0]),
                    mix(self.a[1][1], other.a[1][1]),
                ],
            ],
            b: [mix(self.b[0], other.b[0]), mix(self.b[1], other.b[1])],
        }
    }
}

/// Output voltage for a given topology, solving the ESR branch together with
/// the resistive load.
pub fn output_voltage(params: &ConverterParams, phase: PhaseTopology, state: StateVector) -> f64 {
    let k = params.load_divider();
    match phase {
        PhaseTopology::On => state.v_c * k,
        PhaseTopology::Off | PhaseTopology::Dead => (state.v_c + params.r_esr * state.i_l) * k,
    }
}

/// Right-hand side `(d i_l/dt, d v_c/dt)` of the topology's state equations.
///
/// During dead-time the diodes only conduct forward current: with
/// `i_l <= 0` the inductor branch is blocked and only the capacitor
/// discharges into the load.
pub fn phase_dynamics(
    params: &ConverterParams,
    phase: PhaseTopology,
    state: StateVector,
) -> (f64, f64) {
    let r_total = params.r_load + params.r_esr;
    match phase {
        PhaseTopology::On => {
            let v_out = output_voltage(params, phase, state);
            let di = (params.vin - params.r_on_path() * state.i_l) / params.l;
            let dv = -(v_out / params.r_load) / params.c;
            (di, dv)
        }
        PhaseTopology::Off => {
            let v_out = output_voltage(params, phase, state);
            let di = -(params.r_off_path() * state.i_l + v_out) / params.l;
            let dv = (state.i_l - v_out / params.r_load) / params.c;
            (di, dv)
        }
        PhaseTopology::Dead if state.i_l > 0.0 => {
            let v_out = output_voltage(params, phase, state);
            let drop = params.r_l * state.i_l + 2.0 * params.v_diode;
            let di = -(drop + v_out) / params.l;
            let dv = (state.i_l - v_out / params.r_load) / params.c;
            (di, dv)
        }
        PhaseTopology::Dead => (0.0, -state.v_c / (params.c * r_total)),
    }
}

/// Canonical affine form of [`phase_dynamics`]. For `Dead` this is the
/// forward-conducting branch (`i_l > 0`), with the diode drops in `b`.
pub fn phase_affine(params: &ConverterParams, phase: PhaseTopology) -> AffineSystem {
    let k = params.load_divider();
    let (l, c) = (params.l, params.c);
    let cap_leak = -1.0 / (c * (params.r_load + params.r_esr));
    match phase {
        PhaseTopology::On => AffineSystem::new(
            [[-params.r_on_path() / l, 0.0], [0.0, cap_leak]],
            [params.vin / l, 0.0],
        ),
        PhaseTopology::Off => AffineSystem::new(
            [
                [-(params.r_off_path() + k * params.r_esr) / l, -k / l],
                [k / c, cap_leak],
            ],
            [0.0, 0.0],
        ),
        PhaseTopology::Dead => AffineSystem::new(
            [
                [-(params.r_l + k * params.r_esr) / l, -k / l],
                [k / c, cap_leak],
            ],
            [-2.0 * params.v_diode / l, 0.0],
        ),
    }
}

/// Affine system governing `state` under `phase`, selecting the blocked
/// diode branch during dead-time when the inductor current is not positive.
pub fn active_affine(
    params: &ConverterParams,
    phase: PhaseTopology,
    state: StateVector,
) -> AffineSystem {
    if phase == PhaseTopology::Dead && state.i_l <= 0.0 {
        blocked_dead_affine(params)
    } else {
        phase_affine(params, phase)
    }
}

/// Dead-time with both diodes reverse-biased: the inductor holds zero current.
pub fn blocked_dead_affine(params: &ConverterParams) -> AffineSystem {
    let cap_leak = -1.0 / (params.c * (params.r_load + params.r_esr));
    AffineSystem::new([[0.0, 0.0], [0.0, cap_leak]], [0.0, 0.0])
}
