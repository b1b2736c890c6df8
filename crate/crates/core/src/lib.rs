//! Switched-model simulator for a four-switch buck-boost converter under
//! open-loop, analog Type-III and digital two-pole/two-zero voltage control.
//!
//! The power stage is simulated as a piecewise-affine system whose topology
//! follows a PWM schedule with optional dead-time. [`scenario`] holds the
//! preset operating points and the comparison suite; [`config`] and [`io`]
//! cover the file formats used by the command-line front end.

pub mod analysis;
pub mod config;
pub mod control;
pub mod converter;
pub mod error;
pub mod io;
pub mod pwm;
pub mod scenario;
pub mod sim;
pub mod verify;

pub use analysis::{
    averaged_steady_state, balance_check, transient_metrics, BalanceCheck, SettlingTime,
    SteadyStatePrediction, TransientMetrics,
};
pub use control::{
    design_defaults, ControlLaw, Controller, ControllerKind, ControllerSpec, TwoPoleTwoZero,
    Type3Params,
};
pub use converter::{AffineSystem, ConverterParams, PhaseTopology, StateVector};
pub use error::{Error, Result};
pub use pwm::{DutyCommand, DutyLimits, SwitchSchedule};
pub use scenario::{preset, ComparisonReport, Scenario, StepKind};
pub use sim::{EventTarget, Integrator, Sample, SimConfig, StepEvent, Trace};
