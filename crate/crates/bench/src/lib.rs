//! Fixtures shared by the benchmarks.

use bbconv::converter::{phase_affine, AffineSystem, ConverterParams, PhaseTopology};
use bbconv::scenario::{preset, Scenario};

/// Boost stage with the open-loop component set.
pub fn boost_params() -> ConverterParams {
    ConverterParams::lumped(2.5, 280e-9, 250e-9, 0.5, 1e-4, 10.0)
}

pub fn off_phase() -> AffineSystem {
    phase_affine(&boost_params(), PhaseTopology::Off)
}

/// A preset shortened to `t_end`, recording only every 64th step.
pub fn short_preset(name: &str, t_end: f64) -> Scenario {
    let mut s = preset(name).expect("known preset");
    s.sim.t_end = t_end;
    s.sim.record_decimation = 64;
    s
}
