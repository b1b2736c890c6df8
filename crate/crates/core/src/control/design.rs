//! Default compensator placement from the power-stage parameters.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ControlLaw, ControllerSpec, TwoPoleTwoZero, Type3Params};
use crate::analysis::{averaged_system, duty_for_output};
use crate::converter::{ConverterParams, PhaseTopology};
use crate::error::Result;
use crate::pwm::{duty_for_ratio, DutyLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    OpenLoop,
    AnalogType3,
    #[serde(rename = "digital_2p2z")]
    Digital2p2z,
}

/// Crossover of the default designs as a fraction of the switching frequency.
pub const CROSSOVER_DIVISOR: f64 = 500.0;
const V_RAMP: f64 = 1.0;

/// Small-signal duty-to-output transfer function of the averaged converter
/// at operating duty `d`, evaluated at complex frequency `s`.
pub fn plant_duty_to_output(params: &ConverterParams, d: f64, s: Complex64) -> Complex64 {
    let on = crate::converter::phase_affine(params, PhaseTopology::On);
    let off = crate::converter::phase_affine(params, PhaseTopology::Off);
    let avg = averaged_system(params, d);
    // equilibrium of the averaged system
    let det = avg.det();
    let x0 = [
        (-avg.a[1][1] * avg.b[0] + avg.a[0][1] * avg.b[1]) / det,
        (avg.a[1][0] * avg.b[0] - avg.a[0][0] * avg.b[1]) / det,
    ];
    let bd = [
        (on.a[0][0] - off.a[0][0]) * x0[0] + (on.a[0][1] - off.a[0][1]) * x0[1] + on.b[0]
            - off.b[0],
        (on.a[1][0] - off.a[1][0]) * x0[0] + (on.a[1][1] - off.a[1][1]) * x0[1] + on.b[1]
            - off.b[1],
    ];
    // output rows: ON gives k·v_c, OFF gives k·(v_c + r_esr·i_l)
    let k = params.r_load / (params.r_load + params.r_esr);
    let c_on = [0.0, k];
    let c_off = [k * params.r_esr, k];
    let c_avg = [
        d * c_on[0] + (1.0 - d) * c_off[0],
        d * c_on[1] + (1.0 - d) * c_off[1],
    ];
    let dd = (c_on[0] - c_off[0]) * x0[0] + (c_on[1] - c_off[1]) * x0[1];

    // (sI − a)^{-1}·bd
    let m00 = s - avg.a[0][0];
    let m01 = Complex64::new(-avg.a[0][1], 0.0);
    let m10 = Complex64::new(-avg.a[1][0], 0.0);
    let m11 = s - avg.a[1][1];
    let det_s = m00 * m11 - m01 * m10;
    let y0 = (m11 * bd[0] - m01 * bd[1]) / det_s;
    let y1 = (-m10 * bd[0] + m00 * bd[1]) / det_s;
    y0 * c_avg[0] + y1 * c_avg[1] + dd
}

/// Loop gain `Gc(s)·Gvd(s)/v_ramp` of an analog design around duty `d`.
pub fn loop_gain(params: &ConverterParams, gc: &Type3Params, d: f64, w: f64) -> Complex64 {
    let s = Complex64::new(0.0, w);
    gc.response(s) * plant_duty_to_output(params, d, s) / gc.v_ramp
}

fn operating_duty(params: &ConverterParams, v_ref: f64, limits: &DutyLimits) -> f64 {
    duty_for_output(params, v_ref, limits).unwrap_or_else(|| duty_for_ratio(params.vin, v_ref))
}

fn analog_design(params: &ConverterParams, v_ref: f64, limits: &DutyLimits) -> Type3Params {
    let nyquist_pole = PI * params.f_sw;
    let w0 = 1.0 / (params.l * params.c).sqrt();
    let esr_pole = if params.r_esr > 0.0 {
        (1.0 / (params.r_esr * params.c)).min(nyquist_pole)
    } else {
        nyquist_pole
    };
    let (wp1, wp2) = if esr_pole <= nyquist_pole {
        (esr_pole, nyquist_pole)
    } else {
        (nyquist_pole, esr_pole)
    };
    // keep both zeros below the first pole
    let wz = w0.min(0.5 * wp1);
    let mut gc = Type3Params {
        k: 1.0,
        wz1: wz,
        wz2: wz,
        wp1,
        wp2,
        v_ramp: V_RAMP,
    };
    let d = operating_duty(params, v_ref, limits);
    let wc = 2.0 * PI * params.f_sw / CROSSOVER_DIVISOR;
    gc.k = 1.0 / loop_gain(params, &gc, d, wc).norm();
    gc
}

/// Bilinear (Tustin) discretization of the integrator, both zeros and the
/// lower compensator pole at the switching rate. The upper pole sits at or
/// beyond the Nyquist band and is dropped so the result fits a 2p2z.
pub fn discretize(gc: &Type3Params, f_s: f64) -> TwoPoleTwoZero {
    let c = 2.0 * f_s;
    let (a1_z, a2_z) = (c / gc.wz1, c / gc.wz2);
    let beta = c / gc.wp1;
    let d0 = c * (1.0 + beta);
    let gain = gc.k / (d0 * gc.v_ramp);
    let b0 = gain * (1.0 + a1_z) * (1.0 + a2_z);
    let b1 = gain * ((1.0 + a1_z) * (1.0 - a2_z) + (1.0 - a1_z) * (1.0 + a2_z));
    let b2 = gain * (1.0 - a1_z) * (1.0 - a2_z);
    let q = (1.0 - beta) / (1.0 + beta);
    let a1 = q - 1.0;
    TwoPoleTwoZero {
        b0,
        b1,
        b2,
        a1,
        a2: -1.0 - a1,
        resolution_bits: 0,
    }
}

/// Default controller of the requested kind for `params`, regulating to `v_ref`.
pub fn design_defaults(
    params: &ConverterParams,
    kind: ControllerKind,
    v_ref: f64,
) -> Result<ControllerSpec> {
    params.validate()?;
    let limits = DutyLimits::default();
    let spec = match kind {
        ControllerKind::OpenLoop => {
            let mut spec = ControllerSpec::open_loop(duty_for_ratio(params.vin, v_ref));
            spec.v_ref = v_ref;
            spec
        }
        ControllerKind::AnalogType3 => ControllerSpec::closed_loop(
            ControlLaw::AnalogType3(analog_design(params, v_ref, &limits)),
            v_ref,
        ),
        ControllerKind::Digital2p2z => {
            let gc = analog_design(params, v_ref, &limits);
            ControllerSpec::closed_loop(
                ControlLaw::Digital2p2z(discretize(&gc, params.f_sw)),
                v_ref,
            )
        }
    };
    spec.validate()?;
    Ok(spec)
}
