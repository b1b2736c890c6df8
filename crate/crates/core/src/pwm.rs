//! Trailing-edge PWM: duty command to a per-period conduction schedule.

use serde::{Deserialize, Serialize};

use crate::converter::{ConverterParams, PhaseTopology};
use crate::error::{Error, Result};

/// Saturation limits applied to every duty command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyLimits {
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DutyLimits {
    fn default() -> Self {
        DutyLimits {
            d_min: 0.05,
            d_max: 0.95,
        }
    }
}

impl DutyLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_min < 1.0) {
            return Err(Error::invalid("d_min", "must lie in (0, 1)"));
        }
        if !(self.d_max >= self.d_min && self.d_max < 1.0) {
            return Err(Error::invalid("d_max", "must lie in [d_min, 1)"));
        }
        Ok(())
    }

    pub fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.d_min, self.d_max)
    }
}

/// A duty request latched for one switching period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyCommand {
    pub d: f64,
    /// DPWM resolution; 0 means continuous.
    pub resolution_bits: u32,
}

impl DutyCommand {
    pub fn continuous(d: f64) -> Self {
        DutyCommand {
            d,
            resolution_bits: 0,
        }
    }

    /// Effective duty after DPWM quantization.
    pub fn effective(&self) -> f64 {
        quantize_duty(self.d, self.resolution_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub phase: PhaseTopology,
    pub duration: f64,
}

/// Ordered conduction segments for one period: `[ON, DEAD, OFF, DEAD]` with
/// zero-length dead segments omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    pub segments: Vec<Segment>,
    pub period: f64,
}

impl SwitchSchedule {
    /// Segment end offsets from the period start. The final boundary is
    /// exactly the period.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let n = self.segments.len();
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                acc += s.duration;
                if i + 1 == n {
                    self.period
                } else {
                    acc
                }
            })
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn on_time(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.phase == PhaseTopology::On)
            .map(|s| s.duration)
            .sum()
    }
}

/// Splits one switching period according to `cmd`, removing `t_dead`
/// symmetrically from both conduction intervals.
pub fn schedule_period(cmd: &DutyCommand, params: &ConverterParams) -> Result<SwitchSchedule> {
    let period = params.period();
    let d = cmd.effective();
    let t_dead = params.t_dead;
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::UnrealizableDuty {
            duty: d,
            t_dead,
            period,
        });
    }
    let on_span = d * period;
    let off_span = period - on_span;
    if on_span <= t_dead || off_span <= t_dead {
        return Err(Error::UnrealizableDuty {
            duty: d,
            t_dead,
            period,
        });
    }
    let segments = if t_dead == 0.0 {
        vec![
            Segment {
                phase: PhaseTopology::On,
                duration: on_span,
            },
            Segment {
                phase: PhaseTopology::Off,
                duration: off_span,
            },
        ]
    } else {
        let t_on = on_span - t_dead;
        vec![
            Segment {
                phase: PhaseTopology::On,
                duration: t_on,
            },
            Segment {
                phase: PhaseTopology::Dead,
                duration: t_dead,
            },
            Segment {
                phase: PhaseTopology::Off,
                duration: off_span - t_dead,
            },
            Segment {
                phase: PhaseTopology::Dead,
                duration: t_dead,
            },
        ]
    };
    Ok(SwitchSchedule { segments, period })
}

/// Ideal duty reaching `vout_target` from `vin`, inverting `Vout/Vin = D/(1 − D)`.
pub fn duty_for_ratio(vin: f64, vout_target: f64) -> f64 {
    vout_target / (vin + vout_target)
}

/// Rounds `d` to the nearest multiple of `2^-bits`; `bits == 0` is the identity.
pub fn quantize_duty(d: f64, resolution_bits: u32) -> f64 {
    if resolution_bits == 0 {
        return d;
    }
    let levels = (resolution_bits as f64).exp2();
    (d * levels).round() / levels
}
