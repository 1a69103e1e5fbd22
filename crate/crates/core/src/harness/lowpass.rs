//! Frequency response of a single isometric muscle to a small excitation
//! tone riding on a steady carrier.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::muscle::{MuscleParams, MuscleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowpassSpec {
    pub carrier: f64,
    /// Tone amplitude in excitation units.
    pub noise_amplitude: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    pub dt: f64,
    /// Transient discarded before measuring, s.
    pub warmup: f64,
    /// Measurement window, s. Rounded to whole periods of each tone.
    pub window: f64,
}

impl Default for LowpassSpec {
    fn default() -> Self {
        Self {
            carrier: 0.5,
            noise_amplitude: 0.05,
            low_hz: 1.0,
            high_hz: 50.0,
            dt: 1e-4,
            warmup: 2.0,
            window: 4.0,
        }
    }
}

impl LowpassSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::ConfigInvalid {
            field: field.into(),
            message,
        };
        if !(self.noise_amplitude >= 0.0
            && self.carrier - self.noise_amplitude > 0.0
            && self.carrier + self.noise_amplitude <= 1.0)
        {
            return Err(bad("noise_amplitude", "carrier +/- amplitude must stay inside (0, 1]".into()));
        }
        if !(self.low_hz > 0.0 && self.high_hz > self.low_hz) {
            return Err(bad("high_hz", "need 0 < low_hz < high_hz".into()));
        }
        if !(self.dt > 0.0 && self.dt * self.high_hz < 0.05) {
            return Err(bad("dt", "need at least 20 samples per period of the high tone".into()));
        }
        if !(self.warmup >= 0.0 && self.window * self.low_hz >= 1.0) {
            return Err(bad("window", "must cover at least one period of the low tone".into()));
        }
        Ok(())
    }
}

/// Response at one tone frequency, as gains relative to the tone amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneResponse {
    pub freq_hz: f64,
    /// Activation amplitude over excitation amplitude, dB.
    pub activation_gain_db: f64,
    /// Tendon force amplitude (in units of f0) over excitation amplitude, dB.
    pub force_gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowpassReport {
    /// `None` when the tone amplitude is zero and gains are undefined.
    pub low: Option<ToneResponse>,
    pub high: Option<ToneResponse>,
    /// High-tone attenuation minus low-tone attenuation in tendon force, dB.
    pub force_difference_db: Option<f64>,
    /// Same difference measured on activation, dB.
    pub activation_difference_db: Option<f64>,
    /// Effective first-order time constant at the carrier, s.
    pub tau_eff: f64,
    /// First-order filter prediction of the difference, dB.
    pub predicted_difference_db: f64,
}

/// Effective small-signal time constant around activation `a`: the
/// rise and decay constants alternate, so their rates average.
pub fn effective_time_constant(params: &MuscleParams, a: f64) -> Result<f64> {
    let up = params.activation_time_constant(1.0, a)?;
    let down = params.activation_time_constant(0.0, a)?;
    Ok(2.0 / (1.0 / up + 1.0 / down))
}

/// Attenuation of a first-order low-pass at `f` Hz, dB.
pub fn first_order_attenuation_db(tau: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f * tau;
    10.0 * (1.0 + w * w).log10()
}

/// Amplitude of the `f` Hz component of a uniformly sampled signal.
pub fn tone_amplitude(samples: &[f64], dt: f64, f: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, x) in samples.iter().enumerate() {
        let ph = 2.0 * PI * f * i as f64 * dt;
        re += x * ph.cos();
        im -= x * ph.sin();
    }
    2.0 * re.hypot(im) / samples.len() as f64
}

fn tone(params: &MuscleParams, spec: &LowpassSpec, f: f64) -> Result<ToneResponse> {
    let l_mtu = params.isometric_mtu_length(spec.carrier, 1.0)?;
    let mut state = MuscleState::equilibrium(params, spec.carrier, l_mtu)?;
    let warm = (spec.warmup / spec.dt).round() as usize;
    let periods = (spec.window * f).floor().max(1.0);
    let n = (periods / f / spec.dt).round() as usize;
    let mut act = Vec::with_capacity(n);
    let mut force = Vec::with_capacity(n);
    for i in 0..warm + n {
        let t = i as f64 * spec.dt;
        let u = spec.carrier + spec.noise_amplitude * (2.0 * PI * f * t).sin();
        let step = params.step_muscle(&state, u, l_mtu, spec.dt)?;
        state = step.state;
        if i >= warm {
            act.push(state.activation);
            force.push(step.force / params.f0_max);
        }
    }
    let amp_a = tone_amplitude(&act, spec.dt, f);
    let amp_f = tone_amplitude(&force, spec.dt, f);
    Ok(ToneResponse {
        freq_hz: f,
        activation_gain_db: 20.0 * (amp_a / spec.noise_amplitude).log10(),
        force_gain_db: 20.0 * (amp_f / spec.noise_amplitude).log10(),
    })
}

/// Measure the activation and tendon-force response to a low and a high
/// tone and compare with the first-order activation filter.
pub fn lowpass_attenuation_test(params: &MuscleParams, spec: &LowpassSpec) -> Result<LowpassReport> {
    params.validate()?;
    spec.validate()?;
    let tau = effective_time_constant(params, spec.carrier)?;
    let predicted = first_order_attenuation_db(tau, spec.high_hz) - first_order_attenuation_db(tau, spec.low_hz);
    if spec.noise_amplitude == 0.0 {
        return Ok(LowpassReport {
            low: None,
            high: None,
            force_difference_db: None,
            activation_difference_db: None,
            tau_eff: tau,
            predicted_difference_db: predicted,
        });
    }
    let low = tone(params, spec, spec.low_hz)?;
    let high = tone(params, spec, spec.high_hz)?;
    Ok(LowpassReport {
        force_difference_db: Some(low.force_gain_db - high.force_gain_db),
        activation_difference_db: Some(low.activation_gain_db - high.activation_gain_db),
        low: Some(low),
        high: Some(high),
        tau_eff: tau,
        predicted_difference_db: predicted,
    })
}
