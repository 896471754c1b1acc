//! Stochastic Schrödinger equation with classical amplitude noise:
//!
//! ```text
//! dψ = -i H ψ dt - ½ S†S ψ d[X] - i S ψ dX
//! ```
//!
//! The noise `X` is supplied as a [`NoiseTrace`]; its increments and
//! quadratic-variation increments drive the equation directly. Noise acts
//! during `[0, noise_duration]` of the pulse, the remainder is evolved with
//! exact propagators.
//!
//! Two integrators are available:
//!
//! * [`SseScheme::SplitPlaten`] (default): Strang splitting of each step into
//!   an exact half-step of `H`, a Platen step of the noise flow, and another
//!   exact half-step. Noise increments larger than `max_noise_angle` are
//!   subdivided. Exact whenever the noise commutes with the drive.
//! * [`SseScheme::Platen`]: the Platen scheme applied to the full right-hand
//!   side, one step per trace sample.
//!
//! For a diffusive step (`d[X] > 0`) the scheme sees the noise as
//! `σ dW` with `σ² = d[X]/dt` and standardized increment `N = dX / (σ √dt)`.
//! For finite-variation noise (`d[X] = 0`) the increment enters the drift.
//! The state is renormalized after every step.

use serde::{Deserialize, Serialize};

use super::{drive_axis, platen_step, propagator, AmplitudeCalibration, Mat2, PulseSchedule, QubitState, Spinor, C64};
use crate::error::{Error, Result};
use crate::noise::{whole_steps, NoiseTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SseScheme {
    #[default]
    SplitPlaten,
    Platen,
}

/// How trace increments enter the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NoiseCoupling {
    /// `dX` is added to the rotation phase directly (Rabi-frequency units).
    #[default]
    RabiAdditive,
    /// `dX` perturbs the amplitude setpoint by `2 dX / (gain · dt)` before the
    /// calibration curve is applied. `gain` is the nominal Rabi frequency per
    /// unit setpoint (rad/s).
    SetpointAdditive { gain: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SseOptions {
    pub scheme: SseScheme,
    pub coupling: NoiseCoupling,
    /// Largest noise rotation (rad) taken in a single Platen sub-step.
    pub max_noise_angle: f64,
    /// Largest tolerated `|‖ψ‖ - 1|` before renormalization.
    pub norm_tolerance: f64,
}

impl Default for SseOptions {
    fn default() -> Self {
        Self {
            scheme: SseScheme::SplitPlaten,
            coupling: NoiseCoupling::RabiAdditive,
            max_noise_angle: 2e-3,
            norm_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SseOutcome {
    pub state: QubitState,
    /// Largest pre-renormalization norm deviation seen.
    pub max_norm_drift: f64,
}

pub fn integrate_sse(
    pulse: &PulseSchedule,
    calib: &AmplitudeCalibration,
    trace: &NoiseTrace,
    site_scale: f64,
    state0: &QubitState,
) -> Result<QubitState> {
    integrate_sse_with(pulse, calib, trace, site_scale, state0, &SseOptions::default()).map(|o| o.state)
}

struct Renormalizer {
    tol: f64,
    max_drift: f64,
}

impl Renormalizer {
    #[inline]
    fn apply(&mut self, psi: Spinor) -> Result<Spinor> {
        let norm = psi.norm_sqr().sqrt();
        let drift = (norm - 1.0).abs();
        if !(drift <= self.tol) {
            return Err(Error::IntegrationDiverged(format!("norm drifted to {norm}")));
        }
        self.max_drift = self.max_drift.max(drift);
        Ok(psi * (1.0 / norm))
    }
}

/// One step of `dψ = -½ S†S ψ d[X] - i S ψ dX` with `S² = I`.
#[inline]
fn noise_flow_step(psi: Spinor, s: &Mat2, dx: f64, dqv: f64, dt: f64) -> Result<Spinor> {
    let minus_i = C64::new(0.0, -1.0);
    if dqv > 0.0 {
        let sigma = (dqv / dt).sqrt();
        let n = dx / (sigma * dt.sqrt());
        let half_var = 0.5 * sigma * sigma;
        platen_step(
            psi,
            |y: &Spinor| *y * (-half_var),
            |y: &Spinor| s.apply(y).scale_c(minus_i * sigma),
            dt,
            n,
        )
    } else {
        let rate = dx / dt;
        platen_step(psi, |y: &Spinor| s.apply(y).scale_c(minus_i * rate), |_: &Spinor| Spinor::default(), dt, 0.0)
    }
}

/// Effective `(dX, d[X])` seen by the qubit for one trace sample.
#[inline]
fn coupled_increment(
    coupling: NoiseCoupling,
    calib: &AmplitudeCalibration,
    setpoint: f64,
    dx: f64,
    dqv: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    match coupling {
        NoiseCoupling::RabiAdditive => Ok((dx, dqv)),
        NoiseCoupling::SetpointAdditive { gain } => {
            if !(gain > 0.0) {
                return Err(Error::InvalidArgument("setpoint coupling gain must be > 0".into()));
            }
            if dx == 0.0 {
                return Ok((0.0, 0.0));
            }
            let ds = 2.0 * dx / (gain * dt);
            let base = calib.apply(setpoint)?;
            let shifted = calib.apply(setpoint + ds)?;
            let eff = 0.5 * (shifted - base) * dt;
            let slope = (shifted - base) / ds;
            Ok((eff, dqv * (slope / gain).powi(2)))
        }
    }
}

pub fn integrate_sse_with(
    pulse: &PulseSchedule,
    calib: &AmplitudeCalibration,
    trace: &NoiseTrace,
    site_scale: f64,
    state0: &QubitState,
    opts: &SseOptions,
) -> Result<SseOutcome> {
    pulse.validate(calib)?;
    if !(site_scale > 0.0) || !site_scale.is_finite() {
        return Err(Error::InvalidArgument(format!("site scale must be > 0, got {site_scale}")));
    }
    if !(opts.max_noise_angle > 0.0) {
        return Err(Error::InvalidArgument("max_noise_angle must be > 0".into()));
    }
    let per_segment = whole_steps(pulse.segment_dt, trace.dt)
        .filter(|&m| m >= 1)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "trace step {} does not divide pulse segment {}",
                trace.dt, pulse.segment_dt
            ))
        })?;
    let noisy_segments = pulse.noisy_segments();
    let needed = noisy_segments * per_segment;
    if trace.len() < needed {
        return Err(Error::InvalidArgument(format!(
            "trace has {} steps but the noise window needs {needed}",
            trace.len()
        )));
    }

    let rabi = pulse.rabi_frequencies(calib, site_scale)?;
    let h = trace.dt;
    let mut renorm = Renormalizer {
        tol: opts.norm_tolerance,
        max_drift: 0.0,
    };
    let mut psi = state0.spinor();

    for (k, (seg, &omega)) in pulse.segments.iter().zip(&rabi).enumerate() {
        if k >= noisy_segments {
            psi = propagator(omega, seg.phase, seg.detuning, pulse.segment_dt).apply(&psi);
            continue;
        }
        let s = drive_axis(seg.phase);
        let samples = &trace.dx[k * per_segment..(k + 1) * per_segment];
        let qvs = &trace.dqv[k * per_segment..(k + 1) * per_segment];
        match opts.scheme {
            SseScheme::SplitPlaten => {
                let half = propagator(omega, seg.phase, seg.detuning, 0.5 * h);
                let full = half.mul(&half);
                for (j, (&dx, &dqv)) in samples.iter().zip(qvs).enumerate() {
                    psi = if j == 0 { half.apply(&psi) } else { full.apply(&psi) };
                    let (dx, dqv) = coupled_increment(opts.coupling, calib, seg.setpoint, dx, dqv, h)?;
                    let subs = ((dx.abs() / opts.max_noise_angle).ceil() as usize).max(1);
                    let inv = 1.0 / subs as f64;
                    for _ in 0..subs {
                        psi = noise_flow_step(psi, &s, dx * inv, dqv * inv, h * inv)?;
                        psi = renorm.apply(psi)?;
                    }
                }
                psi = half.apply(&psi);
            }
            SseScheme::Platen => {
                let ham = super::hamiltonian_with_phase(omega, seg.phase, seg.detuning);
                let minus_i = C64::new(0.0, -1.0);
                for (&dx, &dqv) in samples.iter().zip(qvs) {
                    let (dx, dqv) = coupled_increment(opts.coupling, calib, seg.setpoint, dx, dqv, h)?;
                    psi = if dqv > 0.0 {
                        let sigma = (dqv / h).sqrt();
                        let n = dx / (sigma * h.sqrt());
                        let half_var = 0.5 * sigma * sigma;
                        platen_step(
                            psi,
                            |y: &Spinor| ham.apply(y).scale_c(minus_i) - *y * half_var,
                            |y: &Spinor| s.apply(y).scale_c(minus_i * sigma),
                            h,
                            n,
                        )?
                    } else {
                        let rate = dx / h;
                        platen_step(
                            psi,
                            |y: &Spinor| ham.apply(y).scale_c(minus_i) + s.apply(y).scale_c(minus_i * rate),
                            |_: &Spinor| Spinor::default(),
                            h,
                            0.0,
                        )?
                    };
                    psi = renorm.apply(psi)?;
                }
            }
        }
    }

    let psi = renorm.apply(psi)?;
    Ok(SseOutcome {
        state: QubitState::from_spinor_unchecked(psi),
        max_norm_drift: renorm.max_drift,
    })
}
