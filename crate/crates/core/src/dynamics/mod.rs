//! Single-qubit drive dynamics.
//!
//! Drive Hamiltonian for one site, with the rotation axis selected by the
//! drive phase `φ`:
//!
//! ```text
//! H = ½ [ Ω (cos φ σx + sin φ σy) + Δ (I - σz) ]
//! ```
//!
//! At `φ = 0` this is the plain `σx` drive. Pulses are piecewise constant, so
//! noiseless evolution is an exact product of closed-form 2×2 propagators.

mod calibration;
mod linalg;
pub mod platen;
pub mod sse;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::whole_steps;

pub use calibration::{AmplitudeCalibration, DEFAULT_MIN_SEGMENT};
pub use linalg::{Mat2, Spinor};
pub use platen::{platen_step, SdeState};
pub use sse::{integrate_sse, integrate_sse_with, NoiseCoupling, SseOptions, SseOutcome, SseScheme};

pub type C64 = Complex64;

const NORM_TOLERANCE: f64 = 1e-9;

/// A normalized two-level state `c0|0⟩ + c1|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState(Spinor);

impl QubitState {
    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        let s = Spinor([c0, c1]);
        let n = s.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("state norm² is {n}, expected 1")));
        }
        Ok(Self(s))
    }

    /// Normalize an arbitrary non-zero spinor.
    pub fn from_spinor(s: Spinor) -> Result<Self> {
        let n = s.norm_sqr().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self(s * (1.0 / n)))
    }

    pub(crate) fn from_spinor_unchecked(s: Spinor) -> Self {
        Self(s)
    }

    pub fn ground() -> Self {
        Self(Spinor([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]))
    }

    pub fn excited() -> Self {
        Self(Spinor([C64::new(0.0, 0.0), C64::new(1.0, 0.0)]))
    }

    pub fn spinor(&self) -> Spinor {
        self.0
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        self.0 .0
    }

    /// Probability of finding the qubit in |0⟩.
    pub fn p0(&self) -> f64 {
        self.0 .0[0].norm_sqr()
    }
}

/// `|φ†ψ|²`, clamped to `[0, 1]`.
pub fn fidelity(psi: &QubitState, phi: &QubitState) -> f64 {
    phi.0.inner(&psi.0).norm_sqr().clamp(0.0, 1.0)
}

/// `H = ½[Ω σx + Δ(I - σz)]`.
pub fn hamiltonian(omega: f64, delta: f64) -> Mat2 {
    hamiltonian_with_phase(omega, 0.0, delta)
}

pub fn hamiltonian_with_phase(omega: f64, phase: f64, delta: f64) -> Mat2 {
    let off = C64::from_polar(0.5 * omega, -phase);
    Mat2([[C64::new(0.0, 0.0), off], [off.conj(), C64::new(delta, 0.0)]])
}

/// Drive axis operator `cos φ σx + sin φ σy`; amplitude noise acts along it.
pub fn drive_axis(phase: f64) -> Mat2 {
    let off = C64::from_polar(1.0, -phase);
    Mat2([[C64::new(0.0, 0.0), off], [off.conj(), C64::new(0.0, 0.0)]])
}

/// Exact `exp(-i H dt)` for the constant Hamiltonian of one segment.
pub fn propagator(omega: f64, phase: f64, delta: f64, dt: f64) -> Mat2 {
    // H = Δ/2 I + ½ n·σ with n = (Ω cos φ, Ω sin φ, -Δ)
    let (nx, ny, nz) = (omega * phase.cos(), omega * phase.sin(), -delta);
    let r = (nx * nx + ny * ny + nz * nz).sqrt();
    let half = 0.5 * r * dt;
    let (s, c) = half.sin_cos();
    let (ux, uy, uz) = if r > 0.0 { (nx / r, ny / r, nz / r) } else { (0.0, 0.0, 0.0) };
    let i = C64::new(0.0, 1.0);
    let rot = Mat2([
        [C64::new(c, 0.0) - i * s * uz, -i * s * C64::new(ux, -uy)],
        [-i * s * C64::new(ux, uy), C64::new(c, 0.0) + i * s * uz],
    ]);
    rot.scale(C64::from_polar(1.0, -0.5 * delta * dt))
}

/// Rotation by `angle` about the equatorial axis at azimuth `phase`.
pub fn rotation(angle: f64, phase: f64) -> Mat2 {
    propagator(1.0, phase, 0.0, angle)
}

/// One piecewise-constant segment of a drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Amplitude setpoint, mapped to a Rabi frequency by the calibration.
    pub setpoint: f64,
    /// Detuning in rad/s.
    #[serde(default)]
    pub detuning: f64,
    /// Drive phase in rad; selects the rotation axis.
    #[serde(default)]
    pub phase: f64,
}

impl Segment {
    pub fn new(setpoint: f64) -> Self {
        Self {
            setpoint,
            detuning: 0.0,
            phase: 0.0,
        }
    }
}

/// A piecewise-constant drive. Noise acts during `[0, noise_duration]`,
/// the rest of the pulse is noiseless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub segment_dt: f64,
    pub segments: Vec<Segment>,
    pub noise_duration: f64,
}

impl PulseSchedule {
    /// A constant resonant drive split into `segment_dt` pieces.
    pub fn constant(setpoint: f64, total: f64, segment_dt: f64, noise_duration: f64) -> Result<Self> {
        let n = whole_steps(total, segment_dt).ok_or_else(|| {
            Error::InvalidArgument(format!("total {total} is not a multiple of segment_dt {segment_dt}"))
        })?;
        let pulse = Self {
            segment_dt,
            segments: vec![Segment::new(setpoint); n],
            noise_duration,
        };
        pulse.check_shape()?;
        Ok(pulse)
    }

    pub fn with_noise_duration(&self, t: f64) -> Result<Self> {
        let p = Self {
            noise_duration: t,
            ..self.clone()
        };
        p.check_shape()?;
        Ok(p)
    }

    pub fn total_duration(&self) -> f64 {
        self.segment_dt * self.segments.len() as f64
    }

    /// Number of segments covered by the noise window.
    pub fn noisy_segments(&self) -> usize {
        whole_steps(self.noise_duration, self.segment_dt).unwrap_or(0)
    }

    fn check_shape(&self) -> Result<()> {
        if !(self.segment_dt > 0.0) || !self.segment_dt.is_finite() {
            return Err(Error::InvalidArgument(format!("segment_dt must be > 0, got {}", self.segment_dt)));
        }
        let n = whole_steps(self.noise_duration, self.segment_dt).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "noise duration {} is not a multiple of segment_dt {}",
                self.noise_duration, self.segment_dt
            ))
        })?;
        if n > self.segments.len() {
            return Err(Error::InvalidArgument(format!(
                "noise duration {} exceeds pulse duration {}",
                self.noise_duration,
                self.total_duration()
            )));
        }
        if self
            .segments
            .iter()
            .any(|s| !s.setpoint.is_finite() || !s.detuning.is_finite() || !s.phase.is_finite())
        {
            return Err(Error::InvalidArgument("non-finite segment parameter".into()));
        }
        Ok(())
    }

    /// Full validation, including the hardware minimum segment length.
    pub fn validate(&self, calib: &AmplitudeCalibration) -> Result<()> {
        self.check_shape()?;
        if self.segment_dt < calib.min_segment * (1.0 - 1e-12) {
            return Err(Error::ConstraintViolation(format!(
                "segment duration {} s is shorter than the minimum {} s",
                self.segment_dt, calib.min_segment
            )));
        }
        Ok(())
    }

    /// Rabi frequencies (rad/s) of every segment at the given site scale.
    pub(crate) fn rabi_frequencies(&self, calib: &AmplitudeCalibration, site_scale: f64) -> Result<Vec<f64>> {
        self.segments
            .iter()
            .map(|s| calib.apply(s.setpoint).map(|r| r * site_scale))
            .collect()
    }
}

/// The noise operator and its initial-state expectation `S0 = φ0† S φ0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseOperatorSpec {
    pub operator: Mat2,
    pub s0: f64,
}

impl NoiseOperatorSpec {
    /// Amplitude noise along σx for initial state `phi0`.
    pub fn sigma_x(phi0: &QubitState) -> Result<Self> {
        let op = drive_axis(0.0);
        if !op.dagger().mul(&op).approx_eq(&Mat2::identity(), 1e-12) {
            return Err(Error::InvalidArgument("noise operator does not satisfy S†S = I".into()));
        }
        let e = phi0.0.inner(&op.apply(&phi0.0));
        if e.im.abs() >= 1e-12 {
            return Err(Error::InvalidArgument(format!("S0 has imaginary part {}", e.im)));
        }
        Ok(Self {
            operator: op,
            s0: e.re.clamp(-1.0, 1.0),
        })
    }
}

/// Noiseless evolution of `state0` under `pulse`.
pub fn evolve_ideal(pulse: &PulseSchedule, calib: &AmplitudeCalibration, state0: &QubitState) -> Result<QubitState> {
    evolve_ideal_scaled(pulse, calib, 1.0, state0)
}

/// [`evolve_ideal`] with every Rabi frequency multiplied by `site_scale`.
pub fn evolve_ideal_scaled(
    pulse: &PulseSchedule,
    calib: &AmplitudeCalibration,
    site_scale: f64,
    state0: &QubitState,
) -> Result<QubitState> {
    pulse.validate(calib)?;
    let rabi = pulse.rabi_frequencies(calib, site_scale)?;
    let mut psi = state0.0;
    for (seg, omega) in pulse.segments.iter().zip(rabi) {
        psi = propagator(omega, seg.phase, seg.detuning, pulse.segment_dt).apply(&psi);
    }
    Ok(QubitState(psi))
}
