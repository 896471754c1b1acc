//! Single-qubit randomized benchmarking on the noisy pulse engine.
//!
//! A sequence of `n` random Cliffords plus the inverting Clifford is compiled
//! to a piecewise-constant [`PulseSchedule`], each primitive rotation
//! optionally replaced by its SCROFULOUS composite, and evolved through
//! [`integrate_sse`] under one noise realization. The return probability is
//! then read out through the array measurement model.
//!
//! Compilation convention: a rotation by `θ` at Rabi frequency `Ω` takes
//! `ceil(θ / (Ω Δt))` segments of length `Δt`, with the amplitude lowered so
//! the area is exactly `θ`. The identity Clifford compiles to no pulse.

mod clifford;
mod fit;
mod scrofulous;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_sse, AmplitudeCalibration, PulseSchedule, QubitState, Segment};
use crate::error::{Error, Result};
use crate::measurement::{simulate_measurements, ArrayModel, TargetBit};
use crate::noise::{generate_trace, NoiseKind, NoiseParams};
use crate::rng::{derive_seed, stream, tag};

pub use clifford::{clifford_group, compose, Axis, CliffordGate, CliffordGroup, Rotation};
pub use fit::{fit_rb_decay, rb_model, RbFit};
pub use scrofulous::{arcsinc, scrofulous};

/// `n` uniformly random Clifford indices followed by the inverting element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbSequence {
    pub gates: Vec<usize>,
    pub inversion: usize,
}

impl RbSequence {
    /// All gate indices including the inversion.
    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.gates.iter().copied().chain(std::iter::once(self.inversion))
    }
}

pub fn rb_sequence(group: &CliffordGroup, n: usize, seed: u64) -> Result<RbSequence> {
    if n == 0 {
        return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
    }
    let mut rng = stream(seed);
    let gates: Vec<usize> = (0..n).map(|_| rng.random_range(0..group.len())).collect();
    let total = gates.iter().fold(group.identity(), |acc, &g| group.then(acc, g));
    Ok(RbSequence {
        gates,
        inversion: group.inverse(total),
    })
}

/// Rotations implementing one Clifford, expanded to composites if requested.
pub fn gate_rotations(gate: &CliffordGate, composite: bool) -> Result<Vec<Rotation>> {
    let mut out = Vec::new();
    for r in gate.rotations() {
        if composite {
            out.extend(scrofulous(r.angle, r.phase)?);
        } else {
            out.push(r);
        }
    }
    Ok(out)
}

/// Mean total rotation angle per Clifford (rad), averaged over the group.
pub fn average_pulse_area(group: &CliffordGroup, composite: bool) -> Result<f64> {
    let mut total = 0.0;
    for g in group.gates() {
        total += gate_rotations(g, composite)?.iter().map(|r| r.angle).sum::<f64>();
    }
    Ok(total / group.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    /// Nominal Rabi frequency (rad/s).
    pub rabi: f64,
    pub segment_dt: f64,
    pub composite: bool,
}

/// Compile rotations into a schedule with noise acting throughout.
pub fn compile_rotations(rotations: &[Rotation], calib: &AmplitudeCalibration, opts: &CompileOptions) -> Result<PulseSchedule> {
    if !(opts.rabi > 0.0) || !(opts.segment_dt > 0.0) {
        return Err(Error::InvalidArgument("rabi and segment_dt must be > 0".into()));
    }
    let per_segment = opts.rabi * opts.segment_dt;
    let mut segments = Vec::new();
    for r in rotations {
        if r.angle <= 0.0 {
            continue;
        }
        let n = ((r.angle / per_segment) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let omega = r.angle / (n as f64 * opts.segment_dt);
        let seg = Segment {
            setpoint: calib.invert(omega)?,
            detuning: 0.0,
            phase: r.phase,
        };
        segments.extend(std::iter::repeat_n(seg, n));
    }
    let noise_duration = segments.len() as f64 * opts.segment_dt;
    let pulse = PulseSchedule {
        segment_dt: opts.segment_dt,
        segments,
        noise_duration,
    };
    pulse.validate(calib)?;
    Ok(pulse)
}

pub fn compile_sequence(
    group: &CliffordGroup,
    seq: &RbSequence,
    calib: &AmplitudeCalibration,
    opts: &CompileOptions,
) -> Result<PulseSchedule> {
    let mut rotations = Vec::new();
    for g in seq.all() {
        rotations.extend(gate_rotations(&group.gates()[g], opts.composite)?);
    }
    compile_rotations(&rotations, calib, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbNoise {
    pub kind: NoiseKind,
    pub gamma: f64,
    #[serde(default)]
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub n_sequences: usize,
    pub n_meas: usize,
    pub composite: bool,
    pub noise: Option<RbNoise>,
    /// Nominal Rabi frequency (rad/s).
    pub rabi: f64,
    pub segment_dt: f64,
    /// Rabi scale factor of the benchmarked site.
    pub site_scale: f64,
    pub seed: u64,
}

impl Default for RbConfig {
    fn default() -> Self {
        Self {
            lengths: vec![1, 100, 200, 400, 700, 1000, 1500, 2000],
            n_sequences: 75,
            n_meas: 75,
            composite: true,
            noise: None,
            rabi: 2.0 * std::f64::consts::PI * 50e3,
            segment_dt: 1e-6,
            site_scale: 1.0,
            seed: 0,
        }
    }
}

impl RbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths.contains(&0) {
            return Err(Error::InvalidArgument("lengths must be non-empty and all >= 1".into()));
        }
        if self.n_sequences == 0 || self.n_meas == 0 {
            return Err(Error::InvalidArgument("n_sequences and n_meas must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbRecord {
    pub length: usize,
    pub sequence: usize,
    /// Noisy return probability before readout.
    pub p0_true: f64,
    /// Measured return fraction; `None` if no atom was ever present.
    pub p0_measured: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbResult {
    pub records: Vec<RbRecord>,
}

impl RbResult {
    /// `(length, mean measured P(|0⟩), standard error)` per length.
    pub fn means(&self) -> Vec<(usize, f64, f64)> {
        let mut lengths: Vec<usize> = self.records.iter().map(|r| r.length).collect();
        lengths.sort_unstable();
        lengths.dedup();
        lengths
            .into_iter()
            .map(|n| {
                let v: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.length == n)
                    .filter_map(|r| r.p0_measured)
                    .collect();
                let m = v.len() as f64;
                let mean = v.iter().sum::<f64>() / m;
                let var = if m > 1.0 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
                (n, mean, (var / m).sqrt())
            })
            .collect()
    }

    /// Fit of all measured points.
    pub fn fit(&self) -> Result<RbFit> {
        let (ns, ps): (Vec<f64>, Vec<f64>) = self
            .records
            .iter()
            .filter_map(|r| r.p0_measured.map(|p| (r.length as f64, p)))
            .unzip();
        fit_rb_decay(&ns, &ps)
    }
}

/// Run every (length, sequence) pair. The readout uses `model`'s loading
/// and flip probabilities with `config.n_meas` shots on a single site,
/// scoring a read of 0 as a return.
pub fn run_rb(config: &RbConfig, calib: &AmplitudeCalibration, model: &ArrayModel) -> Result<RbResult> {
    use rayon::prelude::*;
    config.validate()?;
    let group = clifford_group();
    let readout = ArrayModel {
        n_sites: 1,
        n_meas: config.n_meas,
        p_c: model.p_c,
        p01: model.p01,
        p10: model.p10,
        site_scales: vec![1.0],
        target: TargetBit::Zero,
    };
    readout.validate()?;
    let opts = CompileOptions {
        rabi: config.rabi,
        segment_dt: config.segment_dt,
        composite: config.composite,
    };
    let jobs: Vec<(usize, usize)> = config
        .lengths
        .iter()
        .flat_map(|&n| (0..config.n_sequences).map(move |s| (n, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(n, s)| -> Result<RbRecord> {
            let base = derive_seed(config.seed, &[tag("rb"), n as u64, s as u64]);
            let seq = rb_sequence(&group, n, derive_seed(base, &[tag("sequence")]))?;
            let pulse = compile_sequence(&group, &seq, calib, &opts)?;
            let psi0 = QubitState::ground();
            let state = match config.noise {
                Some(noise) if pulse.noise_duration > 0.0 => {
                    let params = NoiseParams::new(
                        noise.kind,
                        noise.gamma,
                        noise.kappa,
                        pulse.noise_duration,
                        derive_seed(base, &[tag("noise")]),
                    )
                    .with_fine_dt(config.segment_dt);
                    let trace = generate_trace(&params)?;
                    integrate_sse(&pulse, calib, &trace, config.site_scale, &psi0)?
                }
                _ => crate::dynamics::evolve_ideal_scaled(&pulse, calib, config.site_scale, &psi0)?,
            };
            let p0 = state.p0().clamp(0.0, 1.0);
            let p0_measured = match simulate_measurements(&[p0], &readout, derive_seed(base, &[tag("readout")])) {
                Ok(v) => Some(v),
                Err(Error::NoData) => None,
                Err(e) => return Err(e),
            };
            Ok(RbRecord {
                length: n,
                sequence: s,
                p0_true: p0,
                p0_measured,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RbResult { records })
}
