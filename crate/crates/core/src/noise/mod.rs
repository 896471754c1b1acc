//! Realizations of the three amplitude-noise processes.
//!
//! * white noise (WN): `dX = γ dW`
//! * Ornstein-Uhlenbeck (OU): `dX = -κ X dt + γ dW`, started at `X_0 = 0`
//! * Brownian-motion noise (BM): `X_t = γ ∫_0^t W_s ds`, a finite-variation path
//!
//! A [`NoiseTrace`] stores increments `dX` together with the increments of the
//! quadratic variation `d[X]`, which is what the stochastic Schrödinger
//! integrator consumes. All three processes are sampled exactly on the fine
//! grid (no discretization bias), so ensemble moments match the closed forms
//! for any `fine_dt`.
//!
//! `γ` is in `s^-1/2` for WN and OU and in `s^-3/2` for BM.

pub mod io;
pub mod psd;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use psd::{psd, Psd, PsdOptions};

/// Default fine sampling step, 4 ns.
pub const DEFAULT_FINE_DT: f64 = 4e-9;
/// Default coarse (hardware) step, 1 µs.
pub const DEFAULT_COARSE_DT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NoiseKind {
    #[serde(alias = "wn", alias = "white")]
    Wn,
    #[serde(alias = "ou")]
    Ou,
    #[serde(alias = "bm")]
    Bm,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Wn, NoiseKind::Ou, NoiseKind::Bm];

    pub fn label(self) -> &'static str {
        match self {
            NoiseKind::Wn => "WN",
            NoiseKind::Ou => "OU",
            NoiseKind::Bm => "BM",
        }
    }

    /// Whether the process has non-zero quadratic variation.
    pub fn is_diffusive(self) -> bool {
        !matches!(self, NoiseKind::Bm)
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "WN" | "WHITE" => Ok(NoiseKind::Wn),
            "OU" => Ok(NoiseKind::Ou),
            "BM" => Ok(NoiseKind::Bm),
            other => Err(Error::InvalidArgument(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub kind: NoiseKind,
    pub gamma: f64,
    /// Damping rate in s^-1, only read for OU.
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_fine_dt")]
    pub fine_dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_fine_dt() -> f64 {
    DEFAULT_FINE_DT
}

/// Number of whole steps of `dt` in `span`, or `None` if `span` is not an
/// integer multiple of `dt` (relative tolerance 1e-9).
pub(crate) fn whole_steps(span: f64, dt: f64) -> Option<usize> {
    if !(dt > 0.0) || !(span >= 0.0) || !span.is_finite() {
        return None;
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() <= 1e-9 * span.max(dt) {
        Some(n as usize)
    } else {
        None
    }
}

impl NoiseParams {
    pub fn new(kind: NoiseKind, gamma: f64, kappa: f64, duration: f64, seed: u64) -> Self {
        Self {
            kind,
            gamma,
            kappa,
            fine_dt: DEFAULT_FINE_DT,
            duration,
            seed,
        }
    }

    pub fn with_fine_dt(mut self, fine_dt: f64) -> Self {
        self.fine_dt = fine_dt;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidArgument(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.fine_dt > 0.0) || !self.fine_dt.is_finite() {
            return Err(Error::InvalidArgument(format!("fine_dt must be > 0, got {}", self.fine_dt)));
        }
        if self.n_steps().is_none() {
            return Err(Error::InvalidArgument(format!(
                "duration {} is not an integer multiple of fine_dt {}",
                self.duration, self.fine_dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> Option<usize> {
        whole_steps(self.duration, self.fine_dt)
    }
}

/// A sampled noise realization on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrace {
    pub params: NoiseParams,
    /// Grid step of this trace; equals `params.fine_dt` unless coarsened.
    pub dt: f64,
    /// Increments of X, in radians.
    pub dx: Vec<f64>,
    /// Increments of the quadratic variation [X].
    pub dqv: Vec<f64>,
}

impl NoiseTrace {
    pub fn kind(&self) -> NoiseKind {
        self.params.kind
    }

    pub fn seed(&self) -> u64 {
        self.params.seed
    }

    pub fn len(&self) -> usize {
        self.dx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    /// `X_T - X_0` over the whole trace.
    pub fn displacement(&self) -> f64 {
        self.dx.iter().sum()
    }

    /// `X_t - X_0` over the first `steps` steps.
    pub fn displacement_until(&self, steps: usize) -> f64 {
        self.dx[..steps.min(self.len())].iter().sum()
    }

    /// Cumulative path `X_0 = 0, X_1, ..., X_n` (length `n + 1`).
    pub fn path(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut x = 0.0;
        out.push(x);
        for &d in &self.dx {
            x += d;
            out.push(x);
        }
        out
    }

    /// A trace of the same shape with every increment zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: NoiseParams { gamma: 0.0, ..self.params },
            dt: self.dt,
            dx: vec![0.0; self.len()],
            dqv: vec![0.0; self.len()],
        }
    }
}

/// `n` i.i.d. N(0, dt) samples, deterministic in `seed`.
pub fn wiener_increments(n: usize, dt: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one increment".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let mut rng = rng::stream(seed);
    let sd = dt.sqrt();
    Ok((0..n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Sample one realization of the process described by `params`.
pub fn generate_trace(params: &NoiseParams) -> Result<NoiseTrace> {
    params.validate()?;
    let n = params.n_steps().expect("validated");
    let dt = params.fine_dt;
    let g = params.gamma;
    let mut rng = rng::stream(params.seed);
    let mut dx = Vec::with_capacity(n);

    match params.kind {
        NoiseKind::Wn => {
            let sd = g * dt.sqrt();
            dx.extend((0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
        }
        NoiseKind::Ou => {
            // Exact transition of the linear SDE over one step.
            let k = params.kappa;
            let decay = (-k * dt).exp();
            let sd = g * crate::analytics::tau_kappa_or_t(k, dt).sqrt();
            let mut x = 0.0f64;
            for _ in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                let next = decay * x + sd * z;
                dx.push(next - x);
                x = next;
            }
        }
        NoiseKind::Bm => {
            // Joint exact draw of (ΔW, ∫ (W_s - W_k) ds) over each step:
            // Var ΔW = dt, Var I = dt^3/3, Cov = dt^2/2.
            let sqdt = dt.sqrt();
            let c = dt * sqdt;
            let inv_2sqrt3 = 0.5 / 3f64.sqrt();
            let mut w = 0.0f64;
            for _ in 0..n {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let integral = c * (0.5 * z1 + inv_2sqrt3 * z2);
                dx.push(g * (w * dt + integral));
                w += sqdt * z1;
            }
        }
    }

    let qv = if params.kind.is_diffusive() { g * g * dt } else { 0.0 };
    Ok(NoiseTrace {
        params: *params,
        dt,
        dqv: vec![qv; n],
        dx,
    })
}

/// Average the noise over blocks of `coarse_dt`.
///
/// Each coarse increment is the sum of the fine increments in its block, so
/// the coarse step holds the block-averaged noise rate and the path agrees
/// with the fine path at every coarse grid point. Quadratic-variation
/// increments are summed the same way.
pub fn coarsen_trace(trace: &NoiseTrace, coarse_dt: f64) -> Result<NoiseTrace> {
    let factor = whole_steps(coarse_dt, trace.dt)
        .filter(|&m| m >= 1)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "coarse_dt {coarse_dt} is not an integer multiple of {}",
                trace.dt
            ))
        })?;
    if !trace.len().is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "trace of {} steps does not split into blocks of {factor}",
            trace.len()
        )));
    }
    if factor == 1 {
        return Ok(trace.clone());
    }
    let sum_blocks = |v: &[f64]| -> Vec<f64> { v.chunks_exact(factor).map(|c| c.iter().sum()).collect() };
    Ok(NoiseTrace {
        params: trace.params,
        dt: trace.dt * factor as f64,
        dx: sum_blocks(&trace.dx),
        dqv: sum_blocks(&trace.dqv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var)
    }

    #[test]
    fn wiener_statistics() {
        let dt = 4e-9;
        let v = wiener_increments(1_000_000, dt, 1).unwrap();
        let (m, var) = mean_var(&v);
        let se = (dt / v.len() as f64).sqrt();
        assert!(m.abs() < 5.0 * se, "mean {m}");
        assert!((var / dt - 1.0).abs() < 0.01, "var ratio {}", var / dt);
    }

    #[test]
    fn wiener_rejects_degenerate_input() {
        assert!(wiener_increments(1, 0.0, 1).is_err());
        assert!(wiener_increments(0, 1.0, 1).is_err());
        assert!(wiener_increments(3, -1.0, 1).is_err());
    }

    #[test]
    fn wiener_is_deterministic() {
        let a = wiener_increments(1000, 1e-6, 42).unwrap();
        let b = wiener_increments(1000, 1e-6, 42).unwrap();
        assert_eq!(a, b);
        let c = wiener_increments(1000, 1e-6, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trace_shapes_and_quadratic_variation() {
        for kind in NoiseKind::ALL {
            let p = NoiseParams::new(kind, 6.0, 5e3, 200e-6, 3).with_fine_dt(1e-6);
            let t = generate_trace(&p).unwrap();
            assert_eq!(t.len(), 200);
            assert_eq!(t.dqv.len(), 200);
            assert!(t.dx.iter().all(|x| x.is_finite()));
            let qv: f64 = t.dqv.iter().sum();
            match kind {
                NoiseKind::Bm => assert!(t.dqv.iter().all(|&q| q == 0.0)),
                _ => {
                    assert!(t.dqv.iter().all(|&q| q == 36.0 * 1e-6));
                    assert!((qv - 36.0 * 200e-6).abs() < 1e-12 * qv);
                }
            }
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let base = NoiseParams::new(NoiseKind::Wn, 1.0, 0.0, 1e-6, 0).with_fine_dt(3e-7);
        assert!(generate_trace(&base).is_err());
        let neg = NoiseParams { gamma: -1.0, ..base.with_fine_dt(1e-7) };
        assert!(generate_trace(&neg).is_err());
        let negk = NoiseParams { kappa: -1.0, ..base.with_fine_dt(1e-7) };
        assert!(generate_trace(&negk).is_err());
    }

    #[test]
    fn ou_with_zero_kappa_is_white() {
        let p = NoiseParams::new(NoiseKind::Ou, 2.0, 0.0, 1e-4, 9).with_fine_dt(1e-6);
        let ou = generate_trace(&p).unwrap();
        let wn = generate_trace(&NoiseParams { kind: NoiseKind::Wn, ..p }).unwrap();
        for (a, b) in ou.dx.iter().zip(&wn.dx) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coarsen_identity_and_displacement() {
        let p = NoiseParams::new(NoiseKind::Wn, 6.0, 0.0, 200e-6, 11);
        let t = generate_trace(&p).unwrap();
        assert_eq!(coarsen_trace(&t, t.dt).unwrap(), t);

        let c = coarsen_trace(&t, 1e-6).unwrap();
        assert_eq!(c.len(), 200);
        assert!((c.dt - 1e-6).abs() < 1e-18);
        assert!((c.displacement() - t.displacement()).abs() < 1e-14);
        let qv_f: f64 = t.dqv.iter().sum();
        let qv_c: f64 = c.dqv.iter().sum();
        assert!((qv_f - qv_c).abs() < 1e-12 * qv_f);

        // Coarse path samples the fine path at block boundaries.
        let fine = t.path();
        let coarse = c.path();
        for (k, x) in coarse.iter().enumerate() {
            assert!((x - fine[k * 250]).abs() < 1e-14);
        }
    }

    #[test]
    fn coarsen_rejects_non_divisible_step() {
        let p = NoiseParams::new(NoiseKind::Wn, 6.0, 0.0, 1e-6, 1).with_fine_dt(1e-7);
        let t = generate_trace(&p).unwrap();
        assert!(coarsen_trace(&t, 3e-7).is_err());
        assert!(coarsen_trace(&t, 1.5e-7).is_err());
    }
}
