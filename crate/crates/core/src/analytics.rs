//! Closed-form fidelity statistics for commuting amplitude noise.
//!
//! With a noise operator satisfying `S†S = I` the per-trajectory fidelity is
//! `F = cos²(ΔX) + S0² sin²(ΔX)` where `ΔX = X_t - X_0`. For the three
//! Gaussian processes `ΔX ~ N(0, v(t))` with accumulated variance
//!
//! | kind | v(t)          |
//! |------|---------------|
//! | WN   | γ² t          |
//! | OU   | γ² τ_κ(t)     |
//! | BM   | γ² t³ / 3     |
//!
//! and `E[cos 2ΔX] = e^{-2v}`, `Var(cos 2ΔX) = ½(1 - e^{-4v})²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub kind: NoiseKind,
    pub gamma: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub s0: f64,
}

impl MomentSpec {
    pub fn new(kind: NoiseKind, gamma: f64, kappa: f64, s0: f64) -> Result<Self> {
        let spec = Self { kind, gamma, kappa, s0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("|S0| must be <= 1, got {}", self.s0)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidArgument(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        Ok(())
    }

    /// Variance of `X_t - X_0`.
    pub fn displacement_variance(&self, t: f64) -> f64 {
        let g2 = self.gamma * self.gamma;
        match self.kind {
            NoiseKind::Wn => g2 * t,
            NoiseKind::Ou => g2 * tau_kappa_or_t(self.kappa, t),
            NoiseKind::Bm => g2 * t * t * t / 3.0,
        }
    }
}

/// `cos²(dx) + S0² sin²(dx)`.
pub fn fidelity_from_displacement(s0: f64, dx: f64) -> f64 {
    let c = dx.cos();
    let s = dx.sin();
    c * c + s0 * s0 * s * s
}

/// Effective accumulation time of OU noise, `(1 - e^{-2κt}) / 2κ`.
pub fn tau_kappa(kappa: f64, t: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be > 0, got {kappa}")));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }
    Ok(-(-2.0 * kappa * t).exp_m1() / (2.0 * kappa))
}

/// [`tau_kappa`] extended continuously to `κ = 0`, where it equals `t`.
pub(crate) fn tau_kappa_or_t(kappa: f64, t: f64) -> f64 {
    if kappa > 0.0 {
        -(-2.0 * kappa * t).exp_m1() / (2.0 * kappa)
    } else {
        t
    }
}

pub fn mean_fidelity(spec: &MomentSpec, t: f64) -> f64 {
    let s2 = spec.s0 * spec.s0;
    let v = spec.displacement_variance(t);
    0.5 * (1.0 + s2) + 0.5 * (1.0 - s2) * (-2.0 * v).exp()
}

pub fn var_fidelity(spec: &MomentSpec, t: f64) -> f64 {
    let s2 = spec.s0 * spec.s0;
    let v = spec.displacement_variance(t);
    let one_minus = -(-4.0 * v).exp_m1();
    (1.0 - s2).powi(2) / 8.0 * one_minus * one_minus
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBand {
    pub mean: f64,
    /// One standard error of a sample mean over `n` realizations.
    pub band: f64,
}

pub fn sample_moment_bands(spec: &MomentSpec, t: f64, n_realizations: usize) -> Result<MomentBand> {
    if n_realizations < 2 {
        return Err(Error::InvalidArgument("need at least two realizations".into()));
    }
    Ok(MomentBand {
        mean: mean_fidelity(spec, t),
        band: (var_fidelity(spec, t) / n_realizations as f64).sqrt(),
    })
}

/// Sample mean and variance with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub var: f64,
    pub se_mean: f64,
    /// Standard error of `var`, from the sample fourth central moment.
    pub se_var: f64,
}

impl SampleStats {
    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }

    /// Delta-method standard error of the sample standard deviation.
    pub fn se_std(&self) -> f64 {
        if self.var > 0.0 {
            self.se_var / (2.0 * self.var.sqrt())
        } else {
            0.0
        }
    }
}

pub fn sample_stats(xs: &[f64]) -> Result<SampleStats> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let var_of_var = ((m4 - (n - 3.0) / (n - 1.0) * var * var) / n).max(0.0);
    Ok(SampleStats {
        n: xs.len(),
        mean,
        var,
        se_mean: (var / n).sqrt(),
        se_var: var_of_var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn spec(kind: NoiseKind, gamma: f64, kappa: f64, s0: f64) -> MomentSpec {
        MomentSpec::new(kind, gamma, kappa, s0).unwrap()
    }

    #[test]
    fn displacement_fidelity_cases() {
        assert_eq!(fidelity_from_displacement(0.3, 0.0), 1.0);
        assert!(fidelity_from_displacement(0.0, FRAC_PI_2).abs() < 1e-15);
        for dx in [0.1, 1.0, 2.5, -4.0] {
            assert!((fidelity_from_displacement(1.0, dx) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_stats_of_gaussian_draws() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::rng::stream(2);
        let xs: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let st = sample_stats(&xs).unwrap();
        assert!(st.mean.abs() < 4.0 * st.se_mean);
        assert!((st.var - 1.0).abs() < 4.0 * st.se_var);
        // Var of the sample variance of N(0,1) is 2/(n-1).
        assert!((st.se_var - (2.0f64 / 199_999.0).sqrt()).abs() < 1e-4);
        assert!(sample_stats(&[1.0]).is_err());
    }

    #[test]
    fn tau_kappa_values() {
        assert_eq!(tau_kappa(5e3, 0.0).unwrap(), 0.0);
        assert!((tau_kappa(5e3, 10e-3).unwrap() - 1e-4).abs() < 1e-12);
        // (1 - e^-2) / 1e4 evaluated to 20 digits: 8.6466471676338730e-5
        assert!((tau_kappa(5e3, 200e-6).unwrap() - 8.646_647_167_633_873e-5).abs() < 1e-18);
        assert!(tau_kappa(0.0, 1.0).is_err());
        assert!(tau_kappa(-1.0, 1.0).is_err());
    }

    #[test]
    fn tau_kappa_small_argument_is_accurate() {
        // κt = 1e-12: series t(1 - κt + ...) to full precision.
        let t = 1e-9;
        let k = 1e-3;
        let got = tau_kappa(k, t).unwrap();
        assert!((got / (t * (1.0 - k * t)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mean_fidelity_reference_values() {
        let wn = spec(NoiseKind::Wn, 6.0, 0.0, 0.0);
        assert!((mean_fidelity(&wn, 200e-6) - 0.992_852).abs() < 5e-7);
        let ou = spec(NoiseKind::Ou, 6.0, 5e3, 0.0);
        assert!((mean_fidelity(&ou, 200e-6) - 0.996_897).abs() < 5e-7);
        for s in [wn, ou, spec(NoiseKind::Bm, 4e5, 0.0, 0.4)] {
            assert_eq!(mean_fidelity(&s, 0.0), 1.0);
            assert_eq!(var_fidelity(&s, 0.0), 0.0);
        }
    }

    #[test]
    fn var_fidelity_reference_values() {
        let wn = spec(NoiseKind::Wn, 6.0, 0.0, 0.0);
        let v = var_fidelity(&wn, 200e-6);
        assert!((v - 1.0074e-4).abs() < 5e-8, "{v}");
        assert!((v.sqrt() - 0.01004).abs() < 5e-6);
        let sat = spec(NoiseKind::Wn, 6.0, 0.0, 1.0);
        assert_eq!(var_fidelity(&sat, 1e-3), 0.0);
    }

    #[test]
    fn moment_bands() {
        let wn = spec(NoiseKind::Wn, 6.0, 0.0, 0.0);
        let b = sample_moment_bands(&wn, 200e-6, 75).unwrap();
        assert!((b.band - 1.159e-3).abs() < 5e-7, "{}", b.band);
        let big = sample_moment_bands(&wn, 200e-6, 100_000_000).unwrap();
        assert!(big.band < 2e-6);
        assert_eq!(sample_moment_bands(&wn, 0.0, 10).unwrap().band, 0.0);
        assert!(sample_moment_bands(&wn, 1e-4, 1).is_err());
    }

    #[test]
    fn invalid_s0_is_rejected() {
        assert!(MomentSpec::new(NoiseKind::Wn, 1.0, 0.0, 1.5).is_err());
    }

    /// `E[cos αZ]` for `Z ~ N(0, v)` by the moment series
    /// `Σ (-1)^n α^{2n} E[Z^{2n}] / (2n)!` with `E[Z^{2n}] = v^n (2n-1)!!`.
    fn cos_expectation_series(alpha: f64, v: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 0..60 {
            sum += term;
            let n = n as f64;
            // ratio of consecutive terms: -α² v (2n+1) / ((2n+1)(2n+2))
            term *= -alpha * alpha * v / (2.0 * n + 2.0);
        }
        sum
    }

    #[test]
    fn mean_matches_moment_series() {
        for (kind, gamma, kappa) in [
            (NoiseKind::Wn, 6.0, 0.0),
            (NoiseKind::Ou, 6.0, 5e3),
            (NoiseKind::Ou, 20.0, 1e3),
            (NoiseKind::Bm, 4.2e5, 0.0),
        ] {
            let s = spec(kind, gamma, kappa, 0.0);
            for t in [10e-6, 50e-6, 120e-6, 200e-6] {
                // independent variance of X_t - X_0
                let v = match kind {
                    NoiseKind::Wn => gamma * gamma * t,
                    NoiseKind::Ou => gamma * gamma * (1.0 - (-2.0 * kappa * t).exp()) / (2.0 * kappa),
                    NoiseKind::Bm => gamma * gamma * t.powi(3) / 3.0,
                };
                let oracle = 0.5 + 0.5 * cos_expectation_series(2.0, v);
                assert!((mean_fidelity(&s, t) - oracle).abs() < 1e-12, "{kind} t={t}");
            }
        }
    }

    proptest! {
        #[test]
        fn moment_bounds_hold(
            k in 0usize..3,
            gamma in 0.0f64..50.0,
            kappa in 0.0f64..1e5,
            s0 in -1.0f64..1.0,
            t in 0.0f64..5e-3,
        ) {
            let kind = NoiseKind::ALL[k];
            let gamma = if kind == NoiseKind::Bm { gamma * 1e4 } else { gamma };
            let s = spec(kind, gamma, kappa, s0);
            let m = mean_fidelity(&s, t);
            let v = var_fidelity(&s, t);
            let s2 = s0 * s0;
            prop_assert!(m <= 1.0 + 1e-15);
            prop_assert!(m >= 0.5 * (1.0 + s2) - 1e-15);
            prop_assert!(v >= 0.0);
            prop_assert!(v <= (1.0 - s2).powi(2) / 8.0 + 1e-15);
        }

        #[test]
        fn mean_is_non_increasing_in_time(
            k in 0usize..3,
            gamma in 0.1f64..30.0,
            kappa in 1.0f64..1e5,
            t in 0.0f64..1e-3,
            dt in 0.0f64..1e-3,
        ) {
            let kind = NoiseKind::ALL[k];
            let gamma = if kind == NoiseKind::Bm { gamma * 1e4 } else { gamma };
            let s = spec(kind, gamma, kappa, 0.0);
            prop_assert!(mean_fidelity(&s, t + dt) <= mean_fidelity(&s, t) + 1e-15);
        }
    }
}
