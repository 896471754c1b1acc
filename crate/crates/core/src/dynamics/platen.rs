//! Explicit weak second-order Platen scheme for `dY = a(Y) dt + b(Y) dW`.
//!
//! With `N ~ N(0, 1)` the standardized Wiener increment, one step is
//!
//! ```text
//! Ῡ  = Y + a(Y) Δ + b(Y) N √Δ
//! Ῡ± = Y + a(Y) Δ ± b(Y) √Δ
//! Y' = Y + ½ (a(Ῡ) + a(Y)) Δ
//!        + ¼ (b(Ῡ⁺) + b(Ῡ⁻) + 2 b(Y)) N √Δ
//!        + ¼ (b(Ῡ⁺) - b(Ῡ⁻)) (N² - 1) √Δ
//! ```
//!
//! For `b ≡ 0` this is Heun's method.

use std::ops::{Add, Mul, Sub};

use super::Spinor;
use crate::error::{Error, Result};

/// State vector the scheme can step.
pub trait SdeState: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn all_finite(&self) -> bool;
}

impl SdeState for f64 {
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl SdeState for Spinor {
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

#[inline]
fn checked<Y: SdeState>(v: Y, what: &str) -> Result<Y> {
    if v.all_finite() {
        Ok(v)
    } else {
        Err(Error::IntegrationDiverged(format!("non-finite {what} evaluation")))
    }
}

pub fn platen_step<Y, A, B>(y: Y, drift: A, diffusion: B, dt: f64, gaussian: f64) -> Result<Y>
where
    Y: SdeState,
    A: Fn(&Y) -> Y,
    B: Fn(&Y) -> Y,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let sq = dt.sqrt();
    let a0 = checked(drift(&y), "drift")?;
    let b0 = checked(diffusion(&y), "diffusion")?;

    let pred = y + a0 * dt;
    let bar = pred + b0 * (gaussian * sq);
    let plus = pred + b0 * sq;
    let minus = pred - b0 * sq;

    let a_bar = checked(drift(&bar), "drift")?;
    let b_plus = checked(diffusion(&plus), "diffusion")?;
    let b_minus = checked(diffusion(&minus), "diffusion")?;

    let next = y
        + (a_bar + a0) * (0.5 * dt)
        + (b_plus + b_minus + b0 * 2.0) * (0.25 * gaussian * sq)
        + (b_plus - b_minus) * (0.25 * (gaussian * gaussian - 1.0) * sq);
    checked(next, "step")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_diffusion_is_heun() {
        let a = |y: &f64| -3.0 * *y + 1.0;
        let b = |_: &f64| 0.0;
        let (y, h) = (0.7, 0.1);
        let heun = y + 0.5 * h * (a(&y) + a(&(y + h * a(&y))));
        for n in [0.0, 1.3, -2.0] {
            let got = platen_step(y, a, b, h, n).unwrap();
            assert!((got - heun).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gaussian_is_predictor_corrector_plus_correction() {
        // With N = 0 the stochastic terms reduce to -¼ (b(Ῡ⁺) - b(Ῡ⁻)) √Δ.
        let a = |y: &f64| 0.5 * *y;
        let b = |y: &f64| 0.2 * *y;
        let (y, h) = (1.0, 0.01);
        let pred = y + h * a(&y);
        let heun = y + 0.5 * h * (a(&y) + a(&pred));
        let corr = -0.25 * (b(&(pred + b(&y) * h.sqrt())) - b(&(pred - b(&y) * h.sqrt()))) * h.sqrt();
        let got = platen_step(y, a, b, h, 0.0).unwrap();
        assert!((got - (heun + corr)).abs() < 1e-15);
        // and for b ≡ 0 exactly the deterministic predictor-corrector step
        let got = platen_step(y, a, |_: &f64| 0.0, h, 0.0).unwrap();
        assert!((got - heun).abs() < 1e-15);
    }

    #[test]
    fn nan_is_reported() {
        let r = platen_step(1.0, |_: &f64| f64::NAN, |_: &f64| 0.0, 0.1, 0.0);
        assert!(matches!(r, Err(Error::IntegrationDiverged(_))));
        assert!(platen_step(1.0, |y: &f64| *y, |_: &f64| 0.0, 0.0, 0.0).is_err());
    }

    /// Weak error of E[Y_T] and E[Y_T²] for geometric Brownian motion,
    /// compared with the exact moments `e^{μT}` and `e^{(2μ+σ²)T}`.
    fn gbm_weak_errors(steps: usize, paths: usize, seed: u64) -> (f64, f64) {
        let (mu, sigma, t) = (1.0, 0.3, 1.0);
        let h = t / steps as f64;
        let mut rng = crate::rng::stream(seed);
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..paths {
            let mut y = 1.0;
            for _ in 0..steps {
                let n: f64 = rng.sample(StandardNormal);
                y = platen_step(y, |y: &f64| mu * y, |y: &f64| sigma * y, h, n).unwrap();
            }
            m1 += y;
            m2 += y * y;
        }
        let (m1, m2) = (m1 / paths as f64, m2 / paths as f64);
        ((m1 - (mu * t).exp()).abs(), (m2 - ((2.0 * mu + sigma * sigma) * t).exp()).abs())
    }

    #[test]
    fn weak_second_order_on_gbm() {
        let paths = 1_000_000;
        let (e1_coarse, e2_coarse) = gbm_weak_errors(2, paths, 1);
        let (e1_fine, e2_fine) = gbm_weak_errors(4, paths, 2);
        let r1 = e1_coarse / e1_fine;
        let r2 = e2_coarse / e2_fine;
        // First-order schemes give ratios near 2.
        assert!(r1 > 2.8 && r1 < 6.0, "mean error ratio {r1} ({e1_coarse} -> {e1_fine})");
        assert!(r2 > 2.8 && r2 < 6.0, "second moment error ratio {r2} ({e2_coarse} -> {e2_fine})");
    }
}
