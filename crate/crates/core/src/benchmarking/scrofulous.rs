//! SCROFULOUS three-pulse composite rotations, robust to pulse-length
//! (amplitude) errors to first order.
//!
//! For a target rotation `θ` about phase `φ`:
//!
//! ```text
//! θ1 = θ3 = arcsinc(2 cos(θ/2) / π)
//! φ1 = φ3 = arccos(-π cos θ1 / (2 θ1 sin(θ/2)))
//! θ2 = π,  φ2 = φ1 - arccos(-π / (2 θ1))
//! ```
//!
//! with all phases offset by `φ`. Real solutions exist for `θ` up to about
//! 220°.

use std::f64::consts::PI;

use super::clifford::{compose, Rotation};
use crate::error::{Error, Result};

const SOLVER_TOL: f64 = 1e-12;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Inverse of `sin x / x` on the branch `x ∈ [0, x*]`, where `x* ≈ 4.4934` is
/// the first minimum of sinc.
pub fn arcsinc(y: f64) -> Result<f64> {
    const X_MIN: f64 = 4.493_409_457_909_064;
    let y_min = sinc(X_MIN);
    if !(y_min..=1.0).contains(&y) {
        return Err(Error::Construction(format!("arcsinc({y}) has no solution on the principal branch")));
    }
    let (mut lo, mut hi) = (0.0, X_MIN);
    let mut x = if y > 0.0 { (6.0 * (1.0 - y)).sqrt().min(PI) } else { 0.5 * (PI + X_MIN) };
    for _ in 0..200 {
        let f = sinc(x) - y;
        if f.abs() < SOLVER_TOL {
            return Ok(x);
        }
        // sinc is decreasing on the branch.
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let df = if x.abs() < 1e-8 { -x / 3.0 } else { (x * x.cos() - x.sin()) / (x * x) };
        let step = if df != 0.0 { x - f / df } else { f64::NAN };
        x = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    if (sinc(x) - y).abs() < 1e-10 {
        Ok(x)
    } else {
        Err(Error::Construction(format!("arcsinc({y}) did not converge")))
    }
}

/// The three rotations replacing `θ` about `phase`, in application order.
pub fn scrofulous(target_angle: f64, target_phase: f64) -> Result<[Rotation; 3]> {
    if !(target_angle > 0.0 && target_angle < 2.0 * PI) {
        return Err(Error::InvalidArgument(format!("target angle {target_angle} outside (0, 2π)")));
    }
    let theta1 = arcsinc(2.0 * (0.5 * target_angle).cos() / PI)?;
    let c1 = -PI * theta1.cos() / (2.0 * theta1 * (0.5 * target_angle).sin());
    let c2 = -PI / (2.0 * theta1);
    if c1.abs() > 1.0 || c2.abs() > 1.0 {
        return Err(Error::Construction(format!("no real phase solution for θ = {target_angle}")));
    }
    let phi1 = c1.acos();
    let phi2 = phi1 - c2.acos();
    let pulses = [
        Rotation::new(theta1, target_phase + phi1),
        Rotation::new(PI, target_phase + phi2),
        Rotation::new(theta1, target_phase + phi1),
    ];
    let target = Rotation::new(target_angle, target_phase).unitary();
    if !compose(&pulses).eq_up_to_phase(&target, 1e-8) {
        return Err(Error::Construction(format!("composite for θ = {target_angle} misses the target")));
    }
    Ok(pulses)
}
