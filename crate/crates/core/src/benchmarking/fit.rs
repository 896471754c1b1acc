//! Least-squares fit of the RB decay `P(n) = ½ + ½ (1 - d0) (1 - d)^n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbFit {
    pub d0: f64,
    pub d: f64,
    /// Clifford fidelity `1 - d/2`.
    pub f_c: f64,
    pub d0_se: f64,
    pub d_se: f64,
    pub f_c_se: f64,
    pub rss: f64,
    pub iterations: usize,
}

pub fn rb_model(n: f64, d0: f64, d: f64) -> f64 {
    0.5 + 0.5 * (1.0 - d0) * (1.0 - d).powf(n)
}

fn residuals(ns: &[f64], ys: &[f64], d0: f64, d: f64) -> f64 {
    ns.iter().zip(ys).map(|(&n, &y)| (y - rb_model(n, d0, d)).powi(2)).sum()
}

/// `(JᵀJ, Jᵀr)` for the residuals `r = y - model`.
fn normal_equations(ns: &[f64], ys: &[f64], d0: f64, d: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    for (&n, &y) in ns.iter().zip(ys) {
        let decay = (1.0 - d).powf(n);
        let j0 = -0.5 * decay;
        let j1 = if n == 0.0 { 0.0 } else { -0.5 * (1.0 - d0) * n * (1.0 - d).powf(n - 1.0) };
        let r = y - rb_model(n, d0, d);
        jtj[0][0] += j0 * j0;
        jtj[0][1] += j0 * j1;
        jtj[1][1] += j1 * j1;
        jtr[0] += j0 * r;
        jtr[1] += j1 * r;
    }
    jtj[1][0] = jtj[0][1];
    (jtj, jtr)
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    Some([(b[0] * a[1][1] - b[1] * a[0][1]) / det, (a[0][0] * b[1] - a[1][0] * b[0]) / det])
}

/// Starting point from a straight-line fit of `ln(2P - 1)` against `n`.
fn initial_guess(ns: &[f64], ys: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(ys)
        .filter(|(_, &y)| 2.0 * y - 1.0 > 1e-6)
        .map(|(&n, &y)| (n, (2.0 * y - 1.0).ln()))
        .collect();
    if pts.len() < 2 {
        return (0.0, 0.0);
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { (sxy / sxx).min(0.0) } else { 0.0 };
    let intercept = my - slope * mx;
    let d = (-slope.exp_m1()).clamp(0.0, 0.999);
    let d0 = (1.0 - intercept.exp()).clamp(-1.0, 1.0);
    (d0, d)
}

/// Levenberg-Marquardt fit with `d` confined to `[0, 1)`. Standard errors
/// come from `s² (JᵀJ)⁻¹` with `s² = RSS / (m - 2)`.
pub fn fit_rb_decay(lengths: &[f64], probabilities: &[f64]) -> Result<RbFit> {
    if lengths.len() != probabilities.len() {
        return Err(Error::InvalidArgument("lengths and probabilities differ in size".into()));
    }
    if lengths.iter().chain(probabilities).any(|v| !v.is_finite()) || lengths.iter().any(|&n| n < 0.0) {
        return Err(Error::InvalidArgument("lengths must be >= 0 and all values finite".into()));
    }
    let mut distinct: Vec<f64> = lengths.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidArgument("need at least three distinct lengths".into()));
    }

    let (mut d0, mut d) = initial_guess(lengths, probabilities);
    let mut rss = residuals(lengths, probabilities, d0, d);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 500 {
        iterations += 1;
        let (jtj, jtr) = normal_equations(lengths, probabilities, d0, d);
        let damped = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let Some([s0, s1]) = solve2(damped, jtr) else {
            break;
        };
        let t0 = d0 + s0;
        let t1 = (d + s1).clamp(0.0, 1.0 - 1e-12);
        let trial = residuals(lengths, probabilities, t0, t1);
        if trial <= rss {
            let small = (t0 - d0).abs() < 1e-14 && (t1 - d).abs() < 1e-16;
            let rel = (rss - trial) / rss.max(1e-300);
            d0 = t0;
            d = t1;
            rss = trial;
            lambda = (lambda * 0.3).max(1e-12);
            if small || rel < 1e-15 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    if !converged || !d0.is_finite() || !d.is_finite() {
        return Err(Error::FitFailed(format!(
            "no convergence after {iterations} iterations (d0 = {d0}, d = {d}, rss = {rss})"
        )));
    }

    let (jtj, _) = normal_equations(lengths, probabilities, d0, d);
    let m = lengths.len() as f64;
    let s2 = if m > 2.0 { rss / (m - 2.0) } else { 0.0 };
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let (d0_se, d_se) = if det > 0.0 {
        ((s2 * jtj[1][1] / det).sqrt(), (s2 * jtj[0][0] / det).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RbFit {
        d0,
        d,
        f_c: 1.0 - d / 2.0,
        d0_se,
        d_se,
        f_c_se: d_se / 2.0,
        rss,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Binomial, Distribution};

    pub(crate) const LENGTHS: [f64; 8] = [1.0, 100.0, 200.0, 400.0, 700.0, 1000.0, 1500.0, 2000.0];

    fn synthetic(d0: f64, d: f64, seqs: usize, shots: u64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = crate::rng::stream(seed);
        let mut ns = Vec::new();
        let mut ps = Vec::new();
        for &n in &LENGTHS {
            let p = rb_model(n, d0, d);
            let b = Binomial::new(shots, p).unwrap();
            for _ in 0..seqs {
                ns.push(n);
                ps.push(b.sample(&mut rng) as f64 / shots as f64);
            }
        }
        (ns, ps)
    }

    #[test]
    fn model_values() {
        assert!((rb_model(1.0, 0.0, 0.5) - 0.75).abs() < 1e-15);
        assert_eq!(rb_model(0.0, 0.0, 0.3), 1.0);
    }

    #[test]
    fn exact_data_is_recovered() {
        let ns = LENGTHS.to_vec();
        let ys: Vec<f64> = ns.iter().map(|&n| rb_model(n, 0.104, 6.94e-4)).collect();
        let fit = fit_rb_decay(&ns, &ys).unwrap();
        assert!((fit.d0 - 0.104).abs() < 1e-9);
        assert!((fit.d - 6.94e-4).abs() < 1e-12);
    }

    #[test]
    fn flat_data_gives_unit_fidelity() {
        let ns = LENGTHS.to_vec();
        let ys = vec![0.9; ns.len()];
        let fit = fit_rb_decay(&ns, &ys).unwrap();
        assert_eq!(fit.f_c, 1.0);
        assert!((fit.d0 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(fit_rb_decay(&[1.0, 1.0, 2.0], &[0.9, 0.9, 0.8]).is_err());
        assert!(fit_rb_decay(&[1.0, 2.0], &[0.9]).is_err());
    }

    #[test]
    fn planted_decay_at_reference_shot_counts() {
        let (ns, ps) = synthetic(0.104, 6.94e-4, 75, 75, 42);
        let fit = fit_rb_decay(&ns, &ps).unwrap();
        assert!((fit.f_c - 0.999653).abs() < 5e-5, "{fit:?}");
        assert!((fit.d0 - 0.104).abs() < 0.02, "{fit:?}");
    }

    #[test]
    fn standard_errors_are_calibrated() {
        let mut covered = 0;
        let mut rng = crate::rng::stream(9);
        for _ in 0..200 {
            let (ns, ps) = synthetic(0.104, 6.94e-4, 75, 75, rng.random());
            let fit = fit_rb_decay(&ns, &ps).unwrap();
            if (fit.d0 - 0.104).abs() <= 3.0 * fit.d0_se && (fit.d - 6.94e-4).abs() <= 3.0 * fit.d_se {
                covered += 1;
            }
        }
        assert!(covered >= 190, "{covered}/200");
    }
}
