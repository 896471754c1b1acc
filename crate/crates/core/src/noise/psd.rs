//! Welch power spectral density of the noise rate `dX/dt`.
//!
//! Each trace is split into segments (50 % overlap), the segment mean is
//! removed, a Hann window applied, and the one-sided periodograms averaged
//! over segments and over the ensemble. Power is in rad² s⁻² Hz⁻¹.
//!
//! For the three processes the rate spectra are flat (WN), high-pass
//! `γ² ω² / (κ² + ω²)` with its corner at `κ / 2π` (OU), and `γ² / ω²` (BM).

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::NoiseTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdOptions {
    /// Segment length in samples; clipped to the trace length.
    pub segment_len: usize,
}

impl Default for PsdOptions {
    fn default() -> Self {
        Self { segment_len: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub freq: Vec<f64>,
    pub power: Vec<f64>,
    /// Number of periodograms averaged.
    pub n_averaged: usize,
}

pub fn psd(traces: &[NoiseTrace], opts: PsdOptions) -> Result<Psd> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("psd needs at least one trace".into()))?;
    let len = first.len();
    let dt = first.dt;
    if traces.iter().any(|t| t.len() != len || t.dt != dt) {
        return Err(Error::InvalidArgument("traces differ in length or dt".into()));
    }
    if len < 2 {
        return Err(Error::InvalidArgument("traces too short for a spectrum".into()));
    }

    let seg = opts.segment_len.min(len).max(2);
    let hop = (seg / 2).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fs = 1.0 / dt;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut count = 0usize;
    let mut buf = vec![Complex64::default(); seg];

    for trace in traces {
        let mut start = 0;
        while start + seg <= len {
            let chunk = &trace.dx[start..start + seg];
            let mean = chunk.iter().sum::<f64>() / seg as f64;
            for ((b, &x), &w) in buf.iter_mut().zip(chunk).zip(&window) {
                *b = Complex64::new((x - mean) / dt * w, 0.0);
            }
            fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            count += 1;
            start += hop;
        }
    }

    let scale = 1.0 / (fs * win_power * count as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let one_sided = if k == 0 || (seg % 2 == 0 && k == seg / 2) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let freq = (0..n_bins).map(|k| k as f64 * fs / seg as f64).collect();
    Ok(Psd {
        freq,
        power,
        n_averaged: count,
    })
}

impl Psd {
    fn band(&self, f_lo: f64, f_hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.freq
            .iter()
            .zip(&self.power)
            .filter(move |(f, p)| **f >= f_lo && **f <= f_hi && **p > 0.0)
            .map(|(&f, &p)| (f, p))
    }

    /// Least-squares slope of `log10 P` against `log10 f` over `[f_lo, f_hi]`.
    pub fn loglog_slope(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self.band(f_lo, f_hi).map(|(f, p)| (f.log10(), p.log10())).collect();
        if pts.len() < 2 {
            return Err(Error::FitFailed("fewer than two bins in band".into()));
        }
        Ok(linear_fit(&pts).1)
    }

    /// Fit `A ω² / (κ² + ω²)` in log space over `[f_lo, f_hi]` and return
    /// the corner frequency `κ / 2π` in Hz.
    pub fn highpass_corner(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self.band(f_lo, f_hi).map(|(f, p)| (2.0 * PI * f, p.ln())).collect();
        if pts.len() < 3 {
            return Err(Error::FitFailed("fewer than three bins in band".into()));
        }
        // For fixed κ the optimal log-amplitude is the mean residual.
        let cost = |ln_k: f64| {
            let k2 = (2.0 * ln_k).exp();
            let resid: Vec<f64> = pts.iter().map(|&(w, lp)| lp - (w * w / (k2 + w * w)).ln()).collect();
            let m = resid.iter().sum::<f64>() / resid.len() as f64;
            resid.iter().map(|r| (r - m).powi(2)).sum::<f64>()
        };
        let lo = (2.0 * PI * f_lo / 10.0).ln();
        let hi = (2.0 * PI * f_hi * 10.0).ln();
        let ln_k = golden_min(cost, lo, hi, 1e-10);
        Ok(ln_k.exp() / (2.0 * PI))
    }
}

/// Ordinary least squares `y = a + b x`, returns `(a, b)`.
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{generate_trace, NoiseKind, NoiseParams};

    #[test]
    fn empty_input_is_rejected() {
        assert!(psd(&[], PsdOptions::default()).is_err());
    }

    #[test]
    fn white_noise_level_matches_two_sided_density() {
        // Rate γ ξ has one-sided density 2 γ².
        let p = NoiseParams::new(NoiseKind::Wn, 3.0, 0.0, 4e-9 * 65536.0, 5);
        let traces: Vec<_> = (0..4).map(|i| generate_trace(&p.with_seed(i)).unwrap()).collect();
        let s = psd(&traces, PsdOptions::default()).unwrap();
        let mid: Vec<f64> = s.band(1e6, 1e8).map(|(_, p)| p).collect();
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!((mean / 18.0 - 1.0).abs() < 0.05, "level {mean}");
        assert!(s.freq.last().unwrap() - 1.0 / (2.0 * 4e-9) < 1.0);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_min(|x| (x - 1.3).powi(2), -5.0, 5.0, 1e-12);
        assert!((x - 1.3).abs() < 1e-8);
    }
}
