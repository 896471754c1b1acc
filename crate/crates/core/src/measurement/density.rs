//! Histograms, kernel density estimates and the KL divergence on `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of histogram bins on `[0, 1]`.
pub const DEFAULT_BINS: usize = 100;
/// Number of grid points of a [`kde`] estimate.
pub const KDE_GRID: usize = 1000;
/// Per-bin floor applied to the model histogram in [`kl_divergence`].
pub const KL_EPSILON: f64 = 1e-9;

/// Uniform-bin histogram on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn from_counts(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        if counts.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidArgument("histogram counts must be finite and >= 0".into()));
        }
        Ok(Self { counts })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.n_bins() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.n_bins()).map(|i| (i as f64 + 0.5) * w).collect()
    }

    /// Counts divided by their total. All zeros if the histogram is empty.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total();
        if total > 0.0 {
            self.counts.iter().map(|c| c / total).collect()
        } else {
            vec![0.0; self.n_bins()]
        }
    }
}

/// Bin index of `x` among `n` uniform bins on `[0, 1]`; values outside are clamped.
#[inline]
pub(crate) fn bin_of(x: f64, n: usize) -> usize {
    ((x * n as f64).floor().max(0.0) as usize).min(n - 1)
}

/// Histogram of `samples` with `n_bins` uniform bins on `[0, 1]`. Values at
/// exactly 1 fall in the last bin, values outside the interval are clamped.
pub fn histogram(samples: &[f64], n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be >= 1".into()));
    }
    let mut counts = vec![0.0; n_bins];
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite sample {x}")));
        }
        counts[bin_of(x, n_bins)] += 1.0;
    }
    Ok(Histogram { counts })
}

/// `Σ p ln(p / q)` over normalized histograms.
///
/// When `p` puts mass on a bin where `q` is (nearly) empty, `q` is floored at
/// [`KL_EPSILON`] per bin and renormalized, so the result is always finite.
/// Otherwise `q` is used as is, and identical histograms give exactly 0.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.n_bins() != q.n_bins() {
        return Err(Error::InvalidArgument(format!(
            "binning mismatch: {} vs {} bins",
            p.n_bins(),
            q.n_bins()
        )));
    }
    let pp = p.probabilities();
    if p.total() <= 0.0 {
        return Err(Error::InvalidArgument("empty reference histogram".into()));
    }
    Ok(kl_from_probabilities(&pp, &q.probabilities()))
}

pub(crate) fn kl_from_probabilities(p: &[f64], q: &[f64]) -> f64 {
    let needs_floor = p.iter().zip(q).any(|(&pi, &qi)| pi > 0.0 && qi < KL_EPSILON);
    let floor = if needs_floor { KL_EPSILON } else { 0.0 };
    let z: f64 = if needs_floor { q.iter().map(|&v| v.max(floor)).sum() } else { 1.0 };
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi * z / qi.max(floor)).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Density estimate sampled on a uniform grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl Density {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        let h = self.grid[1] - self.grid[0];
        let n = self.density.len();
        h * (self.density.iter().sum::<f64>() - 0.5 * (self.density[0] + self.density[n - 1]))
    }
}

/// Silverman's rule of thumb, `0.9 min(σ, IQR/1.34) n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Gaussian KDE on a [`KDE_GRID`]-point grid over `[0, 1]`, with the kernel
/// mass that falls outside reflected back at both boundaries (repeatedly, for
/// wide kernels).
///
/// The default bandwidth is [`silverman_bandwidth`]. Bandwidths are floored
/// at two grid spacings so that the grid resolves every kernel.
pub fn kde(samples: &[f64], bandwidth: Option<f64>) -> Result<Density> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("kde needs at least two samples".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    if let Some(b) = bandwidth {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {b}")));
        }
    }
    let spacing = 1.0 / (KDE_GRID - 1) as f64;
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(samples)).max(2.0 * spacing);
    let grid: Vec<f64> = (0..KDE_GRID).map(|i| i as f64 * spacing).collect();
    let mut density = vec![0.0; KDE_GRID];
    let reach = 8.0 * h;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    // Mirror images at every even integer, enough to cover the kernel reach.
    let images = ((reach + 1.0) / 2.0).ceil() as i64 + 1;
    for &x in samples {
        let x = x.clamp(0.0, 1.0);
        for centre in (-images..=images).flat_map(|m| [2.0 * m as f64 + x, 2.0 * m as f64 - x]) {
            let lo = ((centre - reach) / spacing).ceil().max(0.0);
            let hi = ((centre + reach) / spacing).floor().min((KDE_GRID - 1) as f64);
            if lo > hi {
                continue;
            }
            for i in lo as usize..=hi as usize {
                let u = (grid[i] - centre) / h;
                density[i] += (-0.5 * u * u).exp();
            }
        }
    }
    for d in &mut density {
        *d *= norm;
    }
    Ok(Density {
        grid,
        density,
        bandwidth: h,
    })
}
