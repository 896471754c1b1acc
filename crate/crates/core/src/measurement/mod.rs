//! Readout of a qubit array: atom loading, projective measurement and SPAM
//! bit flips, plus the density tools used to compare fidelity distributions.
//!
//! Each measurement `l = (site j, repetition k)` of realization `i` combines
//! four Bernoulli draws: presence `B(p_c)`, outcome `B(F_ij)`, and the flips
//! `B(p01)`, `B(p10)`. Absent atoms are discarded. The measured fidelity is
//! the fraction of valid measurements that read the target bit, with
//! expectation (for target bit 1)
//!
//! ```text
//! E[F_m] = F (1 - p10) + (1 - F) p01
//! ```

mod density;
mod spam;

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseKind;
use crate::rng::{derive_seed, stream, tag};

pub use density::{
    histogram, kde, kl_divergence, silverman_bandwidth, Density, Histogram, DEFAULT_BINS, KDE_GRID, KL_EPSILON,
};
pub use spam::{fit_spam, fit_spam_channels, pooled_samples, zero_noise_generator, SpamChannel, SpamFit, SpamFitOptions};

/// Coefficient of variation of the per-site Rabi factors.
pub const DEFAULT_SITE_CV: f64 = 0.0014;
const SITE_SCALE_SEED: u64 = 0x5173_5ca1_e000_0001;

/// Which computational state counts as success.
///
/// The ideal final state is read as bit 1 for `One` (the usual convention)
/// and as bit 0 for `Zero`; the flip probabilities swap roles accordingly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetBit {
    #[default]
    One,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayModel {
    pub n_sites: usize,
    pub n_meas: usize,
    /// Presence (loading) probability.
    pub p_c: f64,
    /// P(read 1 | truth 0).
    pub p01: f64,
    /// P(read 0 | truth 1).
    pub p10: f64,
    pub site_scales: Vec<f64>,
    #[serde(default)]
    pub target: TargetBit,
}

impl Default for ArrayModel {
    fn default() -> Self {
        Self {
            n_sites: 100,
            n_meas: 300,
            p_c: 0.5,
            p01: 0.04,
            p10: 0.04,
            site_scales: default_site_scales(100, DEFAULT_SITE_CV),
            target: TargetBit::One,
        }
    }
}

/// Deterministic Gaussian site factors with the given coefficient of
/// variation, rescaled to mean exactly 1.
pub fn default_site_scales(n_sites: usize, cv: f64) -> Vec<f64> {
    if n_sites == 0 {
        return Vec::new();
    }
    let mut rng = stream(SITE_SCALE_SEED);
    let raw: Vec<f64> = (0..n_sites)
        .map(|_| 1.0 + cv * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mean = raw.iter().sum::<f64>() / n_sites as f64;
    raw.into_iter().map(|x| x / mean).collect()
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
    }
    Ok(())
}

impl ArrayModel {
    /// Model with uniform site factors.
    pub fn uniform(n_sites: usize, n_meas: usize, p_c: f64, p01: f64, p10: f64) -> Result<Self> {
        let m = Self {
            n_sites,
            n_meas,
            p_c,
            p01,
            p10,
            site_scales: vec![1.0; n_sites],
            target: TargetBit::One,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_spam(mut self, p01: f64, p10: f64) -> Self {
        self.p01 = p01;
        self.p10 = p10;
        self
    }

    pub fn with_target(mut self, target: TargetBit) -> Self {
        self.target = target;
        self
    }

    /// Replace the site factors with [`default_site_scales`] at `cv`.
    pub fn with_site_cv(mut self, cv: f64) -> Self {
        self.site_scales = default_site_scales(self.n_sites, cv);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("p_c", self.p_c)?;
        check_probability("p01", self.p01)?;
        check_probability("p10", self.p10)?;
        if self.n_sites * self.n_meas == 0 {
            return Err(Error::InvalidArgument("n_sites * n_meas must be >= 1".into()));
        }
        if self.site_scales.len() != self.n_sites {
            return Err(Error::InvalidArgument(format!(
                "{} site scales for {} sites",
                self.site_scales.len(),
                self.n_sites
            )));
        }
        if self.site_scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("site scales must be finite and > 0".into()));
        }
        let mean = self.site_scales.iter().sum::<f64>() / self.n_sites as f64;
        if (mean - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("site scales have mean {mean}, expected 1")));
        }
        Ok(())
    }

    /// Success probability of one valid measurement of a site with fidelity `f`.
    pub fn success_probability(&self, f: f64) -> f64 {
        match self.target {
            TargetBit::One => f * (1.0 - self.p10) + (1.0 - f) * self.p01,
            TargetBit::Zero => f * (1.0 - self.p01) + (1.0 - f) * self.p10,
        }
    }
}

fn check_row(f_true: &[f64], model: &ArrayModel) -> Result<()> {
    model.validate()?;
    if f_true.len() != model.n_sites {
        return Err(Error::InvalidArgument(format!(
            "fidelity row has {} entries for {} sites",
            f_true.len(),
            model.n_sites
        )));
    }
    if f_true.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument("fidelities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Shot-by-shot simulation of one realization's measured fidelity.
///
/// Returns [`Error::NoData`] if no atom was present in any measurement.
pub fn simulate_measurements(f_true: &[f64], model: &ArrayModel, seed: u64) -> Result<f64> {
    check_row(f_true, model)?;
    let mut rng = stream(seed);
    let mut valid = 0u64;
    let mut success = 0u64;
    let target_is_one = model.target == TargetBit::One;
    for &f in f_true {
        for _ in 0..model.n_meas {
            let present = rng.random::<f64>() < model.p_c;
            let correct = rng.random::<f64>() < f;
            let flip_u = rng.random::<f64>();
            if !present {
                continue;
            }
            let truth_one = correct == target_is_one;
            let flipped = if truth_one { flip_u < model.p10 } else { flip_u < model.p01 };
            let read_one = truth_one != flipped;
            valid += 1;
            if read_one == target_is_one {
                success += 1;
            }
        }
    }
    if valid == 0 {
        return Err(Error::NoData);
    }
    Ok(success as f64 / valid as f64)
}

/// Fast approximation of [`simulate_measurements`] that pools all sites at
/// their mean fidelity: two binomial draws per realization. Exact in
/// distribution when every site has the same fidelity.
pub fn simulate_measurements_pooled<R: Rng + ?Sized>(f_true: &[f64], model: &ArrayModel, rng: &mut R) -> Result<f64> {
    check_row(f_true, model)?;
    let mean_f = f_true.iter().sum::<f64>() / f_true.len() as f64;
    pooled_draw(mean_f, model, rng)
}

pub(crate) fn pooled_draw<R: Rng + ?Sized>(mean_f: f64, model: &ArrayModel, rng: &mut R) -> Result<f64> {
    let shots = (model.n_sites * model.n_meas) as u64;
    let valid = Binomial::new(shots, model.p_c)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng);
    if valid == 0 {
        return Err(Error::NoData);
    }
    let q = model.success_probability(mean_f).clamp(0.0, 1.0);
    let success = Binomial::new(valid, q)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng);
    Ok(success as f64 / valid as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub kind: Option<NoiseKind>,
    pub gamma: f64,
    pub kappa: f64,
    /// Noise duration in seconds.
    pub t: f64,
    pub seed: u64,
}

/// Per-realization, per-site fidelities and the measured fidelity of each
/// realization. `f_measured[i]` is `None` when every measurement of
/// realization `i` was discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEnsemble {
    pub realizations: Vec<u64>,
    pub f_true: Vec<Vec<f64>>,
    pub f_measured: Vec<Option<f64>>,
    pub meta: EnsembleMeta,
}

/// Seed of the measurement stream of one realization.
pub fn measurement_seed(master: u64, realization: u64) -> u64 {
    derive_seed(master, &[tag("measure"), realization])
}

impl FidelityEnsemble {
    /// Measure every row with [`simulate_measurements`], seeding realization
    /// `id` with [`measurement_seed`]`(meta.seed, id)`.
    pub fn measure(realizations: Vec<u64>, f_true: Vec<Vec<f64>>, model: &ArrayModel, meta: EnsembleMeta) -> Result<Self> {
        if realizations.len() != f_true.len() {
            return Err(Error::InvalidArgument("one realization id per row required".into()));
        }
        use rayon::prelude::*;
        let f_measured = realizations
            .par_iter()
            .zip(&f_true)
            .map(|(&id, row)| match simulate_measurements(row, model, measurement_seed(meta.seed, id)) {
                Ok(v) => Ok(Some(v)),
                Err(Error::NoData) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            realizations,
            f_true,
            f_measured,
            meta,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations.len() != self.f_true.len() || self.f_true.len() != self.f_measured.len() {
            return Err(Error::InvalidArgument("ensemble dimensions disagree".into()));
        }
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        if !self.f_true.iter().flatten().all(in_unit) || !self.f_measured.iter().flatten().all(in_unit) {
            return Err(Error::InvalidArgument("fidelities must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Measured fidelities of the realizations that produced data.
    pub fn measured(&self) -> Vec<f64> {
        self.f_measured.iter().flatten().copied().collect()
    }

    pub fn n_missing(&self) -> usize {
        self.f_measured.iter().filter(|v| v.is_none()).count()
    }

    /// Site-averaged true fidelity of every realization.
    pub fn site_means(&self) -> Vec<f64> {
        self.f_true
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len().max(1) as f64)
            .collect()
    }

    /// Long-form CSV `realization,site,f_true`.
    pub fn write_long_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["realization", "site", "f_true"])?;
        for (id, row) in self.realizations.iter().zip(&self.f_true) {
            for (j, f) in row.iter().enumerate() {
                w.write_record([id.to_string(), j.to_string(), format!("{f:?}")])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// JSON summary with measured fidelities and metadata.
    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let summary = serde_json::json!({
            "realizations": self.realizations,
            "f_measured": self.f_measured,
            "n_missing": self.n_missing(),
            "meta": self.meta,
        });
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(n_sites: usize, n_meas: usize, p_c: f64, p01: f64, p10: f64) -> ArrayModel {
        ArrayModel::uniform(n_sites, n_meas, p_c, p01, p10).unwrap()
    }

    #[test]
    fn default_model_is_valid() {
        let m = ArrayModel::default();
        m.validate().unwrap();
        let mean = m.site_scales.iter().sum::<f64>() / 100.0;
        let sd = (m.site_scales.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!((mean - 1.0).abs() < 1e-12);
        assert!(sd > 0.0007 && sd < 0.0021, "{sd}");
    }

    #[test]
    fn validation_errors() {
        assert!(ArrayModel::uniform(10, 10, 1.5, 0.0, 0.0).is_err());
        assert!(ArrayModel::uniform(0, 10, 0.5, 0.0, 0.0).is_err());
        let mut m = model(3, 1, 1.0, 0.0, 0.0);
        m.site_scales = vec![1.0, 1.0, 1.1];
        assert!(m.validate().is_err());
        assert!(simulate_measurements(&[1.0, 1.0], &model(3, 1, 1.0, 0.0, 0.0), 0).is_err());
    }

    #[test]
    fn readout_error_only() {
        // 10^6 shots at F = 1: expectation 1 - p10.
        let m = model(1000, 1000, 1.0, 0.3, 0.04);
        let fm = simulate_measurements(&vec![1.0; 1000], &m, 5).unwrap();
        let se = (0.04f64 * 0.96 / 1e6).sqrt();
        assert!((fm - 0.96).abs() < 3.0 * se, "{fm}");
    }

    #[test]
    fn no_flips_gives_bernoulli_mean() {
        let m = model(4, 5000, 1.0, 0.0, 0.0);
        let f = [0.2, 0.5, 0.7, 0.9];
        let fm = simulate_measurements(&f, &m, 1).unwrap();
        let mean: f64 = f.iter().sum::<f64>() / 4.0;
        let var: f64 = f.iter().map(|p| p * (1.0 - p)).sum::<f64>() / 4.0 / 20000.0;
        assert!((fm - mean).abs() < 3.0 * var.sqrt());
    }

    #[test]
    fn absent_atoms_give_no_data() {
        let m = model(5, 5, 0.0, 0.0, 0.0);
        assert!(matches!(simulate_measurements(&[1.0; 5], &m, 0), Err(Error::NoData)));
        let mut rng = stream(0);
        assert!(matches!(simulate_measurements_pooled(&[1.0; 5], &m, &mut rng), Err(Error::NoData)));
    }

    #[test]
    fn deterministic_per_seed() {
        let m = model(10, 30, 0.5, 0.04, 0.04);
        let f = vec![0.95; 10];
        assert_eq!(simulate_measurements(&f, &m, 9).unwrap(), simulate_measurements(&f, &m, 9).unwrap());
        assert_ne!(simulate_measurements(&f, &m, 9).unwrap(), simulate_measurements(&f, &m, 10).unwrap());
    }

    #[test]
    fn target_zero_swaps_flip_roles() {
        let m = model(1000, 1000, 1.0, 0.07, 0.01).with_target(TargetBit::Zero);
        assert!((m.success_probability(1.0) - 0.93).abs() < 1e-15);
        let fm = simulate_measurements(&vec![1.0; 1000], &m, 2).unwrap();
        assert!((fm - 0.93).abs() < 3.0 * (0.07f64 * 0.93 / 1e6).sqrt());
    }

    fn sample_stats(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn pooled_matches_shot_sampler_for_equal_sites() {
        let m = model(20, 50, 0.5, 0.05, 0.02);
        let f = vec![0.9; 20];
        let exact: Vec<f64> = (0..2000).map(|s| simulate_measurements(&f, &m, s).unwrap()).collect();
        let mut rng = stream(77);
        let pooled: Vec<f64> = (0..2000).map(|_| simulate_measurements_pooled(&f, &m, &mut rng).unwrap()).collect();
        let (ma, va) = sample_stats(&exact);
        let (mb, vb) = sample_stats(&pooled);
        let expect = m.success_probability(0.9);
        assert!((ma - expect).abs() < 4.0 * (va / 2000.0).sqrt());
        assert!((mb - expect).abs() < 4.0 * (vb / 2000.0).sqrt());
        assert!((va / vb - 1.0).abs() < 0.15, "{va} vs {vb}");
    }

    #[test]
    fn presence_sampling_inflates_variance() {
        let f = vec![0.8; 10];
        let full = model(10, 40, 1.0, 0.0, 0.0);
        let half = model(10, 80, 0.5, 0.0, 0.0);
        let a: Vec<f64> = (0..3000).map(|s| simulate_measurements(&f, &full, s).unwrap()).collect();
        let b: Vec<f64> = (0..3000).map(|s| simulate_measurements(&f, &half, s).unwrap()).collect();
        let (_, va) = sample_stats(&a);
        let (_, vb) = sample_stats(&b);
        // Equal expected valid counts, but b's count fluctuates.
        assert!(vb > va * 0.9);
        let few = model(10, 40, 0.5, 0.0, 0.0);
        let c: Vec<f64> = (0..3000).map(|s| simulate_measurements(&f, &few, s).unwrap()).collect();
        assert!(sample_stats(&c).1 > va * 1.5);
    }

    #[test]
    fn site_permutation_preserves_expectation() {
        let m = model(3, 4000, 1.0, 0.03, 0.05);
        let f = [0.6, 0.9, 0.99];
        let g = [0.99, 0.6, 0.9];
        let a: f64 = (0..40).map(|s| simulate_measurements(&f, &m, s).unwrap()).sum::<f64>() / 40.0;
        let b: f64 = (0..40).map(|s| simulate_measurements(&g, &m, 100 + s).unwrap()).sum::<f64>() / 40.0;
        let se = (0.25f64 / (40.0 * 12000.0)).sqrt();
        assert!((a - b).abs() < 4.0 * se * 2f64.sqrt());
    }

    #[test]
    fn monotone_in_p10() {
        let f = vec![1.0; 1000];
        let mut prev = 1.0;
        for p10 in [0.0, 0.02, 0.04, 0.08] {
            let fm = simulate_measurements(&f, &model(1000, 1000, 1.0, 0.0, p10), 8).unwrap();
            assert!(fm < prev || p10 == 0.0);
            prev = fm;
        }
    }

    #[test]
    fn ensemble_measure_and_write() {
        let m = model(4, 10, 0.5, 0.04, 0.04);
        let meta = EnsembleMeta {
            kind: Some(NoiseKind::Wn),
            gamma: 6.0,
            kappa: 0.0,
            t: 1e-4,
            seed: 3,
        };
        let e = FidelityEnsemble::measure(vec![0, 1, 2], vec![vec![0.99; 4]; 3], &m, meta).unwrap();
        e.validate().unwrap();
        assert_eq!(e.measured().len() + e.n_missing(), 3);
        let again = FidelityEnsemble::measure(vec![0, 1, 2], vec![vec![0.99; 4]; 3], &m, e.meta.clone()).unwrap();
        assert_eq!(e, again);
        let dir = tempfile::tempdir().unwrap();
        e.write_long_csv(&dir.path().join("long.csv")).unwrap();
        e.write_summary_json(&dir.path().join("summary.json")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("long.csv")).unwrap();
        assert_eq!(text.lines().count(), 13);
    }
}
