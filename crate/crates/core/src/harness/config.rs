//! Experiment configuration, read from TOML.
//!
//! Every section is optional; omitted keys take the defaults below. Times are
//! in seconds, rates in s⁻¹, `gamma` in the natural units of each noise kind
//! (s^-1/2 for WN/OU, s^-3/2 for BM).
//!
//! ```toml
//! kind = "gamma_sweep"
//! seed = 1
//! realizations = 75
//! out_dir = "runs/gamma"
//!
//! [noise]
//! kind = "OU"
//! gamma = 6.0
//! kappa = 5e3
//! bm_gamma = 4.2223e5
//!
//! [pulse]
//! rabi_hz = 50e3
//! duration = 200e-6
//! segment_dt = 1e-6
//!
//! [array]
//! n_sites = 100
//! n_meas = 300
//! p_c = 0.5
//! p01 = 0.04
//! p10 = 0.04
//!
//! [sweep]
//! gammas = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarking::RbConfig;
use crate::dynamics::{AmplitudeCalibration, NoiseCoupling, SseOptions, SseScheme};
use crate::error::{Error, Result};
use crate::measurement::{default_site_scales, ArrayModel, TargetBit, DEFAULT_BINS, DEFAULT_SITE_CV};
use crate::noise::NoiseKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GammaSweep,
    TimeSweep,
    Distribution,
    VarianceSweep,
    Convergence,
    Psd,
    Rb,
    SpamFit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::GammaSweep,
        ExperimentKind::TimeSweep,
        ExperimentKind::Distribution,
        ExperimentKind::VarianceSweep,
        ExperimentKind::Convergence,
        ExperimentKind::Psd,
        ExperimentKind::Rb,
        ExperimentKind::SpamFit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GammaSweep => "gamma_sweep",
            ExperimentKind::TimeSweep => "time_sweep",
            ExperimentKind::Distribution => "distribution",
            ExperimentKind::VarianceSweep => "variance_sweep",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Psd => "psd",
            ExperimentKind::Rb => "rb",
            ExperimentKind::SpamFit => "spam_fit",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    /// Strength used for WN and OU (and for BM in single-kind experiments
    /// when `kind = "BM"`).
    pub gamma: f64,
    pub kappa: f64,
    /// Strength used for BM in experiments that sweep all kinds.
    pub bm_gamma: f64,
    /// Step of the traces that drive the integrator.
    pub trace_dt: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Ou,
            gamma: 6.0,
            kappa: 5e3,
            bm_gamma: 4.2223e5,
            trace_dt: 1e-6,
        }
    }
}

impl NoiseSection {
    /// Strength for `kind` when several kinds are compared.
    pub fn gamma_for(&self, kind: NoiseKind) -> f64 {
        match kind {
            NoiseKind::Bm if self.kind != NoiseKind::Bm => self.bm_gamma,
            _ => self.gamma,
        }
    }
}

/// Which noiseless state a site's fidelity is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SiteReference {
    /// The site's own noiseless evolution: inhomogeneity is calibrated out.
    #[default]
    PerSite,
    /// The nominal (scale 1) evolution: inhomogeneity counts as error.
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    /// Nominal Rabi frequency in Hz (the drive uses `2π · rabi_hz`).
    pub rabi_hz: f64,
    pub duration: f64,
    pub segment_dt: f64,
    pub min_segment: f64,
    /// Optional `setpoint,rabi_hz` calibration table.
    pub calibration: Option<PathBuf>,
    pub scheme: SseScheme,
    pub coupling: NoiseCoupling,
    pub reference: SiteReference,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            rabi_hz: 50e3,
            duration: 200e-6,
            segment_dt: 1e-6,
            min_segment: crate::dynamics::DEFAULT_MIN_SEGMENT,
            calibration: None,
            scheme: SseScheme::SplitPlaten,
            coupling: NoiseCoupling::RabiAdditive,
            reference: SiteReference::PerSite,
        }
    }
}

impl PulseSection {
    pub fn rabi(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.rabi_hz
    }

    pub fn calibration(&self) -> Result<AmplitudeCalibration> {
        let c = match &self.calibration {
            Some(p) => AmplitudeCalibration::from_csv_path(p)?,
            None => AmplitudeCalibration::identity(),
        };
        c.with_min_segment(self.min_segment)
    }

    pub fn sse_options(&self) -> SseOptions {
        SseOptions {
            scheme: self.scheme,
            coupling: self.coupling,
            ..SseOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub n_sites: usize,
    pub n_meas: usize,
    pub p_c: f64,
    pub p01: f64,
    pub p10: f64,
    /// Coefficient of variation of generated site factors.
    pub site_cv: f64,
    /// Explicit site factors; overrides `site_cv` when present.
    pub site_scales: Option<Vec<f64>>,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            n_sites: 100,
            n_meas: 300,
            p_c: 0.5,
            p01: 0.04,
            p10: 0.04,
            site_cv: DEFAULT_SITE_CV,
            site_scales: None,
        }
    }
}

impl ArraySection {
    pub fn model(&self) -> Result<ArrayModel> {
        let site_scales = match &self.site_scales {
            Some(s) => s.clone(),
            None => default_site_scales(self.n_sites, self.site_cv),
        };
        let m = ArrayModel {
            n_sites: self.n_sites,
            n_meas: self.n_meas,
            p_c: self.p_c,
            p01: self.p01,
            p10: self.p10,
            site_scales,
            target: TargetBit::One,
        };
        m.validate()?;
        Ok(m)
    }
}

fn default_times() -> Vec<f64> {
    (0..=9).map(|k| (20 * k) as f64 / 1e6).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub gammas: Vec<f64>,
    /// Noise duration for the γ sweep.
    pub t: f64,
    pub times: Vec<f64>,
    pub variance_times: Vec<f64>,
    pub kinds: Vec<NoiseKind>,
    pub distribution_times: Vec<f64>,
    pub n_bins: usize,
    /// Write traces and measurement tables for replay (distribution runs).
    pub write_replay: bool,
    pub convergence_dts: Vec<f64>,
    pub convergence_fine_dt: f64,
    /// Optional `x,exp_mean,exp_std` file merged into sweep tables.
    pub overlay: Option<PathBuf>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            gammas: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            t: 200e-6,
            times: default_times(),
            variance_times: (0..=10).map(|k| (20 * k) as f64 / 1e6).collect(),
            kinds: NoiseKind::ALL.to_vec(),
            distribution_times: vec![0.0, 180e-6],
            n_bins: DEFAULT_BINS,
            write_replay: false,
            convergence_dts: vec![4e-9, 100e-9, 1e-6],
            convergence_fine_dt: 4e-9,
            overlay: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdSection {
    pub n_traces: usize,
    pub fine_dt: f64,
    pub duration: f64,
    pub segment_len: usize,
    /// OU damping used for the spectra (a faster process than the pulse studies).
    pub kappa: f64,
    /// Band (Hz) of the log-log slope fit for WN and BM.
    pub fit_band: [f64; 2],
    /// Band (Hz) of the OU high-pass corner fit.
    pub corner_band: [f64; 2],
}

impl Default for PsdSection {
    fn default() -> Self {
        Self {
            n_traces: 100,
            fine_dt: 4e-9,
            duration: 200e-6,
            segment_len: 4096,
            kappa: 5e6,
            fit_band: [2e5, 2e7],
            corner_band: [1e4, 2e7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpamSection {
    /// Observed zero-noise measured fidelities, target bit 1 (CSV column `f_measured`).
    pub observed_one: Option<PathBuf>,
    /// Same for a pulse ending on the other bit.
    pub observed_zero: Option<PathBuf>,
    /// Simulated samples per observed sample.
    pub oversample: usize,
    pub coarse_step: f64,
    pub fine_step: f64,
}

impl Default for SpamSection {
    fn default() -> Self {
        Self {
            observed_one: None,
            observed_zero: None,
            oversample: 10,
            coarse_step: 0.005,
            fine_step: 0.0005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub realizations: usize,
    pub out_dir: PathBuf,
    /// Emit SVG quick-look plots next to the CSVs.
    pub plots: bool,
    pub noise: NoiseSection,
    pub pulse: PulseSection,
    pub array: ArraySection,
    pub sweep: SweepSection,
    pub psd: PsdSection,
    pub rb: RbConfig,
    pub spam: SpamSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::GammaSweep,
            seed: 0,
            realizations: 75,
            out_dir: PathBuf::from("runs/out"),
            plots: false,
            noise: NoiseSection::default(),
            pulse: PulseSection::default(),
            array: ArraySection::default(),
            sweep: SweepSection::default(),
            psd: PsdSection::default(),
            rb: RbConfig::default(),
            spam: SpamSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Load a TOML file. Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.pulse.calibration,
            &mut cfg.sweep.overlay,
            &mut cfg.spam.observed_one,
            &mut cfg.spam.observed_zero,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 2 && self.kind != ExperimentKind::Rb && self.kind != ExperimentKind::SpamFit {
            return Err(Error::Config("realizations must be >= 2".into()));
        }
        if !(self.noise.gamma >= 0.0) || !(self.noise.kappa >= 0.0) || !(self.noise.bm_gamma >= 0.0) {
            return Err(Error::Config("noise strengths and kappa must be >= 0".into()));
        }
        if !(self.noise.trace_dt > 0.0) || !(self.pulse.segment_dt > 0.0) || !(self.pulse.duration > 0.0) {
            return Err(Error::Config("time steps and durations must be > 0".into()));
        }
        if !(self.pulse.rabi_hz > 0.0) {
            return Err(Error::Config("rabi_hz must be > 0".into()));
        }
        let within = |t: &f64| *t >= 0.0 && *t <= self.pulse.duration * (1.0 + 1e-12);
        let s = &self.sweep;
        let used: &[f64] = match self.kind {
            ExperimentKind::GammaSweep | ExperimentKind::Convergence => std::slice::from_ref(&s.t),
            ExperimentKind::TimeSweep => &s.times,
            ExperimentKind::VarianceSweep => &s.variance_times,
            ExperimentKind::Distribution => &s.distribution_times,
            ExperimentKind::Psd | ExperimentKind::Rb | ExperimentKind::SpamFit => &[],
        };
        if !used.iter().all(within) {
            return Err(Error::Config(format!(
                "noise durations for {} must lie within the pulse duration",
                self.kind.name()
            )));
        }
        if s.gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Config("gammas must be >= 0".into()));
        }
        if s.n_bins == 0 || s.kinds.is_empty() {
            return Err(Error::Config("n_bins and kinds must be non-empty".into()));
        }
        for p in [&self.pulse.calibration, &s.overlay, &self.spam.observed_one, &self.spam.observed_zero]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        self.array.model()?;
        self.rb.validate()?;
        Ok(())
    }

    /// SHA-256 of the resolved configuration as JSON, excluding `out_dir`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}
