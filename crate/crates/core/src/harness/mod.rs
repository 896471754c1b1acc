//! Experiment orchestration and persistence.
//!
//! A run resolves an [`ExperimentConfig`], executes one experiment kind and
//! writes a directory containing `config.json` (resolved config and its
//! SHA-256), one CSV per table, a JSON sidecar per table carrying the config
//! hash and seed, and optional SVG quick-look plots.
//!
//! All randomness is derived from the master seed through
//! [`crate::rng::derive_seed`] with labels naming the purpose, noise kind and
//! realization, and parallel results are collected in index order, so output
//! files are byte-identical for any worker count.

mod config;
mod experiments;
mod output;
mod replay;

use std::path::{Path, PathBuf};

pub use config::{
    ArraySection, ExperimentConfig, ExperimentKind, NoiseSection, PsdSection, PulseSection, SiteReference, SpamSection,
    SweepSection,
};
pub use experiments::{
    point_seed, replay_paths, run_convergence, run_gamma_sweep, run_psd, run_rb, run_spam_fit, run_time_sweep,
    run_variance_sweep, trace_seed,
};
pub use output::{svg_plot, RunWriter, Table};
pub use replay::{read_measurements, replay_experiment, write_measurements, MeasurementRecord, ReplayOutcome};

use crate::error::{Error, Result};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "NOISEFID_THREADS";

/// Run `f` on a dedicated pool of `threads` workers (or the global pool).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("thread count must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Worker count requested through [`THREADS_ENV`], if any.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
    }
}

/// Compute the tables of one experiment without writing anything.
pub fn compute(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::GammaSweep => run_gamma_sweep(cfg),
        ExperimentKind::TimeSweep => run_time_sweep(cfg),
        ExperimentKind::Distribution => run_distribution(cfg),
        ExperimentKind::VarianceSweep => run_variance_sweep(cfg),
        ExperimentKind::Convergence => run_convergence(cfg),
        ExperimentKind::Psd => run_psd(cfg),
        ExperimentKind::Rb => run_rb(cfg),
        ExperimentKind::SpamFit => run_spam_fit(cfg),
    }
}

/// Histograms and KDE curves of the measured-fidelity distribution.
pub fn run_distribution(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    experiments::run_distribution(cfg, None)
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
    pub tables: Vec<Table>,
}

fn writer_for(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunWriter> {
    let json = serde_json::to_value(cfg)?;
    RunWriter::create(out_dir, &json, &cfg.hash(), cfg.seed, cfg.plots)
}

/// Run the configured experiment and write its output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut writer = writer_for(cfg, &cfg.out_dir)?;
    let tables = match cfg.kind {
        ExperimentKind::Distribution => experiments::run_distribution(cfg, Some(&cfg.out_dir))?,
        _ => compute(cfg)?,
    };
    for t in &tables {
        writer.write_table(t)?;
    }
    Ok(RunReport {
        out_dir: cfg.out_dir.clone(),
        config_hash: cfg.hash(),
        files: writer.files().to_vec(),
        tables,
    })
}

/// Replay stored data and write the comparison table to `cfg.out_dir`.
pub fn run_replay(cfg: &ExperimentConfig, noise_dir: &Path, measurements: &Path) -> Result<(ReplayOutcome, RunReport)> {
    let outcome = replay_experiment(cfg, noise_dir, measurements)?;
    let mut writer = writer_for(cfg, &cfg.out_dir)?;
    let table = outcome.table();
    writer.write_table(&table)?;
    let report = RunReport {
        out_dir: cfg.out_dir.clone(),
        config_hash: cfg.hash(),
        files: writer.files().to_vec(),
        tables: vec![table],
    };
    Ok((outcome, report))
}

#[cfg(test)]
mod tests;
