//! Replay of stored noise realizations against recorded measured fidelities.
//!
//! Import format:
//!
//! * a trace directory as written by [`crate::noise::io::write_trace_dir`]
//!   (`realization_NNNNNN.csv`, one file per realization);
//! * a measurement CSV with header `realization,seed,t,f_measured`. `seed` is
//!   the measurement-stream seed of that realization, `t` the noise duration
//!   in seconds, and an empty `f_measured` marks a realization without data.
//!
//! Replaying re-integrates every site on the stored trace and re-draws the
//! measurements from the recorded seeds, so data written by this tool are
//! reproduced exactly.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiments::Engine;
use super::output::Table;
use crate::error::{Error, Result};
use crate::measurement::{histogram, kl_divergence, measurement_seed, simulate_measurements, EnsembleMeta, FidelityEnsemble};
use crate::noise::io::read_trace_dir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub realization: u64,
    pub seed: u64,
    pub t: f64,
    pub f_measured: Option<f64>,
}

pub fn write_measurements(path: &Path, ens: &FidelityEnsemble) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["realization", "seed", "t", "f_measured"])?;
    for (&id, f) in ens.realizations.iter().zip(&ens.f_measured) {
        w.write_record([
            id.to_string(),
            measurement_seed(ens.meta.seed, id).to_string(),
            format!("{:?}", ens.meta.t),
            f.map_or(String::new(), |v| format!("{v:?}")),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let want = ["realization", "seed", "t", "f_measured"];
    if headers.iter().map(str::trim).ne(want) {
        return Err(Error::Format(format!(
            "{}: expected header {}",
            path.display(),
            want.join(",")
        )));
    }
    let bad = |e: &dyn std::fmt::Display| Error::Format(format!("{}: {e}", path.display()));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = rec[3].trim();
        out.push(MeasurementRecord {
            realization: rec[0].trim().parse().map_err(|e| bad(&e))?,
            seed: rec[1].trim().parse().map_err(|e| bad(&e))?,
            t: rec[2].trim().parse().map_err(|e| bad(&e))?,
            f_measured: if f.is_empty() { None } else { Some(f.parse().map_err(|e| bad(&e))?) },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub ensemble: FidelityEnsemble,
    pub recorded: Vec<Option<f64>>,
    /// Largest |replayed - recorded| over realizations with data in both.
    pub max_abs_diff: f64,
    /// Whether every replayed value equals the recorded one bit for bit.
    pub exact: bool,
    /// KL(recorded ‖ replayed) of the binned distributions, if both have data.
    pub kl: Option<f64>,
}

impl ReplayOutcome {
    pub fn table(&self) -> Table {
        let mut t = Table::new("replay", &["realization", "f_recorded", "f_replayed", "f_true_mean"])
            .with_plot(&["f_recorded", "f_replayed"]);
        let means = self.ensemble.site_means();
        for (k, &id) in self.ensemble.realizations.iter().enumerate() {
            t.push(vec![
                id as f64,
                self.recorded[k].unwrap_or(f64::NAN),
                self.ensemble.f_measured[k].unwrap_or(f64::NAN),
                means[k],
            ]);
        }
        t.extra.insert("max_abs_diff".into(), self.max_abs_diff.into());
        t.extra.insert("exact".into(), self.exact.into());
        t.extra.insert("kl".into(), self.kl.map_or(serde_json::Value::Null, Into::into));
        t
    }
}

/// Load traces and recorded measurements, re-simulate, and align them.
/// Realizations listed in the measurement file but absent from the trace
/// directory produce [`Error::Alignment`].
pub fn replay_experiment(cfg: &ExperimentConfig, noise_dir: &Path, measurements_file: &Path) -> Result<ReplayOutcome> {
    let traces = read_trace_dir(noise_dir)?;
    let records = read_measurements(measurements_file)?;
    if records.is_empty() {
        return Err(Error::InvalidArgument("measurement file has no rows".into()));
    }
    let missing: BTreeSet<u64> = records
        .iter()
        .map(|r| r.realization)
        .filter(|id| !traces.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alignment {
            missing: missing.into_iter().collect(),
        });
    }
    let engine = Engine::new(cfg)?;
    let rows: Vec<(Vec<f64>, Option<f64>)> = records
        .par_iter()
        .map(|r| {
            let f_true = engine.site_fidelities(&traces[&r.realization], r.t)?;
            let fm = match simulate_measurements(&f_true, &engine.model, r.seed) {
                Ok(v) => Some(v),
                Err(Error::NoData) => None,
                Err(e) => return Err(e),
            };
            Ok((f_true, fm))
        })
        .collect::<Result<_>>()?;

    let first = &traces[&records[0].realization].params;
    let meta = EnsembleMeta {
        kind: Some(first.kind),
        gamma: first.gamma,
        kappa: first.kappa,
        t: records[0].t,
        seed: 0,
    };
    let recorded: Vec<Option<f64>> = records.iter().map(|r| r.f_measured).collect();
    let (f_true, f_measured): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let ensemble = FidelityEnsemble {
        realizations: records.iter().map(|r| r.realization).collect(),
        f_true,
        f_measured,
        meta,
    };
    let mut max_abs_diff: f64 = 0.0;
    let mut exact = true;
    for (a, b) in recorded.iter().zip(&ensemble.f_measured) {
        match (a, b) {
            (Some(x), Some(y)) => {
                max_abs_diff = max_abs_diff.max((x - y).abs());
                exact &= x.to_bits() == y.to_bits();
            }
            (None, None) => {}
            _ => exact = false,
        }
    }
    let rec: Vec<f64> = recorded.iter().flatten().copied().collect();
    let rep = ensemble.measured();
    let kl = if rec.is_empty() || rep.is_empty() {
        None
    } else {
        Some(kl_divergence(&histogram(&rec, cfg.sweep.n_bins)?, &histogram(&rep, cfg.sweep.n_bins)?)?)
    };
    Ok(ReplayOutcome {
        ensemble,
        recorded,
        max_abs_diff,
        exact,
        kl,
    })
}
