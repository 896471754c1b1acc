//! The experiment runners. Each returns its tables; writing is done by
//! [`super::run`].

use std::path::Path;

use rayon::prelude::*;

use super::config::{ExperimentConfig, SiteReference};
use super::output::Table;
use crate::analytics::{mean_fidelity, sample_moment_bands, sample_stats, var_fidelity, MomentSpec};
use crate::benchmarking::{run_rb as run_rb_engine, RbConfig};
use crate::dynamics::{
    evolve_ideal_scaled, fidelity, integrate_sse_with, AmplitudeCalibration, NoiseOperatorSpec, PulseSchedule,
    QubitState, SseOptions,
};
use crate::error::{Error, Result};
use crate::measurement::{
    fit_spam_channels, histogram, kde, simulate_measurements, zero_noise_generator, ArrayModel, EnsembleMeta,
    FidelityEnsemble, SpamChannel, SpamFitOptions, TargetBit,
};
use crate::noise::{coarsen_trace, generate_trace, psd, NoiseKind, NoiseParams, NoiseTrace, PsdOptions};
use crate::rng::{derive_seed, tag};

/// Shared state for simulating a driven array.
pub(crate) struct Engine {
    pub calib: AmplitudeCalibration,
    pub pulse: PulseSchedule,
    pub opts: SseOptions,
    pub model: ArrayModel,
    pub s0: f64,
    psi0: QubitState,
    references: Vec<QubitState>,
}

impl Engine {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let calib = cfg.pulse.calibration()?;
        let setpoint = calib.invert(cfg.pulse.rabi())?;
        let pulse = PulseSchedule::constant(setpoint, cfg.pulse.duration, cfg.pulse.segment_dt, 0.0)?;
        pulse.validate(&calib)?;
        let model = cfg.array.model()?;
        let psi0 = QubitState::ground();
        let s0 = NoiseOperatorSpec::sigma_x(&psi0)?.s0;
        let references = match cfg.pulse.reference {
            SiteReference::PerSite => model
                .site_scales
                .iter()
                .map(|&s| evolve_ideal_scaled(&pulse, &calib, s, &psi0))
                .collect::<Result<Vec<_>>>()?,
            SiteReference::Nominal => vec![evolve_ideal_scaled(&pulse, &calib, 1.0, &psi0)?; model.n_sites],
        };
        Ok(Self {
            calib,
            pulse,
            opts: cfg.pulse.sse_options(),
            model,
            s0,
            psi0,
            references,
        })
    }

    /// Fidelity of every site for one trace and noise duration `t`.
    pub fn site_fidelities(&self, trace: &NoiseTrace, t: f64) -> Result<Vec<f64>> {
        let pulse = self.pulse.with_noise_duration(t)?;
        self.model
            .site_scales
            .iter()
            .zip(&self.references)
            .map(|(&scale, reference)| {
                let out = integrate_sse_with(&pulse, &self.calib, trace, scale, &self.psi0, &self.opts)?;
                Ok(fidelity(&out.state, reference).clamp(0.0, 1.0))
            })
            .collect()
    }

    /// Fidelity of a single site at scale 1 against the nominal evolution.
    pub fn single_fidelity(&self, trace: &NoiseTrace, t: f64) -> Result<f64> {
        let pulse = self.pulse.with_noise_duration(t)?;
        let out = integrate_sse_with(&pulse, &self.calib, trace, 1.0, &self.psi0, &self.opts)?;
        let reference = evolve_ideal_scaled(&self.pulse, &self.calib, 1.0, &self.psi0)?;
        Ok(fidelity(&out.state, &reference).clamp(0.0, 1.0))
    }
}

/// Seed of the trace of realization `i` for `kind` under `purpose`.
pub fn trace_seed(master: u64, purpose: &str, kind: NoiseKind, i: u64) -> u64 {
    derive_seed(master, &[tag(purpose), tag(kind.label()), i])
}

/// Seed of the measurement stream of one (kind, t) point.
pub fn point_seed(master: u64, kind: NoiseKind, t: f64) -> u64 {
    derive_seed(master, &[tag("point"), tag(kind.label()), (t * 1e12).round() as u64])
}

pub(crate) fn trace_for(cfg: &ExperimentConfig, kind: NoiseKind, gamma: f64, kappa: f64, seed: u64) -> Result<NoiseTrace> {
    let params = NoiseParams::new(kind, gamma, kappa, cfg.pulse.duration, seed).with_fine_dt(cfg.noise.trace_dt);
    generate_trace(&params)
}

/// Per-site fidelities for every realization at each `t`, reusing one trace
/// per realization across times.
pub(crate) fn simulate_times(
    cfg: &ExperimentConfig,
    engine: &Engine,
    kind: NoiseKind,
    gamma: f64,
    kappa: f64,
    times: &[f64],
) -> Result<Vec<FidelityEnsemble>> {
    let ids: Vec<u64> = (0..cfg.realizations as u64).collect();
    let per_realization: Vec<Vec<Vec<f64>>> = ids
        .par_iter()
        .map(|&i| {
            let trace = trace_for(cfg, kind, gamma, kappa, trace_seed(cfg.seed, "trace", kind, i))?;
            times.iter().map(|&t| engine.site_fidelities(&trace, t)).collect()
        })
        .collect::<Result<_>>()?;
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let rows: Vec<Vec<f64>> = per_realization.iter().map(|r| r[k].clone()).collect();
            let meta = EnsembleMeta {
                kind: Some(kind),
                gamma,
                kappa,
                t,
                seed: point_seed(cfg.seed, kind, t),
            };
            FidelityEnsemble::measure(ids.clone(), rows, &engine.model, meta)
        })
        .collect()
}

const SWEEP_COLUMNS: [&str; 11] = [
    "x",
    "analytic_mean",
    "analytic_std",
    "analytic_se",
    "analytic_spam_mean",
    "sim_true_mean",
    "sim_true_se",
    "sim_meas_mean",
    "sim_meas_std",
    "sim_meas_se",
    "n_missing",
];

fn sweep_row(x: f64, spec: &MomentSpec, ens: &FidelityEnsemble, model: &ArrayModel) -> Result<Vec<f64>> {
    let t = ens.meta.t;
    let band = sample_moment_bands(spec, t, ens.realizations.len())?;
    let truth = sample_stats(&ens.site_means())?;
    let measured = ens.measured();
    let (mm, ms, mse) = match sample_stats(&measured) {
        Ok(st) => (st.mean, st.std(), st.se_mean),
        Err(_) => (f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(vec![
        x,
        band.mean,
        var_fidelity(spec, t).sqrt(),
        band.band,
        model.success_probability(band.mean),
        truth.mean,
        truth.se_mean,
        mm,
        ms,
        mse,
        ens.n_missing() as f64,
    ])
}

fn sweep_table(name: String, x_name: &str) -> Table {
    let mut cols = SWEEP_COLUMNS;
    cols[0] = x_name;
    Table::new(name, &cols).with_plot(&["analytic_mean", "sim_true_mean", "analytic_spam_mean", "sim_meas_mean"])
}

/// Merge an `x,exp_mean,exp_std[,kind]` overlay into a sweep table.
fn merge_overlay(table: &mut Table, overlay: Option<&Path>, kind: NoiseKind) -> Result<()> {
    let Some(path) = overlay else {
        return Ok(());
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ix), Some(im), Some(is)) = (col("x"), col("exp_mean"), col("exp_std")) else {
        return Err(Error::Format(format!("{}: overlay needs columns x, exp_mean, exp_std", path.display())));
    };
    let ik = col("kind");
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if let Some(ik) = ik {
            if rec[ik].trim().parse::<NoiseKind>().ok() != Some(kind) {
                continue;
            }
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        };
        points.push((num(ix)?, num(im)?, num(is)?));
    }
    table.columns.push("exp_mean".into());
    table.columns.push("exp_std".into());
    table.plot.push("exp_mean".into());
    for row in &mut table.rows {
        let x = row[0];
        let hit = points
            .iter()
            .find(|p| (p.0 - x).abs() <= 1e-9 * x.abs().max(1e-12));
        row.push(hit.map_or(f64::NAN, |p| p.1));
        row.push(hit.map_or(f64::NAN, |p| p.2));
    }
    Ok(())
}

pub fn run_gamma_sweep(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let engine = Engine::new(cfg)?;
    let kind = cfg.noise.kind;
    let t = cfg.sweep.t;
    let mut table = sweep_table(format!("gamma_sweep_{}", kind.label().to_lowercase()), "gamma");
    for &gamma in &cfg.sweep.gammas {
        let ens = simulate_times(cfg, &engine, kind, gamma, cfg.noise.kappa, &[t])?.remove(0);
        let spec = MomentSpec::new(kind, gamma, cfg.noise.kappa, engine.s0)?;
        table.push(sweep_row(gamma, &spec, &ens, &engine.model)?);
    }
    merge_overlay(&mut table, cfg.sweep.overlay.as_deref(), kind)?;
    Ok(vec![table])
}

pub fn run_time_sweep(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let engine = Engine::new(cfg)?;
    let mut tables = Vec::new();
    for &kind in &cfg.sweep.kinds {
        let gamma = cfg.noise.gamma_for(kind);
        let spec = MomentSpec::new(kind, gamma, cfg.noise.kappa, engine.s0)?;
        let ensembles = simulate_times(cfg, &engine, kind, gamma, cfg.noise.kappa, &cfg.sweep.times)?;
        let mut table = sweep_table(format!("time_sweep_{}", kind.label().to_lowercase()), "t");
        for ens in &ensembles {
            table.push(sweep_row(ens.meta.t, &spec, ens, &engine.model)?);
        }
        merge_overlay(&mut table, cfg.sweep.overlay.as_deref(), kind)?;
        tables.push(table);
    }
    Ok(tables)
}

pub fn run_variance_sweep(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let engine = Engine::new(cfg)?;
    let kind = cfg.noise.kind;
    let gamma = cfg.noise.gamma;
    let spec = MomentSpec::new(kind, gamma, cfg.noise.kappa, engine.s0)?;
    let ensembles = simulate_times(cfg, &engine, kind, gamma, cfg.noise.kappa, &cfg.sweep.variance_times)?;
    let mut table = Table::new(
        format!("variance_sweep_{}", kind.label().to_lowercase()),
        &[
            "t",
            "analytic_std",
            "sim_std",
            "sim_std_se",
            "analytic_var",
            "sim_var",
            "sim_var_se",
            "sim_meas_std",
        ],
    )
    .with_plot(&["analytic_std", "sim_std", "sim_meas_std"]);
    for ens in &ensembles {
        let t = ens.meta.t;
        let st = sample_stats(&ens.site_means())?;
        let meas_std = sample_stats(&ens.measured()).map_or(f64::NAN, |s| s.std());
        let var = var_fidelity(&spec, t);
        table.push(vec![t, var.sqrt(), st.std(), st.se_std(), var, st.var, st.se_var, meas_std]);
    }
    Ok(vec![table])
}

fn micros(t: f64) -> String {
    format!("{}us", (t * 1e6).round() as i64)
}

pub fn run_distribution(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<Table>> {
    let engine = Engine::new(cfg)?;
    let mut tables = Vec::new();
    for &kind in &cfg.sweep.kinds {
        let gamma = cfg.noise.gamma_for(kind);
        let ensembles = simulate_times(cfg, &engine, kind, gamma, cfg.noise.kappa, &cfg.sweep.distribution_times)?;
        for ens in &ensembles {
            let base = format!("distribution_{}_{}", kind.label().to_lowercase(), micros(ens.meta.t));
            let measured = ens.measured();
            let hist = histogram(&measured, cfg.sweep.n_bins)?;
            let width = hist.bin_width();
            let n = hist.total().max(1.0);
            let mut ht = Table::new(format!("{base}_hist"), &["f", "count", "density"]).with_plot(&["density"]);
            for (c, count) in hist.centers().into_iter().zip(&hist.counts) {
                ht.push(vec![c, *count, count / (n * width)]);
            }
            ht.extra.insert("t".into(), ens.meta.t.into());
            ht.extra.insert("gamma".into(), gamma.into());
            tables.push(ht);
            if measured.len() >= 2 {
                let d = kde(&measured, None)?;
                let mut kt = Table::new(format!("{base}_kde"), &["f", "density"]).with_plot(&["density"]);
                for (x, y) in d.grid.iter().zip(&d.density) {
                    kt.push(vec![*x, *y]);
                }
                kt.extra.insert("bandwidth".into(), d.bandwidth.into());
                tables.push(kt);
            }
            if let (true, Some(dir)) = (cfg.sweep.write_replay, out_dir) {
                write_replay_set(cfg, dir, kind, gamma, ens)?;
            }
        }
    }
    Ok(tables)
}

/// Directory and file names used for replay data.
pub fn replay_paths(out_dir: &Path, kind: NoiseKind, t: f64) -> (std::path::PathBuf, std::path::PathBuf) {
    let base = out_dir.join("replay").join(kind.label().to_lowercase());
    (base.join("traces"), base.join(format!("measurements_{}.csv", micros(t))))
}

fn write_replay_set(cfg: &ExperimentConfig, out_dir: &Path, kind: NoiseKind, gamma: f64, ens: &FidelityEnsemble) -> Result<()> {
    let (trace_dir, meas_path) = replay_paths(out_dir, kind, ens.meta.t);
    if !trace_dir.exists() {
        let traces: Vec<(u64, NoiseTrace)> = ens
            .realizations
            .iter()
            .map(|&i| {
                trace_for(cfg, kind, gamma, cfg.noise.kappa, trace_seed(cfg.seed, "trace", kind, i)).map(|t| (i, t))
            })
            .collect::<Result<_>>()?;
        crate::noise::io::write_trace_dir(&trace_dir, traces.iter().map(|(i, t)| (*i, t)))?;
    }
    super::replay::write_measurements(&meas_path, ens)
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let engine = Engine::new(cfg)?;
    let kind = cfg.noise.kind;
    let gamma = cfg.noise.gamma;
    let kappa = cfg.noise.kappa;
    let t = cfg.sweep.t;
    let dts = &cfg.sweep.convergence_dts;
    let fine_dt = cfg.sweep.convergence_fine_dt;
    let results: Vec<(Vec<f64>, f64)> = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|i| {
            let params = NoiseParams::new(kind, gamma, kappa, cfg.pulse.duration, trace_seed(cfg.seed, "convergence", kind, i))
                .with_fine_dt(fine_dt);
            let fine = generate_trace(&params)?;
            let mut fs = Vec::with_capacity(dts.len());
            let mut disp_err: f64 = 0.0;
            for &dt in dts {
                let tr = if (dt - fine_dt).abs() <= 1e-12 * fine_dt { fine.clone() } else { coarsen_trace(&fine, dt)? };
                disp_err = disp_err.max((tr.displacement() - fine.displacement()).abs());
                fs.push(engine.single_fidelity(&tr, t)?);
            }
            Ok((fs, disp_err))
        })
        .collect::<Result<_>>()?;
    let spec = MomentSpec::new(kind, gamma, kappa, engine.s0)?;
    let analytic = mean_fidelity(&spec, t);
    let mut table = Table::new(
        format!("convergence_{}", kind.label().to_lowercase()),
        &["dt", "mean", "se", "analytic_mean", "max_displacement_error"],
    )
    .with_plot(&["mean", "analytic_mean"]);
    let max_disp = results.iter().map(|r| r.1).fold(0.0, f64::max);
    for (k, &dt) in dts.iter().enumerate() {
        let xs: Vec<f64> = results.iter().map(|r| r.0[k]).collect();
        let st = sample_stats(&xs)?;
        table.push(vec![dt, st.mean, st.se_mean, analytic, max_disp]);
    }
    Ok(vec![table])
}

pub fn run_psd(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let p = &cfg.psd;
    let mut tables = Vec::new();
    for &kind in &cfg.sweep.kinds {
        let gamma = cfg.noise.gamma_for(kind);
        let kappa = if kind == NoiseKind::Ou { p.kappa } else { 0.0 };
        let traces: Vec<NoiseTrace> = (0..p.n_traces as u64)
            .into_par_iter()
            .map(|i| {
                generate_trace(
                    &NoiseParams::new(kind, gamma, kappa, p.duration, trace_seed(cfg.seed, "psd", kind, i))
                        .with_fine_dt(p.fine_dt),
                )
            })
            .collect::<Result<_>>()?;
        let spec = psd(&traces, PsdOptions { segment_len: p.segment_len })?;
        let mut table = Table::new(format!("psd_{}", kind.label().to_lowercase()), &["freq", "power"]).with_plot(&["power"]);
        for (f, s) in spec.freq.iter().zip(&spec.power).skip(1) {
            table.push(vec![*f, *s]);
        }
        let [lo, hi] = p.fit_band;
        table.extra.insert("gamma".into(), gamma.into());
        table.extra.insert("n_averaged".into(), spec.n_averaged.into());
        match kind {
            NoiseKind::Ou => {
                table.extra.insert("kappa".into(), kappa.into());
                table.extra.insert("corner_hz".into(), spec.highpass_corner(p.corner_band[0], p.corner_band[1])?.into());
                table.extra.insert("expected_corner_hz".into(), (kappa / (2.0 * std::f64::consts::PI)).into());
            }
            _ => {
                table.extra.insert("loglog_slope".into(), spec.loglog_slope(lo, hi)?.into());
            }
        }
        tables.push(table);
    }
    Ok(tables)
}

pub fn run_rb(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let calib = cfg.pulse.calibration()?;
    let model = cfg.array.model()?;
    let rb_cfg = RbConfig {
        seed: derive_seed(cfg.seed, &[tag("rb")]),
        rabi: cfg.pulse.rabi(),
        segment_dt: cfg.pulse.segment_dt,
        ..cfg.rb.clone()
    };
    let res = run_rb_engine(&rb_cfg, &calib, &model)?;
    let mut records = Table::new("rb", &["length", "sequence_index", "p0_true", "p0"]);
    for r in &res.records {
        records.push(vec![r.length as f64, r.sequence as f64, r.p0_true, r.p0_measured.unwrap_or(f64::NAN)]);
    }
    let mut means = Table::new("rb_means", &["length", "mean", "se", "fit"]).with_plot(&["mean", "fit"]);
    let fit = res.fit();
    for (n, m, se) in res.means() {
        let model_value = fit.as_ref().map_or(f64::NAN, |f| crate::benchmarking::rb_model(n as f64, f.d0, f.d));
        means.push(vec![n as f64, m, se, model_value]);
    }
    let mut report = Table::new("rb_fit", &["d0", "d0_se", "d", "d_se", "f_c", "f_c_se"]);
    match fit {
        Ok(f) => {
            report.push(vec![f.d0, f.d0_se, f.d, f.d_se, f.f_c, f.f_c_se]);
            report.extra.insert("fit".into(), serde_json::to_value(f)?);
        }
        Err(e) => {
            report.extra.insert("error".into(), e.to_string().into());
        }
    }
    let area = crate::benchmarking::average_pulse_area(&crate::benchmarking::clifford_group(), rb_cfg.composite)?;
    report.extra.insert("average_pulse_area_over_pi".into(), (area / std::f64::consts::PI).into());
    Ok(vec![records, means, report])
}

fn read_observed(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let i = headers
        .iter()
        .position(|h| h.trim() == "f_measured")
        .ok_or_else(|| Error::Format(format!("{}: missing f_measured column", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = rec[i].trim();
        if v.is_empty() {
            continue;
        }
        out.push(v.parse::<f64>().map_err(|e| Error::Format(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

/// Zero-noise measured fidelities for one readout channel, shot by shot.
fn synthesize_channel(cfg: &ExperimentConfig, engine: &Engine, target: TargetBit) -> Result<(Vec<f64>, f64)> {
    let model = engine.model.clone().with_target(target);
    let zero = trace_for(cfg, NoiseKind::Wn, 0.0, 0.0, 0)?;
    let row = engine.site_fidelities(&zero, 0.0)?;
    let mean_f = row.iter().sum::<f64>() / row.len() as f64;
    let label = match target {
        TargetBit::One => "spam_one",
        TargetBit::Zero => "spam_zero",
    };
    let samples: Vec<f64> = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|i| match simulate_measurements(&row, &model, derive_seed(cfg.seed, &[tag(label), i])) {
            Ok(v) => Ok(Some(v)),
            Err(Error::NoData) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok((samples, mean_f))
}

pub fn run_spam_fit(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let engine = Engine::new(cfg)?;
    let (one, one_f, planted) = match &cfg.spam.observed_one {
        Some(p) => (read_observed(p)?, 1.0, false),
        None => {
            let (s, f) = synthesize_channel(cfg, &engine, TargetBit::One)?;
            (s, f, true)
        }
    };
    let zero = match &cfg.spam.observed_zero {
        Some(p) => Some((read_observed(p)?, 1.0)),
        None if planted => Some(synthesize_channel(cfg, &engine, TargetBit::Zero)?),
        None => None,
    };
    let oversample = cfg.spam.oversample.max(1);
    let g1 = zero_noise_generator(
        &engine.model,
        TargetBit::One,
        one_f,
        oversample * one.len().max(1),
        derive_seed(cfg.seed, &[tag("spam_generator"), 1]),
    )?;
    let mut channels = vec![SpamChannel::new(&one, g1)];
    if let Some((zs, zf)) = &zero {
        let g0 = zero_noise_generator(
            &engine.model,
            TargetBit::Zero,
            *zf,
            oversample * zs.len().max(1),
            derive_seed(cfg.seed, &[tag("spam_generator"), 0]),
        )?;
        channels.push(SpamChannel::new(zs, g0));
    }
    let opts = SpamFitOptions {
        coarse_step: cfg.spam.coarse_step,
        fine_step: cfg.spam.fine_step,
        n_bins: cfg.sweep.n_bins,
    };
    let fit = fit_spam_channels(&channels, &opts)?;
    let (pp01, pp10) = if planted { (cfg.array.p01, cfg.array.p10) } else { (f64::NAN, f64::NAN) };
    let mut table = Table::new(
        "spam_fit",
        &["p01", "p10", "divergence", "planted_p01", "planted_p10", "n_channels"],
    );
    table.push(vec![fit.p01, fit.p10, fit.divergence, pp01, pp10, channels.len() as f64]);
    table.extra.insert("evaluations".into(), fit.evaluations.into());
    let mut obs = Table::new("spam_observed", &["channel", "f_measured"]);
    for v in &one {
        obs.push(vec![1.0, *v]);
    }
    if let Some((zs, _)) = &zero {
        for v in zs {
            obs.push(vec![0.0, *v]);
        }
    }
    Ok(vec![table, obs])
}
