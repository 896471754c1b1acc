use super::*;
use crate::noise::NoiseKind;

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        kind,
        seed: 11,
        realizations: 40,
        ..Default::default()
    };
    cfg.array.n_sites = 4;
    cfg.array.n_meas = 50;
    cfg.array.site_scales = None;
    cfg.pulse.duration = 40e-6;
    cfg.sweep.t = 40e-6;
    cfg.sweep.times = vec![0.0, 20e-6, 40e-6];
    cfg.sweep.variance_times = vec![0.0, 20e-6, 40e-6];
    cfg.sweep.distribution_times = vec![0.0, 40e-6];
    cfg.sweep.gammas = vec![0.0, 20.0, 40.0];
    cfg.noise.bm_gamma = 4e6;
    cfg
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap()
}

#[test]
fn gamma_sweep_matches_closed_form() {
    let tables = compute(&small(ExperimentKind::GammaSweep)).unwrap();
    let t = &tables[0];
    let am = col(t, "analytic_mean");
    let sm = col(t, "sim_true_mean");
    let se = col(t, "analytic_se");
    assert_eq!(am[0], 1.0);
    assert!((sm[0] - 1.0).abs() < 1e-9);
    for k in 0..am.len() {
        assert!((sm[k] - am[k]).abs() <= 3.0 * se[k] + 1e-9, "{k}: {} vs {}", sm[k], am[k]);
    }
    assert!(am[2] < am[1] && am[1] < am[0]);
    let spam = col(t, "analytic_spam_mean");
    assert!((spam[0] - 0.96).abs() < 1e-12);
}

#[test]
fn analytic_columns_do_not_depend_on_sample_sizes() {
    let a = compute(&small(ExperimentKind::GammaSweep)).unwrap();
    let mut cfg = small(ExperimentKind::GammaSweep);
    cfg.realizations = 7;
    cfg.array.n_meas = 3;
    let b = compute(&cfg).unwrap();
    assert_eq!(col(&a[0], "analytic_mean"), col(&b[0], "analytic_mean"));
    assert_eq!(col(&a[0], "analytic_std"), col(&b[0], "analytic_std"));
}

#[test]
fn time_sweep_orders_kinds() {
    let tables = compute(&small(ExperimentKind::TimeSweep)).unwrap();
    assert_eq!(tables.len(), 3);
    let wn = col(&tables[0], "analytic_mean");
    let ou = col(&tables[1], "analytic_mean");
    assert_eq!(wn[0], 1.0);
    for k in 1..wn.len() {
        assert!(ou[k] > wn[k]);
    }
    for t in &tables {
        assert!((col(t, "sim_true_mean")[0] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn variance_sweep_starts_at_zero_and_grows() {
    let mut cfg = small(ExperimentKind::VarianceSweep);
    cfg.noise.kind = NoiseKind::Wn;
    cfg.noise.gamma = 30.0;
    let t = &compute(&cfg).unwrap()[0];
    let a = col(t, "analytic_std");
    let s = col(t, "sim_std");
    assert_eq!(a[0], 0.0);
    assert!(s[0] < 1e-9);
    assert!(a.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn distribution_conserves_counts() {
    let cfg = small(ExperimentKind::Distribution);
    let tables = compute(&cfg).unwrap();
    let hists: Vec<&Table> = tables.iter().filter(|t| t.name.ends_with("_hist")).collect();
    assert_eq!(hists.len(), 6);
    for h in hists {
        let total: f64 = col(h, "count").iter().sum();
        assert!((39.0..=40.0).contains(&total));
    }
    assert!(tables.iter().any(|t| t.name == "distribution_wn_0us_kde"));
}

#[test]
fn convergence_table() {
    let mut cfg = small(ExperimentKind::Convergence);
    cfg.realizations = 8;
    cfg.pulse.duration = 10e-6;
    cfg.sweep.t = 10e-6;
    cfg.sweep.times = vec![0.0];
    cfg.sweep.variance_times = vec![0.0];
    cfg.sweep.distribution_times = vec![0.0];
    let t = &compute(&cfg).unwrap()[0];
    let m = col(t, "mean");
    assert_eq!(m.len(), 3);
    assert!((m[0] - m[2]).abs() < 1e-6);
    assert!(col(t, "max_displacement_error")[0] < 1e-12);
}

#[test]
fn psd_reports_fits() {
    let mut cfg = small(ExperimentKind::Psd);
    cfg.psd.n_traces = 4;
    cfg.psd.duration = 40e-6;
    cfg.psd.segment_len = 1024;
    let tables = compute(&cfg).unwrap();
    assert_eq!(tables.len(), 3);
    assert!(tables[0].extra.contains_key("loglog_slope"));
    assert!(tables[1].extra.contains_key("corner_hz"));
    let f = col(&tables[0], "freq");
    assert!((f.last().unwrap() - 0.5 / 4e-9).abs() < 1.0);
}

#[test]
fn rb_experiment_noiseless() {
    let mut cfg = small(ExperimentKind::Rb);
    cfg.rb.lengths = vec![1, 4, 8];
    cfg.rb.n_sequences = 3;
    cfg.array.p01 = 0.0;
    cfg.array.p10 = 0.0;
    cfg.array.p_c = 1.0;
    let tables = compute(&cfg).unwrap();
    assert!(col(&tables[0], "p0_true").iter().all(|p| (p - 1.0).abs() < 1e-6));
    assert_eq!(col(&tables[2], "f_c")[0], 1.0);
}

#[test]
fn spam_fit_recovers_planted_values() {
    let mut cfg = small(ExperimentKind::SpamFit);
    cfg.realizations = 75;
    cfg.array.n_sites = 100;
    cfg.array.n_meas = 300;
    cfg.pulse.duration = 200e-6;
    let t = &compute(&cfg).unwrap()[0];
    assert!((col(t, "p01")[0] - 0.04).abs() <= 0.01);
    assert!((col(t, "p10")[0] - 0.04).abs() <= 0.01);
}

#[test]
fn runs_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::TimeSweep);
    cfg.plots = true;
    let mut outputs = Vec::new();
    for (k, threads) in [Some(1), Some(3), Some(1)].into_iter().enumerate() {
        cfg.out_dir = dir.path().join(format!("run{k}"));
        let report = with_threads(threads, || run(&cfg)).unwrap().unwrap();
        let mut files: Vec<(String, Vec<u8>)> = report
            .files
            .iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run0/time_sweep_wn.json")).unwrap()).unwrap();
    assert_eq!(side["config_hash"], cfg.hash());
    assert_eq!(side["seed"], 11);
    assert!(dir.path().join("run0/time_sweep_wn.svg").exists());
}

#[test]
fn replay_reproduces_own_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentKind::Distribution);
    cfg.sweep.kinds = vec![NoiseKind::Ou];
    cfg.sweep.write_replay = true;
    cfg.realizations = 12;
    cfg.out_dir = dir.path().join("dist");
    run(&cfg).unwrap();
    let (traces, meas) = replay_paths(&cfg.out_dir, NoiseKind::Ou, 40e-6);
    let out = replay_experiment(&cfg, &traces, &meas).unwrap();
    assert!(out.exact, "max diff {}", out.max_abs_diff);
    assert_eq!(out.max_abs_diff, 0.0);
    assert_eq!(out.kl, Some(0.0));

    let text = std::fs::read_to_string(&meas).unwrap();
    let extra = text + "99,1,4e-5,0.9\n";
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, extra).unwrap();
    match replay_experiment(&cfg, &traces, &bad) {
        Err(crate::Error::Alignment { missing }) => assert_eq!(missing, vec![99]),
        other => panic!("expected alignment error, got {other:?}"),
    }
}

#[test]
fn overlay_columns_are_merged() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.csv");
    std::fs::write(&path, "x,exp_mean,exp_std\n20,0.9,0.01\n").unwrap();
    let mut cfg = small(ExperimentKind::GammaSweep);
    cfg.realizations = 3;
    cfg.sweep.overlay = Some(path);
    let t = &compute(&cfg).unwrap()[0];
    let m = col(t, "exp_mean");
    assert!(m[0].is_nan() && m[1] == 0.9 && m[2].is_nan());
}

#[test]
fn thread_env_parsing() {
    assert!(with_threads(Some(0), || ()).is_err());
    assert_eq!(with_threads(Some(2), rayon::current_num_threads).unwrap(), 2);
}
