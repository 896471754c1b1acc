//! `noisefid` command line.
//!
//! `noisefid run <config.toml>` executes the experiment described by the
//! file; the per-experiment subcommands start from the defaults (or from
//! `--config`) and apply flag overrides. Set `NOISEFID_THREADS` to fix the
//! worker count. On failure a JSON error object is printed to stderr and the
//! exit code is nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisefid::harness::{self, ExperimentConfig, ExperimentKind, RunReport};
use noisefid::noise::NoiseKind;
use noisefid::Error;

#[derive(Parser)]
#[command(name = "noisefid", version, about = "Noise-limited qubit fidelity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Mean fidelity against noise strength.
    GammaSweep(Experiment),
    /// Mean fidelity against noise duration for each noise kind.
    TimeSweep(Experiment),
    /// Fidelity standard deviation against noise duration.
    VarianceSweep(Experiment),
    /// Histograms and density estimates of measured fidelities.
    Distribution(Experiment),
    /// Mean fidelity for coarsened copies of the same fine traces.
    Convergence(Experiment),
    /// Power spectral densities of the noise processes.
    Psd(Experiment),
    /// Randomized benchmarking with composite pulses.
    Rb(Experiment),
    /// Readout-error estimation from zero-noise distributions.
    SpamFit(Experiment),
    /// Re-simulate stored traces and compare with recorded measurements.
    Replay {
        #[arg(long)]
        noise_dir: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print a config file with every default filled in.
    DefaultConfig {
        #[arg(long, default_value = "gamma_sweep")]
        experiment: String,
    },
}

#[derive(Args)]
struct Experiment {
    /// Start from this config instead of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    /// Noise strength (WN/OU in s^-1/2; BM in s^-3/2 when --kind BM).
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated noise strengths for the γ sweep.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// OU damping rate in s^-1.
    #[arg(long)]
    kappa: Option<f64>,
    /// Noise kind (WN, OU or BM); restricts multi-kind experiments to it.
    #[arg(long)]
    kind: Option<NoiseKind>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG quick-look plots.
    #[arg(long)]
    plots: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(k) = self.kind {
            cfg.noise.kind = k;
            cfg.sweep.kinds = vec![k];
        }
        if let Some(g) = self.gamma {
            cfg.noise.gamma = g;
        }
        if let Some(gs) = &self.gammas {
            cfg.sweep.gammas = gs.clone();
        }
        if let Some(k) = self.kappa {
            cfg.noise.kappa = k;
        }
        if let Some(n) = self.realizations {
            cfg.realizations = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if self.plots {
            cfg.plots = true;
        }
    }
}

fn load(config: Option<&PathBuf>, kind: Option<ExperimentKind>, overrides: &Overrides) -> Result<ExperimentConfig, Error> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = kind {
        cfg.kind = k;
        if config.is_none() && overrides.out.is_none() {
            cfg.out_dir = PathBuf::from("runs").join(k.name());
        }
    }
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn report_json(report: &RunReport) -> serde_json::Value {
    serde_json::json!({
        "out_dir": report.out_dir,
        "config_hash": report.config_hash,
        "files": report.files,
    })
}

fn execute(cli: Cli) -> Result<serde_json::Value, Error> {
    let threads = harness::threads_from_env()?;
    let (kind, exp) = match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load(Some(&config), None, &overrides)?;
            let report = harness::with_threads(threads, || harness::run(&cfg))??;
            return Ok(report_json(&report));
        }
        Command::Replay {
            noise_dir,
            measurements,
            config,
            overrides,
        } => {
            let mut cfg = load(config.as_ref(), None, &overrides)?;
            if config.is_none() && overrides.out.is_none() {
                cfg.out_dir = PathBuf::from("runs").join("replay");
            }
            let (outcome, report) =
                harness::with_threads(threads, || harness::run_replay(&cfg, &noise_dir, &measurements))??;
            let mut v = report_json(&report);
            v["exact"] = outcome.exact.into();
            v["max_abs_diff"] = outcome.max_abs_diff.into();
            v["kl"] = outcome.kl.map_or(serde_json::Value::Null, Into::into);
            return Ok(v);
        }
        Command::DefaultConfig { experiment } => {
            let cfg = ExperimentConfig {
                kind: experiment.parse()?,
                ..Default::default()
            };
            print!("{}", cfg.to_toml_string()?);
            return Ok(serde_json::Value::Null);
        }
        Command::GammaSweep(e) => (ExperimentKind::GammaSweep, e),
        Command::TimeSweep(e) => (ExperimentKind::TimeSweep, e),
        Command::VarianceSweep(e) => (ExperimentKind::VarianceSweep, e),
        Command::Distribution(e) => (ExperimentKind::Distribution, e),
        Command::Convergence(e) => (ExperimentKind::Convergence, e),
        Command::Psd(e) => (ExperimentKind::Psd, e),
        Command::Rb(e) => (ExperimentKind::Rb, e),
        Command::SpamFit(e) => (ExperimentKind::SpamFit, e),
    };
    let cfg = load(exp.config.as_ref(), Some(kind), &exp.overrides)?;
    let report = harness::with_threads(threads, || harness::run(&cfg))??;
    Ok(report_json(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let err = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
