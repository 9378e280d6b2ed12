// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! `cavmem`: run memory experiments and check device configurations.
//!
//! Exit status: 0 on success, 1 for simulation or fit failures and invalid
//! configurations reported by `validate`, 2 for usage errors. Usage errors
//! are detected before anything is written.

mod config;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use cavmem::lindblad::{LindbladError, LindbladModel, ModelOptions, OpenSystem};
use cavmem::protocol::{ExperimentKind, Mode};
use cavmem::pulse::PulseSequence;
use clap::{Args, Parser, Subcommand};

use config::Settings;
use run::{FitModel, RunSpec, Sweep};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Physics(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Physics(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Physics(m) => write!(f, "simulation failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "cavmem", version, about = "Pulse-level simulation of a multimode 3D-cavity quantum memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write results.csv, fits.json and manifest.json.
    Run(RunArgs),
    /// Check a configuration and echo it in linear and angular units.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Device and simulation configuration (key = value unit).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replay the run recorded in a manifest.json.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["config", "experiment", "sweep", "seed", "dt", "shots", "mode", "input", "model"])]
    manifest: Option<PathBuf>,
    /// memory-protocol, fock-decay, memory-ramsey, ringdown,
    /// zfidelity-sweep, bsb-check, qpt or fit.
    #[arg(long, required_unless_present = "manifest")]
    experiment: Option<String>,
    /// VAR=start:stop:steps, e.g. delay_us=0:28:29.
    #[arg(long)]
    sweep: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Seed for sampled tomography.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integration step in ns; overrides the configuration.
    #[arg(long, value_name = "NS")]
    dt: Option<f64>,
    /// Shots per Pauli expectation for qpt.
    #[arg(long, value_name = "N")]
    shots: Option<u64>,
    /// Mode for ringdown: storage or readout.
    #[arg(long)]
    mode: Option<String>,
    /// Two-column x,y data for the fit experiment.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Fit model: exponential, decaying-cosine, lorentzian or leakage.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Configuration to check; the reference device when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Integration step in ns; overrides the configuration.
    #[arg(long, value_name = "NS")]
    dt: Option<f64>,
}

fn load_settings(path: Option<&PathBuf>, dt_ns: Option<f64>) -> Result<Settings, CliError> {
    let mut s = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
            config::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
        }
        None => Settings::default(),
    };
    if let Some(ns) = dt_ns {
        if !(ns > 0.0 && ns.is_finite()) {
            return Err(CliError::Usage(format!("--dt must be positive, got {ns}")));
        }
        s.dt_us = ns * 1e-3;
    }
    Ok(s)
}

fn spec_from_args(a: &RunArgs) -> Result<RunSpec, CliError> {
    let usage = CliError::Usage;
    if let Some(path) = &a.manifest {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("manifest {}: {e}", path.display())))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| usage(format!("manifest {}: {e}", path.display())))?;
        return serde_json::from_value(v["run"].clone())
            .map_err(|e| usage(format!("manifest {}: {e}", path.display())));
    }
    let kind: ExperimentKind = a.experiment.as_deref().unwrap_or_default().parse().map_err(usage)?;
    let settings = load_settings(a.config.as_ref(), a.dt)?;
    let sweep = match &a.sweep {
        Some(s) => Some(Sweep::parse(s).map_err(usage)?),
        None => run::default_sweep(kind),
    };
    let mode = a.mode.as_deref().map(str::parse::<Mode>).transpose().map_err(usage)?;
    let model = a.model.as_deref().map(str::parse::<FitModel>).transpose().map_err(usage)?;
    Ok(RunSpec {
        experiment: kind,
        config_path: a.config.as_ref().map(|p| p.display().to_string()),
        settings,
        sweep,
        mode,
        seed: a.seed,
        shots: a.shots,
        input: a.input.as_ref().map(|p| p.display().to_string()),
        model,
    })
}

fn cmd_run(a: &RunArgs) -> Result<(), CliError> {
    let spec = spec_from_args(a)?;
    spec.check().map_err(CliError::Usage)?;
    if let Some(n) = a.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    let out = run::execute(&spec)?;
    run::write_outputs(&a.out, &out, &run::manifest(&spec, a.jobs))
}

/// Linear value with unit and the matching angular frequency in rad/µs.
fn echo_frequency(name: &str, linear: f64, unit: &str, per_mhz: f64) {
    let angular = 2.0 * std::f64::consts::PI * linear * per_mhz;
    println!("  {name}/2pi = {linear} {unit}    {name} = {angular:.10e} rad/us");
}

fn breaches(s: &Settings) -> Vec<String> {
    let mut out = Vec::new();
    let mut p = s.device;
    for (label, t1, t2) in [("qubit", p.t1_q, p.t2_q), ("memory", p.t1_s, p.t2_s)] {
        if t2 > 2.0 * t1 {
            out.push(format!("{label} T2 = {t2} us exceeds 2*T1 = {} us", 2.0 * t1));
        }
    }
    // the remaining invariants, without repeating the T2 rule
    p.t2_q = p.t2_q.min(2.0 * p.t1_q);
    p.t2_s = p.t2_s.min(2.0 * p.t1_s);
    let device_ok = match p.validate() {
        Ok(()) => true,
        Err(e) => {
            out.push(e.to_string());
            false
        }
    };
    if s.qubit_pi_multiplier % 2 == 0 {
        out.push(format!("qubit_pi_multiplier must be odd, got {}", s.qubit_pi_multiplier));
    }
    let dims = match s.subsystem_dims() {
        Ok(d) => Some(d),
        Err(e) => {
            out.push(format!("truncation: {e}"));
            None
        }
    };
    if let (true, Some(dims)) = (device_ok, dims) {
        let mo = ModelOptions {
            dims,
            frame: s.frame.choice(),
            drive_form: s.drive_form,
            spectrum: s.spectrum,
            decoherence: s.decoherence.decoherence(),
            dt: s.dt_us,
        };
        match OpenSystem::<f64>::new(&p, &mo).and_then(|sys| LindbladModel::new(Arc::new(sys), &PulseSequence::default())) {
            Ok(_) => {}
            Err(LindbladError::StepSize { dt_ns, required_ns, .. }) => out.push(format!(
                "dt = {dt_ns} ns is too large for the {} frame; suggested dt <= {required_ns:.6} ns",
                s.frame.name()
            )),
            Err(e) => out.push(e.to_string()),
        }
    }
    out
}

fn cmd_validate(a: &ValidateArgs) -> Result<bool, CliError> {
    let s = load_settings(a.config.as_ref(), a.dt)?;
    let p = &s.device;
    println!("device:");
    for (name, v) in [("omega_ro", p.omega_ro), ("omega_s", p.omega_s), ("omega_q", p.omega_q)] {
        echo_frequency(name, v, "GHz", 1e3);
    }
    for (name, v) in [
        ("alpha", p.alpha),
        ("g", p.g),
        ("g_102", p.g_102),
        ("chi_ro", p.chi_ro),
        ("chi_s", p.chi_s),
        ("kappa_ro", p.kappa_ro),
    ] {
        echo_frequency(name, v, "MHz", 1.0);
    }
    echo_frequency("kappa_s", p.kappa_s, "kHz", 1e-3);
    for (name, v) in [("t1_q", p.t1_q), ("t2_q", p.t2_q), ("t1_s", p.t1_s), ("t2_s", p.t2_s)] {
        println!("  {name} = {v} us");
    }
    for (name, v) in [("q0_ro", p.q0_ro), ("q0_s", p.q0_s), ("n_ro", p.n_ro)] {
        println!("  {name} = {v}");
    }
    println!("simulation:");
    println!("  levels (transmon, storage, readout) = {:?}", s.dims);
    println!("  frame = {}", s.frame.name());
    println!("  dt = {} ns", s.dt_us * 1e3);
    println!("  decoherence = {}", serde_json::to_string(&s.decoherence).expect("serializable"));
    echo_frequency("qubit_amplitude", s.qubit_amplitude_mhz, "MHz", 1.0);
    echo_frequency("bsb_amplitude", s.bsb_amplitude_mhz, "MHz", 1.0);
    let found = breaches(&s);
    if found.is_empty() {
        println!("valid");
        return Ok(true);
    }
    for b in &found {
        println!("breach: {b}");
    }
    Ok(false)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|()| true),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cavmem: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
