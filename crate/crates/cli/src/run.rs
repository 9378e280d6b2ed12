// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment dispatch and the three output files.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use cavmem::analysis::{self, FitResult};
use cavmem::device;
use cavmem::lindblad::{effective_bsb_check, BsbCheckOptions, MAX_DRIVE_PHASE};
use cavmem::protocol::{
    fmt17, mode_ringdown_experiment, z_fidelity_sweep, ExperimentKind, MemoryExperiment, Mode, QptOptions,
    RingdownOptions,
};
use cavmem::units::{mhz, to_mhz};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Settings;
use crate::CliError;

/// Inclusive linear sweep `start:stop:steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn parse(s: &str) -> Result<Self, String> {
        let (var, range) = s.split_once('=').ok_or_else(|| format!("sweep '{s}': expected VAR=start:stop:steps"))?;
        let parts: Vec<&str> = range.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("sweep '{s}': expected VAR=start:stop:steps"));
        };
        let num = |x: &str| x.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        let (Some(start), Some(stop)) = (num(a), num(b)) else {
            return Err(format!("sweep '{s}': start and stop must be finite numbers"));
        };
        let steps: usize = n.trim().parse().map_err(|_| format!("sweep '{s}': steps must be a positive integer"))?;
        if steps == 0 || (steps > 1 && !(stop > start)) {
            return Err(format!("sweep '{s}': need steps >= 1 and stop > start"));
        }
        Ok(Self { variable: var.trim().to_string(), start, stop, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| if k + 1 == self.steps { self.stop } else { self.start + h * k as f64 }).collect()
    }
}

/// Sweep variables accepted by an experiment; the first is the default.
pub fn sweep_variables(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::MemoryProtocol => &["prep_angle_rad", "delay_us"],
        ExperimentKind::FockDecay | ExperimentKind::MemoryRamsey => &["delay_us"],
        ExperimentKind::ZfidelitySweep => &["bsb_amplitude_mhz"],
        ExperimentKind::BsbCheck => &["omega_drv_mhz"],
        ExperimentKind::Ringdown | ExperimentKind::Qpt | ExperimentKind::Fit => &[],
    }
}

pub fn default_sweep(kind: ExperimentKind) -> Option<Sweep> {
    let s = |v: &str, start: f64, stop: f64, steps: usize| Some(Sweep { variable: v.into(), start, stop, steps });
    match kind {
        ExperimentKind::MemoryProtocol => s("prep_angle_rad", 0.0, 2.0 * PI, 13),
        ExperimentKind::FockDecay => s("delay_us", 0.0, 28.0, 29),
        ExperimentKind::MemoryRamsey => s("delay_us", 0.0, 20.0, 41),
        ExperimentKind::ZfidelitySweep => s("bsb_amplitude_mhz", 900.0, 1500.0, 7),
        ExperimentKind::BsbCheck => s("omega_drv_mhz", 2000.0, 6000.0, 3),
        ExperimentKind::Ringdown | ExperimentKind::Qpt | ExperimentKind::Fit => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    Exponential,
    DecayingCosine,
    Lorentzian,
    Leakage,
}

impl std::str::FromStr for FitModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" => Ok(Self::Exponential),
            "decaying-cosine" => Ok(Self::DecayingCosine),
            "lorentzian" => Ok(Self::Lorentzian),
            "leakage" => Ok(Self::Leakage),
            _ => Err(format!("unknown fit model '{s}' (expected exponential, decaying-cosine, lorentzian or leakage)")),
        }
    }
}

/// Fully resolved run; the manifest stores it and can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub experiment: ExperimentKind,
    /// Configuration file as given, for reference only. `settings` holds
    /// the parsed values.
    pub config_path: Option<String>,
    pub settings: Settings,
    pub sweep: Option<Sweep>,
    pub mode: Option<Mode>,
    pub seed: u64,
    pub shots: Option<u64>,
    /// Data file for `fit`.
    pub input: Option<String>,
    pub model: Option<FitModel>,
}

impl RunSpec {
    /// Usage checks that need no simulation.
    pub fn check(&self) -> Result<(), String> {
        let kind = self.experiment;
        let allowed = sweep_variables(kind);
        match &self.sweep {
            Some(s) if !allowed.contains(&s.variable.as_str()) => {
                return Err(if allowed.is_empty() {
                    format!("{kind} takes no sweep")
                } else {
                    format!("{kind} sweeps {}, not '{}'", allowed.join(" or "), s.variable)
                });
            }
            None if !allowed.is_empty() => return Err(format!("{kind} needs a sweep")),
            _ => {}
        }
        if (kind == ExperimentKind::Ringdown) != self.mode.is_some() {
            return Err("--mode (storage or readout) goes with the ringdown experiment only".into());
        }
        if self.shots.is_some() && kind != ExperimentKind::Qpt {
            return Err("--shots applies to qpt only".into());
        }
        if self.shots == Some(0) {
            return Err("--shots must be positive".into());
        }
        if (kind == ExperimentKind::Fit) != (self.input.is_some() && self.model.is_some()) {
            return Err("--input and --model go together with the fit experiment".into());
        }
        if let Some(path) = &self.input {
            if !Path::new(path).is_file() {
                return Err(format!("input file '{path}' not found"));
            }
        }
        if !(self.settings.dt_us > 0.0 && self.settings.dt_us.is_finite()) {
            return Err("dt must be positive".into());
        }
        Ok(())
    }
}

pub struct Outputs {
    pub results_csv: String,
    pub fits: Value,
}

fn physics<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Physics(e.to_string())
}

fn csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| fmt17(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn fit_json(f: &FitResult<f64>) -> Value {
    serde_json::to_value(f).expect("serializable")
}

pub fn execute(spec: &RunSpec) -> Result<Outputs, CliError> {
    let st = &spec.settings;
    let p = st.device;
    let xs = spec.sweep.as_ref().map(Sweep::values).unwrap_or_default();
    let var = spec.sweep.as_ref().map(|s| s.variable.as_str()).unwrap_or("");
    let opts = || st.protocol_options().map_err(CliError::Usage);
    match spec.experiment {
        ExperimentKind::MemoryProtocol => {
            let exp = MemoryExperiment::new(&p, &opts()?).map_err(physics)?;
            let outs = xs
                .par_iter()
                .map(|&x| match var {
                    "delay_us" => exp.run(st.prep_angle_rad, x),
                    _ => exp.run(x, st.delay_us),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(physics)?;
            let rows: Vec<Vec<f64>> =
                xs.iter().zip(&outs).map(|(&x, o)| vec![x, o.p_g, o.leakage, o.protocol_length]).collect();
            let mut fits = json!({});
            if var == "prep_angle_rad" && xs.len() >= 4 {
                let ys: Vec<f64> = outs.iter().map(|o| o.p_g).collect();
                let pat = analysis::fit_cosine_pattern(&xs, &ys).map_err(physics)?;
                fits["cosine_pattern"] = serde_json::to_value(pat).expect("serializable");
            }
            fits["calibration"] = serde_json::to_value(exp.calibration()).expect("serializable");
            Ok(Outputs { results_csv: csv(&[var, "p_g", "leakage", "protocol_length_us"], &rows), fits })
        }
        ExperimentKind::FockDecay => {
            let exp = MemoryExperiment::new(&p, &opts()?).map_err(physics)?;
            let r = exp.fock_decay(&xs).map_err(physics)?;
            let fits = json!({
                "exponential": fit_json(&r.fit),
                "t1_s_us": r.t1_s,
                "t1_s_uncertainty_us": r.t1_s_uncertainty,
                "t1_s_over_t1_q": r.t1_s / p.t1_q,
            });
            Ok(Outputs { results_csv: r.record.to_csv(), fits })
        }
        ExperimentKind::MemoryRamsey => {
            let exp = MemoryExperiment::new(&p, &opts()?).map_err(physics)?;
            let r = exp.memory_ramsey(&xs, mhz(st.ramsey_detuning_mhz)).map_err(physics)?;
            let fits = json!({
                "decaying_cosine": fit_json(&r.fit),
                "t2_s_us": r.t2_s,
                "t2_s_uncertainty_us": r.t2_s_uncertainty,
                "fringe_frequency_mhz": r.fringe_frequency,
            });
            Ok(Outputs { results_csv: r.record.to_csv(), fits })
        }
        ExperimentKind::Ringdown => {
            let mode = spec.mode.expect("checked");
            let ro = RingdownOptions {
                spectrum: st.spectrum,
                decoherence: st.decoherence.decoherence(),
                dt: st.dt_us,
                ..RingdownOptions::default()
            };
            let r = mode_ringdown_experiment(&p, mode, &ro).map_err(physics)?;
            let rows: Vec<Vec<f64>> =
                r.amplitude.data.iter().zip(&r.energy.data).map(|(a, e)| vec![a.x, a.y, e.y]).collect();
            let fits = json!({
                "mode": mode,
                "amplitude": fit_json(&r.amplitude_fit),
                "energy": fit_json(&r.energy_fit),
                "amplitude_decay_time_us": r.amplitude_decay_time,
                "amplitude_decay_time_ns": r.amplitude_decay_time * 1e3,
                "energy_decay_time_us": r.energy_decay_time,
                "energy_decay_time_ns": r.energy_decay_time * 1e3,
            });
            Ok(Outputs { results_csv: csv(&["t_us", "amplitude_ratio", "energy_ratio"], &rows), fits })
        }
        ExperimentKind::ZfidelitySweep => {
            let amps: Vec<f64> = xs.iter().map(|&x| mhz(x)).collect();
            let s = z_fidelity_sweep(&p, &amps, &opts()?).map_err(physics)?;
            let rows: Vec<Vec<f64>> = s
                .points
                .iter()
                .map(|w| {
                    vec![
                        to_mhz(w.bsb_amplitude),
                        w.omega_drv.map_or(f64::NAN, to_mhz),
                        w.protocol_length,
                        w.p_g,
                        w.p_g0,
                        w.f_z,
                        w.f_z_corr,
                        w.leakage,
                    ]
                })
                .collect();
            let header =
                ["bsb_amplitude_mhz", "omega_drv_mhz", "t_p_us", "p_g", "p_g0", "f_z", "f_z_corr", "leakage"];
            let mut fits = json!({ "points": s.points });
            // secondary fit: a flat or short sweep cannot constrain it
            fits["leakage"] = match analysis::fit_leakage(&s.f_z_corr.xs(), &s.f_z_corr.ys()) {
                Ok(f) => fit_json(&f),
                Err(e) => json!({ "error": e.to_string() }),
            };
            Ok(Outputs { results_csv: csv(&header, &rows), fits })
        }
        ExperimentKind::BsbCheck => {
            let bo = BsbCheckOptions { spectrum: st.spectrum, ..BsbCheckOptions::default() };
            let checks = xs
                .par_iter()
                .map(|&w| effective_bsb_check(&p, mhz(w), &bo))
                .collect::<Result<Vec<_>, _>>()
                .map_err(physics)?;
            let rows: Vec<Vec<f64>> = checks
                .iter()
                .map(|c| {
                    vec![
                        to_mhz(c.omega_drv),
                        to_mhz(c.omega_qubit),
                        to_mhz(c.measured_rate),
                        to_mhz(c.predicted_rate),
                        c.ratio,
                        c.contrast,
                    ]
                })
                .collect();
            let header = ["omega_drv_mhz", "omega_qubit_mhz", "measured_rate_mhz", "predicted_rate_mhz", "ratio", "contrast"];
            let mut fits = json!({ "checks": checks });
            if checks.len() >= 2 {
                let lx: Vec<f64> = checks.iter().map(|c| c.omega_drv.ln()).collect();
                let ly: Vec<f64> = checks.iter().map(|c| c.measured_rate.ln()).collect();
                fits["loglog_slope"] = json!(slope(&lx, &ly));
            }
            Ok(Outputs { results_csv: csv(&header, &rows), fits })
        }
        ExperimentKind::Qpt => {
            let exp = MemoryExperiment::new(&p, &opts()?).map_err(physics)?;
            let q = exp
                .process_tomography(&QptOptions { delay: st.delay_us, shots: spec.shots, seed: spec.seed })
                .map_err(physics)?;
            let chi: Value = serde_json::from_str(&q.chi.to_json()).expect("chi JSON");
            let fits = json!({
                "fidelity_raw": q.fidelity.raw,
                "fidelity_corrected": q.fidelity.corrected,
                "frame_angle_rad": q.fidelity.theta,
                "protocol_length_us": q.protocol_length,
                "chi": chi,
            });
            Ok(Outputs { results_csv: q.chi.to_csv(), fits })
        }
        ExperimentKind::Fit => {
            let path = spec.input.as_deref().expect("checked");
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;
            let (x, y) = read_xy(&text).map_err(CliError::Usage)?;
            let model = spec.model.expect("checked");
            let fit = match model {
                FitModel::Exponential => analysis::fit_exponential(&x, &y),
                FitModel::DecayingCosine => analysis::fit_decaying_cosine(&x, &y),
                FitModel::Lorentzian => analysis::fit_lorentzian(&x, &y),
                FitModel::Leakage => analysis::fit_leakage(&x, &y),
            }
            .map_err(physics)?;
            let rows: Vec<Vec<f64>> = x.iter().zip(&y).map(|(&a, &b)| vec![a, b, evaluate(model, &fit, a)]).collect();
            Ok(Outputs { results_csv: csv(&["x", "y", "fitted"], &rows), fits: json!({ "model": model, "fit": fit_json(&fit) }) })
        }
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn evaluate(model: FitModel, f: &FitResult<f64>, x: f64) -> f64 {
    let v = |n: &str| f.value(n).expect("fit parameter");
    match model {
        FitModel::Exponential => v("A") * (-x / v("T")).exp() + v("offset"),
        FitModel::DecayingCosine => {
            v("A") * (-x / v("T2")).exp() * (2.0 * PI * v("f") * x + v("phase")).cos() + v("offset")
        }
        FitModel::Lorentzian => {
            let z = (x - v("f0")) / v("fwhm");
            v("peak") / (1.0 + 4.0 * z * z) + v("floor")
        }
        FitModel::Leakage => 1.0 - analysis::leakage_population(x, v("a"), v("gamma_sp")),
    }
}

/// Two numeric columns; a non-numeric first line is taken as a header.
fn read_xy(text: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cells[..] {
            [a, b, ..] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((a, b)) => {
                x.push(a);
                y.push(b);
            }
            None if n == 0 => {}
            None => return Err(format!("line {}: expected two numbers", n + 1)),
        }
    }
    Ok((x, y))
}

pub fn manifest(spec: &RunSpec, jobs: Option<usize>) -> Value {
    let st = &spec.settings;
    json!({
        "tool": "cavmem",
        "version": env!("CARGO_PKG_VERSION"),
        "run": spec,
        "integrator": {
            "scheme": "rk4 with exact propagator on idle intervals",
            "dt_us": st.dt_us,
            "dt_ns": st.dt_us * 1e3,
            "frame": st.frame.name(),
            "max_drive_phase_per_step_rad": MAX_DRIVE_PHASE,
            "calibration_dt_us": cavmem::pulse::CalibrationOptions::default().dt,
        },
        "derived": {
            "bsb_frequency_ghz": cavmem::units::to_ghz(device::bsb_frequency(&st.device)),
        },
        "execution": { "jobs": jobs },
    })
}

pub fn write_outputs(dir: &Path, out: &Outputs, manifest: &Value) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("results.csv"), &out.results_csv).map_err(io)?;
    let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("serializable") + "\n";
    fs::write(dir.join("fits.json"), pretty(&out.fits)).map_err(io)?;
    fs::write(dir.join("manifest.json"), pretty(manifest)).map_err(io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        let s = Sweep::parse("delay_us=0:28:29").unwrap();
        let v = s.values();
        assert_eq!(v.len(), 29);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[28], 28.0);
        assert!((v[1] - 1.0).abs() < 1e-15);
        assert_eq!(Sweep::parse("x=1:1:1").unwrap().values(), vec![1.0]);
        for bad in ["delay_us", "delay_us=0:1", "delay_us=1:0:3", "delay_us=0:1:0", "delay_us=a:1:2"] {
            assert!(Sweep::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn header_line_is_skipped() {
        let (x, y) = read_xy("t,p\n0,1\n1,0.5\n").unwrap();
        assert_eq!((x, y), (vec![0.0, 1.0], vec![1.0, 0.5]));
        assert!(read_xy("0,1\nfoo,2\n").is_err());
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1.0f64, 4.0, 16.0].iter().map(|v| v.ln()).collect();
        assert!((slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
