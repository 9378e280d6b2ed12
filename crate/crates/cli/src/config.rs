// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value unit` configuration files.
//!
//! Frequencies and times must carry a unit (GHz, MHz, kHz, Hz, us, ns, ms,
//! s); angles take `rad`. Counts, quality factors and names are unit-less.
//! Keys that are absent keep the reference device values.

use std::collections::BTreeSet;

use cavmem::device::DeviceParams;
use cavmem::lindblad::{Decoherence, DriveForm, FrameChoice, SpectrumModel, DEFAULT_DT};
use cavmem::protocol::{ProtocolOptions, ReadoutModel, REFERENCE_BSB_AMPLITUDE_MHZ, REFERENCE_QUBIT_AMPLITUDE_MHZ};
use cavmem::qsys::SubsystemDims;
use cavmem::units::mhz;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    BareRotating,
    Lab,
}

impl Frame {
    pub fn choice(self) -> FrameChoice {
        match self {
            Frame::BareRotating => FrameChoice::BareRotating,
            Frame::Lab => FrameChoice::Lab,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Frame::BareRotating => "bare-rotating",
            Frame::Lab => "lab",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisePreset {
    Reference,
    None,
    StorageOnly,
}

impl NoisePreset {
    pub fn decoherence(self) -> Decoherence {
        match self {
            NoisePreset::Reference => Decoherence::reference(),
            NoisePreset::None => Decoherence::none(),
            NoisePreset::StorageOnly => Decoherence::storage_only(),
        }
    }
}

/// Everything a run needs besides the experiment selection. Serialized
/// verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub device: DeviceParams,
    /// Levels of (transmon, storage, readout).
    pub dims: [usize; 3],
    pub frame: Frame,
    pub spectrum: SpectrumModel,
    pub drive_form: DriveForm,
    pub decoherence: NoisePreset,
    pub dt_us: f64,
    pub qubit_amplitude_mhz: f64,
    pub bsb_amplitude_mhz: f64,
    pub qubit_pi_multiplier: u32,
    pub readout: ReadoutModel,
    pub prep_angle_rad: f64,
    pub delay_us: f64,
    pub ramsey_detuning_mhz: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let d = SubsystemDims::default();
        Self {
            device: DeviceParams::default(),
            dims: [d.n_transmon_levels, d.n_storage_photons, d.n_readout_photons],
            frame: Frame::BareRotating,
            spectrum: SpectrumModel::Matched,
            drive_form: DriveForm::RotatingWave,
            decoherence: NoisePreset::Reference,
            dt_us: DEFAULT_DT,
            qubit_amplitude_mhz: REFERENCE_QUBIT_AMPLITUDE_MHZ,
            bsb_amplitude_mhz: REFERENCE_BSB_AMPLITUDE_MHZ,
            qubit_pi_multiplier: 1,
            readout: ReadoutModel::Direct,
            prep_angle_rad: 0.0,
            delay_us: 0.0,
            ramsey_detuning_mhz: 0.25,
        }
    }
}

impl Settings {
    pub fn subsystem_dims(&self) -> Result<SubsystemDims, String> {
        SubsystemDims::new(self.dims[0], self.dims[1], self.dims[2]).map_err(|e| e.to_string())
    }

    pub fn protocol_options(&self) -> Result<ProtocolOptions, String> {
        Ok(ProtocolOptions {
            dims: self.subsystem_dims()?,
            spectrum: self.spectrum,
            frame: self.frame.choice(),
            drive_form: self.drive_form,
            decoherence: self.decoherence.decoherence(),
            dt: self.dt_us,
            qubit_amplitude: mhz(self.qubit_amplitude_mhz),
            bsb_amplitude: mhz(self.bsb_amplitude_mhz),
            qubit_pi_multiplier: self.qubit_pi_multiplier,
            readout: self.readout,
            ..ProtocolOptions::default()
        })
    }
}

#[derive(Clone, Copy)]
enum Dim {
    Frequency,
    Time,
}

/// Value with unit, returned in Hz or µs.
fn quantity(key: &str, raw: &str, dim: Dim) -> Result<f64, String> {
    let mut parts = raw.split_whitespace();
    let (Some(num), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
        let want = match dim {
            Dim::Frequency => "GHz, MHz, kHz or Hz",
            Dim::Time => "us, ns, ms or s",
        };
        return Err(format!("{key}: expected '<number> <unit>' with unit {want}, got '{raw}'"));
    };
    let v: f64 = num.parse().map_err(|_| format!("{key}: '{num}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{key}: value must be finite"));
    }
    let scale = match (dim, unit) {
        (Dim::Frequency, "GHz") => 1e9,
        (Dim::Frequency, "MHz") => 1e6,
        (Dim::Frequency, "kHz") => 1e3,
        (Dim::Frequency, "Hz") => 1.0,
        (Dim::Time, "us" | "µs") => 1.0,
        (Dim::Time, "ns") => 1e-3,
        (Dim::Time, "ms") => 1e3,
        (Dim::Time, "s") => 1e6,
        _ => return Err(format!("{key}: unit '{unit}' does not fit this key")),
    };
    Ok(v * scale)
}

fn plain<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, String> {
    raw.parse().map_err(|_| format!("{key}: cannot parse '{raw}'"))
}

fn angle(key: &str, raw: &str) -> Result<f64, String> {
    match raw.split_whitespace().collect::<Vec<_>>()[..] {
        [num, "rad"] => plain(key, num),
        _ => Err(format!("{key}: expected '<number> rad', got '{raw}'")),
    }
}

/// Parse a configuration text on top of the defaults.
pub fn parse(text: &str) -> Result<Settings, String> {
    let mut s = Settings::default();
    let mut seen = BTreeSet::new();
    let mut probe_us: Option<f64> = None;
    let mut dispersive = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, raw) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format!("line {}: expected 'key = value'", n + 1))?;
        if !seen.insert(key.to_string()) {
            return Err(format!("line {}: duplicate key '{key}'", n + 1));
        }
        let ghz = |r| quantity(key, r, Dim::Frequency).map(|v| v / 1e9);
        let mhz_ = |r| quantity(key, r, Dim::Frequency).map(|v| v / 1e6);
        let khz = |r| quantity(key, r, Dim::Frequency).map(|v| v / 1e3);
        let us = |r| quantity(key, r, Dim::Time);
        let d = &mut s.device;
        match key {
            "omega_ro" => d.omega_ro = ghz(raw)?,
            "omega_s" => d.omega_s = ghz(raw)?,
            "omega_q" => d.omega_q = ghz(raw)?,
            "alpha" => d.alpha = mhz_(raw)?,
            "g" => d.g = mhz_(raw)?,
            "g_102" => d.g_102 = mhz_(raw)?,
            "chi_ro" => d.chi_ro = mhz_(raw)?,
            "chi_s" => d.chi_s = mhz_(raw)?,
            "kappa_ro" => d.kappa_ro = mhz_(raw)?,
            "kappa_s" => d.kappa_s = khz(raw)?,
            "t1_q" => d.t1_q = us(raw)?,
            "t2_q" => d.t2_q = us(raw)?,
            "t1_s" => d.t1_s = us(raw)?,
            "t2_s" => d.t2_s = us(raw)?,
            "q0_ro" => d.q0_ro = plain(key, raw)?,
            "q0_s" => d.q0_s = plain(key, raw)?,
            "n_ro" => d.n_ro = plain(key, raw)?,
            "transmon_levels" => s.dims[0] = plain(key, raw)?,
            "storage_levels" => s.dims[1] = plain(key, raw)?,
            "readout_levels" => s.dims[2] = plain(key, raw)?,
            "frame" => {
                s.frame = match raw {
                    "bare-rotating" => Frame::BareRotating,
                    "lab" => Frame::Lab,
                    _ => return Err(format!("frame: expected bare-rotating or lab, got '{raw}'")),
                }
            }
            "spectrum" => {
                s.spectrum = match raw {
                    "matched" => SpectrumModel::Matched,
                    "bare" => SpectrumModel::Bare,
                    _ => return Err(format!("spectrum: expected matched or bare, got '{raw}'")),
                }
            }
            "drive_form" => {
                s.drive_form = match raw {
                    "rotating-wave" => DriveForm::RotatingWave,
                    "real-cosine" => DriveForm::RealCosine,
                    _ => return Err(format!("drive_form: expected rotating-wave or real-cosine, got '{raw}'")),
                }
            }
            "decoherence" => {
                s.decoherence = match raw {
                    "reference" => NoisePreset::Reference,
                    "none" => NoisePreset::None,
                    "storage-only" => NoisePreset::StorageOnly,
                    _ => return Err(format!("decoherence: expected reference, none or storage-only, got '{raw}'")),
                }
            }
            "dt" => s.dt_us = us(raw)?,
            "qubit_amplitude" => s.qubit_amplitude_mhz = mhz_(raw)?,
            "bsb_amplitude" => s.bsb_amplitude_mhz = mhz_(raw)?,
            "qubit_pi_multiplier" => s.qubit_pi_multiplier = plain(key, raw)?,
            "readout" => {
                dispersive = match raw {
                    "direct" => false,
                    "dispersive" => true,
                    _ => return Err(format!("readout: expected direct or dispersive, got '{raw}'")),
                }
            }
            "probe" => probe_us = Some(us(raw)?),
            "prep_angle" => s.prep_angle_rad = angle(key, raw)?,
            "delay" => s.delay_us = us(raw)?,
            "ramsey_detuning" => s.ramsey_detuning_mhz = mhz_(raw)?,
            _ => return Err(format!("line {}: unknown key '{key}'", n + 1)),
        }
    }
    match (dispersive, probe_us) {
        (true, p) => s.readout = ReadoutModel::Dispersive { probe: p.unwrap_or(0.2) },
        (false, Some(_)) => return Err("probe is only meaningful with readout = dispersive".into()),
        (false, None) => {}
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_convert_to_field_units() {
        let s = parse("omega_s = 8707.546 MHz\nkappa_s = 0.0247 MHz\nt1_q = 1320 ns\ndt = 0.02 ns").unwrap();
        assert!((s.device.omega_s - 8.707546).abs() < 1e-12);
        assert!((s.device.kappa_s - 24.7).abs() < 1e-9);
        assert!((s.device.t1_q - 1.32).abs() < 1e-12);
        assert!((s.dt_us - 2e-5).abs() < 1e-18);
    }

    #[test]
    fn unitless_frequency_is_rejected() {
        let e = parse("omega_q = 6.234").unwrap_err();
        assert!(e.contains("unit"), "{e}");
        assert!(parse("t1_q = 1.32 GHz").is_err());
        assert!(parse("prep_angle = 1.5").is_err());
    }

    #[test]
    fn comments_blank_lines_and_duplicates() {
        assert_eq!(parse("# only a comment\n\n").unwrap(), Settings::default());
        assert!(parse("g = 53 MHz\ng = 54 MHz").unwrap_err().contains("duplicate"));
        assert!(parse("bogus = 1 MHz").unwrap_err().contains("unknown key"));
    }

    #[test]
    fn dispersive_readout_probe() {
        let s = parse("readout = dispersive\nprobe = 150 ns").unwrap();
        assert_eq!(s.readout, ReadoutModel::Dispersive { probe: 0.15 });
        assert!(parse("probe = 150 ns").is_err());
    }
}
