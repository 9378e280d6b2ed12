// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::sync::Arc;

use cavmem::device::{self, DeviceParams};
use cavmem::lindblad::{Decoherence, LindbladModel, ModelOptions, OpenSystem, SpectrumModel};
use cavmem::pulse::{calibrate_pi_pulse, CalibrationOptions, PulseSequence, Transition};
use cavmem::qsys::SubsystemDims;
use cavmem::units::mhz;

fn model(p: &DeviceParams, dims: (usize, usize, usize), spectrum: SpectrumModel) -> LindbladModel<f64> {
    let o = ModelOptions {
        dims: SubsystemDims::new(dims.0, dims.1, dims.2).unwrap(),
        spectrum,
        decoherence: Decoherence::none(),
        ..Default::default()
    };
    LindbladModel::new(Arc::new(OpenSystem::new(p, &o).unwrap()), &PulseSequence::default()).unwrap()
}

#[test]
fn two_level_rabi_pi_time() {
    let p = DeviceParams { g: 0.0, ..DeviceParams::default() };
    let m = model(&p, (2, 2, 1), SpectrumModel::Bare);
    let amp = mhz(5.0);
    let cal = calibrate_pi_pulse(&m, Transition::Qubit, amp, &CalibrationOptions::default()).unwrap();
    let want = PI / amp;
    assert!((cal.effective_pi_time() - want).abs() <= 0.01 * want, "{} vs {want}", cal.effective_pi_time());
    assert!(cal.transfer > 0.999);
}

fn bsb_pi(p: &DeviceParams, omega_drv: f64) -> f64 {
    let m = model(p, (2, 4, 2), SpectrumModel::Matched);
    let amp = device::storage_drive_to_qubit_drive(p, omega_drv).unwrap();
    let cal = calibrate_pi_pulse(&m, Transition::BlueSideband, amp, &CalibrationOptions::default()).unwrap();
    assert!(cal.transfer > 0.95, "transfer {}", cal.transfer);
    cal.effective_pi_time()
}

#[test]
fn sideband_pi_time_matches_effective_rate() {
    let p = DeviceParams::default();
    let omega = mhz(2000.0);
    let want = PI / (2.0 * device::bsb_effective_rate(&p, omega).unwrap());
    let got = bsb_pi(&p, omega);
    assert!((got / want - 1.0).abs() <= 0.2, "{got} vs {want}");
}

#[test]
fn doubling_sideband_drive_quarters_pi_time() {
    let p = DeviceParams::default();
    let ratio = bsb_pi(&p, mhz(2000.0)) / bsb_pi(&p, mhz(4000.0));
    assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn calibration_is_deterministic() {
    let p = DeviceParams::default();
    let m = model(&p, (3, 3, 2), SpectrumModel::Matched);
    let opts = CalibrationOptions::default();
    let a = calibrate_pi_pulse(&m, Transition::Qubit, mhz(20.0), &opts).unwrap();
    let b = calibrate_pi_pulse(&m, Transition::Qubit, mhz(20.0), &opts).unwrap();
    assert_eq!(a.plateau.to_bits(), b.plateau.to_bits());
    assert_eq!(a.carrier.to_bits(), b.carrier.to_bits());
}

#[test]
fn zero_amplitude_is_rejected() {
    let p = DeviceParams::default();
    let m = model(&p, (2, 3, 1), SpectrumModel::Matched);
    let r = calibrate_pi_pulse(&m, Transition::BlueSideband, 0.0, &CalibrationOptions::default());
    assert!(r.is_err());
}
