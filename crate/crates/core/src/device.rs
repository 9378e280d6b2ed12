// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Device parameters and the closed-form quantities derived from them.
//!
//! Dispersive sign convention: a cavity mode `m` sits at `ω_m + χ_m σz` with
//! `σz = -1` for the transmon ground state, so the qubit-ground ladder is the
//! lower one and the two ladders are split by `2χ_m`. Every module uses this.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{ghz, khz, mhz};

/// Relative slack allowed on `t2 <= 2 t1`.
const T2_TOLERANCE: f64 = 1e-9;

/// Closest allowed approach of the half-BSB tone to a bare resonance.
pub fn degenerate_drive_tolerance() -> f64 {
    mhz(1.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("invalid device parameter: {0}")]
    InvalidParams(String),
    #[error("degenerate drive: half-BSB tone within {detuning_mhz:.3} MHz of the {which} resonance")]
    DegenerateDrive { which: &'static str, detuning_mhz: f64 },
    #[error("singular detuning: {0}")]
    SingularDetuning(String),
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("nonphysical coherence pair: T2 = {t2} us exceeds 2*T1 = {} us", 2.0 * t1)]
    NonphysicalPair { t1: f64, t2: f64 },
}

/// Parameters of the sample. Frequencies are linear (GHz/MHz/kHz as named
/// per field), times are in µs. Use the angular getters inside simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Readout mode frequency, GHz.
    pub omega_ro: f64,
    /// Storage mode frequency, GHz.
    pub omega_s: f64,
    /// Qubit frequency, GHz.
    pub omega_q: f64,
    /// Anharmonicity `ω_ef - ω_ge`, MHz (negative for a transmon).
    pub alpha: f64,
    /// Qubit-mode coupling, MHz. Both modes share it.
    pub g: f64,
    /// Residual coupling to a third cavity mode, MHz. Not simulated.
    pub g_102: f64,
    /// Readout dispersive shift, MHz.
    pub chi_ro: f64,
    /// Storage dispersive shift, MHz.
    pub chi_s: f64,
    /// Readout decay rate `κ/2π`, MHz.
    pub kappa_ro: f64,
    /// Storage decay rate `κ/2π`, kHz.
    pub kappa_s: f64,
    /// Qubit energy relaxation time, µs.
    pub t1_q: f64,
    /// Qubit Ramsey coherence time, µs.
    pub t2_q: f64,
    /// Internal quality factor of the readout mode.
    pub q0_ro: f64,
    /// Internal quality factor of the storage mode.
    pub q0_s: f64,
    /// Mean readout photon number during the protocol.
    pub n_ro: f64,
    /// Measured memory relaxation time, µs. Only used to infer the thermal
    /// qubit population, the simulated memory decays at `κ_s`.
    pub t1_s: f64,
    /// Measured memory coherence time, µs.
    pub t2_s: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            omega_ro: 5.518,
            omega_s: 8.707546,
            omega_q: 6.234,
            alpha: -185.0,
            g: 53.0,
            g_102: 8.0,
            chi_ro: 3.6,
            chi_s: 1.1,
            kappa_ro: 4.0,
            kappa_s: 24.7,
            t1_q: 1.32,
            t2_q: 2.49,
            q0_ro: 1.9e6,
            q0_s: 1.0e6,
            n_ro: 0.0,
            t1_s: 8.0,
            t2_s: 15.5,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let positive = [
            ("omega_ro", self.omega_ro),
            ("omega_s", self.omega_s),
            ("omega_q", self.omega_q),
            ("kappa_ro", self.kappa_ro),
            ("kappa_s", self.kappa_s),
            ("t1_q", self.t1_q),
            ("t2_q", self.t2_q),
            ("q0_ro", self.q0_ro),
            ("q0_s", self.q0_s),
            ("t1_s", self.t1_s),
            ("t2_s", self.t2_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(DeviceError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        let finite = [
            ("alpha", self.alpha),
            ("g", self.g),
            ("g_102", self.g_102),
            ("chi_ro", self.chi_ro),
            ("chi_s", self.chi_s),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(DeviceError::InvalidParams(format!("{name} must be finite")));
            }
        }
        if self.g < 0.0 {
            return Err(DeviceError::InvalidParams(format!("g must be >= 0, got {}", self.g)));
        }
        if !(self.n_ro.is_finite() && self.n_ro >= 0.0) {
            return Err(DeviceError::InvalidParams(format!("n_ro must be >= 0, got {}", self.n_ro)));
        }
        for (t1, t2, label) in [(self.t1_q, self.t2_q, "qubit"), (self.t1_s, self.t2_s, "memory")] {
            if t2 > 2.0 * t1 * (1.0 + T2_TOLERANCE) {
                return Err(DeviceError::InvalidParams(format!(
                    "{label} T2 = {t2} us exceeds 2*T1 = {} us",
                    2.0 * t1
                )));
            }
        }
        Ok(())
    }

    pub fn w_ro(&self) -> f64 {
        ghz(self.omega_ro)
    }
    pub fn w_s(&self) -> f64 {
        ghz(self.omega_s)
    }
    pub fn w_q(&self) -> f64 {
        ghz(self.omega_q)
    }
    pub fn w_alpha(&self) -> f64 {
        mhz(self.alpha)
    }
    pub fn w_g(&self) -> f64 {
        mhz(self.g)
    }
    pub fn w_chi_ro(&self) -> f64 {
        mhz(self.chi_ro)
    }
    pub fn w_chi_s(&self) -> f64 {
        mhz(self.chi_s)
    }
    /// Readout energy decay rate, 1/µs.
    pub fn kappa_ro_rate(&self) -> f64 {
        mhz(self.kappa_ro)
    }
    /// Storage energy decay rate, 1/µs.
    pub fn kappa_s_rate(&self) -> f64 {
        khz(self.kappa_s)
    }

    /// Qubit pure dephasing time from `(t1_q, t2_q)`.
    pub fn qubit_pure_dephasing_time(&self) -> Result<f64, DeviceError> {
        pure_dephasing_time(self.t1_q, self.t2_q)
    }

    /// Memory pure dephasing time from the measured `(t1_s, t2_s)`.
    pub fn memory_pure_dephasing_time(&self) -> Result<f64, DeviceError> {
        pure_dephasing_time(self.t1_s, self.t2_s)
    }

    /// Equilibrium excited-state population of the qubit inferred from the
    /// memory dephasing rate.
    pub fn thermal_excited_population(&self) -> Result<f64, DeviceError> {
        let tphi = self.memory_pure_dephasing_time()?;
        thermal_population(1.0 / tphi, 1.0 / self.t1_q)
    }
}

/// Two-photon blue-sideband frequency `ω_b`. The drive carrier is `ω_b / 2`.
pub fn bsb_frequency(p: &DeviceParams) -> f64 {
    p.w_s() + p.w_q() + p.w_chi_s() + (2.0 * p.n_ro - 1.0) * p.w_chi_ro()
}

/// Detunings `(ω_s - ω_b/2, ω_q - ω_b/2)`.
pub fn half_bsb_detunings(p: &DeviceParams) -> (f64, f64) {
    let half = bsb_frequency(p) / 2.0;
    (p.w_s() - half, p.w_q() - half)
}

fn checked_detunings(p: &DeviceParams) -> Result<(f64, f64), DeviceError> {
    let (ds, dq) = half_bsb_detunings(p);
    let tol = degenerate_drive_tolerance();
    if ds.abs() < tol {
        return Err(DeviceError::DegenerateDrive { which: "storage", detuning_mhz: ds / mhz(1.0) });
    }
    if dq.abs() < tol {
        return Err(DeviceError::DegenerateDrive { which: "qubit", detuning_mhz: dq / mhz(1.0) });
    }
    Ok((ds, dq))
}

/// Effective sideband coupling `g³ Ω_drv² / (Δ_s² Δ_q²)` multiplying
/// `(a† σ+ + a σ-)`.
///
/// `omega_drv` is the storage-port drive amplitude in the convention
/// `H_drv = Ω_drv (a† e^{-iωt} + h.c.)`. A full `|g0⟩ → |e1⟩` swap takes
/// `π / (2 Ω_eff)`, see [`bsb_pi_time`].
pub fn bsb_effective_rate(p: &DeviceParams, omega_drv: f64) -> Result<f64, DeviceError> {
    let (ds, dq) = checked_detunings(p)?;
    let g = p.w_g();
    Ok(g.powi(3) * omega_drv * omega_drv / (ds * ds * dq * dq))
}

/// Sideband π time predicted by [`bsb_effective_rate`].
pub fn bsb_pi_time(p: &DeviceParams, omega_drv: f64) -> Result<f64, DeviceError> {
    let rate = bsb_effective_rate(p, omega_drv)?;
    Ok(if rate > 0.0 { PI / (2.0 * rate) } else { f64::INFINITY })
}

/// Qubit-charge Rabi amplitude seen by the transmon when the storage port is
/// driven with `Ω_drv` at `ω_b / 2`: the displaced mode field `Ω_drv/Δ_s`
/// times the coupling, written as `(Ω_q/2)(b† e^{-iωt} + h.c.)`.
pub fn storage_drive_to_qubit_drive(p: &DeviceParams, omega_drv: f64) -> Result<f64, DeviceError> {
    let (ds, _) = checked_detunings(p)?;
    Ok(2.0 * p.w_g() * omega_drv / ds.abs())
}

/// Inverse of [`storage_drive_to_qubit_drive`].
pub fn qubit_drive_to_storage_drive(p: &DeviceParams, omega_q: f64) -> Result<f64, DeviceError> {
    let (ds, _) = checked_detunings(p)?;
    if p.g <= 0.0 {
        return Err(DeviceError::InvalidParams("conversion needs g > 0".into()));
    }
    Ok(omega_q * ds.abs() / (2.0 * p.w_g()))
}

/// Transmon dispersive shift estimate `g²α / (Δ(Δ+α))`. An estimator only;
/// frequency bookkeeping uses the measured shifts in [`DeviceParams`].
pub fn dispersive_shift_estimate(g: f64, delta: f64, alpha: f64) -> Result<f64, DeviceError> {
    let den = delta * (delta + alpha);
    let scale = delta.abs().max(alpha.abs()).max(f64::MIN_POSITIVE);
    if delta == 0.0 || (delta + alpha).abs() <= 1e-12 * scale {
        return Err(DeviceError::SingularDetuning(format!(
            "delta = {delta}, delta + alpha = {}",
            delta + alpha
        )));
    }
    Ok(g * g * alpha / den)
}

/// Single-mode Purcell lifetime `1 / (κ_RO (g/Δ)²)`, µs. Returns infinity
/// when either the readout decay or the coupling vanishes.
pub fn purcell_limit(p: &DeviceParams) -> Result<f64, DeviceError> {
    let delta = p.w_q() - p.w_ro();
    let g = p.w_g();
    if delta.abs() <= 5.0 * g {
        return Err(DeviceError::InvalidRegime(format!(
            "|omega_q - omega_ro| = {:.1} MHz is not large against g = {:.1} MHz",
            (delta / mhz(1.0)).abs(),
            p.g
        )));
    }
    let gamma = p.kappa_ro_rate() * (g / delta).powi(2);
    Ok(if gamma > 0.0 { 1.0 / gamma } else { f64::INFINITY })
}

/// Pure dephasing time `(1/T2 - 1/(2 T1))^-1`; infinity when `T2 = 2 T1`.
pub fn pure_dephasing_time(t1: f64, t2: f64) -> Result<f64, DeviceError> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(DeviceError::InvalidParams(format!("times must be > 0 (t1={t1}, t2={t2})")));
    }
    if t2 > 2.0 * t1 * (1.0 + T2_TOLERANCE) {
        return Err(DeviceError::NonphysicalPair { t1, t2 });
    }
    let rate = 1.0 / t2 - 1.0 / (2.0 * t1);
    Ok(if rate <= 0.0 { f64::INFINITY } else { 1.0 / rate })
}

/// `T2` from `T1` and `T_φ`, the inverse of [`pure_dephasing_time`].
pub fn coherence_time(t1: f64, t_phi: f64) -> f64 {
    1.0 / (1.0 / t_phi + 1.0 / (2.0 * t1))
}

/// Thermal excited-state population `Γ_φ / κ_q`.
pub fn thermal_population(gamma_phi: f64, kappa_q: f64) -> Result<f64, DeviceError> {
    if !(kappa_q > 0.0) {
        return Err(DeviceError::InvalidParams(format!("kappa_q must be > 0, got {kappa_q}")));
    }
    Ok(gamma_phi / kappa_q)
}
