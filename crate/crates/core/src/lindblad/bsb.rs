// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Sideband rate from the full dynamics versus the perturbative formula.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{Decoherence, LindbladError, LindbladModel, ModelOptions, OpenSystem, SpectrumModel};
use crate::device::{self, DeviceParams};
use crate::pulse::{DriveChannel, PulseSegment, PulseSequence, SegmentRole, DEFAULT_RISE};
use crate::qsys::SubsystemDims;

/// Settings for [`effective_bsb_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsbCheckOptions {
    /// Truncation. The perturbative formula treats the transmon as a two-level
    /// system, so the default keeps two levels.
    pub dims: SubsystemDims,
    pub spectrum: SpectrumModel,
    /// Population periods covered by the plateau.
    pub periods: f64,
    /// Samples on the plateau.
    pub samples: usize,
    pub dt: f64,
}

impl Default for BsbCheckOptions {
    fn default() -> Self {
        Self {
            dims: SubsystemDims::new(2, 4, 2).expect("valid"),
            spectrum: SpectrumModel::Matched,
            periods: 2.0,
            samples: 160,
            dt: 5e-6,
        }
    }
}

/// Outcome of [`effective_bsb_check`]. Rates in rad/µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsbCheck {
    pub omega_drv: f64,
    /// Equivalent qubit-charge amplitude actually simulated.
    pub omega_qubit: f64,
    pub carrier: f64,
    pub stark_offset: f64,
    /// Rate from the driven spectrum, used to size the run.
    pub spectral_rate: f64,
    /// Rate from the simulated `|g0⟩ ↔ |e1⟩` oscillation.
    pub measured_rate: f64,
    pub predicted_rate: f64,
    /// `measured / predicted`.
    pub ratio: f64,
    /// Peak-to-peak `|e1⟩` population on the plateau.
    pub contrast: f64,
}

/// Drive the sideband with a long constant tone and compare the simulated
/// swap rate with [`device::bsb_effective_rate`].
///
/// The storage-port amplitude `omega_drv` enters as the qubit-charge tone
/// given by [`device::storage_drive_to_qubit_drive`]. The carrier sits on the
/// driven resonance, so the Stark shift is compensated.
pub fn effective_bsb_check(
    p: &DeviceParams,
    omega_drv: f64,
    opts: &BsbCheckOptions,
) -> Result<BsbCheck, LindbladError> {
    if !(omega_drv > 0.0 && omega_drv.is_finite()) {
        return Err(LindbladError::Invalid(format!("drive amplitude must be > 0, got {omega_drv}")));
    }
    if opts.samples < 16 || !(opts.periods >= 1.0) {
        return Err(LindbladError::Invalid("need at least 16 samples over one period".into()));
    }
    let predicted = device::bsb_effective_rate(p, omega_drv)?;
    let omega_q = device::storage_drive_to_qubit_drive(p, omega_drv)?;
    let options = ModelOptions {
        dims: opts.dims,
        spectrum: opts.spectrum,
        decoherence: Decoherence::none(),
        dt: opts.dt,
        ..Default::default()
    };
    let sys = Arc::new(OpenSystem::<f64>::new(p, &options)?);
    let res = sys.find_resonance([0, 0, 0], [1, 1, 0], 2, omega_q)?;
    if !(res.rate > 0.0) {
        return Err(LindbladError::WeakDrive { contrast: 0.0 });
    }

    // population oscillates at twice the swap rate
    let period = std::f64::consts::PI / res.rate;
    let plateau = opts.periods * period;
    let seg = PulseSegment {
        target: DriveChannel::QubitCharge,
        role: SegmentRole::Bsb,
        amplitude: omega_q,
        carrier: res.carrier,
        phase: 0.0,
        plateau,
        rise: DEFAULT_RISE,
        start: 0.0,
    };
    let seq = PulseSequence::new(vec![seg]).map_err(|e| LindbladError::Invalid(e.to_string()))?;
    let model = LindbladModel::new(sys, &seq)?;
    let dims = opts.dims;
    let (i0, i1) = (dims.index(0, 0, 0), dims.index(1, 1, 0));

    let t_on = seg.edge();
    let mut psi: DVector<Complex<f64>> = DVector::zeros(dims.total());
    psi[i0] = Complex::new(1.0, 0.0);
    psi = model.evolve_pure(&psi, 0.0, t_on, opts.dt)?;
    let h = plateau / (opts.samples - 1) as f64;
    let mut ts = Vec::with_capacity(opts.samples);
    let mut ys = Vec::with_capacity(opts.samples);
    let mut t = t_on;
    for k in 0..opts.samples {
        if k > 0 {
            psi = model.evolve_pure(&psi, t, t + h, opts.dt)?;
            t += h;
        }
        ts.push(t - t_on);
        ys.push(psi[i1].norm_sqr());
    }
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let contrast = hi - lo;
    if contrast < 0.2 {
        return Err(LindbladError::WeakDrive { contrast });
    }
    let w = sinusoid_frequency(&ts, &ys, 2.0 * res.rate);
    let measured = 0.5 * w;
    Ok(BsbCheck {
        omega_drv,
        omega_qubit: omega_q,
        carrier: res.carrier,
        stark_offset: res.stark_offset,
        spectral_rate: res.rate,
        measured_rate: measured,
        predicted_rate: predicted,
        ratio: measured / predicted,
        contrast,
    })
}

/// Residual of the linear fit `c + a cos(wt) + b sin(wt)`.
fn sinusoid_residual(ts: &[f64], ys: &[f64], w: f64) -> f64 {
    let design = nalgebra::DMatrix::from_fn(ts.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (w * ts[i]).cos(),
        _ => (w * ts[i]).sin(),
    });
    let y = DVector::from_column_slice(ys);
    let Ok(coef) = design.clone().svd(true, true).solve(&y, 1e-12) else {
        return f64::INFINITY;
    };
    (design * coef - y).norm_squared()
}

/// Angular frequency of the best single sinusoid, searched within ±40% of
/// `guess`.
fn sinusoid_frequency(ts: &[f64], ys: &[f64], guess: f64) -> f64 {
    let n = 400;
    let (lo, hi) = (0.6 * guess, 1.4 * guess);
    let step = (hi - lo) / n as f64;
    let best = (0..=n)
        .map(|k| lo + step * k as f64)
        .map(|w| (w, sinusoid_residual(ts, ys, w)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty")
        .0;
    let (mut a, mut b) = (best - step, best + step);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (sinusoid_residual(ts, ys, c), sinusoid_residual(ts, ys, d));
    while b - a > 1e-10 * guess {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = sinusoid_residual(ts, ys, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = sinusoid_residual(ts, ys, d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_frequency_recovers_synthetic() {
        let ts: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 0.5 - 0.5 * (7.3 * t + 0.2).cos()).collect();
        let w = sinusoid_frequency(&ts, &ys, 6.0);
        assert!((w - 7.3).abs() < 1e-6);
    }

    #[test]
    fn rejects_nonpositive_drive() {
        let p = DeviceParams::default();
        assert!(effective_bsb_check(&p, 0.0, &BsbCheckOptions::default()).is_err());
    }
}
