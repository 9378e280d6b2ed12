// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Flat-top Gaussian envelopes, protocol sequences and π-pulse calibration.
//!
//! Envelope convention: `σ = rise / 2`, each Gaussian edge is truncated at
//! `2.5 σ`, shifted so it starts from zero and renormalised so it reaches the
//! full amplitude where the plateau begins. A segment therefore occupies
//! `[start, start + 2·2.5σ + plateau]`.
//!
//! Amplitudes are Rabi amplitudes on the driven channel: a segment adds
//! `(Ω(t)/2)(L† e^{-i(ω_c t + φ)} + h.c.)` with `L` the channel's lowering
//! operator, and phases are referenced to absolute time.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{self, DeviceParams};
use crate::lindblad::{LindbladError, LindbladModel, Resonance};
use crate::units::{ghz, ns, to_ghz, to_ns};

/// Default rise time, µs.
pub const DEFAULT_RISE: f64 = 0.020;

/// Edge truncation in units of σ.
const EDGE_SIGMAS: f64 = 2.5;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid pulse: {0}")]
    Invalid(String),
    #[error("uncalibrated protocol: {0}")]
    Uncalibrated(String),
    #[error("calibration failed: best transfer {transfer:.4} below 0.5 ({what})")]
    CalibrationFailed { what: String, transfer: f64 },
    #[error(transparent)]
    Lindblad(#[from] Box<LindbladError>),
    #[error(transparent)]
    Device(#[from] device::DeviceError),
    #[error("sequence json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<LindbladError> for PulseError {
    fn from(e: LindbladError) -> Self {
        PulseError::Lindblad(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveChannel {
    QubitCharge,
    StorageDirect,
    ReadoutDirect,
}

/// What a segment does in a sequence. Used for bookkeeping only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentRole {
    Prep,
    Bsb,
    QubitPi,
    QubitHalfPi,
    ModeDrive,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub target: DriveChannel,
    pub role: SegmentRole,
    /// Rabi amplitude, rad/µs.
    pub amplitude: f64,
    /// Carrier, rad/µs.
    pub carrier: f64,
    pub phase: f64,
    /// µs
    pub plateau: f64,
    /// µs
    pub rise: f64,
    /// µs
    pub start: f64,
}

/// Half-width of one Gaussian edge for a given rise time.
pub fn edge_length(rise: f64) -> f64 {
    EDGE_SIGMAS * rise / 2.0
}

/// Normalised edge shape at distance `x >= 0` from the plateau.
fn edge_shape(x: f64, rise: f64) -> f64 {
    let sigma = rise / 2.0;
    let e = EDGE_SIGMAS * sigma;
    if x >= e {
        return 0.0;
    }
    let base = (-EDGE_SIGMAS * EDGE_SIGMAS / 2.0).exp();
    ((-x * x / (2.0 * sigma * sigma)).exp() - base) / (1.0 - base)
}

/// `∫ shape^power` over one edge, µs. Simpson's rule on a fine grid.
pub fn edge_equivalent(rise: f64, power: i32) -> f64 {
    let e = edge_length(rise);
    let n = 2000;
    let h = e / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * edge_shape(k as f64 * h, rise).powi(power);
    }
    acc * h / 3.0
}

impl PulseSegment {
    pub fn new(target: DriveChannel, role: SegmentRole, amplitude: f64, carrier: f64) -> Self {
        Self { target, role, amplitude, carrier, phase: 0.0, plateau: 0.0, rise: DEFAULT_RISE, start: 0.0 }
    }

    pub fn with_timing(mut self, start: f64, plateau: f64) -> Self {
        self.start = start;
        self.plateau = plateau;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        let bad = |m: String| Err(PulseError::Invalid(m));
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return bad(format!("amplitude must be >= 0, got {}", self.amplitude));
        }
        if !(self.plateau.is_finite() && self.plateau >= 0.0) {
            return bad(format!("plateau must be >= 0, got {}", self.plateau));
        }
        if !(self.rise.is_finite() && self.rise > 0.0) {
            return bad(format!("rise must be > 0, got {}", self.rise));
        }
        if !(self.start.is_finite() && self.carrier.is_finite() && self.phase.is_finite()) {
            return bad("start, carrier and phase must be finite".into());
        }
        Ok(())
    }

    pub fn edge(&self) -> f64 {
        edge_length(self.rise)
    }

    pub fn duration(&self) -> f64 {
        2.0 * self.edge() + self.plateau
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration()
    }

    /// Envelope normalised to a unit plateau.
    pub fn shape(&self, t: f64) -> f64 {
        let u = t - self.start;
        let e = self.edge();
        if u <= 0.0 || u >= 2.0 * e + self.plateau {
            return 0.0;
        }
        if u < e {
            edge_shape(e - u, self.rise)
        } else if u > e + self.plateau {
            edge_shape(u - e - self.plateau, self.rise)
        } else {
            1.0
        }
    }

    pub fn envelope_at(&self, t: f64) -> f64 {
        self.amplitude * self.shape(t)
    }

    /// Duration of a square pulse with the same `∫ shape^power`.
    pub fn equivalent_duration(&self, power: i32) -> f64 {
        self.plateau + 2.0 * edge_equivalent(self.rise, power)
    }
}

/// Ordered pulse list with an optional readout marker time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<PulseSegment>,
    /// Time at which the state is read out, µs.
    pub readout_at: Option<f64>,
}

impl PulseSequence {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self, PulseError> {
        let seq = Self { segments, readout_at: None };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), PulseError> {
        for s in &self.segments {
            s.validate()?;
        }
        for (i, a) in self.segments.iter().enumerate() {
            for b in &self.segments[i + 1..] {
                if a.target == b.target && a.start < b.end() - 1e-12 && b.start < a.end() - 1e-12 {
                    return Err(PulseError::Invalid(format!(
                        "segments on {:?} overlap: [{}, {}] and [{}, {}] us",
                        a.target,
                        a.start,
                        a.end(),
                        b.start,
                        b.end()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.segments.iter().map(|s| s.start).fold(f64::INFINITY, f64::min)
    }

    pub fn end(&self) -> f64 {
        self.segments.iter().map(|s| s.end()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// End of the last segment minus start of the first.
    pub fn total_duration(&self) -> f64 {
        if self.segments.is_empty() {
            0.0
        } else {
            self.end() - self.start()
        }
    }

    /// Protocol length: like [`total_duration`](Self::total_duration) but
    /// without the state-preparation pulse.
    pub fn protocol_length(&self) -> f64 {
        let body: Vec<&PulseSegment> =
            self.segments.iter().filter(|s| s.role != SegmentRole::Prep).collect();
        if body.is_empty() {
            return 0.0;
        }
        let start = body.iter().map(|s| s.start).fold(f64::INFINITY, f64::min);
        let end = body.iter().map(|s| s.end()).fold(f64::NEG_INFINITY, f64::max);
        end - start
    }

    /// Merged time intervals during which at least one segment is on.
    pub fn active_intervals(&self) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = self.segments.iter().map(|s| (s.start, s.end())).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String, PulseError> {
        let doc = SequenceDoc::from(self);
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self, PulseError> {
        let doc: SequenceDoc = serde_json::from_str(s)?;
        let seq = Self::from(doc);
        seq.validate()?;
        Ok(seq)
    }
}

/// Inspection form: times in ns, frequencies and amplitudes in linear GHz.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SequenceDoc {
    segments: Vec<SegmentDoc>,
    readout_at_ns: Option<f64>,
    total_duration_ns: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentDoc {
    target: DriveChannel,
    role: SegmentRole,
    amplitude_ghz: f64,
    carrier_ghz: f64,
    phase_rad: f64,
    start_ns: f64,
    plateau_ns: f64,
    rise_ns: f64,
}

impl From<&PulseSequence> for SequenceDoc {
    fn from(s: &PulseSequence) -> Self {
        Self {
            segments: s
                .segments
                .iter()
                .map(|p| SegmentDoc {
                    target: p.target,
                    role: p.role,
                    amplitude_ghz: to_ghz(p.amplitude),
                    carrier_ghz: to_ghz(p.carrier),
                    phase_rad: p.phase,
                    start_ns: to_ns(p.start),
                    plateau_ns: to_ns(p.plateau),
                    rise_ns: to_ns(p.rise),
                })
                .collect(),
            readout_at_ns: s.readout_at.map(to_ns),
            total_duration_ns: to_ns(s.total_duration()),
        }
    }
}

impl From<SequenceDoc> for PulseSequence {
    fn from(d: SequenceDoc) -> Self {
        Self {
            segments: d
                .segments
                .into_iter()
                .map(|p| PulseSegment {
                    target: p.target,
                    role: p.role,
                    amplitude: ghz(p.amplitude_ghz),
                    carrier: ghz(p.carrier_ghz),
                    phase: p.phase_rad,
                    start: ns(p.start_ns),
                    plateau: ns(p.plateau_ns),
                    rise: ns(p.rise_ns),
                })
                .collect(),
            readout_at: d.readout_at_ns.map(ns),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    /// `|g0⟩ → |e0⟩`, single photon at the qubit frequency.
    Qubit,
    /// `|g0⟩ → |e1⟩`, two photons at half the sideband frequency.
    BlueSideband,
}

impl Transition {
    /// Photons absorbed from the drive.
    pub fn order(self) -> u32 {
        match self {
            Transition::Qubit => 1,
            Transition::BlueSideband => 2,
        }
    }

    /// Bare basis levels `(lower, upper)`.
    pub fn levels(self) -> ([usize; 3], [usize; 3]) {
        match self {
            Transition::Qubit => ([0, 0, 0], [1, 0, 0]),
            Transition::BlueSideband => ([0, 0, 0], [1, 1, 0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiCalibration {
    pub transition: Transition,
    /// Qubit-charge Rabi amplitude, rad/µs.
    pub amplitude: f64,
    /// Storage-port amplitude equivalent to `amplitude` (sideband only).
    pub omega_drv: Option<f64>,
    /// Calibrated carrier, rad/µs.
    pub carrier: f64,
    /// Carrier minus the undriven transition frequency (per photon), rad/µs.
    pub stark_offset: f64,
    /// Coupling on resonance from the dressed splitting, rad/µs.
    pub resonant_rate: f64,
    pub plateau: f64,
    pub rise: f64,
    /// Best transfer probability reached.
    pub transfer: f64,
}

impl PiCalibration {
    pub fn duration(&self) -> f64 {
        self.plateau + 2.0 * edge_length(self.rise)
    }

    /// π time with the edges replaced by their equivalent square length.
    /// The sideband rate goes as the square of the envelope.
    pub fn effective_pi_time(&self) -> f64 {
        let power = self.transition.order() as i32;
        self.plateau + 2.0 * edge_equivalent(self.rise, power)
    }

    /// Segment starting at `start` implementing this π pulse.
    pub fn segment(&self, role: SegmentRole, start: f64) -> PulseSegment {
        PulseSegment {
            target: DriveChannel::QubitCharge,
            role,
            amplitude: self.amplitude,
            carrier: self.carrier,
            phase: 0.0,
            plateau: self.plateau,
            rise: self.rise,
            start,
        }
    }

    /// Segment implementing a rotation `k·π` with the same amplitude by
    /// stretching the plateau (`k >= 1`).
    pub fn multiple(&self, role: SegmentRole, start: f64, k: u32) -> PulseSegment {
        let power = self.transition.order() as i32;
        let edge_eq = 2.0 * edge_equivalent(self.rise, power);
        let mut seg = self.segment(role, start);
        seg.plateau = k as f64 * (self.plateau + edge_eq) - edge_eq;
        seg
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub qubit: Option<PiCalibration>,
    pub bsb: Option<PiCalibration>,
}

/// Search settings for [`calibrate_pi_pulse`].
#[derive(Debug, Clone, Copy)]
pub struct CalibrationOptions {
    pub rise: f64,
    /// Golden-section tolerance on the plateau, µs.
    pub plateau_tol: f64,
    pub dt: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { rise: DEFAULT_RISE, plateau_tol: 1e-5, dt: 1e-5 }
    }
}

/// Calibrate a π pulse of fixed amplitude in a noiseless simulation.
///
/// The carrier is placed on the driven resonance (the minimum of the dressed
/// splitting, which includes the AC-Stark shift at full amplitude). For the
/// qubit transition the carrier is the mean of the 0- and 1-photon storage
/// lines so the same pulse serves both ladders. The plateau is then chosen by
/// golden-section search on the transfer probability.
pub fn calibrate_pi_pulse(
    model: &LindbladModel<f64>,
    transition: Transition,
    amplitude: f64,
    opts: &CalibrationOptions,
) -> Result<PiCalibration, PulseError> {
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(PulseError::Invalid(format!("amplitude must be > 0, got {amplitude}")));
    }
    let sys = model.system();
    let (lower, upper) = transition.levels();
    let res: Resonance = sys.find_resonance(lower, upper, transition.order(), amplitude)?;
    let mut carrier = res.carrier;
    let mut stark = res.stark_offset;
    if transition == Transition::Qubit && sys.dims().n_storage_photons >= 2 {
        let one = sys.find_resonance([0, 1, 0], [1, 1, 0], 1, amplitude)?;
        carrier = 0.5 * (res.carrier + one.carrier);
        stark = 0.5 * (res.stark_offset + one.stark_offset);
    }
    let dims = *sys.dims();
    let power = transition.order() as i32;
    let edge_eq = 2.0 * edge_equivalent(opts.rise, power);
    // rotation rate on resonance is 2·rate for a swap
    let t_pi = PI / (2.0 * res.rate);
    let guess = (t_pi - edge_eq).max(0.0);
    let half_window = 0.45 * t_pi;
    let lo = (guess - half_window).max(0.0);
    let hi = guess + half_window;

    let transfer_with = |carrier: f64, plateau: f64| -> Result<f64, PulseError> {
        let seg = PulseSegment {
            target: DriveChannel::QubitCharge,
            role: SegmentRole::Other,
            amplitude,
            carrier,
            phase: 0.0,
            plateau,
            rise: opts.rise,
            start: 0.0,
        };
        let seq = PulseSequence::new(vec![seg])?;
        let m = model.with_sequence(&seq)?;
        let i0 = dims.index(lower[0], lower[1], lower[2]);
        let i1 = dims.index(upper[0], upper[1], upper[2]);
        let psi = m.evolve_pure_basis(i0, 0.0, seg.end(), opts.dt)?;
        Ok(psi[i1].norm_sqr())
    };

    let (mut plateau, mut transfer) = golden_max(|x| transfer_with(carrier, x), lo, hi, opts.plateau_tol)?;
    if transition == Transition::BlueSideband {
        // the ramps sweep the Stark shift, so the best carrier sits off the
        // full-amplitude resonance
        let span = 0.2 * res.rate;
        let (c, _) = golden_max(|c| transfer_with(c, plateau), carrier - span, carrier + span, 1e-4 * res.rate)?;
        let (x, f) = golden_max(|x| transfer_with(c, x), lo, hi, opts.plateau_tol)?;
        if f > transfer {
            stark += c - carrier;
            carrier = c;
            plateau = x;
            transfer = f;
        }
    }
    if transfer < 0.5 {
        return Err(PulseError::CalibrationFailed {
            what: format!("{transition:?} at amplitude {amplitude}"),
            transfer,
        });
    }
    let omega_drv = match transition {
        Transition::BlueSideband => device::qubit_drive_to_storage_drive(sys.params(), amplitude).ok(),
        Transition::Qubit => None,
    };
    Ok(PiCalibration {
        transition,
        amplitude,
        omega_drv,
        carrier,
        stark_offset: stark,
        resonant_rate: res.rate,
        plateau,
        rise: opts.rise,
        transfer,
    })
}

/// Golden-section maximisation on `[lo, hi]`, also checking both ends.
fn golden_max<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64), PulseError>
where
    F: Fn(f64) -> Result<f64, PulseError>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc > fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x)?;
        if fx > best.1 {
            best = (x, fx);
        }
    }
    Ok(best)
}

/// Layout knobs for [`build_memory_sequence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceLayout {
    /// Start of the preparation pulse, µs.
    pub t0: f64,
    /// Spacing inserted between consecutive pulses, µs.
    pub spacing: f64,
}

impl Default for SequenceLayout {
    fn default() -> Self {
        Self { t0: 0.0, spacing: 0.0 }
    }
}

/// Storage and retrieval sequence:
/// prep(θ) → BSB π → qubit π·m → delay → qubit π·m → BSB π → readout.
///
/// The preparation pulse keeps the calibrated qubit π timing and scales its
/// amplitude by `θ/π`, so all angles share one timing. The delay is the idle
/// time between the two halves.
pub fn build_memory_sequence(
    p: &DeviceParams,
    prep_angle: f64,
    storage_delay: f64,
    cal: &CalibrationResult,
    qubit_pi_multiplier: u32,
) -> Result<PulseSequence, PulseError> {
    build_memory_sequence_with(p, prep_angle, storage_delay, cal, qubit_pi_multiplier, &SequenceLayout::default())
}

pub fn build_memory_sequence_with(
    _p: &DeviceParams,
    prep_angle: f64,
    storage_delay: f64,
    cal: &CalibrationResult,
    qubit_pi_multiplier: u32,
    layout: &SequenceLayout,
) -> Result<PulseSequence, PulseError> {
    let q = cal.qubit.ok_or_else(|| PulseError::Uncalibrated("missing qubit π pulse".into()))?;
    let b = cal.bsb.ok_or_else(|| PulseError::Uncalibrated("missing sideband π pulse".into()))?;
    if qubit_pi_multiplier == 0 || qubit_pi_multiplier % 2 == 0 {
        return Err(PulseError::Invalid(format!(
            "qubit π multiplier must be odd, got {qubit_pi_multiplier}"
        )));
    }
    if !(storage_delay.is_finite() && storage_delay >= 0.0) {
        return Err(PulseError::Invalid(format!("storage delay must be >= 0, got {storage_delay}")));
    }
    if !prep_angle.is_finite() {
        return Err(PulseError::Invalid("prep angle must be finite".into()));
    }
    let gap = layout.spacing;
    let mut t = layout.t0;
    let mut segs = Vec::with_capacity(6);

    let mut prep = q.segment(SegmentRole::Prep, t);
    prep.amplitude = q.amplitude * prep_angle.abs() / PI;
    prep.phase = if prep_angle < 0.0 { PI } else { 0.0 };
    t = prep.end() + gap;
    segs.push(prep);

    let bsb1 = b.segment(SegmentRole::Bsb, t);
    t = bsb1.end() + gap;
    segs.push(bsb1);
    let q1 = q.multiple(SegmentRole::QubitPi, t, qubit_pi_multiplier);
    t = q1.end() + storage_delay.max(gap);
    segs.push(q1);
    let q2 = q.multiple(SegmentRole::QubitPi, t, qubit_pi_multiplier);
    t = q2.end() + gap;
    segs.push(q2);
    let bsb2 = b.segment(SegmentRole::Bsb, t);
    t = bsb2.end();
    segs.push(bsb2);

    let mut seq = PulseSequence::new(segs)?;
    seq.readout_at = Some(t);
    Ok(seq)
}

/// Memory Ramsey variant: prep π/2, storage, delay, retrieval, then a final
/// π/2 whose phase advances as `phase_rate · delay`.
pub fn build_ramsey_sequence(
    p: &DeviceParams,
    storage_delay: f64,
    cal: &CalibrationResult,
    phase_rate: f64,
) -> Result<PulseSequence, PulseError> {
    let mut seq = build_memory_sequence(p, PI / 2.0, storage_delay, cal, 1)?;
    let q = cal.qubit.ok_or_else(|| PulseError::Uncalibrated("missing qubit π pulse".into()))?;
    let t = seq.end();
    let mut last = q.segment(SegmentRole::QubitHalfPi, t);
    last.amplitude = q.amplitude / 2.0;
    last.phase = phase_rate * storage_delay;
    seq.segments.push(last);
    seq.readout_at = Some(last.end());
    seq.validate()?;
    Ok(seq)
}

/// End of the storage half of a memory sequence (the first qubit π pulse).
pub fn storage_half_end(seq: &PulseSequence) -> Option<f64> {
    let q = seq.segments.iter().find(|s| s.role == SegmentRole::QubitPi)?;
    Some(q.end())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;
    use proptest::prelude::*;

    fn seg(plateau: f64) -> PulseSegment {
        PulseSegment::new(DriveChannel::QubitCharge, SegmentRole::Other, 2.0, 0.0).with_timing(0.1, plateau)
    }

    #[test]
    fn plateau_interior_is_full_amplitude() {
        let s = seg(0.05);
        let mid = s.start + s.edge() + 0.025;
        assert_eq!(s.envelope_at(mid), 2.0);
        assert_eq!(s.envelope_at(s.start + s.edge()), 2.0);
        assert_eq!(s.envelope_at(s.start + s.edge() + s.plateau), 2.0);
    }

    #[test]
    fn gaussian_tail_before_start() {
        let s = seg(0.05);
        let sigma = s.rise / 2.0;
        let plateau_start = s.start + s.edge();
        assert!(s.envelope_at(plateau_start - 5.0 * sigma) < 4e-6 * s.amplitude);
        assert!(s.envelope_at(s.start - 5.0 * sigma) < 4e-6 * s.amplitude);
    }

    #[test]
    fn area_grows_linearly_with_plateau() {
        let area = |s: &PulseSegment| {
            let n = 200_000;
            let h = (s.duration() + 0.02) / n as f64;
            (0..n).map(|k| s.envelope_at(s.start - 0.01 + (k as f64 + 0.5) * h)).sum::<f64>() * h
        };
        let a = area(&seg(0.03));
        let b = area(&seg(0.05));
        assert!((b - a - 2.0 * 0.02).abs() < 1e-6, "{}", b - a);
        assert!((seg(0.05).equivalent_duration(1) * 2.0 - b).abs() < 1e-6);
    }

    #[test]
    fn edge_numbers() {
        assert!((edge_length(0.020) - 0.025).abs() < 1e-15);
        let eq1 = edge_equivalent(0.020, 1);
        assert!((eq1 - 0.0118).abs() < 2e-4, "{eq1}");
        assert!(edge_equivalent(0.020, 2) < eq1);
    }

    #[test]
    fn overlapping_segments_rejected() {
        let a = seg(0.05);
        let b = seg(0.05).with_timing(0.12, 0.0);
        assert!(PulseSequence::new(vec![a, b]).is_err());
        let mut c = b;
        c.target = DriveChannel::StorageDirect;
        assert!(PulseSequence::new(vec![a, c]).is_ok());
    }

    #[test]
    fn invalid_segment_fields() {
        let mut s = seg(0.0);
        s.rise = 0.0;
        assert!(s.validate().is_err());
        let mut s = seg(0.0);
        s.amplitude = -1.0;
        assert!(s.validate().is_err());
    }

    fn fake_cal() -> CalibrationResult {
        let q = PiCalibration {
            transition: Transition::Qubit,
            amplitude: mhz(15.0),
            omega_drv: None,
            carrier: 3.9e4,
            stark_offset: 0.0,
            resonant_rate: mhz(7.5),
            plateau: 0.01,
            rise: DEFAULT_RISE,
            transfer: 0.999,
        };
        let b = PiCalibration {
            transition: Transition::BlueSideband,
            amplitude: mhz(1200.0),
            omega_drv: Some(1.0),
            carrier: 4.69e4,
            stark_offset: -mhz(80.0),
            resonant_rate: mhz(3.0),
            plateau: 0.08,
            rise: DEFAULT_RISE,
            transfer: 0.99,
        };
        CalibrationResult { qubit: Some(q), bsb: Some(b) }
    }

    #[test]
    fn memory_sequence_layout() {
        let p = DeviceParams::default();
        let cal = fake_cal();
        let seq = build_memory_sequence(&p, PI, 0.5, &cal, 1).unwrap();
        let roles: Vec<SegmentRole> = seq.segments.iter().map(|s| s.role).collect();
        assert_eq!(
            roles,
            vec![SegmentRole::Prep, SegmentRole::Bsb, SegmentRole::QubitPi, SegmentRole::QubitPi, SegmentRole::Bsb]
        );
        let qd = cal.qubit.unwrap().duration();
        let bd = cal.bsb.unwrap().duration();
        assert!((seq.protocol_length() - (2.0 * qd + 2.0 * bd + 0.5)).abs() < 1e-12);
        assert!((seq.total_duration() - (3.0 * qd + 2.0 * bd + 0.5)).abs() < 1e-12);
        assert_eq!(seq.readout_at, Some(seq.end()));
        assert_eq!(seq.segments[0].amplitude, cal.qubit.unwrap().amplitude);
    }

    #[test]
    fn retrieval_mirrors_storage() {
        let p = DeviceParams::default();
        let seq = build_memory_sequence(&p, 0.7, 1.3, &fake_cal(), 3).unwrap();
        let s = &seq.segments;
        for (a, b) in [(1, 4), (2, 3)] {
            assert_eq!(s[a].duration(), s[b].duration());
            assert_eq!(s[a].amplitude, s[b].amplitude);
            assert_eq!(s[a].role, s[b].role);
        }
    }

    #[test]
    fn triple_pi_lengthens_protocol() {
        let p = DeviceParams::default();
        let cal = fake_cal();
        let one = build_memory_sequence(&p, 0.0, 0.0, &cal, 1).unwrap();
        let three = build_memory_sequence(&p, 0.0, 0.0, &cal, 3).unwrap();
        let q = cal.qubit.unwrap();
        let s3 = three.segments[2];
        // tripled rotation angle: equivalent area three times larger
        assert!((s3.equivalent_duration(1) - 3.0 * q.effective_pi_time()).abs() < 1e-12);
        assert!(three.protocol_length() > one.protocol_length());
        let grow = three.protocol_length() - one.protocol_length();
        assert!((grow - 2.0 * (s3.duration() - q.duration())).abs() < 1e-12);
        assert!(build_memory_sequence(&p, 0.0, 0.0, &cal, 2).is_err());
    }

    #[test]
    fn missing_calibration() {
        let p = DeviceParams::default();
        let cal = CalibrationResult { qubit: fake_cal().qubit, bsb: None };
        assert!(matches!(
            build_memory_sequence(&p, 0.0, 0.0, &cal, 1),
            Err(PulseError::Uncalibrated(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let p = DeviceParams::default();
        let seq = build_ramsey_sequence(&p, 2.0, &fake_cal(), 1.0).unwrap();
        let s = seq.to_json().unwrap();
        assert!(s.contains("carrier_ghz"));
        let back = PulseSequence::from_json(&s).unwrap();
        assert_eq!(back.segments.len(), seq.segments.len());
        for (a, b) in back.segments.iter().zip(seq.segments.iter()) {
            assert!((a.start - b.start).abs() < 1e-12);
            assert!((a.carrier - b.carrier).abs() < 1e-6);
            assert_eq!(a.role, b.role);
        }
    }

    #[test]
    fn active_intervals_merge() {
        let a = seg(0.0).with_timing(0.0, 0.0);
        let mut b = seg(0.0).with_timing(0.03, 0.0);
        b.target = DriveChannel::StorageDirect;
        let c = seg(0.0).with_timing(1.0, 0.0);
        let seq = PulseSequence::new(vec![a, b, c]).unwrap();
        let iv = seq.active_intervals();
        assert_eq!(iv.len(), 2);
        assert!((iv[0].1 - 0.08).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn envelope_continuous_and_bounded(plateau in 0.0f64..0.2, rise in 0.004f64..0.05, t in -0.05f64..0.4) {
            let s = PulseSegment::new(DriveChannel::QubitCharge, SegmentRole::Other, 1.7, 0.0)
                .with_timing(0.0, plateau);
            let s = PulseSegment { rise, ..s };
            let d = 1e-6;
            prop_assert!((s.envelope_at(t + d) - s.envelope_at(t)).abs() < 1e-3 * s.amplitude);
            prop_assert!(s.envelope_at(t) <= s.amplitude);
            prop_assert!(s.envelope_at(t) >= 0.0);
        }
    }
}
