// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Open-system dynamics of the transmon and the two cavity modes.
//!
//! The lab Hamiltonian is a Duffing transmon, two harmonic modes, the
//! exchange couplings `g(b† a_m + b a_m†)` and a cross-Kerr term per mode
//! that lets the dressed spectrum reproduce the measured dispersive shifts
//! (see [`SpectrumModel`]).
//!
//! Dynamics run in a multi-rotating frame: subsystem `k` rotates at `f_k`.
//! Every operator term raising the excitation numbers by `Δ` picks up the
//! phase `e^{i f·Δ t}` and the diagonal loses `f·N`. Changing frame only
//! moves these phases around, which is what [`LindbladModel::reframe`] and
//! [`frame_transform`] do.
//!
//! Drives default to the rotating-wave form `(Ω/2)(L† e^{-i(ω t+φ)} + h.c.)`;
//! [`DriveForm::RealCosine`] keeps the counter-rotating half as well.

mod bsb;
mod idle;
mod integrate;
mod spectrum;

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceError, DeviceParams};
use crate::linalg::CMat;
use crate::pulse::{DriveChannel, PulseSequence};
use crate::qsys::{self, Ladders, OperatorMatrix, QsysError, QuantumState, Slot, SubsystemDims};
use crate::units::to_ghz;
use crate::Real;

pub use bsb::{effective_bsb_check, BsbCheck, BsbCheckOptions};
pub use idle::IdlePropagator;
pub use integrate::{EvolveOptions, Trajectory, PURE_NORM_TOLERANCE};
pub use spectrum::{BareHamiltonian, DressedLines, Resonance, SpectrumModel};

/// Default integration step, µs (0.02 ns).
pub const DEFAULT_DT: f64 = 2e-5;

/// Samples per period demanded by the step-size check.
const SAMPLES_PER_PERIOD: f64 = 20.0;
/// Largest phase, in radians, the generator may accumulate in one RK4 step
/// while a drive is on. At the sampling bound RK4 pushes driven states
/// slightly out of the positive cone.
pub const MAX_DRIVE_PHASE: f64 = 0.12;

#[derive(Debug, Error)]
pub enum LindbladError {
    #[error(transparent)]
    Qsys(#[from] QsysError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("step size {dt_ns} ns too large: fastest term at {f_max_ghz:.4} GHz needs dt <= {required_ns:.6} ns")]
    StepSize { dt_ns: f64, required_ns: f64, f_max_ghz: f64 },
    #[error("integration diverged at t = {t} us (trace drift {drift:e}); retry with dt <= {suggested_ns} ns")]
    Diverged { t: f64, drift: f64, suggested_ns: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("weak drive: sideband oscillation contrast {contrast:.3} below 0.2")]
    WeakDrive { contrast: f64 },
    #[error("spectrum matching did not converge (residual {0:e} rad/us)")]
    Matching(f64),
    #[error("fit failed: {0}")]
    Fit(String),
}

/// Rotation frequencies of the working frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameChoice {
    /// Each subsystem at its own bare frequency.
    BareRotating,
    /// No rotation.
    Lab,
    /// Explicit `[transmon, storage, readout]` frame frequencies, rad/µs.
    Custom([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveForm {
    RotatingWave,
    RealCosine,
}

/// Which dissipators are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoherence {
    pub storage_decay: bool,
    pub readout_decay: bool,
    pub qubit_relaxation: bool,
    pub qubit_dephasing: bool,
    pub thermal: bool,
    /// Optional pure dephasing of the storage mode, µs.
    pub storage_dephasing_time: Option<f64>,
}

impl Decoherence {
    /// Everything the device parameters describe.
    pub fn reference() -> Self {
        Self {
            storage_decay: true,
            readout_decay: true,
            qubit_relaxation: true,
            qubit_dephasing: true,
            thermal: true,
            storage_dephasing_time: None,
        }
    }

    pub fn none() -> Self {
        Self {
            storage_decay: false,
            readout_decay: false,
            qubit_relaxation: false,
            qubit_dephasing: false,
            thermal: false,
            storage_dephasing_time: None,
        }
    }

    pub fn storage_only() -> Self {
        Self { storage_decay: true, ..Self::none() }
    }

    pub fn is_none(&self) -> bool {
        *self == Self::none()
    }
}

impl Default for Decoherence {
    fn default() -> Self {
        Self::reference()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub dims: SubsystemDims,
    pub frame: FrameChoice,
    pub drive_form: DriveForm,
    pub spectrum: SpectrumModel,
    pub decoherence: Decoherence,
    /// Integration step, µs.
    pub dt: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            dims: SubsystemDims::default(),
            frame: FrameChoice::BareRotating,
            drive_form: DriveForm::RotatingWave,
            spectrum: SpectrumModel::Matched,
            decoherence: Decoherence::reference(),
            dt: DEFAULT_DT,
        }
    }
}

/// Jump operator `√rate · op`.
#[derive(Debug, Clone)]
pub struct CollapseChannel<T: Real> {
    pub label: String,
    pub op: OperatorMatrix<T>,
    /// 1/µs
    pub rate: T,
}

impl<T: Real> CollapseChannel<T> {
    pub fn new(label: &str, op: OperatorMatrix<T>, rate: T) -> Result<Self, LindbladError> {
        if !(rate >= T::zero()) {
            return Err(LindbladError::Invalid(format!("channel {label}: negative rate")));
        }
        Ok(Self { label: label.to_string(), op, rate })
    }

    pub fn jump_operator(&self) -> OperatorMatrix<T> {
        self.op.scale_real(self.rate.sqrt())
    }
}

/// Sparse triplet list.
#[derive(Debug, Clone)]
pub(crate) struct SparseOp<T: Real> {
    pub entries: Vec<(usize, usize, Complex<T>)>,
}

impl<T: Real> SparseOp<T> {
    pub fn from_operator(op: &OperatorMatrix<T>) -> Self {
        Self { entries: op.nonzeros() }
    }

    pub fn scaled(&self, k: T) -> Self {
        Self { entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * k)).collect() }
    }

    pub fn adjoint(&self) -> Self {
        Self { entries: self.entries.iter().map(|&(i, j, v)| (j, i, v.conj())).collect() }
    }
}

/// Exchange term `V + V†` where `V` raises the excitation numbers by `charge`.
#[derive(Debug, Clone)]
pub(crate) struct Coupling<T: Real> {
    pub raising: SparseOp<T>,
    pub charge: [i32; 3],
}

/// Static part of a model: Hamiltonian, frame and dissipators. Shared
/// between models that only differ in their pulse sequence.
#[derive(Debug)]
pub struct OpenSystem<T: Real> {
    params: DeviceParams,
    options: ModelOptions,
    bare: BareHamiltonian,
    frame: [f64; 3],
    levels: Vec<[usize; 3]>,
    lab_diag: Vec<f64>,
    couplings: Vec<Coupling<T>>,
    channels: Vec<CollapseChannel<T>>,
    jumps: Vec<SparseOp<T>>,
    lowering: [Option<SparseOp<T>>; 3],
    ladders: Ladders<T>,
    idle: OnceLock<Option<Arc<IdlePropagator<T>>>>,
}

impl<T: Real> OpenSystem<T> {
    pub fn new(p: &DeviceParams, options: &ModelOptions) -> Result<Self, LindbladError> {
        p.validate()?;
        let dims = options.dims;
        dims.validate(qsys::DEFAULT_DIM_CAP)?;
        if !(options.dt > 0.0 && options.dt.is_finite()) {
            return Err(LindbladError::Invalid(format!("dt must be > 0, got {}", options.dt)));
        }
        let bare = match options.spectrum {
            SpectrumModel::Bare => BareHamiltonian::bare(p),
            SpectrumModel::Matched => BareHamiltonian::matched(p, &dims)?,
        };
        Self::from_bare(p, options, bare)
    }

    fn from_bare(
        p: &DeviceParams,
        options: &ModelOptions,
        bare: BareHamiltonian,
    ) -> Result<Self, LindbladError> {
        let dims = options.dims;
        let ladders = Ladders::<T>::new(&dims)?;
        let frame = match options.frame {
            FrameChoice::BareRotating => [bare.w_q, bare.w_s, bare.w_ro],
            FrameChoice::Lab => [0.0; 3],
            FrameChoice::Custom(f) => f,
        };
        let levels: Vec<[usize; 3]> = (0..dims.total()).map(|i| dims.levels(i)).collect();
        let lab_diag: Vec<f64> = levels.iter().map(|l| bare.level_energy(*l)).collect();

        let mut couplings = Vec::new();
        let g = T::of(bare.g);
        if bare.g != 0.0 {
            let v = &ladders.b.dagger() * &ladders.a_s;
            couplings.push(Coupling { raising: SparseOp::from_operator(&v).scaled(g), charge: [1, -1, 0] });
            if let Some(a_ro) = &ladders.a_ro {
                let v = &ladders.b.dagger() * a_ro;
                couplings.push(Coupling { raising: SparseOp::from_operator(&v).scaled(g), charge: [1, 0, -1] });
            }
        }

        let channels = build_channels(p, &options.decoherence, &ladders)?;
        let jumps = channels.iter().map(|c| SparseOp::from_operator(&c.jump_operator())).collect();
        let lowering = [
            Some(SparseOp::from_operator(&ladders.b)),
            Some(SparseOp::from_operator(&ladders.a_s)),
            ladders.a_ro.as_ref().map(SparseOp::from_operator),
        ];
        Ok(Self {
            params: *p,
            options: *options,
            bare,
            frame,
            levels,
            lab_diag,
            couplings,
            channels,
            jumps,
            lowering,
            ladders,
            idle: OnceLock::new(),
        })
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.options.dims
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn bare(&self) -> &BareHamiltonian {
        &self.bare
    }

    /// Frame frequencies `[transmon, storage, readout]`, rad/µs.
    pub fn frame(&self) -> [f64; 3] {
        self.frame
    }

    pub fn channels(&self) -> &[CollapseChannel<T>] {
        &self.channels
    }

    pub fn ladders(&self) -> &Ladders<T> {
        &self.ladders
    }

    pub(crate) fn levels(&self) -> &[[usize; 3]] {
        &self.levels
    }

    /// `f·N` for basis state `i`.
    fn frame_energy(&self, i: usize) -> f64 {
        let l = self.levels[i];
        (0..3).map(|k| self.frame[k] * l[k] as f64).sum()
    }

    /// Diagonal of the drift in the working frame, rad/µs.
    pub(crate) fn frame_diag(&self) -> Vec<f64> {
        (0..self.lab_diag.len()).map(|i| self.lab_diag[i] - self.frame_energy(i)).collect()
    }

    /// Phase rate carried by a term with excitation change `charge`.
    pub(crate) fn charge_rate(&self, charge: [i32; 3]) -> f64 {
        (0..3).map(|k| self.frame[k] * charge[k] as f64).sum()
    }

    pub(crate) fn couplings(&self) -> &[Coupling<T>] {
        &self.couplings
    }

    pub(crate) fn jumps(&self) -> &[SparseOp<T>] {
        &self.jumps
    }

    pub(crate) fn lowering(&self, ch: DriveChannel) -> Result<&SparseOp<T>, LindbladError> {
        let slot = channel_slot(ch);
        self.lowering[slot.index()].as_ref().ok_or_else(|| {
            LindbladError::Invalid(format!("{ch:?} drive needs at least 2 levels in that slot"))
        })
    }

    /// Drift Hamiltonian (no drives) in the working frame at time `t`.
    pub fn drift_at(&self, t: f64) -> OperatorMatrix<T> {
        let d = self.dims().total();
        let mut m = DMatrix::zeros(d, d);
        for (i, e) in self.frame_diag().into_iter().enumerate() {
            m[(i, i)] = Complex::new(T::of(e), T::zero());
        }
        for c in &self.couplings {
            let ph = cis::<T>(self.charge_rate(c.charge) * t);
            for &(i, j, v) in &c.raising.entries {
                m[(i, j)] += v * ph;
                m[(j, i)] += (v * ph).conj();
            }
        }
        OperatorMatrix::from_matrix(m).expect("square")
    }

    /// Fastest phase rate of the undriven generator, rad/µs.
    fn drift_rate_max(&self) -> f64 {
        let diag = self.frame_diag();
        let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w = hi - lo;
        for c in &self.couplings {
            w = w.max(self.charge_rate(c.charge).abs());
        }
        w
    }

    /// Exact propagator for drive-free intervals, if the generator conserves
    /// the total excitation number.
    pub fn idle_propagator(&self) -> Option<Arc<IdlePropagator<T>>> {
        self.idle.get_or_init(|| IdlePropagator::new(self).ok().map(Arc::new)).clone()
    }

    /// Same physics in another frame.
    pub fn reframe(&self, frame: FrameChoice) -> Result<Self, LindbladError> {
        let options = ModelOptions { frame, ..self.options };
        Self::from_bare(&self.params, &options, self.bare)
    }
}

fn build_channels<T: Real>(
    p: &DeviceParams,
    deco: &Decoherence,
    l: &Ladders<T>,
) -> Result<Vec<CollapseChannel<T>>, LindbladError> {
    let mut out = Vec::new();
    if deco.storage_decay && p.kappa_s_rate() > 0.0 {
        out.push(CollapseChannel::new("storage_decay", l.a_s.clone(), T::of(p.kappa_s_rate()))?);
    }
    if deco.readout_decay {
        if let Some(a) = &l.a_ro {
            out.push(CollapseChannel::new("readout_decay", a.clone(), T::of(p.kappa_ro_rate()))?);
        }
    }
    if deco.qubit_relaxation {
        out.push(CollapseChannel::new("qubit_relaxation", l.b.clone(), T::of(1.0 / p.t1_q))?);
    }
    if deco.qubit_dephasing {
        let tphi = p.qubit_pure_dephasing_time()?;
        if tphi.is_finite() {
            out.push(CollapseChannel::new("qubit_dephasing", l.n_q.clone(), T::of(2.0 / tphi))?);
        }
    }
    if deco.thermal {
        let pe = p.thermal_excited_population()?;
        if pe > 0.0 {
            out.push(CollapseChannel::new("thermal_excitation", l.b.dagger(), T::of(pe / p.t1_q))?);
        }
    }
    if let Some(tphi) = deco.storage_dephasing_time {
        if !(tphi > 0.0) {
            return Err(LindbladError::Invalid(format!("storage dephasing time must be > 0, got {tphi}")));
        }
        if tphi.is_finite() {
            out.push(CollapseChannel::new("storage_dephasing", l.n_s.clone(), T::of(2.0 / tphi))?);
        }
    }
    Ok(out)
}

pub(crate) fn channel_slot(ch: DriveChannel) -> Slot {
    match ch {
        DriveChannel::QubitCharge => Slot::Transmon,
        DriveChannel::StorageDirect => Slot::Storage,
        DriveChannel::ReadoutDirect => Slot::Readout,
    }
}

pub(crate) fn cis<T: Real>(x: f64) -> Complex<T> {
    Complex::new(T::of(x.cos()), T::of(x.sin()))
}

pub(crate) fn cx<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}

/// A drift plus a pulse sequence, ready to integrate.
#[derive(Debug, Clone)]
pub struct LindbladModel<T: Real> {
    system: Arc<OpenSystem<T>>,
    sequence: PulseSequence,
    dt: f64,
}

/// Build the model for a device, a sequence and integrator options.
pub fn build_model<T: Real>(
    p: &DeviceParams,
    seq: &PulseSequence,
    options: &ModelOptions,
) -> Result<LindbladModel<T>, LindbladError> {
    let system = Arc::new(OpenSystem::new(p, options)?);
    LindbladModel::new(system, seq)
}

impl<T: Real> LindbladModel<T> {
    pub fn new(system: Arc<OpenSystem<T>>, seq: &PulseSequence) -> Result<Self, LindbladError> {
        seq.validate().map_err(|e| LindbladError::Invalid(e.to_string()))?;
        for s in &seq.segments {
            system.lowering(s.target)?;
        }
        let dt = system.options.dt;
        let m = Self { system, sequence: seq.clone(), dt };
        m.check_step(dt)?;
        Ok(m)
    }

    /// Same drift and dissipators with a different sequence.
    pub fn with_sequence(&self, seq: &PulseSequence) -> Result<Self, LindbladError> {
        Self::new(self.system.clone(), seq)
    }

    pub fn system(&self) -> &OpenSystem<T> {
        &self.system
    }

    pub fn shared_system(&self) -> Arc<OpenSystem<T>> {
        self.system.clone()
    }

    pub fn dims(&self) -> &SubsystemDims {
        self.system.dims()
    }

    pub fn sequence(&self) -> &PulseSequence {
        &self.sequence
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> &[CollapseChannel<T>] {
        &self.system.channels
    }

    pub fn frame(&self) -> [f64; 3] {
        self.system.frame
    }

    /// Fastest phase rate in the working frame, drives included, rad/µs.
    pub fn max_rate(&self) -> f64 {
        let mut w = self.system.drift_rate_max();
        let form = self.system.options.drive_form;
        for s in &self.sequence.segments {
            let f = self.system.frame[channel_slot(s.target).index()];
            w = w.max((f - s.carrier).abs());
            if form == DriveForm::RealCosine {
                w = w.max((f + s.carrier).abs());
            }
        }
        w
    }

    /// Largest admissible step, µs.
    pub fn max_dt(&self) -> f64 {
        let f = self.max_rate() / std::f64::consts::TAU;
        if f == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (SAMPLES_PER_PERIOD * f)
        }
    }

    /// Step used on `[a, b]`: `dt`, shortened while a segment is active so
    /// that the drift and drive phases together stay below
    /// [`MAX_DRIVE_PHASE`] per step.
    pub(crate) fn step_within(&self, a: f64, b: f64, dt: f64) -> f64 {
        let mut active = self.sequence.segments.iter().filter(|s| s.start < b && s.end() > a).peekable();
        if active.peek().is_none() {
            return dt;
        }
        let mut drive = 0.0f64;
        for s in active {
            let f = self.system.frame[channel_slot(s.target).index()];
            drive = drive.max(s.amplitude.abs() + (f - s.carrier).abs());
        }
        let w = self.system.drift_rate_max() + drive;
        if w * dt > MAX_DRIVE_PHASE {
            MAX_DRIVE_PHASE / w
        } else {
            dt
        }
    }

    pub(crate) fn check_step(&self, dt: f64) -> Result<(), LindbladError> {
        let max = self.max_dt();
        if dt > max * (1.0 + 1e-12) {
            return Err(LindbladError::StepSize {
                dt_ns: dt * 1e3,
                required_ns: max * 1e3,
                f_max_ghz: to_ghz(self.max_rate()),
            });
        }
        Ok(())
    }

    /// Drift of the working frame at `t = 0`.
    pub fn drift(&self) -> OperatorMatrix<T> {
        self.system.drift_at(0.0)
    }

    /// Hermitian drive quadratures `L + L†`, one per segment.
    pub fn drive_couplings(&self) -> Vec<OperatorMatrix<T>> {
        let l = &self.system.ladders;
        self.sequence
            .segments
            .iter()
            .map(|s| {
                let op = match s.target {
                    DriveChannel::QubitCharge => l.b.clone(),
                    DriveChannel::StorageDirect => l.a_s.clone(),
                    DriveChannel::ReadoutDirect => l.a_ro.clone().expect("checked in new"),
                };
                &op + &op.dagger()
            })
            .collect()
    }

    /// Full Hamiltonian at `t` in the working frame.
    pub fn hamiltonian_at(&self, t: f64) -> OperatorMatrix<T> {
        let mut h = self.system.drift_at(t).into_matrix();
        for (k, v) in integrate::drive_coefficients(self, t) {
            let low = self.system.lowering(self.sequence.segments[k].target).expect("checked");
            for &(i, j, a) in &low.entries {
                // L† coefficient v, L coefficient conj(v)
                h[(j, i)] += a.conj() * v;
                h[(i, j)] += a * v.conj();
            }
        }
        OperatorMatrix::from_matrix(h).expect("square")
    }

    /// Same physics in another frame, states must be converted with
    /// [`frame_transform`].
    pub fn reframe(&self, frame: FrameChoice) -> Result<Self, LindbladError> {
        let sys = Arc::new(self.system.reframe(frame)?);
        Self::new(sys, &self.sequence)
    }

    /// Integrate the master equation from `rho0` at `t0` to `t1`.
    pub fn evolve(
        &self,
        rho0: &QuantumState<T>,
        t0: f64,
        t1: f64,
        opts: &EvolveOptions<T>,
    ) -> Result<Trajectory<T>, LindbladError> {
        integrate::evolve(self, rho0, t0, t1, opts)
    }

    /// Noiseless Schrödinger evolution of a state vector.
    pub fn evolve_pure(
        &self,
        psi0: &nalgebra::DVector<Complex<T>>,
        t0: f64,
        t1: f64,
        dt: f64,
    ) -> Result<nalgebra::DVector<Complex<T>>, LindbladError> {
        integrate::evolve_pure(self, psi0, t0, t1, dt)
    }

    /// [`evolve_pure`](Self::evolve_pure) from basis state `i`.
    pub fn evolve_pure_basis(
        &self,
        i: usize,
        t0: f64,
        t1: f64,
        dt: f64,
    ) -> Result<nalgebra::DVector<Complex<T>>, LindbladError> {
        let d = self.dims().total();
        let mut psi = nalgebra::DVector::zeros(d);
        psi[i] = Complex::new(T::one(), T::zero());
        self.evolve_pure(&psi, t0, t1, dt)
    }
}

/// Convert a density matrix between two frames at time `t`.
pub fn frame_transform<T: Real>(
    rho: &QuantumState<T>,
    from: [f64; 3],
    to: [f64; 3],
    t: f64,
) -> QuantumState<T> {
    let dims = *rho.dims();
    let d = dims.total();
    let lv: Vec<[usize; 3]> = (0..d).map(|i| dims.levels(i)).collect();
    let phase = |i: usize| -> f64 { (0..3).map(|k| (to[k] - from[k]) * lv[i][k] as f64).sum::<f64>() * t };
    let ph: Vec<f64> = (0..d).map(phase).collect();
    let mut m: CMat<T> = rho.rho().clone();
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] *= cis::<T>(ph[i] - ph[j]);
        }
    }
    QuantumState::from_density_unchecked(m, dims).expect("same shape")
}

/// Trajectory CSV with columns `t_us,observable_name,value` (real part).
pub fn trajectory_csv<T: Real>(traj: &Trajectory<T>) -> String {
    traj.to_csv()
}
