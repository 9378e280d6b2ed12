// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment drivers: storage and retrieval through the memory, Fock decay
//! and Ramsey measurements on the stored state, mode ringdown, Z-fidelity
//! working points and process tomography of the memory.
//!
//! Every experiment point is an independent simulation and sweeps run on the
//! rayon pool. Results keep the order of the requested sweep values.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, CosinePattern, FitResult};
use crate::device::{DeviceError, DeviceParams};
use crate::lindblad::{
    Decoherence, DriveForm, EvolveOptions, FrameChoice, LindbladError, LindbladModel, ModelOptions, OpenSystem,
    SpectrumModel, DEFAULT_DT,
};
use crate::pulse::{
    self, build_memory_sequence, build_ramsey_sequence, calibrate_pi_pulse, storage_half_end,
    CalibrationOptions, CalibrationResult, DriveChannel, PulseError, PulseSegment, PulseSequence,
    SegmentRole, Transition, DEFAULT_RISE,
};
use crate::qsys::{self, QsysError, Slot, SubsystemDims};
use crate::tomography::{self, ChiMatrix, FrameCorrectedFidelity, QubitMatrix, TomographyError};
use crate::units::mhz;
use crate::State;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Qsys(#[from] QsysError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error("invalid experiment input: {0}")]
    Invalid(String),
}

/// Registered experiment names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MemoryProtocol,
    FockDecay,
    MemoryRamsey,
    Ringdown,
    ZfidelitySweep,
    BsbCheck,
    Qpt,
    Fit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::MemoryProtocol,
        ExperimentKind::FockDecay,
        ExperimentKind::MemoryRamsey,
        ExperimentKind::Ringdown,
        ExperimentKind::ZfidelitySweep,
        ExperimentKind::BsbCheck,
        ExperimentKind::Qpt,
        ExperimentKind::Fit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MemoryProtocol => "memory-protocol",
            ExperimentKind::FockDecay => "fock-decay",
            ExperimentKind::MemoryRamsey => "memory-ramsey",
            ExperimentKind::Ringdown => "ringdown",
            ExperimentKind::ZfidelitySweep => "zfidelity-sweep",
            ExperimentKind::BsbCheck => "bsb-check",
            ExperimentKind::Qpt => "qpt",
            ExperimentKind::Fit => "fit",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment '{s}' (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    /// 1σ; zero for noiseless simulation.
    pub uncertainty: f64,
}

/// What produced a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub params: DeviceParams,
    pub options: Option<ProtocolOptions>,
    pub calibration: Option<CalibrationResult>,
    /// Representative sequence (first sweep point).
    pub sequence: Option<PulseSequence>,
}

impl RecordMeta {
    pub fn params_only(p: &DeviceParams) -> Self {
        Self { params: *p, options: None, calibration: None, sequence: None }
    }
}

/// Tabulated output of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub kind: ExperimentKind,
    /// Sweep variable with its unit, e.g. `delay_us`.
    pub sweep_variable: String,
    pub observable: String,
    pub data: Vec<DataPoint>,
    pub meta: RecordMeta,
}

impl ExperimentRecord {
    /// Checks that `data` is nonempty with finite, strictly increasing `x`.
    pub fn new(
        kind: ExperimentKind,
        sweep_variable: &str,
        observable: &str,
        data: Vec<DataPoint>,
        meta: RecordMeta,
    ) -> Result<Self, ProtocolError> {
        if data.is_empty() {
            return Err(ProtocolError::Invalid(format!("{kind}: empty record")));
        }
        if data.iter().any(|d| !d.x.is_finite()) {
            return Err(ProtocolError::Invalid(format!("{kind}: non-finite sweep value")));
        }
        if data.windows(2).any(|w| !(w[1].x > w[0].x)) {
            return Err(ProtocolError::Invalid(format!("{kind}: sweep values must be strictly increasing")));
        }
        Ok(Self {
            kind,
            sweep_variable: sweep_variable.to_string(),
            observable: observable.to_string(),
            data,
            meta,
        })
    }

    pub fn xs(&self) -> Vec<f64> {
        self.data.iter().map(|d| d.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.data.iter().map(|d| d.y).collect()
    }

    /// CSV with columns (sweep value, observable, uncertainty), 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},uncertainty\n", self.sweep_variable, self.observable);
        for d in &self.data {
            s.push_str(&format!("{},{},{}\n", fmt17(d.x), fmt17(d.y), fmt17(d.uncertainty)));
        }
        s
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// How the retrieved ground-state population is read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ReadoutModel {
    /// Transmon ground-level population with both modes traced out.
    Direct,
    /// Free evolution during a probe of length `probe` (µs), weighted by the
    /// readout-mode field ring-up `1 - exp(-κ_RO t / 2)`.
    Dispersive { probe: f64 },
}

/// Settings shared by the memory experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub dims: SubsystemDims,
    pub spectrum: SpectrumModel,
    pub frame: FrameChoice,
    pub drive_form: DriveForm,
    pub decoherence: Decoherence,
    /// Integration step, µs.
    pub dt: f64,
    /// Step for the noiseless π-pulse calibrations, µs.
    pub calibration_dt: f64,
    /// Qubit π-pulse amplitude, rad/µs.
    pub qubit_amplitude: f64,
    /// Qubit-charge amplitude of the half-sideband tone, rad/µs.
    pub bsb_amplitude: f64,
    /// Odd multiple of π for the qubit pulses between the sideband pulses.
    pub qubit_pi_multiplier: u32,
    /// Put the carriers on the driven resonance. Otherwise the undriven
    /// transition frequency is used.
    pub stark_correction: bool,
    pub readout: ReadoutModel,
}

/// Sideband amplitude of the reference working point (`t_p` close to 0.37 µs).
pub const REFERENCE_BSB_AMPLITUDE_MHZ: f64 = 1175.0;
pub const REFERENCE_QUBIT_AMPLITUDE_MHZ: f64 = 20.0;

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            dims: SubsystemDims::default(),
            spectrum: SpectrumModel::Matched,
            frame: FrameChoice::BareRotating,
            drive_form: DriveForm::RotatingWave,
            decoherence: Decoherence::reference(),
            dt: DEFAULT_DT,
            calibration_dt: CalibrationOptions::default().dt,
            qubit_amplitude: mhz(REFERENCE_QUBIT_AMPLITUDE_MHZ),
            bsb_amplitude: mhz(REFERENCE_BSB_AMPLITUDE_MHZ),
            qubit_pi_multiplier: 1,
            stark_correction: true,
            readout: ReadoutModel::Direct,
        }
    }
}

impl ProtocolOptions {
    pub fn noiseless() -> Self {
        Self { decoherence: Decoherence::none(), ..Self::default() }
    }

    fn model_options(&self, decoherence: Decoherence) -> ModelOptions {
        ModelOptions {
            dims: self.dims,
            spectrum: self.spectrum,
            frame: self.frame,
            drive_form: self.drive_form,
            decoherence,
            dt: self.dt,
        }
    }

    /// Qubit T1 entering the corrected Z fidelity; infinite when relaxation
    /// is switched off.
    pub fn effective_t1_q(&self, p: &DeviceParams) -> f64 {
        if self.decoherence.qubit_relaxation {
            p.t1_q
        } else {
            f64::INFINITY
        }
    }
}

/// Outcome of one storage and retrieval run.
#[derive(Debug, Clone)]
pub struct MemoryOutcome {
    pub p_g: f64,
    /// Transmon population above the first excited level at readout.
    pub leakage: f64,
    pub protocol_length: f64,
    pub sequence: PulseSequence,
    pub final_state: State,
}

/// Storage-half assignment in the noiseless model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageMapping {
    /// Storage population of `|1⟩` after storing `|g⟩`.
    pub ground_to_one: f64,
    /// Storage population of `|0⟩` after storing `|e⟩`.
    pub excited_to_zero: f64,
}

/// Calibrated memory: the device, the open system used for the runs and
/// the π pulses found in the noiseless model.
#[derive(Clone)]
pub struct MemoryExperiment {
    params: DeviceParams,
    options: ProtocolOptions,
    calibration: CalibrationResult,
    quiet: Arc<OpenSystem<f64>>,
    system: Arc<OpenSystem<f64>>,
}

impl MemoryExperiment {
    /// Build the models and calibrate both π pulses.
    pub fn new(p: &DeviceParams, opts: &ProtocolOptions) -> Result<Self, ProtocolError> {
        let (quiet, system) = Self::systems(p, opts)?;
        let mut exp = Self { params: *p, options: *opts, calibration: CalibrationResult::default(), quiet, system };
        let q = exp.calibrate(Transition::Qubit, opts.qubit_amplitude)?;
        let b = exp.calibrate(Transition::BlueSideband, opts.bsb_amplitude)?;
        exp.calibration = CalibrationResult { qubit: Some(q), bsb: Some(b) };
        Ok(exp)
    }

    /// Use an existing calibration as is.
    pub fn with_calibration(
        p: &DeviceParams,
        opts: &ProtocolOptions,
        calibration: CalibrationResult,
    ) -> Result<Self, ProtocolError> {
        if calibration.qubit.is_none() || calibration.bsb.is_none() {
            return Err(PulseError::Uncalibrated("both π pulses are required".into()).into());
        }
        let (quiet, system) = Self::systems(p, opts)?;
        Ok(Self { params: *p, options: *opts, calibration, quiet, system })
    }

    /// Same device and qubit pulse with the sideband recalibrated at another
    /// amplitude.
    pub fn with_bsb_amplitude(&self, amplitude: f64) -> Result<Self, ProtocolError> {
        let mut exp = self.clone();
        exp.options.bsb_amplitude = amplitude;
        exp.calibration.bsb = Some(exp.calibrate(Transition::BlueSideband, amplitude)?);
        Ok(exp)
    }

    fn systems(
        p: &DeviceParams,
        opts: &ProtocolOptions,
    ) -> Result<(Arc<OpenSystem<f64>>, Arc<OpenSystem<f64>>), ProtocolError> {
        p.validate()?;
        if opts.qubit_pi_multiplier % 2 == 0 {
            return Err(ProtocolError::Invalid(format!(
                "qubit π multiplier must be odd, got {}",
                opts.qubit_pi_multiplier
            )));
        }
        let quiet = Arc::new(OpenSystem::new(p, &opts.model_options(Decoherence::none()))?);
        let system = if opts.decoherence.is_none() {
            quiet.clone()
        } else {
            Arc::new(OpenSystem::new(p, &opts.model_options(opts.decoherence))?)
        };
        Ok((quiet, system))
    }

    fn calibrate(&self, transition: Transition, amplitude: f64) -> Result<pulse::PiCalibration, ProtocolError> {
        let m0 = LindbladModel::new(self.quiet.clone(), &PulseSequence::default())?;
        let copts = CalibrationOptions { dt: self.options.calibration_dt, ..Default::default() };
        let mut cal = calibrate_pi_pulse(&m0, transition, amplitude, &copts)?;
        if !self.options.stark_correction {
            cal.carrier -= cal.stark_offset;
        }
        Ok(cal)
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn options(&self) -> &ProtocolOptions {
        &self.options
    }

    pub fn calibration(&self) -> &CalibrationResult {
        &self.calibration
    }

    pub fn system(&self) -> Arc<OpenSystem<f64>> {
        self.system.clone()
    }

    pub fn meta(&self, sequence: Option<PulseSequence>) -> RecordMeta {
        RecordMeta {
            params: self.params,
            options: Some(self.options),
            calibration: Some(self.calibration),
            sequence,
        }
    }

    pub fn sequence(&self, prep_angle: f64, delay: f64) -> Result<PulseSequence, ProtocolError> {
        Ok(build_memory_sequence(&self.params, prep_angle, delay, &self.calibration, self.options.qubit_pi_multiplier)?)
    }

    fn model(&self, seq: &PulseSequence) -> Result<LindbladModel<f64>, ProtocolError> {
        Ok(LindbladModel::new(self.system.clone(), seq)?)
    }

    fn ground(&self) -> Result<State, ProtocolError> {
        Ok(State::basis(self.options.dims, 0, 0, 0)?)
    }

    fn evolve(&self, m: &LindbladModel<f64>, rho: &State, t0: f64, t1: f64) -> Result<State, ProtocolError> {
        let opts = EvolveOptions { dt: Some(self.options.dt), ..Default::default() };
        Ok(m.evolve(rho, t0, t1, &opts)?.final_state)
    }

    /// State at the end of the storage half for a given preparation angle,
    /// with that time.
    pub fn stored_state(&self, prep_angle: f64) -> Result<(State, f64), ProtocolError> {
        let seq = self.sequence(prep_angle, 0.0)?;
        let h = storage_half_end(&seq).ok_or_else(|| ProtocolError::Invalid("sequence without storage half".into()))?;
        let m = self.model(&seq)?;
        Ok((self.evolve(&m, &self.ground()?, seq.start(), h)?, h))
    }

    /// Finish a sequence from a state reached at `t0`, then read out.
    fn finish(&self, seq: PulseSequence, rho: &State, t0: f64) -> Result<MemoryOutcome, ProtocolError> {
        let m = self.model(&seq)?;
        let t_read = seq.readout_at.unwrap_or_else(|| seq.end());
        let fin = self.evolve(&m, rho, t0, t_read)?;
        let p_g = self.read_ground(&m, &fin, t_read)?;
        let leakage: f64 = (2..self.options.dims.n_transmon_levels)
            .map(|k| fin.level_population(Slot::Transmon, k))
            .sum();
        Ok(MemoryOutcome { p_g, leakage, protocol_length: seq.protocol_length(), sequence: seq, final_state: fin })
    }

    fn read_ground(&self, m: &LindbladModel<f64>, rho: &State, t: f64) -> Result<f64, ProtocolError> {
        match self.options.readout {
            ReadoutModel::Direct => Ok(rho.level_population(Slot::Transmon, 0)),
            ReadoutModel::Dispersive { probe } => {
                if !(probe > 0.0 && probe.is_finite()) {
                    return Err(ProtocolError::Invalid(format!("probe length must be > 0, got {probe}")));
                }
                let dims = self.options.dims;
                let proj = qsys::tensor_embed(&qsys::projector(dims.n_transmon_levels, 0), Slot::Transmon, &dims)?;
                let n = 32;
                let opts = EvolveOptions { dt: Some(self.options.dt), ..EvolveOptions::sampled(probe / n as f64) }
                    .observe("p_g", proj);
                let tr = m.evolve(rho, t, t + probe, &opts)?;
                let ys = tr.real("p_g").expect("observed");
                let kappa = self.params.kappa_ro_rate();
                let w: Vec<f64> = tr.times.iter().map(|&s| 1.0 - (-0.5 * kappa * (s - t)).exp()).collect();
                // trapezoid over the samples
                let (mut num, mut den) = (0.0, 0.0);
                for k in 1..tr.times.len() {
                    let h = tr.times[k] - tr.times[k - 1];
                    num += 0.5 * h * (w[k] * ys[k] + w[k - 1] * ys[k - 1]);
                    den += 0.5 * h * (w[k] + w[k - 1]);
                }
                Ok(num / den)
            }
        }
    }

    /// Full storage and retrieval from `|g00⟩`.
    pub fn run(&self, prep_angle: f64, delay: f64) -> Result<MemoryOutcome, ProtocolError> {
        let seq = self.sequence(prep_angle, delay)?;
        let t0 = seq.start();
        self.finish(seq, &self.ground()?, t0)
    }

    /// Retrieval for `delay` starting from the output of [`stored_state`].
    ///
    /// [`stored_state`]: Self::stored_state
    pub fn retrieve(&self, stored: &(State, f64), prep_angle: f64, delay: f64) -> Result<MemoryOutcome, ProtocolError> {
        let seq = self.sequence(prep_angle, delay)?;
        self.finish(seq, &stored.0, stored.1)
    }

    /// Zero-length reference: preparation followed by immediate readout.
    pub fn reference_ground(&self, prep_angle: f64) -> Result<f64, ProtocolError> {
        let seq = self.sequence(prep_angle, 0.0)?;
        let mut prep = PulseSequence::new(vec![seq.segments[0]])?;
        prep.readout_at = Some(seq.segments[0].end());
        let t0 = prep.start();
        Ok(self.finish(prep, &self.ground()?, t0)?.p_g)
    }

    pub fn storage_mapping(&self) -> Result<StorageMapping, ProtocolError> {
        let (g, _) = self.stored_state(0.0)?;
        let (e, _) = self.stored_state(PI)?;
        Ok(StorageMapping {
            ground_to_one: g.level_population(Slot::Storage, 1),
            excited_to_zero: e.level_population(Slot::Storage, 0),
        })
    }

    /// Retrieved `p_g` against the preparation angle at a fixed delay, with
    /// a cosine fit of the pattern.
    pub fn prep_angle_sweep(
        &self,
        angles: &[f64],
        delay: f64,
    ) -> Result<(ExperimentRecord, CosinePattern), ProtocolError> {
        let ys: Vec<f64> = angles
            .par_iter()
            .map(|&a| self.run(a, delay).map(|o| o.p_g))
            .collect::<Result<_, _>>()?;
        let data = angles.iter().zip(&ys).map(|(&x, &y)| DataPoint { x, y, uncertainty: 0.0 }).collect();
        let meta = self.meta(Some(self.sequence(angles.first().copied().unwrap_or(0.0), delay)?));
        let rec = ExperimentRecord::new(ExperimentKind::MemoryProtocol, "prep_angle_rad", "p_g", data, meta)?;
        let fit = analysis::fit_cosine_pattern(angles, &ys)?;
        Ok((rec, fit))
    }

    /// Store `|1⟩_s` (preparation angle 0), wait, retrieve, and fit the
    /// retrieved `p_g` with an exponential. The storage half is simulated
    /// once and shared by all delays.
    pub fn fock_decay(&self, delays: &[f64]) -> Result<FockDecay, ProtocolError> {
        check_delays(delays)?;
        let expected = 1.0 / self.params.kappa_s_rate();
        let span = delays[delays.len() - 1] - delays[0];
        if span < 2.0 * expected {
            return Err(ProtocolError::Invalid(format!(
                "delays span {span:.3} us, need at least 2/κ_s = {:.3} us",
                2.0 * expected
            )));
        }
        let stored = self.stored_state(0.0)?;
        let ys: Vec<f64> = delays
            .par_iter()
            .map(|&d| self.retrieve(&stored, 0.0, d).map(|o| o.p_g))
            .collect::<Result<_, _>>()?;
        let fit = analysis::fit_exponential(delays, &ys)?;
        let t1_s = fit.value("T").expect("fit parameter");
        let data = delays.iter().zip(&ys).map(|(&x, &y)| DataPoint { x, y, uncertainty: 0.0 }).collect();
        let meta = self.meta(Some(self.sequence(0.0, delays[0])?));
        let record = ExperimentRecord::new(ExperimentKind::FockDecay, "delay_us", "p_g", data, meta)?;
        Ok(FockDecay { record, t1_s, t1_s_uncertainty: fit.uncertainty("T").expect("fit parameter"), fit })
    }

    /// Ramsey on the memory: store `(|0⟩_s + |1⟩_s)/√2`, wait, retrieve and
    /// close with a π/2 pulse whose phase advances at `detuning` (rad/µs).
    pub fn memory_ramsey(&self, delays: &[f64], detuning: f64) -> Result<MemoryRamsey, ProtocolError> {
        check_delays(delays)?;
        let span = delays[delays.len() - 1] - delays[0];
        let fringes = detuning.abs() * span / (2.0 * PI);
        if !(fringes >= 3.0) {
            return Err(ProtocolError::Invalid(format!(
                "detuning gives {fringes:.2} fringes over the delays, need at least 3"
            )));
        }
        // the Ramsey sequence always uses single π pulses
        let exp = if self.options.qubit_pi_multiplier == 1 {
            self.clone()
        } else {
            let mut e = self.clone();
            e.options.qubit_pi_multiplier = 1;
            e
        };
        let stored = exp.stored_state(PI / 2.0)?;
        let ys: Vec<f64> = delays
            .par_iter()
            .map(|&d| {
                let seq = build_ramsey_sequence(&exp.params, d, &exp.calibration, detuning)?;
                exp.finish(seq, &stored.0, stored.1).map(|o| o.p_g)
            })
            .collect::<Result<_, ProtocolError>>()?;
        let fit = analysis::fit_decaying_cosine(delays, &ys)?;
        let t2_s = fit.value("T2").expect("fit parameter");
        let data = delays.iter().zip(&ys).map(|(&x, &y)| DataPoint { x, y, uncertainty: 0.0 }).collect();
        let meta = exp.meta(Some(build_ramsey_sequence(&exp.params, delays[0], &exp.calibration, detuning)?));
        let record = ExperimentRecord::new(ExperimentKind::MemoryRamsey, "delay_us", "p_g", data, meta)?;
        Ok(MemoryRamsey {
            record,
            t2_s,
            t2_s_uncertainty: fit.uncertainty("T2").expect("fit parameter"),
            fringe_frequency: fit.value("f").expect("fit parameter"),
            fit,
        })
    }

    /// Zero-delay storage and retrieval of `|g⟩` at this working point.
    pub fn z_fidelity_point(&self) -> Result<WorkingPoint, ProtocolError> {
        let out = self.run(0.0, 0.0)?;
        let p_g0 = self.reference_ground(0.0)?;
        let f_z = out.p_g / p_g0;
        let t_p = out.protocol_length;
        let bsb = self.calibration.bsb.expect("calibrated");
        Ok(WorkingPoint {
            bsb_amplitude: bsb.amplitude,
            omega_drv: bsb.omega_drv,
            protocol_length: t_p,
            p_g: out.p_g,
            p_g0,
            f_z,
            f_z_corr: corrected_z_fidelity(f_z, t_p, self.options.effective_t1_q(&self.params)),
            leakage: out.leakage,
        })
    }

    /// Process tomography of the full storage and retrieval. The four input
    /// states are placed on the transmon with both modes empty at the start
    /// of the sideband pulse; outputs are the transmon `{g, e}` block.
    pub fn process_tomography(&self, opts: &QptOptions) -> Result<MemoryQpt, ProtocolError> {
        let seq = self.sequence(0.0, opts.delay)?;
        let t0 = seq.segments[0].end();
        let inputs = tomography::standard_inputs::<f64>();
        let outputs: Vec<QubitMatrix<f64>> = inputs
            .par_iter()
            .enumerate()
            .map(|(k, rho)| -> Result<QubitMatrix<f64>, ProtocolError> {
                let start = State::transmon_with_vacuum(rho, self.options.dims)?;
                let out = self.finish(seq.clone(), &start, t0)?;
                let red = out.final_state.reduced(Slot::Transmon);
                let block = red.view((0, 0), (2, 2)).into_owned();
                match opts.shots {
                    None => Ok(block),
                    Some(shots) => {
                        let tr = block.trace().re;
                        let normalised = block.unscale(tr);
                        let mut rng = StdRng::seed_from_u64(opts.seed.wrapping_add(k as u64));
                        let [x, y, z] = tomography::sampled_expectations(&normalised, shots, &mut rng);
                        Ok(tomography::bloch_state(x, y, z).scale(tr))
                    }
                }
            })
            .collect::<Result<_, _>>()?;
        let chi = tomography::reconstruct_chi(&inputs, &outputs)?;
        let fidelity = tomography::frame_corrected_fidelity(&chi, &ChiMatrix::identity());
        Ok(MemoryQpt { chi, fidelity, protocol_length: seq.protocol_length() })
    }
}

fn check_delays(delays: &[f64]) -> Result<(), ProtocolError> {
    if delays.len() < 5 {
        return Err(ProtocolError::Invalid(format!("need at least 5 delays, got {}", delays.len())));
    }
    if delays.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || delays.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ProtocolError::Invalid("delays must be >= 0 and strictly increasing".into()));
    }
    Ok(())
}

/// Retrieved ground-state population after storage and retrieval.
pub fn run_memory_protocol(
    p: &DeviceParams,
    prep_angle: f64,
    storage_delay: f64,
    opts: &ProtocolOptions,
) -> Result<f64, ProtocolError> {
    Ok(MemoryExperiment::new(p, opts)?.run(prep_angle, storage_delay)?.p_g)
}

#[derive(Debug, Clone)]
pub struct FockDecay {
    pub record: ExperimentRecord,
    pub fit: FitResult<f64>,
    /// µs
    pub t1_s: f64,
    pub t1_s_uncertainty: f64,
}

pub fn fock_decay_experiment(p: &DeviceParams, delays: &[f64], opts: &ProtocolOptions) -> Result<FockDecay, ProtocolError> {
    MemoryExperiment::new(p, opts)?.fock_decay(delays)
}

#[derive(Debug, Clone)]
pub struct MemoryRamsey {
    pub record: ExperimentRecord,
    pub fit: FitResult<f64>,
    /// µs
    pub t2_s: f64,
    pub t2_s_uncertainty: f64,
    /// Fitted fringe frequency, MHz.
    pub fringe_frequency: f64,
}

pub fn memory_ramsey_experiment(
    p: &DeviceParams,
    delays: &[f64],
    detuning: f64,
    opts: &ProtocolOptions,
) -> Result<MemoryRamsey, ProtocolError> {
    MemoryExperiment::new(p, opts)?.memory_ramsey(delays, detuning)
}

/// `F_Z / exp(-t_p / T1_q)`.
pub fn corrected_z_fidelity(f_z: f64, t_p: f64, t1_q: f64) -> f64 {
    f_z / (-t_p / t1_q).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingPoint {
    /// Qubit-charge amplitude of the sideband tone, rad/µs.
    pub bsb_amplitude: f64,
    /// Equivalent storage-port amplitude, rad/µs.
    pub omega_drv: Option<f64>,
    /// µs
    pub protocol_length: f64,
    pub p_g: f64,
    /// Reference population from the zero-length protocol.
    pub p_g0: f64,
    pub f_z: f64,
    pub f_z_corr: f64,
    pub leakage: f64,
}

#[derive(Debug, Clone)]
pub struct ZFidelitySweep {
    /// Sorted by protocol length.
    pub points: Vec<WorkingPoint>,
    pub f_z: ExperimentRecord,
    pub f_z_corr: ExperimentRecord,
}

/// One working point per sideband amplitude (rad/µs). The qubit pulse is
/// calibrated once; each sideband pulse is calibrated at its own amplitude.
pub fn z_fidelity_sweep(
    p: &DeviceParams,
    bsb_amplitudes: &[f64],
    opts: &ProtocolOptions,
) -> Result<ZFidelitySweep, ProtocolError> {
    if bsb_amplitudes.is_empty() {
        return Err(ProtocolError::Invalid("no working points".into()));
    }
    let base = MemoryExperiment::new(p, &ProtocolOptions { bsb_amplitude: bsb_amplitudes[0], ..*opts })?;
    let mut points: Vec<WorkingPoint> = bsb_amplitudes
        .par_iter()
        .map(|&a| {
            if a == base.options.bsb_amplitude {
                base.z_fidelity_point()
            } else {
                base.with_bsb_amplitude(a)?.z_fidelity_point()
            }
        })
        .collect::<Result<_, _>>()?;
    points.sort_by(|a, b| a.protocol_length.total_cmp(&b.protocol_length));
    let record = |obs: &str, f: fn(&WorkingPoint) -> f64| {
        let data = points.iter().map(|w| DataPoint { x: w.protocol_length, y: f(w), uncertainty: 0.0 }).collect();
        ExperimentRecord::new(ExperimentKind::ZfidelitySweep, "t_p_us", obs, data, base.meta(None))
    };
    Ok(ZFidelitySweep { f_z: record("f_z", |w| w.f_z)?, f_z_corr: record("f_z_corr", |w| w.f_z_corr)?, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QptOptions {
    /// Storage delay, µs.
    pub delay: f64,
    /// Binomial shots per Pauli expectation; exact expectations when `None`.
    pub shots: Option<u64>,
    pub seed: u64,
}

impl Default for QptOptions {
    fn default() -> Self {
        Self { delay: 0.0, shots: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct MemoryQpt {
    pub chi: ChiMatrix<f64>,
    pub fidelity: FrameCorrectedFidelity,
    pub protocol_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Storage,
    Readout,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "storage" => Ok(Mode::Storage),
            "readout" => Ok(Mode::Readout),
            _ => Err(format!("unknown mode '{s}' (expected storage or readout)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingdownOptions {
    /// Truncation; by default two transmon levels, six levels in the driven
    /// mode and two in the other.
    pub dims: Option<SubsystemDims>,
    pub spectrum: SpectrumModel,
    pub decoherence: Decoherence,
    /// Coherent amplitude the drive would reach without loss.
    pub alpha: f64,
    pub samples: usize,
    /// Observation window in units of the expected amplitude decay time.
    pub window: f64,
    pub dt: f64,
}

impl Default for RingdownOptions {
    fn default() -> Self {
        Self {
            dims: None,
            spectrum: SpectrumModel::Matched,
            decoherence: Decoherence::reference(),
            alpha: 0.5,
            samples: 61,
            window: 5.0,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ringdown {
    pub mode: Mode,
    /// `|⟨a⟩(t)| / |⟨a⟩(0)|` after the drive is switched off.
    pub amplitude: ExperimentRecord,
    /// `⟨n⟩(t) / ⟨n⟩(0)`.
    pub energy: ExperimentRecord,
    pub amplitude_fit: FitResult<f64>,
    pub energy_fit: FitResult<f64>,
    /// Field amplitude decay time, µs.
    pub amplitude_decay_time: f64,
    /// Energy decay time, µs.
    pub energy_decay_time: f64,
}

/// Displace a mode with a short resonant pulse, switch it off and follow
/// the free decay of the field and of the photon number.
pub fn mode_ringdown_experiment(p: &DeviceParams, mode: Mode, opts: &RingdownOptions) -> Result<Ringdown, ProtocolError> {
    p.validate()?;
    if opts.samples < 5 || !(opts.window > 0.0) || !(opts.alpha > 0.0) {
        return Err(ProtocolError::Invalid("ringdown needs >= 5 samples, window > 0 and alpha > 0".into()));
    }
    let (slot, channel, kappa, default_dims) = match mode {
        Mode::Storage => (Slot::Storage, DriveChannel::StorageDirect, p.kappa_s_rate(), (2, 6, 2)),
        Mode::Readout => (Slot::Readout, DriveChannel::ReadoutDirect, p.kappa_ro_rate(), (2, 2, 6)),
    };
    let dims = match opts.dims {
        Some(d) => d,
        None => SubsystemDims::new(default_dims.0, default_dims.1, default_dims.2)?,
    };
    let mopts = ModelOptions {
        dims,
        spectrum: opts.spectrum,
        decoherence: opts.decoherence,
        dt: opts.dt,
        ..Default::default()
    };
    let sys = Arc::new(OpenSystem::<f64>::new(p, &mopts)?);
    let lines = sys.bare().dressed_lines(&dims)?;
    let carrier = match mode {
        Mode::Storage => lines.storage_g,
        Mode::Readout => lines
            .readout_g
            .ok_or_else(|| ProtocolError::Invalid("readout ringdown needs readout photon levels".into()))?,
    };
    // area of a zero-plateau pulse is 2 ∫edge; Ω·area/2 = α
    let area = 2.0 * pulse::edge_equivalent(DEFAULT_RISE, 1);
    let seg = PulseSegment {
        target: channel,
        role: SegmentRole::ModeDrive,
        amplitude: 2.0 * opts.alpha / area,
        carrier,
        phase: 0.0,
        plateau: 0.0,
        rise: DEFAULT_RISE,
        start: 0.0,
    };
    let seq = PulseSequence::new(vec![seg])?;
    let m = LindbladModel::new(sys, &seq)?;
    let t_off = seg.end();
    let window = opts.window * 2.0 / kappa;
    let a = qsys::tensor_embed(&qsys::annihilation(dims.slot_dim(slot))?, slot, &dims)?;
    let n = qsys::tensor_embed(&qsys::number(dims.slot_dim(slot)), slot, &dims)?;
    let rho0 = State::basis(dims, 0, 0, 0)?;
    let drive_end = m.evolve(&rho0, 0.0, t_off, &EvolveOptions::default())?.final_state;
    let eopts = EvolveOptions::sampled(window / (opts.samples - 1) as f64).observe("a", a).observe("n", n);
    let tr = m.evolve(&drive_end, t_off, t_off + window, &eopts)?;
    let ts: Vec<f64> = tr.times.iter().map(|t| t - t_off).collect();
    let amp: Vec<f64> = tr.observable("a").expect("observed").iter().map(|z| z.norm()).collect();
    let num = tr.real("n").expect("observed");
    let amp: Vec<f64> = amp.iter().map(|v| v / amp[0]).collect();
    let num: Vec<f64> = num.iter().map(|v| v / num[0]).collect();
    let amplitude_fit = analysis::fit_exponential(&ts, &amp)?;
    let energy_fit = analysis::fit_exponential(&ts, &num)?;
    let meta = RecordMeta { params: *p, options: None, calibration: None, sequence: Some(seq) };
    let rec = |obs: &str, ys: &[f64]| {
        let data = ts.iter().zip(ys).map(|(&x, &y)| DataPoint { x, y, uncertainty: 0.0 }).collect();
        ExperimentRecord::new(ExperimentKind::Ringdown, "t_us", obs, data, meta.clone())
    };
    Ok(Ringdown {
        mode,
        amplitude: rec("amplitude_ratio", &amp)?,
        energy: rec("energy_ratio", &num)?,
        amplitude_decay_time: amplitude_fit.value("T").expect("fit parameter"),
        energy_decay_time: energy_fit.value("T").expect("fit parameter"),
        amplitude_fit,
        energy_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("teleport".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn record_requires_increasing_sweep() {
        let meta = RecordMeta::params_only(&DeviceParams::default());
        let pt = |x| DataPoint { x, y: 0.0, uncertainty: 0.0 };
        assert!(ExperimentRecord::new(ExperimentKind::Fit, "x", "y", vec![], meta.clone()).is_err());
        assert!(ExperimentRecord::new(ExperimentKind::Fit, "x", "y", vec![pt(1.0), pt(1.0)], meta.clone()).is_err());
        let r = ExperimentRecord::new(ExperimentKind::Fit, "x", "y", vec![pt(0.1), pt(2.0)], meta).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("x,y,uncertainty\n1.0000000000000001e-1,"));
    }

    #[test]
    fn corrected_fidelity_identity() {
        let (f, t, t1) = (0.83, 0.37, 1.32);
        let c = corrected_z_fidelity(f, t, t1);
        assert!((c * (-t / t1).exp() - f).abs() < 1e-12);
        assert_eq!(corrected_z_fidelity(f, t, f64::INFINITY), f);
    }

    #[test]
    fn readout_model_serde() {
        let r = ReadoutModel::Dispersive { probe: 0.2 };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<ReadoutModel>(&s).unwrap(), r);
    }
}
