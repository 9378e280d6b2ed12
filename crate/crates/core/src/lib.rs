// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Pulse-level simulator and analysis suite for a compact multimode 3D-cavity
//! quantum memory: a multi-level transmon coupled to a low-Q readout mode and a
//! high-Q storage mode of the same cavity, written to and read from with a
//! two-photon blue-sideband protocol.
//!
//! Units used everywhere inside the crate: angular frequencies in rad/µs and
//! times in µs. Linear frequencies (GHz/MHz/kHz) only appear in
//! [`device::DeviceParams`] and in the file formats, and are converted at that
//! boundary with the helpers in [`units`].
//!
//! The numerical core ([`qsys`], [`lindblad`], [`analysis`], [`tomography`]) is
//! generic over the real scalar type through [`Real`]; the aliases at the crate
//! root fix it to `f64`, which is what the experiment drivers use.

pub mod analysis;
pub mod device;
pub mod lindblad;
pub mod pulse;
pub mod protocol;
pub mod qsys;
pub mod tomography;
pub mod units;

mod linalg;
mod scalar;

pub use scalar::Real;

/// Complex scalar over `f64`.
pub type C64 = num_complex::Complex<f64>;

pub type Operator = qsys::OperatorMatrix<f64>;
pub type State = qsys::QuantumState<f64>;
pub type Model = lindblad::LindbladModel<f64>;
pub type Channel = lindblad::CollapseChannel<f64>;
pub type Trajectory = lindblad::Trajectory<f64>;
pub type Fit = analysis::FitResult<f64>;
pub type Chi = tomography::ChiMatrix<f64>;
