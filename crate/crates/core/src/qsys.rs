// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Hilbert space and operator algebra of the transmon ⊗ storage ⊗ readout
//! system.
//!
//! The tensor order is fixed: slot 0 is the transmon, slot 1 the storage mode,
//! slot 2 the readout mode. A composite basis index is
//! `(q * n_storage + s) * n_readout + r`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat};
use crate::Real;

pub const DEFAULT_DIM_CAP: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsysError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("operator of dimension {op} cannot be embedded in slot {slot:?} of size {slot_dim}")]
    InvalidEmbedding { op: usize, slot: Slot, slot_dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operator is not Hermitian (max |A - A†| = {0:e})")]
    NotHermitian(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Subsystem of the composite space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Transmon,
    Storage,
    Readout,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Transmon, Slot::Storage, Slot::Readout];

    pub fn index(self) -> usize {
        match self {
            Slot::Transmon => 0,
            Slot::Storage => 1,
            Slot::Readout => 2,
        }
    }
}

/// Truncation of the three ladders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemDims {
    pub n_transmon_levels: usize,
    pub n_storage_photons: usize,
    pub n_readout_photons: usize,
}

impl Default for SubsystemDims {
    fn default() -> Self {
        Self { n_transmon_levels: 3, n_storage_photons: 5, n_readout_photons: 2 }
    }
}

impl SubsystemDims {
    /// Checked constructor using the default dimension cap.
    pub fn new(transmon: usize, storage: usize, readout: usize) -> Result<Self, QsysError> {
        Self::with_cap(transmon, storage, readout, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(
        transmon: usize,
        storage: usize,
        readout: usize,
        cap: usize,
    ) -> Result<Self, QsysError> {
        let dims = Self {
            n_transmon_levels: transmon,
            n_storage_photons: storage,
            n_readout_photons: readout,
        };
        dims.validate(cap)?;
        Ok(dims)
    }

    pub fn validate(&self, cap: usize) -> Result<(), QsysError> {
        if self.n_transmon_levels < 2 {
            return Err(QsysError::InvalidDimension(format!(
                "transmon needs at least 2 levels, got {}",
                self.n_transmon_levels
            )));
        }
        if self.n_storage_photons < 2 {
            return Err(QsysError::InvalidDimension(format!(
                "storage truncation must be at least 2, got {}",
                self.n_storage_photons
            )));
        }
        if self.n_readout_photons < 1 {
            return Err(QsysError::InvalidDimension(
                "readout truncation must be at least 1".into(),
            ));
        }
        let total = self.total();
        if total < 4 || total > cap {
            return Err(QsysError::InvalidDimension(format!(
                "total dimension {total} outside [4, {cap}]"
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_transmon_levels * self.n_storage_photons * self.n_readout_photons
    }

    pub fn slot_dim(&self, slot: Slot) -> usize {
        match slot {
            Slot::Transmon => self.n_transmon_levels,
            Slot::Storage => self.n_storage_photons,
            Slot::Readout => self.n_readout_photons,
        }
    }

    pub fn index(&self, q: usize, s: usize, r: usize) -> usize {
        debug_assert!(q < self.n_transmon_levels && s < self.n_storage_photons);
        debug_assert!(r < self.n_readout_photons);
        (q * self.n_storage_photons + s) * self.n_readout_photons + r
    }

    /// Inverse of [`SubsystemDims::index`].
    pub fn levels(&self, i: usize) -> [usize; 3] {
        let r = i % self.n_readout_photons;
        let rest = i / self.n_readout_photons;
        [rest / self.n_storage_photons, rest % self.n_storage_photons, r]
    }
}

/// Dense complex operator on a finite space.
#[derive(Clone, PartialEq)]
pub struct OperatorMatrix<T: Real> {
    m: CMat<T>,
}

impl<T: Real> fmt::Debug for OperatorMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OperatorMatrix({}x{}) {:?}", self.dim(), self.dim(), self.m)
    }
}

impl<T: Real> OperatorMatrix<T> {
    pub fn from_matrix(m: DMatrix<Complex<T>>) -> Result<Self, QsysError> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(QsysError::InvalidDimension(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    /// Construct and verify a claimed-Hermitian operator.
    pub fn hermitian(m: DMatrix<Complex<T>>) -> Result<Self, QsysError> {
        let op = Self::from_matrix(m)?;
        let defect = op.hermiticity_defect();
        if defect >= T::of(1e-12) {
            return Err(QsysError::NotHermitian(defect.to_f64_lossy()));
        }
        Ok(op)
    }

    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| Complex::new(x, T::zero())));
        Self { m: DMatrix::from_diagonal(&v) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.m[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn scale(&self, k: Complex<T>) -> Self {
        Self { m: self.m.map(|z| z * k) }
    }

    pub fn scale_real(&self, k: T) -> Self {
        Self { m: self.m.map(|z| z * k) }
    }

    pub fn hermiticity_defect(&self) -> T {
        linalg::hermiticity_defect(&self.m)
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermiticity_defect() < tol
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self { m: &self.m * &other.m - &other.m * &self.m }
    }

    pub fn max_abs(&self) -> T {
        linalg::max_abs(&self.m)
    }

    pub fn trace(&self) -> Complex<T> {
        self.m.trace()
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<T> {
        linalg::hermitian_eigenvalues(&self.m)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { m: linalg::kron(&self.m, &other.m) }
    }

    /// Non-zero entries as `(row, col, value)`.
    pub fn nonzeros(&self) -> Vec<(usize, usize, Complex<T>)> {
        let mut out = Vec::new();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.m[(i, j)];
                if z.re != T::zero() || z.im != T::zero() {
                    out.push((i, j, z));
                }
            }
        }
        out
    }
}

impl<'a, T: Real> Mul<&'a OperatorMatrix<T>> for &'a OperatorMatrix<T> {
    type Output = OperatorMatrix<T>;
    fn mul(self, rhs: &'a OperatorMatrix<T>) -> OperatorMatrix<T> {
        OperatorMatrix { m: &self.m * &rhs.m }
    }
}

impl<'a, T: Real> Add<&'a OperatorMatrix<T>> for &'a OperatorMatrix<T> {
    type Output = OperatorMatrix<T>;
    fn add(self, rhs: &'a OperatorMatrix<T>) -> OperatorMatrix<T> {
        OperatorMatrix { m: &self.m + &rhs.m }
    }
}

impl<'a, T: Real> Sub<&'a OperatorMatrix<T>> for &'a OperatorMatrix<T> {
    type Output = OperatorMatrix<T>;
    fn sub(self, rhs: &'a OperatorMatrix<T>) -> OperatorMatrix<T> {
        OperatorMatrix { m: &self.m - &rhs.m }
    }
}

/// Bosonic lowering operator truncated to `dim` levels.
pub fn annihilation<T: Real>(dim: usize) -> Result<OperatorMatrix<T>, QsysError> {
    if dim < 2 {
        return Err(QsysError::InvalidDimension(format!("ladder needs dim >= 2, got {dim}")));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = Complex::new(T::of(n as f64).sqrt(), T::zero());
    }
    Ok(OperatorMatrix { m })
}

pub fn creation<T: Real>(dim: usize) -> Result<OperatorMatrix<T>, QsysError> {
    annihilation(dim).map(|a| a.dagger())
}

/// `a†a` truncated to `dim` levels. Unlike the ladder operators this is also
/// defined for `dim == 1`.
pub fn number<T: Real>(dim: usize) -> OperatorMatrix<T> {
    let diag: Vec<T> = (0..dim).map(|n| T::of(n as f64)).collect();
    OperatorMatrix::from_real_diagonal(&diag)
}

/// Projector `|level⟩⟨level|` on a `dim`-level ladder.
pub fn projector<T: Real>(dim: usize, level: usize) -> OperatorMatrix<T> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(level, level)] = Complex::new(T::one(), T::zero());
    OperatorMatrix { m }
}

/// Duffing-ladder transmon: `E_n = n ω_q + n(n-1)/2 α`.
pub fn transmon_hamiltonian<T: Real>(
    levels: usize,
    omega_q: T,
    alpha: T,
) -> Result<OperatorMatrix<T>, QsysError> {
    if levels < 2 {
        return Err(QsysError::InvalidDimension(format!(
            "transmon needs at least 2 levels, got {levels}"
        )));
    }
    let diag: Vec<T> = (0..levels)
        .map(|n| {
            let nf = T::of(n as f64);
            nf * omega_q + nf * (nf - T::one()) * T::of(0.5) * alpha
        })
        .collect();
    Ok(OperatorMatrix::from_real_diagonal(&diag))
}

/// Kronecker embedding of a single-subsystem operator, identities elsewhere.
pub fn tensor_embed<T: Real>(
    op: &OperatorMatrix<T>,
    slot: Slot,
    dims: &SubsystemDims,
) -> Result<OperatorMatrix<T>, QsysError> {
    let slot_dim = dims.slot_dim(slot);
    if op.dim() != slot_dim {
        return Err(QsysError::InvalidEmbedding { op: op.dim(), slot, slot_dim });
    }
    let eye = |n: usize| OperatorMatrix::<T>::identity(n);
    let out = match slot {
        Slot::Transmon => op.kron(&eye(dims.n_storage_photons)).kron(&eye(dims.n_readout_photons)),
        Slot::Storage => eye(dims.n_transmon_levels).kron(op).kron(&eye(dims.n_readout_photons)),
        Slot::Readout => eye(dims.n_transmon_levels).kron(&eye(dims.n_storage_photons)).kron(op),
    };
    Ok(out)
}

/// Frequently used embedded operators for one truncation.
#[derive(Debug, Clone)]
pub struct Ladders<T: Real> {
    pub dims: SubsystemDims,
    /// Transmon lowering operator.
    pub b: OperatorMatrix<T>,
    /// Storage lowering operator.
    pub a_s: OperatorMatrix<T>,
    /// Readout lowering operator; `None` when the readout is truncated to vacuum.
    pub a_ro: Option<OperatorMatrix<T>>,
    pub n_q: OperatorMatrix<T>,
    pub n_s: OperatorMatrix<T>,
    pub n_ro: OperatorMatrix<T>,
}

impl<T: Real> Ladders<T> {
    pub fn new(dims: &SubsystemDims) -> Result<Self, QsysError> {
        let b = tensor_embed(&annihilation(dims.n_transmon_levels)?, Slot::Transmon, dims)?;
        let a_s = tensor_embed(&annihilation(dims.n_storage_photons)?, Slot::Storage, dims)?;
        let a_ro = if dims.n_readout_photons >= 2 {
            Some(tensor_embed(&annihilation(dims.n_readout_photons)?, Slot::Readout, dims)?)
        } else {
            None
        };
        let n_q = tensor_embed(&number(dims.n_transmon_levels), Slot::Transmon, dims)?;
        let n_s = tensor_embed(&number(dims.n_storage_photons), Slot::Storage, dims)?;
        let n_ro = tensor_embed(&number(dims.n_readout_photons), Slot::Readout, dims)?;
        Ok(Self { dims: *dims, b, a_s, a_ro, n_q, n_s, n_ro })
    }
}

/// Density matrix over the composite space.
#[derive(Clone, PartialEq)]
pub struct QuantumState<T: Real> {
    rho: CMat<T>,
    dims: SubsystemDims,
}

impl<T: Real> fmt::Debug for QuantumState<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumState").field("dims", &self.dims).field("rho", &self.rho).finish()
    }
}

/// Tolerances checked by [`QuantumState::check`].
#[derive(Debug, Clone, Copy)]
pub struct StateTolerance {
    pub trace: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateTolerance {
    fn default() -> Self {
        Self { trace: 1e-8, hermiticity: 1e-10, min_eigenvalue: -1e-9 }
    }
}

impl<T: Real> QuantumState<T> {
    /// Wrap a density matrix, verifying trace, Hermiticity and positivity.
    pub fn from_density(rho: CMat<T>, dims: SubsystemDims) -> Result<Self, QsysError> {
        let st = Self::from_density_unchecked(rho, dims)?;
        st.check(&StateTolerance::default())?;
        Ok(st)
    }

    /// Wrap without the physicality checks (shape is still verified).
    pub fn from_density_unchecked(rho: CMat<T>, dims: SubsystemDims) -> Result<Self, QsysError> {
        let d = dims.total();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(QsysError::DimensionMismatch { expected: d, got: rho.nrows() });
        }
        Ok(Self { rho, dims })
    }

    /// `|ψ⟩⟨ψ|` after normalising `ψ`.
    pub fn pure(psi: &DVector<Complex<T>>, dims: SubsystemDims) -> Result<Self, QsysError> {
        let d = dims.total();
        if psi.len() != d {
            return Err(QsysError::DimensionMismatch { expected: d, got: psi.len() });
        }
        let norm = psi.norm();
        if norm <= T::zero() {
            return Err(QsysError::InvalidState("zero state vector".into()));
        }
        let v = psi.map(|z| z / Complex::new(norm, T::zero()));
        let rho = &v * v.adjoint();
        Ok(Self { rho, dims })
    }

    /// Product basis state `|q⟩ ⊗ |s⟩ ⊗ |r⟩`.
    pub fn basis(dims: SubsystemDims, q: usize, s: usize, r: usize) -> Result<Self, QsysError> {
        if q >= dims.n_transmon_levels || s >= dims.n_storage_photons || r >= dims.n_readout_photons
        {
            return Err(QsysError::InvalidState(format!("level ({q},{s},{r}) outside truncation")));
        }
        let d = dims.total();
        let mut rho = DMatrix::zeros(d, d);
        let i = dims.index(q, s, r);
        rho[(i, i)] = Complex::new(T::one(), T::zero());
        Ok(Self { rho, dims })
    }

    /// Transmon density matrix (`levels`×`levels`) tensored with the mode vacua.
    pub fn transmon_with_vacuum(qubit: &CMat<T>, dims: SubsystemDims) -> Result<Self, QsysError> {
        let nq = dims.n_transmon_levels;
        if qubit.nrows() > nq || qubit.nrows() != qubit.ncols() {
            return Err(QsysError::DimensionMismatch { expected: nq, got: qubit.nrows() });
        }
        let d = dims.total();
        let mut rho = DMatrix::zeros(d, d);
        for i in 0..qubit.nrows() {
            for j in 0..qubit.ncols() {
                rho[(dims.index(i, 0, 0), dims.index(j, 0, 0))] = qubit[(i, j)];
            }
        }
        Self::from_density(rho, dims)
    }

    pub fn dims(&self) -> &SubsystemDims {
        &self.dims
    }

    pub fn rho(&self) -> &CMat<T> {
        &self.rho
    }

    pub fn into_rho(self) -> CMat<T> {
        self.rho
    }

    pub fn trace(&self) -> Complex<T> {
        self.rho.trace()
    }

    pub fn purity(&self) -> T {
        (&self.rho * &self.rho).trace().re
    }

    pub fn min_eigenvalue(&self) -> T {
        linalg::hermitian_eigenvalues(&self.rho).first().copied().unwrap_or_else(T::zero)
    }

    pub fn hermiticity_defect(&self) -> T {
        linalg::hermiticity_defect(&self.rho)
    }

    pub fn check(&self, tol: &StateTolerance) -> Result<(), QsysError> {
        let tr = self.trace();
        let dev = (tr - Complex::new(T::one(), T::zero())).modulus().to_f64_lossy();
        if dev > tol.trace {
            return Err(QsysError::InvalidState(format!("trace deviates from 1 by {dev:e}")));
        }
        let herm = self.hermiticity_defect().to_f64_lossy();
        if herm > tol.hermiticity {
            return Err(QsysError::InvalidState(format!("not Hermitian ({herm:e})")));
        }
        let min = self.min_eigenvalue().to_f64_lossy();
        if min < tol.min_eigenvalue {
            return Err(QsysError::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn expectation(&self, op: &OperatorMatrix<T>) -> Result<Complex<T>, QsysError> {
        expectation(self, op)
    }

    /// Population of a product basis state.
    pub fn population(&self, q: usize, s: usize, r: usize) -> T {
        let i = self.dims.index(q, s, r);
        self.rho[(i, i)].re
    }

    /// Probability to find `slot` in `level`, all other subsystems traced out.
    pub fn level_population(&self, slot: Slot, level: usize) -> T {
        let mut p = T::zero();
        for i in 0..self.dims.total() {
            if self.dims.levels(i)[slot.index()] == level {
                p += self.rho[(i, i)].re;
            }
        }
        p
    }

    /// Reduced density matrix of one subsystem.
    pub fn reduced(&self, slot: Slot) -> CMat<T> {
        let n = self.dims.slot_dim(slot);
        let k = slot.index();
        let mut out = DMatrix::zeros(n, n);
        let d = self.dims.total();
        for i in 0..d {
            let li = self.dims.levels(i);
            for j in 0..d {
                let lj = self.dims.levels(j);
                let same_rest = (0..3).filter(|&m| m != k).all(|m| li[m] == lj[m]);
                if same_rest {
                    out[(li[k], lj[k])] += self.rho[(i, j)];
                }
            }
        }
        out
    }
}

/// `trace(ρ · op)`.
pub fn expectation<T: Real>(
    state: &QuantumState<T>,
    op: &OperatorMatrix<T>,
) -> Result<Complex<T>, QsysError> {
    let d = state.rho.nrows();
    if op.dim() != d {
        return Err(QsysError::DimensionMismatch { expected: d, got: op.dim() });
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..d {
        for k in 0..d {
            acc += state.rho[(i, k)] * op.m[(k, i)];
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use proptest::prelude::*;

    type Op = OperatorMatrix<f64>;

    #[test]
    fn annihilation_lowest_ladders() {
        let a2: Op = annihilation(2).unwrap();
        assert_eq!(a2.get(0, 1), c(1.0, 0.0));
        assert_eq!(a2.get(1, 0), c(0.0, 0.0));
        assert_eq!(a2.get(0, 0), c(0.0, 0.0));

        let a3: Op = annihilation(3).unwrap();
        assert!((a3.get(1, 2).re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a3.get(0, 1), c(1.0, 0.0));
        assert_eq!(a3.nonzeros().len(), 2);
    }

    #[test]
    fn number_operator_from_ladders() {
        let a: Op = annihilation(4).unwrap();
        let n = &a.dagger() * &a;
        for k in 0..4 {
            assert!((n.get(k, k).re - k as f64).abs() < 1e-14);
        }
        assert!((n.max_abs() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn annihilation_rejects_dim_one() {
        assert!(matches!(annihilation::<f64>(1), Err(QsysError::InvalidDimension(_))));
    }

    #[test]
    fn canonical_commutator_on_untruncated_block() {
        for dim in 2..9 {
            let a: Op = annihilation(dim).unwrap();
            let comm = a.commutator(&a.dagger());
            for i in 0..dim - 1 {
                for j in 0..dim - 1 {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((comm.get(i, j) - c(expected, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transmon_ladder_energies() {
        let h: Op = transmon_hamiltonian(2, 1.3, -0.2).unwrap();
        assert_eq!(h.get(1, 1).re, 1.3);
        assert_eq!(h.get(0, 0).re, 0.0);

        let wq = crate::units::ghz(6.234);
        let alpha = crate::units::mhz(-185.0);
        let h: Op = transmon_hamiltonian(3, wq, alpha).unwrap();
        let e2 = crate::units::to_ghz(h.get(2, 2).re);
        assert!((e2 - 12.283).abs() < 1e-9, "E2/2π = {e2}");

        let h: Op = transmon_hamiltonian(3, 2.0, 0.0).unwrap();
        assert_eq!(h.get(2, 2).re, 4.0);
    }

    #[test]
    fn embed_identity_gives_identity() {
        let dims = SubsystemDims::new(3, 4, 2).unwrap();
        for slot in Slot::ALL {
            let id = Op::identity(dims.slot_dim(slot));
            let e = tensor_embed(&id, slot, &dims).unwrap();
            assert!((&e - &Op::identity(24)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn embed_storage_lowering_small() {
        let dims = SubsystemDims::new(2, 2, 1).unwrap();
        let a: Op = annihilation(2).unwrap();
        let e = tensor_embed(&a, Slot::Storage, &dims).unwrap();
        // |q,s⟩ index = 2q + s ; a maps |q,1⟩ -> |q,0⟩
        let nz = e.nonzeros();
        assert_eq!(nz.len(), 2);
        assert!(nz.contains(&(0, 1, c(1.0, 0.0))));
        assert!(nz.contains(&(2, 3, c(1.0, 0.0))));
    }

    #[test]
    fn embed_rejects_wrong_size() {
        let dims = SubsystemDims::default();
        let a: Op = annihilation(4).unwrap();
        assert!(matches!(
            tensor_embed(&a, Slot::Transmon, &dims),
            Err(QsysError::InvalidEmbedding { .. })
        ));
    }

    #[test]
    fn operators_on_different_slots_commute() {
        let dims = SubsystemDims::default();
        let l = Ladders::<f64>::new(&dims).unwrap();
        let comm = l.b.commutator(&l.a_s.dagger());
        assert!(comm.max_abs() < 1e-12);
        let comm = (&l.b + &l.b.dagger()).commutator(&l.a_ro.clone().unwrap());
        assert!(comm.max_abs() < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let dims = SubsystemDims::default();
        let l = Ladders::<f64>::new(&dims).unwrap();
        let g = QuantumState::<f64>::basis(dims, 0, 0, 0).unwrap();
        assert_eq!(expectation(&g, &l.n_q).unwrap(), c(0.0, 0.0));

        let e = QuantumState::<f64>::basis(dims, 1, 0, 0).unwrap();
        let proj_e = tensor_embed(&projector(3, 1), Slot::Transmon, &dims).unwrap();
        assert!((expectation(&e, &proj_e).unwrap() - c(1.0, 0.0)).norm() < 1e-15);

        let dims2 = SubsystemDims::new(2, 2, 1).unwrap();
        let mut mixed = DMatrix::zeros(2, 2);
        mixed[(0, 0)] = c(0.5, 0.0);
        mixed[(1, 1)] = c(0.5, 0.0);
        let st = QuantumState::transmon_with_vacuum(&mixed, dims2).unwrap();
        let proj_e = tensor_embed(&projector(2, 1), Slot::Transmon, &dims2).unwrap();
        let v: num_complex::Complex<f64> = expectation(&st, &proj_e).unwrap();
        assert!((v.re - 0.5).abs() < 1e-15 && v.im.abs() < 1e-9);
    }

    #[test]
    fn expectation_dimension_mismatch() {
        let dims = SubsystemDims::default();
        let st = QuantumState::<f64>::basis(dims, 0, 0, 0).unwrap();
        let op = Op::identity(4);
        assert!(matches!(expectation(&st, &op), Err(QsysError::DimensionMismatch { .. })));
    }

    #[test]
    fn dims_validation() {
        assert!(SubsystemDims::new(1, 5, 2).is_err());
        assert!(SubsystemDims::new(3, 1, 2).is_err());
        assert!(SubsystemDims::new(3, 5, 0).is_err());
        assert!(SubsystemDims::new(8, 10, 8).is_err());
        assert!(SubsystemDims::with_cap(8, 10, 8, 1000).is_ok());
        assert_eq!(SubsystemDims::default().total(), 30);
    }

    #[test]
    fn index_round_trip() {
        let dims = SubsystemDims::new(3, 5, 2).unwrap();
        for i in 0..dims.total() {
            let [q, s, r] = dims.levels(i);
            assert_eq!(dims.index(q, s, r), i);
        }
    }

    #[test]
    fn hermitian_claim_is_verified() {
        let a: Op = annihilation(3).unwrap();
        assert!(matches!(
            Op::hermitian(a.matrix().clone()),
            Err(QsysError::NotHermitian(_))
        ));
        let x = &a + &a.dagger();
        assert!(Op::hermitian(x.matrix().clone()).is_ok());
    }

    #[test]
    fn reduced_state_of_product() {
        let dims = SubsystemDims::new(3, 3, 2).unwrap();
        let st = QuantumState::<f64>::basis(dims, 1, 2, 0).unwrap();
        let q = st.reduced(Slot::Transmon);
        assert_eq!(q[(1, 1)], c(1.0, 0.0));
        let s = st.reduced(Slot::Storage);
        assert_eq!(s[(2, 2)], c(1.0, 0.0));
        assert!((st.level_population(Slot::Storage, 2) - 1.0).abs() < 1e-15);
        assert!(st.check(&StateTolerance::default()).is_ok());
        assert!((st.purity() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_states_are_rejected() {
        let dims = SubsystemDims::new(2, 2, 1).unwrap();
        let mut rho = DMatrix::zeros(4, 4);
        rho[(0, 0)] = c(1.2, 0.0);
        rho[(1, 1)] = c(-0.2, 0.0);
        assert!(QuantumState::<f64>::from_density(rho, dims).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let a: OperatorMatrix<f32> = annihilation(3).unwrap();
        let n = &a.dagger() * &a;
        assert!((n.get(2, 2).re - 2.0).abs() < 1e-6);
    }

    fn arb_hermitian(n: usize) -> impl Strategy<Value = Op> {
        proptest::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = c(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]);
                }
            }
            let h = &m + m.adjoint();
            Op::from_matrix(h).unwrap()
        })
    }

    proptest! {
        #[test]
        fn embedding_preserves_hermiticity_and_spectrum(op in arb_hermitian(3), slot_pick in 0usize..2) {
            let dims = SubsystemDims::new(3, 3, 2).unwrap();
            let slot = [Slot::Transmon, Slot::Storage][slot_pick];
            let e = tensor_embed(&op, slot, &dims).unwrap();
            prop_assert!(e.is_hermitian(1e-12));
            let small = op.hermitian_eigenvalues();
            let mult = dims.total() / 3;
            let mut expected: Vec<f64> = small.iter().flat_map(|&x| std::iter::repeat(x).take(mult)).collect();
            expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let big = e.hermitian_eigenvalues();
            for (x, y) in big.iter().zip(expected.iter()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }
}
