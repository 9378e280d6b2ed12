// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Single-qubit state and process tomography.
//!
//! Qubit basis order is `(|g⟩, |e⟩)` and `Z = diag(1, -1)`, so `⟨Z⟩ = +1` for
//! `|g⟩`. The process matrix uses the Pauli basis `{I, X, Y, Z}`:
//! `ε(ρ) = Σ χ_mn P_m ρ P_n`, with `tr χ = 1` for a trace-preserving map.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hermitian_eigh, hermitian_part};
use crate::Real;

/// 2×2 (qubit) or 4×4 (process) complex matrix.
pub type QubitMatrix<T> = DMatrix<Complex<T>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error("reconstruction failed: {0}")]
    Reconstruction(String),
    #[error("channel evaluation failed: {0}")]
    Channel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix<T: Real>(self) -> QubitMatrix<T> {
        let z = Complex::new(T::zero(), T::zero());
        let o = Complex::new(T::one(), T::zero());
        let i = Complex::new(T::zero(), T::one());
        match self {
            Pauli::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
            Pauli::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
            Pauli::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
            Pauli::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        }
    }
}

/// Standard input states `|g⟩, |e⟩, |+⟩, |+i⟩`.
pub fn standard_inputs<T: Real>() -> [QubitMatrix<T>; 4] {
    [
        bloch_state(T::zero(), T::zero(), T::one()),
        bloch_state(T::zero(), T::zero(), -T::one()),
        bloch_state(T::one(), T::zero(), T::zero()),
        bloch_state(T::zero(), T::one(), T::zero()),
    ]
}

/// `(I + xX + yY + zZ) / 2` without projection.
pub fn bloch_state<T: Real>(x: T, y: T, z: T) -> QubitMatrix<T> {
    let half = T::of(0.5);
    let mut m = Pauli::I.matrix::<T>();
    m += Pauli::X.matrix::<T>() * Complex::new(x, T::zero());
    m += Pauli::Y.matrix::<T>() * Complex::new(y, T::zero());
    m += Pauli::Z.matrix::<T>() * Complex::new(z, T::zero());
    m * Complex::new(half, T::zero())
}

/// `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)` of a 2×2 density matrix.
pub fn bloch_vector<T: Real>(rho: &QubitMatrix<T>) -> [T; 3] {
    let e = |p: Pauli| (rho * p.matrix::<T>()).trace().re;
    [e(Pauli::X), e(Pauli::Y), e(Pauli::Z)]
}

/// Reconstruct a qubit state from Pauli expectations, scaling the Bloch
/// vector back onto the sphere when it is longer than 1.
pub fn state_tomography<T: Real, F: Fn(Pauli) -> T>(measure: F) -> QubitMatrix<T> {
    let (mut x, mut y, mut z) = (measure(Pauli::X), measure(Pauli::Y), measure(Pauli::Z));
    let r = (x * x + y * y + z * z).sqrt();
    if r > T::one() {
        x /= r;
        y /= r;
        z /= r;
    }
    bloch_state(x, y, z)
}

/// Pauli expectations estimated from `shots` projective measurements each.
pub fn sampled_expectations<R: Rng>(rho: &QubitMatrix<f64>, shots: u64, rng: &mut R) -> [f64; 3] {
    let b = bloch_vector(rho);
    let mut out = [0.0; 3];
    for (k, v) in b.iter().enumerate() {
        let p = ((1.0 + v) / 2.0).clamp(0.0, 1.0);
        let plus = Binomial::new(shots, p).expect("p in [0, 1]").sample(rng);
        out[k] = 2.0 * plus as f64 / shots as f64 - 1.0;
    }
    out
}

/// Trace distance `½ ‖a - b‖₁` of two Hermitian matrices.
pub fn trace_distance<T: Real>(a: &QubitMatrix<T>, b: &QubitMatrix<T>) -> T {
    let (vals, _) = hermitian_eigh(&(a - b));
    vals.iter().fold(T::zero(), |s, v| s + v.abs()) * T::of(0.5)
}

/// Process matrix in the Pauli basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix<T: Real> {
    entries: QubitMatrix<T>,
}

#[derive(Serialize, Deserialize)]
struct ChiDoc {
    basis: Vec<String>,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

/// `v_m = Σ_i |i⟩ ⊗ P_m|i⟩`, the columns relating Choi matrix and χ.
fn pauli_vectors<T: Real>() -> QubitMatrix<T> {
    let mut v = DMatrix::zeros(4, 4);
    for (m, p) in Pauli::ALL.iter().enumerate() {
        let pm = p.matrix::<T>();
        for i in 0..2 {
            for k in 0..2 {
                v[(2 * i + k, m)] = pm[(k, i)];
            }
        }
    }
    v
}

impl<T: Real> ChiMatrix<T> {
    /// Wrap a 4×4 matrix, checking Hermiticity.
    pub fn from_matrix(entries: QubitMatrix<T>) -> Result<Self, TomographyError> {
        if entries.shape() != (4, 4) {
            return Err(TomographyError::Reconstruction(format!("chi must be 4x4, got {:?}", entries.shape())));
        }
        let defect = (&entries - entries.adjoint()).iter().fold(T::zero(), |m, z| m.max(z.modulus()));
        if defect > T::of(1e-10) {
            return Err(TomographyError::Reconstruction(format!("chi not Hermitian (defect {defect})")));
        }
        Ok(Self { entries })
    }

    pub fn identity() -> Self {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = Complex::new(T::one(), T::zero());
        Self { entries: m }
    }

    /// From the Choi matrix `Σ |i⟩⟨j| ⊗ ε(|i⟩⟨j|)`.
    pub fn from_choi(choi: &QubitMatrix<T>) -> Self {
        let v = pauli_vectors::<T>();
        let chi = v.adjoint() * choi * &v * Complex::new(T::of(0.25), T::zero());
        Self { entries: hermitian_part(&chi) }
    }

    pub fn choi(&self) -> QubitMatrix<T> {
        let v = pauli_vectors::<T>();
        &v * &self.entries * v.adjoint()
    }

    /// From Kraus operators.
    pub fn from_kraus(kraus: &[QubitMatrix<T>]) -> Self {
        let mut choi = DMatrix::zeros(4, 4);
        for k in kraus {
            let mut v = DMatrix::zeros(4, 1);
            for i in 0..2 {
                for r in 0..2 {
                    v[(2 * i + r, 0)] = k[(r, i)];
                }
            }
            choi += &v * v.adjoint();
        }
        Self::from_choi(&choi)
    }

    pub fn entries(&self) -> &QubitMatrix<T> {
        &self.entries
    }

    pub fn get(&self, m: Pauli, n: Pauli) -> Complex<T> {
        self.entries[(m as usize, n as usize)]
    }

    pub fn trace(&self) -> T {
        self.entries.trace().re
    }

    /// Eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<T> {
        hermitian_eigh(&self.entries).0
    }

    pub fn is_physical(&self) -> bool {
        let min = self.eigenvalues()[0];
        min >= T::of(-1e-9) && (self.trace() - T::one()).abs() <= T::of(1e-8)
    }

    /// Clip negative eigenvalues and renormalise the trace to 1.
    pub fn project_physical(&self) -> Self {
        let (vals, vecs) = hermitian_eigh(&self.entries);
        let clipped: Vec<T> = vals.iter().map(|v| v.max(T::zero())).collect();
        let total = clipped.iter().fold(T::zero(), |s, v| s + *v);
        let mut m = DMatrix::zeros(4, 4);
        if total > T::zero() {
            for (k, v) in clipped.iter().enumerate() {
                let col = vecs.column(k);
                m += &col * col.adjoint() * Complex::new(*v / total, T::zero());
            }
        }
        Self { entries: hermitian_part(&m) }
    }

    /// Apply the channel to a qubit density matrix.
    pub fn apply(&self, rho: &QubitMatrix<T>) -> QubitMatrix<T> {
        let ps: Vec<QubitMatrix<T>> = Pauli::ALL.iter().map(|p| p.matrix()).collect();
        let mut out = DMatrix::zeros(2, 2);
        for m in 0..4 {
            for n in 0..4 {
                out += &ps[m] * rho * &ps[n] * self.entries[(m, n)];
            }
        }
        out
    }

    /// `χ` of `R_z(θ) ∘ ε` with `R_z(θ) = diag(1, e^{iθ})`.
    pub fn rotated_z(&self, theta: f64) -> Self {
        let mut u = DMatrix::zeros(4, 4);
        for i in 0..2 {
            u[(2 * i, 2 * i)] = Complex::new(T::one(), T::zero());
            u[(2 * i + 1, 2 * i + 1)] = Complex::new(T::of(theta.cos()), T::of(theta.sin()));
        }
        Self::from_choi(&(&u * self.choi() * u.adjoint()))
    }

    pub fn to_json(&self) -> String {
        let doc = ChiDoc {
            basis: ["I", "X", "Y", "Z"].iter().map(|s| s.to_string()).collect(),
            re: (0..4).map(|i| (0..4).map(|j| self.entries[(i, j)].re.to_f64_lossy()).collect()).collect(),
            im: (0..4).map(|i| (0..4).map(|j| self.entries[(i, j)].im.to_f64_lossy()).collect()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self, TomographyError> {
        let doc: ChiDoc = serde_json::from_str(s).map_err(|e| TomographyError::Reconstruction(e.to_string()))?;
        if doc.re.len() != 4 || doc.im.len() != 4 || doc.re.iter().chain(&doc.im).any(|r| r.len() != 4) {
            return Err(TomographyError::Reconstruction("chi document must be 4x4".into()));
        }
        Self::from_matrix(DMatrix::from_fn(4, 4, |i, j| Complex::new(T::of(doc.re[i][j]), T::of(doc.im[i][j]))))
    }

    /// Rows `row,col,abs` of `|χ_ij|`.
    pub fn to_csv(&self) -> String {
        let names = ["I", "X", "Y", "Z"];
        let mut s = String::from("row,col,abs\n");
        for i in 0..4 {
            for j in 0..4 {
                let v = self.entries[(i, j)].modulus().to_f64_lossy();
                s.push_str(&format!("{},{},{:.17e}\n", names[i], names[j], v));
            }
        }
        s
    }
}

/// Linear-inversion process tomography from arbitrary input states and the
/// matching outputs, followed by the physicality projection.
pub fn reconstruct_chi<T: Real>(
    inputs: &[QubitMatrix<T>],
    outputs: &[QubitMatrix<T>],
) -> Result<ChiMatrix<T>, TomographyError> {
    if inputs.len() != outputs.len() || inputs.len() < 4 {
        return Err(TomographyError::Reconstruction(format!(
            "need >= 4 input/output pairs, got {} inputs and {} outputs",
            inputs.len(),
            outputs.len()
        )));
    }
    for m in inputs.iter().chain(outputs) {
        if m.shape() != (2, 2) || m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(TomographyError::Reconstruction("states must be finite 2x2 matrices".into()));
        }
    }
    // columns: inputs flattened row-major
    let k = inputs.len();
    let a = DMatrix::from_fn(4, k, |r, c| inputs[c][(r / 2, r % 2)]);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > T::of(1e-10) * smax) {
        return Err(TomographyError::Reconstruction("input states do not span the operator space".into()));
    }
    let mut choi = DMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let mut e = DMatrix::zeros(4, 1);
            e[(2 * i + j, 0)] = Complex::new(T::one(), T::zero());
            let coef = svd
                .solve(&e, T::of(1e-12))
                .map_err(|m| TomographyError::Reconstruction(m.to_string()))?;
            let mut img: QubitMatrix<T> = DMatrix::zeros(2, 2);
            for c in 0..k {
                img += &outputs[c] * coef[(c, 0)];
            }
            for r in 0..2 {
                for s in 0..2 {
                    choi[(2 * i + r, 2 * j + s)] = img[(r, s)];
                }
            }
        }
    }
    Ok(ChiMatrix::from_choi(&choi).project_physical())
}

/// Process tomography over [`standard_inputs`]. The four channel
/// evaluations run concurrently.
pub fn process_tomography<T, F, E>(channel: F) -> Result<ChiMatrix<T>, TomographyError>
where
    T: Real,
    F: Fn(&QubitMatrix<T>) -> Result<QubitMatrix<T>, E> + Sync,
    E: std::fmt::Display + Send,
{
    use rayon::prelude::*;
    let inputs = standard_inputs::<T>();
    let outputs: Vec<QubitMatrix<T>> = inputs
        .par_iter()
        .map(|rho| channel(rho).map_err(|e| TomographyError::Channel(e.to_string())))
        .collect::<Result<_, _>>()?;
    reconstruct_chi(&inputs, &outputs)
}

/// `Re tr(χ χ_ideal)`; for the identity this is `χ_II`.
pub fn process_fidelity<T: Real>(chi: &ChiMatrix<T>, ideal: &ChiMatrix<T>) -> T {
    (chi.entries() * ideal.entries()).trace().re
}

/// Fidelity after the best frame rotation `R_z(θ)`, θ scanned on a 1e-3 rad
/// grid over `[-π, π)` (θ = 0 included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameCorrectedFidelity {
    pub raw: f64,
    pub corrected: f64,
    pub theta: f64,
}

pub fn frame_corrected_fidelity<T: Real>(chi: &ChiMatrix<T>, ideal: &ChiMatrix<T>) -> FrameCorrectedFidelity {
    let raw = process_fidelity(chi, ideal).to_f64_lossy();
    let n = (2.0 * std::f64::consts::PI / 1e-3).ceil() as i64;
    let mut best = (raw, 0.0);
    for k in -(n / 2)..(n - n / 2) {
        let theta = k as f64 * 1e-3;
        let f = process_fidelity(&chi.rotated_z(theta), ideal).to_f64_lossy();
        if f > best.0 {
            best = (f, theta);
        }
    }
    FrameCorrectedFidelity { raw, corrected: best.0, theta: best.1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    type M = QubitMatrix<f64>;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn max_diff(a: &M, b: &M) -> f64 {
        (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    fn kraus_channel(ks: Vec<M>) -> impl Fn(&M) -> Result<M, String> + Sync {
        move |rho: &M| Ok(ks.iter().fold(M::zeros(2, 2), |acc, k| acc + k * rho * k.adjoint()))
    }

    fn amplitude_damping(p: f64) -> Vec<M> {
        vec![
            M::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c((1.0 - p).sqrt(), 0.0)]),
            M::from_row_slice(2, 2, &[c(0.0, 0.0), c(p.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
        ]
    }

    /// Independent oracle: `χ_mn = Σ_k a_km conj(a_kn)` with
    /// `K_k = Σ_m a_km P_m`, `a_km = tr(P_m K_k)/2`.
    fn chi_oracle(ks: &[M]) -> M {
        let mut chi = M::zeros(4, 4);
        for k in ks {
            let a: Vec<Complex<f64>> = Pauli::ALL.iter().map(|p| (p.matrix::<f64>() * k).trace() / 2.0).collect();
            for m in 0..4 {
                for n in 0..4 {
                    chi[(m, n)] += a[m] * a[n].conj();
                }
            }
        }
        chi
    }

    #[test]
    fn state_tomography_examples() {
        let g = state_tomography(|p| if p == Pauli::Z { 1.0 } else { 0.0 });
        assert!((g[(0, 0)].re - 1.0f64).abs() < 1e-15 && g[(1, 1)].norm() < 1e-15);
        let plus = state_tomography(|p| if p == Pauli::X { 1.0 } else { 0.0 });
        assert!(max_diff(&plus, &M::from_element(2, 2, c(0.5, 0.0))) < 1e-15);
        let noisy = state_tomography(|p| if p == Pauli::Z { 1.06 } else { 0.0 });
        assert!(trace_distance(&noisy, &bloch_state(0.0, 0.0, 1.0)) < 0.03);
        assert!((bloch_vector(&noisy)[2] - 1.0f64).abs() < 1e-12);
    }

    #[test]
    fn identity_channel() {
        let chi = process_tomography(|r: &M| Ok::<_, String>(r.clone())).unwrap();
        assert!(max_diff(chi.entries(), ChiMatrix::<f64>::identity().entries()) < 1e-12);
        assert!((process_fidelity(&chi, &ChiMatrix::identity()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn depolarizing_channel() {
        let chi = process_tomography(|_: &M| Ok::<_, String>(M::identity(2, 2) * c(0.5, 0.0))).unwrap();
        let expect = M::identity(4, 4) * c(0.25, 0.0);
        assert!(max_diff(chi.entries(), &expect) < 1e-12);
        assert!((process_fidelity(&chi, &ChiMatrix::identity()) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn amplitude_damping_matches_kraus_oracle() {
        for p in [0.0, 0.1, 0.37, 0.9] {
            let ks = amplitude_damping(p);
            let chi = process_tomography(kraus_channel(ks.clone())).unwrap();
            assert!(max_diff(chi.entries(), &chi_oracle(&ks)) < 1e-8, "p = {p}");
            assert!(chi.is_physical());
        }
    }

    #[test]
    fn composition_with_identity() {
        let ks = amplitude_damping(0.2);
        let ad = kraus_channel(ks.clone());
        let composed = process_tomography(|r: &M| ad(&r.clone())).unwrap();
        let direct = ChiMatrix::from_kraus(&ks);
        assert!(max_diff(composed.entries(), direct.entries()) < 1e-10);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let g = bloch_state(0.0, 0.0, 1.0);
        let inputs = vec![g.clone(), g.clone(), g.clone(), g.clone()];
        assert!(reconstruct_chi(&inputs, &inputs).is_err());
    }

    #[test]
    fn frame_rotation_recovered() {
        let theta: f64 = 0.8;
        let u = M::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), Complex::from_polar(1.0, theta)]);
        let chi = process_tomography(kraus_channel(vec![u])).unwrap();
        let f = frame_corrected_fidelity(&chi, &ChiMatrix::identity());
        assert!(f.raw < 0.9);
        assert!(f.corrected > 1.0 - 1e-6);
        assert!((f.theta + theta).abs() < 1e-3);
    }

    #[test]
    fn chi_json_round_trip() {
        let chi = ChiMatrix::from_kraus(&amplitude_damping(0.3));
        let back = ChiMatrix::<f64>::from_json(&chi.to_json()).unwrap();
        assert!(max_diff(chi.entries(), back.entries()) < 1e-15);
        assert_eq!(chi.to_csv().lines().count(), 17);
    }

    #[test]
    fn shot_sampling_is_seeded() {
        let rho = bloch_state(0.3, -0.2, 0.5);
        let a = sampled_expectations(&rho, 1000, &mut rand::rngs::StdRng::seed_from_u64(1));
        let b = sampled_expectations(&rho, 1000, &mut rand::rngs::StdRng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!((a[2] - 0.5).abs() < 0.1);
    }

    fn random_unitary(a: f64, b: f64, c_: f64) -> M {
        // R_z(a) R_y(b) R_z(c)
        let rz = |t: f64| M::from_row_slice(2, 2, &[Complex::from_polar(1.0, -t / 2.0), c(0.0, 0.0), c(0.0, 0.0), Complex::from_polar(1.0, t / 2.0)]);
        let ry = M::from_row_slice(2, 2, &[c((b / 2.0).cos(), 0.0), c(-(b / 2.0).sin(), 0.0), c((b / 2.0).sin(), 0.0), c((b / 2.0).cos(), 0.0)]);
        rz(a) * ry * rz(c_)
    }

    proptest! {
        #[test]
        fn unitary_channels_have_rank_one(a in -3.0f64..3.0, b in -3.0f64..3.0, cc in -3.0f64..3.0) {
            let u = random_unitary(a, b, cc);
            let chi = process_tomography(kraus_channel(vec![u])).unwrap();
            let ev = chi.eigenvalues();
            prop_assert!(ev[2].abs() < 1e-8);
            prop_assert!((ev[3] - 1.0).abs() < 1e-8);
            let f = process_fidelity(&chi, &chi);
            prop_assert!(f <= 1.0 + 1e-9 && f > 1.0 - 1e-8);
        }

        #[test]
        fn self_fidelity_bounded(p in 0.0f64..1.0, q in 0.0f64..1.0) {
            let mut ks = amplitude_damping(p);
            ks.iter_mut().for_each(|k| *k *= c((1.0 - q).sqrt(), 0.0));
            ks.push(Pauli::Z.matrix::<f64>() * c(q.sqrt(), 0.0));
            let chi = ChiMatrix::from_kraus(&ks);
            prop_assert!(chi.is_physical());
            prop_assert!(process_fidelity(&chi, &chi) <= 1.0 + 1e-12);
        }

        #[test]
        fn frame_correction_never_hurts(p in 0.0f64..1.0, t in -3.0f64..3.0) {
            let mut ks = amplitude_damping(p);
            let u = M::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), Complex::from_polar(1.0, t)]);
            ks.iter_mut().for_each(|k| *k = &u * &*k);
            let chi = ChiMatrix::from_kraus(&ks);
            let f = frame_corrected_fidelity(&chi, &ChiMatrix::identity());
            prop_assert!(f.corrected >= f.raw);
        }
    }
}
