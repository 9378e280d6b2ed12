// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Small dense complex linear-algebra helpers shared by the modules.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex;

use crate::Real;

pub(crate) type CMat<T> = DMatrix<Complex<T>>;

#[cfg(test)]
pub(crate) fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

pub(crate) fn kron<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    a.kronecker(b)
}

/// Largest element-wise modulus.
pub(crate) fn max_abs<T: Real>(a: &CMat<T>) -> T {
    a.iter().fold(T::zero(), |m, z| m.max(z.modulus()))
}

pub(crate) fn hermiticity_defect<T: Real>(a: &CMat<T>) -> T {
    let mut worst = T::zero();
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            let d = (a[(i, j)] - a[(j, i)].conj()).modulus();
            worst = worst.max(d);
        }
    }
    worst
}

/// Eigenvalues (ascending) of a Hermitian matrix. Only the lower triangle is
/// trusted, so the input is symmetrised first.
pub(crate) fn hermitian_eigenvalues<T: Real>(a: &CMat<T>) -> Vec<T> {
    let sym = hermitian_part(a);
    let eig = sym.symmetric_eigenvalues();
    let mut v: Vec<T> = eig.iter().copied().collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    v
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending with
/// matching eigenvector columns.
pub(crate) fn hermitian_eigh<T: Real>(a: &CMat<T>) -> (Vec<T>, CMat<T>) {
    let sym = hermitian_part(a);
    let eig = sym.symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::<T>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub(crate) fn hermitian_part<T: Real>(a: &CMat<T>) -> CMat<T> {
    let half = T::of(0.5);
    (a + a.adjoint()).map(|z| z * half)
}

fn norm1<T: Real>(a: &CMat<T>) -> T {
    let mut best = T::zero();
    for j in 0..a.ncols() {
        let s = a.column(j).iter().fold(T::zero(), |acc, z| acc + z.modulus());
        best = best.max(s);
    }
    best
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub(crate) fn expm<T: Real>(a: &CMat<T>) -> CMat<T> {
    let n = a.nrows();
    let nrm = norm1(a);
    let mut squarings = 0u32;
    if nrm > T::of(0.5) {
        let ratio = (nrm / T::of(0.5)).to_f64_lossy();
        squarings = ratio.log2().ceil().max(0.0) as u32;
    }
    let scale = T::of(2f64.powi(-(squarings as i32)));
    let scaled = a.map(|z| z * scale);
    let mut sum = CMat::<T>::identity(n, n);
    let mut term = CMat::<T>::identity(n, n);
    let tol = T::eps();
    for k in 1..=40 {
        term = &term * &scaled;
        let inv = T::one() / T::of(k as f64);
        term.apply(|z| *z *= inv);
        sum += &term;
        if norm1(&term) <= tol * norm1(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_rotation_generator() {
        // exp(-i θ σx) = cos θ I - i sin θ σx
        let theta = 3.7_f64;
        let a = CMat::<f64>::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.0, -theta), c(0.0, -theta), c(0.0, 0.0)],
        );
        let u = expm(&a);
        assert!((u[(0, 0)] - c(theta.cos(), 0.0)).norm() < 1e-13);
        assert!((u[(0, 1)] - c(0.0, -theta.sin())).norm() < 1e-13);
    }

    #[test]
    fn expm_of_large_diagonal_phase() {
        let w = 5.0e4_f64;
        let a = CMat::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.0, -w),
            c(-0.25, 0.0),
        ]));
        let u = expm(&a);
        assert!((u[(0, 0)] - Complex::new(0.0, -w).exp()).norm() < 1e-9);
        // squaring amplifies rounding by about 2^17
        assert!((u[(1, 1)].re - (-0.25f64).exp()).abs() < 1e-10, "{}", u[(1, 1)].re - (-0.25f64).exp());
    }

    #[test]
    fn eigh_orders_ascending() {
        let a = CMat::<f64>::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)],
        );
        let (vals, vecs) = hermitian_eigh(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        let v = vecs.column(1);
        let av = &a * v;
        for i in 0..2 {
            assert!((av[i] - v[i] * 3.0).norm() < 1e-12);
        }
    }
}
