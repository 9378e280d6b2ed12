// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Exact propagation over drive-free stretches.
//!
//! Without drives the generator is time independent in the frame where every
//! subsystem rotates at one common frequency. When all terms conserve the
//! total excitation number `N`, the Liouvillian does not mix density-matrix
//! elements `(n, m)` with different `N(n) - N(m)`, so it splits into blocks
//! that are exponentiated separately and cached per duration. Blocks whose
//! generator is below 1e-13 in norm are left untouched.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex;

use super::{cis, LindbladError, OpenSystem};
use crate::linalg::{expm, CMat};
use crate::Real;

/// Largest block that is still exponentiated densely.
const MAX_BLOCK: usize = 400;

#[derive(Debug)]
struct Block<T: Real> {
    /// Flat row-major positions `n·d + m` of the block's elements.
    positions: Vec<usize>,
    generator: CMat<T>,
    trivial: bool,
}

#[derive(Debug)]
pub struct IdlePropagator<T: Real> {
    d: usize,
    levels: Vec<[usize; 3]>,
    common: f64,
    blocks: Vec<Block<T>>,
    cache: Mutex<HashMap<i64, Arc<Vec<CMat<T>>>>>,
}

fn total(l: &[usize; 3]) -> i64 {
    (l[0] + l[1] + l[2]) as i64
}

impl<T: Real> IdlePropagator<T> {
    pub fn new(sys: &OpenSystem<T>) -> Result<Self, LindbladError> {
        let d = sys.dims().total();
        let levels = sys.levels().to_vec();
        let n_of: Vec<i64> = levels.iter().map(total).collect();
        for c in sys.couplings() {
            if c.charge.iter().sum::<i32>() != 0 {
                return Err(LindbladError::Invalid("coupling does not conserve excitations".into()));
            }
        }
        // jump operators must shift N by a fixed amount
        for j in sys.jumps() {
            let mut shift = None;
            for &(a, b, _) in &j.entries {
                let s = n_of[a] - n_of[b];
                if *shift.get_or_insert(s) != s {
                    return Err(LindbladError::Invalid("jump operator mixes excitation shifts".into()));
                }
            }
        }
        let common = sys.bare().w_s;
        // static Hamiltonian in the common frame
        let mut h: CMat<T> = CMat::zeros(d, d);
        for i in 0..d {
            let e = sys.bare().level_energy(levels[i]) - common * n_of[i] as f64;
            h[(i, i)] = Complex::new(T::of(e), T::zero());
        }
        for c in sys.couplings() {
            for &(i, j, v) in &c.raising.entries {
                h[(i, j)] += v;
                h[(j, i)] += v.conj();
            }
        }
        let mut k_mat: CMat<T> = CMat::zeros(d, d);
        let jumps: Vec<CMat<T>> = sys
            .jumps()
            .iter()
            .map(|j| {
                let mut m = CMat::zeros(d, d);
                for &(a, b, v) in &j.entries {
                    m[(a, b)] += v;
                }
                m
            })
            .collect();
        for j in &jumps {
            k_mat += j.adjoint() * j;
        }

        let n_max = n_of.iter().copied().max().unwrap_or(0);
        let mut blocks = Vec::new();
        for k in -n_max..=n_max {
            let mut positions = Vec::new();
            for n in 0..d {
                for m in 0..d {
                    if n_of[n] - n_of[m] == k {
                        positions.push(n * d + m);
                    }
                }
            }
            if positions.is_empty() {
                continue;
            }
            if positions.len() > MAX_BLOCK {
                return Err(LindbladError::Invalid(format!(
                    "idle block of size {} exceeds {MAX_BLOCK}",
                    positions.len()
                )));
            }
            let local: HashMap<usize, usize> = positions.iter().enumerate().map(|(i, &p)| (p, i)).collect();
            let b = positions.len();
            let mut g: CMat<T> = CMat::zeros(b, b);
            let mi = Complex::new(T::zero(), -T::one());
            let half = T::of(0.5);
            let mut add = |out: usize, inp: usize, v: Complex<T>| {
                if let Some(&o) = local.get(&out) {
                    g[(o, local[&inp])] += v;
                }
            };
            for &p in &positions {
                let (n, m) = (p / d, p % d);
                for np in 0..d {
                    let hv = h[(np, n)];
                    if hv != Complex::new(T::zero(), T::zero()) {
                        add(np * d + m, p, mi * hv);
                    }
                    let kv = k_mat[(np, n)];
                    if kv != Complex::new(T::zero(), T::zero()) {
                        add(np * d + m, p, -kv * half);
                    }
                }
                for mp in 0..d {
                    let hv = h[(m, mp)];
                    if hv != Complex::new(T::zero(), T::zero()) {
                        add(n * d + mp, p, -mi * hv);
                    }
                    let kv = k_mat[(m, mp)];
                    if kv != Complex::new(T::zero(), T::zero()) {
                        add(n * d + mp, p, -kv * half);
                    }
                }
                for j in &jumps {
                    for np in 0..d {
                        let a = j[(np, n)];
                        if a == Complex::new(T::zero(), T::zero()) {
                            continue;
                        }
                        for mp in 0..d {
                            let bv = j[(mp, m)];
                            if bv != Complex::new(T::zero(), T::zero()) {
                                add(np * d + mp, p, a * bv.conj());
                            }
                        }
                    }
                }
            }
            let norm = g.iter().fold(0.0f64, |acc, z| acc.max(z.re.to_f64_lossy().abs() + z.im.to_f64_lossy().abs()));
            blocks.push(Block { positions, generator: g, trivial: norm < 1e-13 });
        }
        Ok(Self { d, levels, common, blocks, cache: Mutex::new(HashMap::new()) })
    }

    /// Common frame frequency, rad/µs.
    pub fn common_frequency(&self) -> f64 {
        self.common
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.positions.len()).collect()
    }

    fn propagators(&self, tau: f64) -> Arc<Vec<CMat<T>>> {
        let key = (tau * 1e12).round() as i64;
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return p.clone();
        }
        let tt = T::of(tau);
        let ps: Vec<CMat<T>> = self
            .blocks
            .iter()
            .map(|b| if b.trivial { CMat::identity(1, 1) } else { expm(&b.generator.map(|z| z * tt)) })
            .collect();
        let ps = Arc::new(ps);
        self.cache.lock().expect("cache lock").insert(key, ps.clone());
        ps
    }

    /// Per-element phase `(common - f)·(L(n) - L(m))` rate for frame `f`.
    fn frame_rates(&self, frame: [f64; 3]) -> Vec<f64> {
        self.levels
            .iter()
            .map(|l| (0..3).map(|k| (self.common - frame[k]) * l[k] as f64).sum())
            .collect()
    }

    /// Propagate a row-major density matrix given in the working frame
    /// `frame` from `t0` to `t0 + tau`.
    pub(crate) fn apply_flat(
        &self,
        x: &mut [Complex<T>],
        t0: f64,
        tau: f64,
        frame: [f64; 3],
    ) -> Result<(), LindbladError> {
        let d = self.d;
        if x.len() != d * d {
            return Err(LindbladError::Invalid("state size differs from propagator".into()));
        }
        if tau <= 0.0 {
            return Ok(());
        }
        let w = self.frame_rates(frame);
        let rotate = |x: &mut [Complex<T>], t: f64| {
            let ph: Vec<Complex<T>> = w.iter().map(|&wn| cis::<T>(wn * t)).collect();
            for n in 0..d {
                for m in 0..d {
                    x[n * d + m] *= ph[n] * ph[m].conj();
                }
            }
        };
        rotate(x, t0);
        let ps = self.propagators(tau);
        for (b, p) in self.blocks.iter().zip(ps.iter()) {
            if b.trivial {
                continue;
            }
            let v: Vec<Complex<T>> = b.positions.iter().map(|&q| x[q]).collect();
            for (r, &q) in b.positions.iter().enumerate() {
                let mut acc = Complex::new(T::zero(), T::zero());
                for (c, vc) in v.iter().enumerate() {
                    acc += p[(r, c)] * *vc;
                }
                x[q] = acc;
            }
        }
        rotate(x, -(t0 + tau));
        Ok(())
    }

    /// Propagate a state given in frame `frame`.
    pub fn propagate(
        &self,
        rho: &crate::qsys::QuantumState<T>,
        t0: f64,
        tau: f64,
        frame: [f64; 3],
    ) -> Result<crate::qsys::QuantumState<T>, LindbladError> {
        let d = self.d;
        let mut x: Vec<Complex<T>> = (0..d * d).map(|q| rho.rho()[(q / d, q % d)]).collect();
        self.apply_flat(&mut x, t0, tau, frame)?;
        let m = CMat::from_fn(d, d, |i, j| x[i * d + j]);
        Ok(crate::qsys::QuantumState::from_density_unchecked(m, *rho.dims())?)
    }
}
