// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Fixed-step RK4 for the master equation and the Schrödinger equation.
//!
//! The right-hand side uses `X = -i H_eff ρ + ½ Σ c ρ c†` with
//! `H_eff = H - (i/2) Σ c†c`, so that `dρ/dt = X + X†`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use super::{cis, cx, DriveForm, LindbladError, LindbladModel, SparseOp};
use crate::qsys::{OperatorMatrix, QuantumState};
use crate::Real;

/// Integration knobs for [`LindbladModel::evolve`].
#[derive(Debug, Clone)]
pub struct EvolveOptions<T: Real> {
    /// Step, µs. Defaults to the model step.
    pub dt: Option<f64>,
    /// Sampling interval, µs. `None` samples only the end points.
    pub sample_every: Option<f64>,
    pub observables: Vec<(String, OperatorMatrix<T>)>,
    /// Keep full density matrices at each sample.
    pub keep_states: bool,
    /// Propagate drive-free stretches exactly.
    pub use_idle: bool,
}

impl<T: Real> Default for EvolveOptions<T> {
    fn default() -> Self {
        Self { dt: None, sample_every: None, observables: Vec::new(), keep_states: false, use_idle: true }
    }
}

impl<T: Real> EvolveOptions<T> {
    pub fn sampled(every: f64) -> Self {
        Self { sample_every: Some(every), ..Self::default() }
    }

    pub fn observe(mut self, name: &str, op: OperatorMatrix<T>) -> Self {
        self.observables.push((name.to_string(), op));
        self
    }

    pub fn keep_states(mut self) -> Self {
        self.keep_states = true;
        self
    }

    pub fn rk4_only(mut self) -> Self {
        self.use_idle = false;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<f64>,
    pub observables: Vec<(String, Vec<Complex<T>>)>,
    pub states: Vec<QuantumState<T>>,
    pub final_state: QuantumState<T>,
    /// Largest `|tr ρ - 1|` seen at the samples.
    pub max_trace_drift: f64,
}

impl<T: Real> Trajectory<T> {
    pub fn observable(&self, name: &str) -> Option<&[Complex<T>]> {
        self.observables.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Real parts of one observable.
    pub fn real(&self, name: &str) -> Option<Vec<f64>> {
        self.observable(name).map(|v| v.iter().map(|z| z.re.to_f64_lossy()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_us,observable_name,value\n");
        for (k, t) in self.times.iter().enumerate() {
            for (name, vals) in &self.observables {
                s.push_str(&format!("{:.17e},{},{:.17e}\n", t, name, vals[k].re.to_f64_lossy()));
            }
        }
        s
    }
}

/// Union sparsity pattern of every Hamiltonian term, stored row-wise.
pub(crate) struct Stencil<T: Real> {
    d: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    base: Vec<Complex<T>>,
    terms: Vec<StencilTerm<T>>,
}

struct StencilTerm<T: Real> {
    slots: Vec<(usize, Complex<T>)>,
    kind: TermKind,
}

#[derive(Clone, Copy)]
enum TermKind {
    /// `e^{i ν t}`
    Phase(f64),
    /// Raising (`L†`) part of segment `k`; lowering part when `lower`.
    Drive { k: usize, lower: bool },
}

/// `(segment index, L† coefficient)` for the segments on at `t`.
pub(crate) fn drive_coefficients<T: Real>(m: &LindbladModel<T>, t: f64) -> Vec<(usize, Complex<T>)> {
    (0..m.sequence.segments.len())
        .filter_map(|k| drive_coefficient(m, k, t).map(|c| (k, cx(c))))
        .collect()
}

fn drive_coefficient<T: Real>(m: &LindbladModel<T>, k: usize, t: f64) -> Option<Complex<f64>> {
    let s = &m.sequence.segments[k];
    let env = s.envelope_at(t);
    if env == 0.0 {
        return None;
    }
    let f = m.system.frame[super::channel_slot(s.target).index()];
    let half = 0.5 * env;
    let mut c = Complex::from_polar(half, (f - s.carrier) * t - s.phase);
    if m.system.options.drive_form == DriveForm::RealCosine {
        c += Complex::from_polar(half, (f + s.carrier) * t + s.phase);
    }
    Some(c)
}

impl<T: Real> Stencil<T> {
    /// `dissipative` folds `-(i/2) Σ c†c` into the static part.
    pub fn new(m: &LindbladModel<T>, dissipative: bool) -> Result<Self, LindbladError> {
        let sys = &m.system;
        let d = sys.dims().total();
        let mut static_entries: Vec<(usize, usize, Complex<T>)> = sys
            .frame_diag()
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i, i, Complex::new(T::of(e), T::zero())))
            .collect();
        if dissipative {
            let half = Complex::new(T::zero(), -T::of(0.5));
            for c in sys.channels() {
                let j = c.jump_operator();
                let k = &j.dagger() * &j;
                for (a, b, v) in k.nonzeros() {
                    static_entries.push((a, b, v * half));
                }
            }
        }
        let mut raw_terms: Vec<(SparseOp<T>, TermKind)> = Vec::new();
        for c in sys.couplings() {
            let nu = sys.charge_rate(c.charge);
            raw_terms.push((c.raising.clone(), TermKind::Phase(nu)));
            raw_terms.push((c.raising.adjoint(), TermKind::Phase(-nu)));
        }
        for (k, s) in m.sequence.segments.iter().enumerate() {
            let low = sys.lowering(s.target)?;
            raw_terms.push((low.adjoint(), TermKind::Drive { k, lower: false }));
            raw_terms.push((low.clone(), TermKind::Drive { k, lower: true }));
        }

        let mut keys: Vec<(usize, usize)> = static_entries.iter().map(|&(i, j, _)| (i, j)).collect();
        for (op, _) in &raw_terms {
            keys.extend(op.entries.iter().map(|&(i, j, _)| (i, j)));
        }
        keys.sort_unstable();
        keys.dedup();
        let index: HashMap<(usize, usize), usize> = keys.iter().enumerate().map(|(p, &k)| (k, p)).collect();
        let mut row_ptr = vec![0usize; d + 1];
        for &(i, _) in &keys {
            row_ptr[i + 1] += 1;
        }
        for i in 0..d {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = keys.iter().map(|&(_, j)| j).collect();
        let mut base = vec![Complex::new(T::zero(), T::zero()); keys.len()];
        for (i, j, v) in static_entries {
            base[index[&(i, j)]] += v;
        }
        let terms = raw_terms
            .into_iter()
            .map(|(op, kind)| StencilTerm {
                slots: op.entries.iter().map(|&(i, j, v)| (index[&(i, j)], v)).collect(),
                kind,
            })
            .collect();
        Ok(Self { d, row_ptr, cols, base, terms })
    }

    fn values(&self, m: &LindbladModel<T>, t: f64, out: &mut [Complex<T>]) {
        out.copy_from_slice(&self.base);
        let mut drive_cache: Vec<Option<Option<Complex<f64>>>> = vec![None; m.sequence.segments.len()];
        for term in &self.terms {
            let c: Complex<T> = match term.kind {
                TermKind::Phase(nu) => cis(nu * t),
                TermKind::Drive { k, lower } => {
                    let v = *drive_cache[k].get_or_insert_with(|| drive_coefficient(m, k, t));
                    match v {
                        None => continue,
                        Some(z) => cx(if lower { z.conj() } else { z }),
                    }
                }
            };
            for &(p, v) in &term.slots {
                out[p] += c * v;
            }
        }
    }
}

struct DensityRhs<'a, T: Real> {
    model: &'a LindbladModel<T>,
    stencil: Stencil<T>,
    hvals: Vec<Complex<T>>,
    tmp: Vec<Complex<T>>,
}

impl<'a, T: Real> DensityRhs<'a, T> {
    fn new(model: &'a LindbladModel<T>) -> Result<Self, LindbladError> {
        let stencil = Stencil::new(model, true)?;
        let n = stencil.base.len();
        let d = stencil.d;
        Ok(Self { model, stencil, hvals: vec![Complex::new(T::zero(), T::zero()); n], tmp: vec![Complex::new(T::zero(), T::zero()); d * d] })
    }

    fn eval(&mut self, t: f64, rho: &[Complex<T>], out: &mut [Complex<T>]) {
        let d = self.stencil.d;
        let zero = Complex::new(T::zero(), T::zero());
        self.stencil.values(self.model, t, &mut self.hvals);
        // X = -i H_eff ρ
        for r in 0..d {
            let row = &mut out[r * d..(r + 1) * d];
            row.iter_mut().for_each(|z| *z = zero);
            for p in self.stencil.row_ptr[r]..self.stencil.row_ptr[r + 1] {
                let h = self.hvals[p];
                let h = Complex::new(h.im, -h.re);
                let c = self.stencil.cols[p];
                let src = &rho[c * d..(c + 1) * d];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += h * *s;
                }
            }
        }
        // + ½ c ρ c†
        let half = T::of(0.5);
        for jump in self.model.system.jumps() {
            self.tmp.iter_mut().for_each(|z| *z = zero);
            for &(i, j, v) in &jump.entries {
                let src = &rho[j * d..(j + 1) * d];
                let dst = &mut self.tmp[i * d..(i + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += v * *s;
                }
            }
            for &(k, l, w) in &jump.entries {
                let wc = w.conj() * half;
                for i in 0..d {
                    out[i * d + k] += self.tmp[i * d + l] * wc;
                }
            }
        }
        // dρ = X + X†
        for i in 0..d {
            let a = out[i * d + i];
            out[i * d + i] = Complex::new(a.re + a.re, T::zero());
            for j in i + 1..d {
                let a = out[i * d + j];
                let b = out[j * d + i];
                out[i * d + j] = a + b.conj();
                out[j * d + i] = b + a.conj();
            }
        }
    }
}

struct Rk4Buffers<T: Real> {
    k1: Vec<Complex<T>>,
    k2: Vec<Complex<T>>,
    k3: Vec<Complex<T>>,
    k4: Vec<Complex<T>>,
    y: Vec<Complex<T>>,
}

impl<T: Real> Rk4Buffers<T> {
    fn new(n: usize) -> Self {
        let z = vec![Complex::new(T::zero(), T::zero()); n];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), y: z }
    }
}

fn rk4_step<T: Real, F>(f: &mut F, t: f64, h: f64, x: &mut [Complex<T>], b: &mut Rk4Buffers<T>)
where
    F: FnMut(f64, &[Complex<T>], &mut [Complex<T>]),
{
    let hh = T::of(h);
    let h2 = T::of(0.5 * h);
    f(t, x, &mut b.k1);
    for i in 0..x.len() {
        b.y[i] = x[i] + b.k1[i] * h2;
    }
    f(t + 0.5 * h, &b.y, &mut b.k2);
    for i in 0..x.len() {
        b.y[i] = x[i] + b.k2[i] * h2;
    }
    f(t + 0.5 * h, &b.y, &mut b.k3);
    for i in 0..x.len() {
        b.y[i] = x[i] + b.k3[i] * hh;
    }
    f(t + h, &b.y, &mut b.k4);
    let sixth = T::of(h / 6.0);
    let two = T::of(2.0);
    for i in 0..x.len() {
        x[i] += (b.k1[i] + (b.k2[i] + b.k3[i]) * two + b.k4[i]) * sixth;
    }
}

fn steps_for(len: f64, dt: f64) -> usize {
    ((len / dt) - 1e-9).ceil().max(1.0) as usize
}

fn to_flat<T: Real>(m: &DMatrix<Complex<T>>) -> Vec<Complex<T>> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn from_flat<T: Real>(v: &[Complex<T>], d: usize) -> DMatrix<Complex<T>> {
    DMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

fn trace_flat<T: Real>(v: &[Complex<T>], d: usize) -> Complex<T> {
    (0..d).fold(Complex::new(T::zero(), T::zero()), |acc, i| acc + v[i * d + i])
}

fn expect_flat<T: Real>(v: &[Complex<T>], d: usize, op: &[(usize, usize, Complex<T>)]) -> Complex<T> {
    op.iter().fold(Complex::new(T::zero(), T::zero()), |acc, &(k, i, o)| acc + v[i * d + k] * o)
}

#[derive(Clone, Copy, PartialEq)]
enum Piece {
    Active,
    Idle,
}

/// Split `[t0, t1]` into stretches with and without drives.
fn pieces(intervals: &[(f64, f64)], t0: f64, t1: f64, use_idle: bool) -> Vec<(f64, f64, Piece)> {
    if !use_idle {
        return vec![(t0, t1, Piece::Active)];
    }
    let mut out = Vec::new();
    let mut t = t0;
    for &(a, b) in intervals {
        if b <= t || a >= t1 {
            continue;
        }
        let a = a.max(t);
        let b = b.min(t1);
        if a > t {
            out.push((t, a, Piece::Idle));
        }
        out.push((a, b, Piece::Active));
        t = b;
    }
    if t < t1 {
        out.push((t, t1, Piece::Idle));
    }
    out
}

pub(crate) fn evolve<T: Real>(
    m: &LindbladModel<T>,
    rho0: &QuantumState<T>,
    t0: f64,
    t1: f64,
    opts: &EvolveOptions<T>,
) -> Result<Trajectory<T>, LindbladError> {
    let dims = *m.dims();
    let d = dims.total();
    if rho0.dims() != &dims {
        return Err(LindbladError::Invalid("initial state dimensions differ from the model".into()));
    }
    if !(t1 >= t0) {
        return Err(LindbladError::Invalid(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let dt = opts.dt.unwrap_or(m.dt);
    if !(dt > 0.0) {
        return Err(LindbladError::Invalid(format!("dt must be > 0, got {dt}")));
    }
    m.check_step(dt)?;
    for (name, op) in &opts.observables {
        if op.dim() != d {
            return Err(LindbladError::Invalid(format!("observable {name} has wrong dimension")));
        }
    }
    let obs_sparse: Vec<Vec<(usize, usize, Complex<T>)>> = opts.observables.iter().map(|(_, o)| o.nonzeros()).collect();

    let mut sample_times = vec![t0];
    if let Some(every) = opts.sample_every {
        if !(every > 0.0) {
            return Err(LindbladError::Invalid("sample interval must be > 0".into()));
        }
        let n = ((t1 - t0) / every + 1e-9).floor() as usize;
        for k in 1..=n {
            let t = t0 + k as f64 * every;
            if t < t1 - 1e-12 {
                sample_times.push(t);
            }
        }
    }
    if t1 > t0 {
        sample_times.push(t1);
    }

    let idle = if opts.use_idle { m.system.idle_propagator() } else { None };
    let parts = pieces(&m.sequence.active_intervals(), t0, t1, idle.is_some());
    let mut breakpoints: Vec<f64> = m
        .sequence
        .segments
        .iter()
        .flat_map(|s| [s.start, s.start + s.edge(), s.end() - s.edge(), s.end()])
        .collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut traj = Trajectory {
        times: Vec::new(),
        observables: opts.observables.iter().map(|(n, _)| (n.clone(), Vec::new())).collect(),
        states: Vec::new(),
        final_state: rho0.clone(),
        max_trace_drift: 0.0,
    };
    let mut x = to_flat(rho0.rho());
    let mut rhs: Option<DensityRhs<T>> = None;
    let mut bufs = Rk4Buffers::new(d * d);

    let record = |t: f64, x: &[Complex<T>], traj: &mut Trajectory<T>| -> Result<(), LindbladError> {
        let tr = trace_flat(x, d);
        let drift = ((tr.re - T::one()).to_f64_lossy().powi(2) + tr.im.to_f64_lossy().powi(2)).sqrt();
        if !drift.is_finite() || drift > 1e-6 {
            return Err(LindbladError::Diverged { t, drift, suggested_ns: dt * 1e3 / 2.0 });
        }
        traj.max_trace_drift = traj.max_trace_drift.max(drift);
        traj.times.push(t);
        for (k, op) in obs_sparse.iter().enumerate() {
            traj.observables[k].1.push(expect_flat(x, d, op));
        }
        if opts.keep_states {
            let st = QuantumState::from_density_unchecked(from_flat(x, d), dims)?;
            traj.states.push(st);
        }
        Ok(())
    };

    record(t0, &x, &mut traj)?;
    let mut si = 1;
    let mut t = t0;
    for (_, b, kind) in parts {
        // breakpoints inside this piece
        let mut marks: Vec<f64> = Vec::new();
        while si < sample_times.len() && sample_times[si] <= b + 1e-12 {
            marks.push(sample_times[si]);
            si += 1;
        }
        let emit_last = marks.last().map(|&s| (s - b).abs() <= 1e-12).unwrap_or(false);
        if !emit_last {
            marks.push(b);
        }
        let n_marks = marks.len();
        for (mi, &target) in marks.iter().enumerate() {
            let span = target - t;
            if span > 0.0 {
                match kind {
                    Piece::Idle => {
                        let prop = idle.as_ref().expect("idle pieces need a propagator");
                        prop.apply_flat(&mut x, t, span, m.system.frame())?;
                    }
                    Piece::Active => {
                        let r = match rhs.as_mut() {
                            Some(r) => r,
                            None => rhs.insert(DensityRhs::new(m)?),
                        };
                        let mut f = |tt: f64, y: &[Complex<T>], o: &mut [Complex<T>]| r.eval(tt, y, o);
                        // envelope kinks fall on step boundaries
                        let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&c| c > t && c < target).collect();
                        cuts.push(target);
                        let mut a = t;
                        for c in cuts {
                            let n = steps_for(c - a, m.step_within(a, c, dt));
                            let h = (c - a) / n as f64;
                            for s in 0..n {
                                rk4_step(&mut f, a + s as f64 * h, h, &mut x, &mut bufs);
                            }
                            a = c;
                        }
                    }
                }
                t = target;
            }
            let is_sample = mi + 1 < n_marks || emit_last;
            if is_sample {
                record(target, &x, &mut traj)?;
            }
        }
    }
    traj.final_state = QuantumState::from_density_unchecked(from_flat(&x, d), dims)?;
    Ok(traj)
}

/// Relative norm change that [`evolve_pure`] treats as divergence.
pub const PURE_NORM_TOLERANCE: f64 = 1e-4;

pub(crate) fn evolve_pure<T: Real>(
    m: &LindbladModel<T>,
    psi0: &DVector<Complex<T>>,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<DVector<Complex<T>>, LindbladError> {
    let d = m.dims().total();
    if psi0.len() != d {
        return Err(LindbladError::Invalid("state vector dimension differs from the model".into()));
    }
    m.check_step(dt)?;
    let stencil = Stencil::new(m, false)?;
    let mut hv = stencil.base.clone();
    let mut x: Vec<Complex<T>> = psi0.iter().copied().collect();
    if t1 <= t0 {
        return Ok(psi0.clone());
    }
    let n = steps_for(t1 - t0, m.step_within(t0, t1, dt));
    let h = (t1 - t0) / n as f64;
    let mut bufs = Rk4Buffers::new(d);
    let zero = Complex::new(T::zero(), T::zero());
    let mut f = |tt: f64, y: &[Complex<T>], o: &mut [Complex<T>]| {
        stencil.values(m, tt, &mut hv);
        for r in 0..d {
            let mut acc = zero;
            for p in stencil.row_ptr[r]..stencil.row_ptr[r + 1] {
                acc += hv[p] * y[stencil.cols[p]];
            }
            o[r] = Complex::new(acc.im, -acc.re);
        }
    };
    for s in 0..n {
        rk4_step(&mut f, t0 + s as f64 * h, h, &mut x, &mut bufs);
    }
    let norm = x.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).to_f64_lossy();
    let norm0 = psi0.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).to_f64_lossy();
    let drift = (norm - norm0).abs();
    // RK4 is not norm preserving, so this only guards against blow-up
    if !drift.is_finite() || drift > PURE_NORM_TOLERANCE * norm0.max(1.0) {
        return Err(LindbladError::Diverged { t: t1, drift, suggested_ns: dt * 1e3 / 2.0 });
    }
    Ok(DVector::from_vec(x))
}
