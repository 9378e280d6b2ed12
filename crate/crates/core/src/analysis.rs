// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Curve fitting and sample statistics.
//!
//! All nonlinear fits go through [`levenberg_marquardt`] (at most 200
//! iterations, relative step tolerance 1e-10, central-difference Jacobian).
//! Uncertainties are `sqrt(diag(s² (JᵀJ)⁺))` at the optimum with
//! `s² = SSR / (n - p)`. Seeds are deterministic:
//!
//! * exponential: log-spaced grid over `T` with `(A, offset)` solved linearly;
//! * decaying cosine: periodogram peak for `f`, then the same `T2` grid with
//!   `(offset, A cos φ, A sin φ)` solved linearly;
//! * Lorentzian: arg-max for `f0`, half-maximum crossing count for the width;
//! * leakage: `a` from the shortest-pulse fidelity, grid over `γ_sp`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::Real;

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Normality p-value below which samples are called non-normal.
pub const NORMALITY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient span: {0}")]
    InsufficientSpan(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("fit failed: {reason}; parameter trace: {trace}")]
    FitFailed { reason: String, trace: String },
}

fn failed(reason: impl Into<String>, trace: &[Vec<f64>]) -> AnalysisError {
    let trace = trace
        .iter()
        .map(|p| format!("[{}]", p.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(", ")))
        .collect::<Vec<_>>()
        .join(" -> ");
    AnalysisError::FitFailed { reason: reason.into(), trace }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct FitParam<T> {
    pub name: String,
    pub value: T,
    /// 1σ.
    pub uncertainty: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct FitResult<T> {
    pub params: Vec<FitParam<T>>,
    /// Quantities computed from the fitted parameters.
    pub derived: Vec<FitParam<T>>,
    /// `sqrt(SSR)`.
    pub residual_norm: T,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> FitResult<T> {
    fn find(&self, name: &str) -> Option<&FitParam<T>> {
        self.params.iter().chain(self.derived.iter()).find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<T> {
        self.find(name).map(|p| p.value)
    }

    pub fn uncertainty(&self, name: &str) -> Option<T> {
        self.find(name).map(|p| p.uncertainty)
    }

    /// Values in parameter order.
    pub fn values(&self) -> Vec<T> {
        self.params.iter().map(|p| p.value).collect()
    }
}

/// Result of [`levenberg_marquardt`].
#[derive(Debug, Clone)]
pub struct LmOutcome<T: Real> {
    pub params: Vec<T>,
    pub uncertainties: Vec<T>,
    pub ssr: T,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<Vec<f64>>,
}

/// Minimise `Σ (model(x_i, p) - y_i)²` from `p0`.
pub fn levenberg_marquardt<T, F>(xs: &[T], ys: &[T], p0: &[T], model: F) -> LmOutcome<T>
where
    T: Real,
    F: Fn(T, &[T]) -> T,
{
    let n = xs.len();
    let m = p0.len();
    let residuals = |p: &[T]| -> DVector<T> { DVector::from_fn(n, |i, _| model(xs[i], p) - ys[i]) };
    let jacobian = |p: &[T]| -> DMatrix<T> {
        let h0 = T::eps().powf(T::of(1.0 / 3.0));
        let mut jac = DMatrix::zeros(n, m);
        let mut q = p.to_vec();
        for j in 0..m {
            let h = h0 * p[j].abs().max(T::of(1e-3));
            q[j] = p[j] + h;
            let up: Vec<T> = xs.iter().map(|&x| model(x, &q)).collect();
            q[j] = p[j] - h;
            let dn: Vec<T> = xs.iter().map(|&x| model(x, &q)).collect();
            q[j] = p[j];
            for i in 0..n {
                jac[(i, j)] = (up[i] - dn[i]) / (h + h);
            }
        }
        jac
    };

    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut cost = r.norm_squared();
    let mut lambda = T::of(1e-3);
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = vec![p.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()];
    let tiny = T::of(1e-30);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if !cost.is_finite() {
            break;
        }
        if cost <= tiny {
            converged = true;
            break;
        }
        let jac = jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..m {
                let dk = jtj[(k, k)].max(T::of(1e-12));
                a[(k, k)] += lambda * dk;
            }
            let Some(step) = a.clone().cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= T::of(10.0);
                continue;
            };
            let trial: Vec<T> = (0..m).map(|k| p[k] + step[k]).collect();
            let rt = residuals(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let pnorm = p.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
                let snorm = step.norm();
                let small_step = snorm <= T::of(STEP_TOLERANCE) * (pnorm + T::of(STEP_TOLERANCE));
                let small_gain = cost - ct <= T::eps() * cost;
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / T::of(10.0)).max(T::of(1e-15));
                accepted = true;
                trace.push(p.iter().map(|v| v.to_f64_lossy()).collect());
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= T::of(10.0);
            if lambda > T::of(1e16) {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: at a minimum to working precision
            converged = cost.is_finite();
            break;
        }
    }

    let jac = jacobian(&p);
    let jtj = jac.transpose() * &jac;
    let dof = n.saturating_sub(m).max(1);
    let s2 = cost / T::of(dof as f64);
    let cov = jtj
        .clone()
        .pseudo_inverse(T::of(1e-14) * jtj.amax().max(T::of(1e-300)))
        .unwrap_or_else(|_| DMatrix::zeros(m, m));
    let uncertainties = (0..m).map(|k| (cov[(k, k)].abs() * s2).sqrt()).collect();
    LmOutcome { params: p, uncertainties, ssr: cost, converged, iterations, trace }
}

fn check_series<T: Real>(xs: &[T], ys: &[T], min: usize) -> Result<(), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::Invalid(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    if xs.len() < min {
        return Err(AnalysisError::InsufficientData(format!("need >= {min} points, got {}", xs.len())));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Invalid("non-finite data".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(AnalysisError::Invalid("x values must be strictly increasing".into()));
    }
    Ok(())
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

/// Linear least squares `y ≈ Σ_j c_j φ_j(x)`; returns coefficients and SSR.
fn linear_lsq(xs: &[f64], ys: &[f64], basis: &[&dyn Fn(f64) -> f64]) -> Option<(Vec<f64>, f64)> {
    let a = DMatrix::from_fn(xs.len(), basis.len(), |i, j| basis[j](xs[i]));
    let y = DVector::from_column_slice(ys);
    let c = a.clone().svd(true, true).solve(&y, 1e-13).ok()?;
    let ssr = (a * &c - y).norm_squared();
    ssr.is_finite().then(|| (c.iter().copied().collect(), ssr))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
}

fn assemble<T: Real>(names: &[&str], out: &LmOutcome<T>) -> FitResult<T> {
    FitResult {
        params: names
            .iter()
            .zip(out.params.iter().zip(&out.uncertainties))
            .map(|(n, (v, u))| FitParam { name: n.to_string(), value: *v, uncertainty: *u })
            .collect(),
        derived: Vec::new(),
        residual_norm: out.ssr.sqrt(),
        converged: out.converged,
        iterations: out.iterations,
    }
}

fn is_flat(ys: &[f64]) -> bool {
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE);
    hi - lo <= 1e-12 * scale
}

/// Fit `A exp(-x/T) + offset`. Constant data returns `T = ∞` with
/// `converged = false`.
pub fn fit_exponential<T: Real>(xs: &[T], ys: &[T]) -> Result<FitResult<T>, AnalysisError> {
    check_series(xs, ys, 5)?;
    let (x, y) = (to_f64(xs), to_f64(ys));
    if is_flat(&y) {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let v = |name: &str, value: f64| FitParam { name: name.into(), value: T::of(value), uncertainty: T::zero() };
        return Ok(FitResult {
            params: vec![v("A", 0.0), v("T", f64::INFINITY), v("offset", mean)],
            derived: Vec::new(),
            residual_norm: T::zero(),
            converged: false,
            iterations: 0,
        });
    }
    let span = x[x.len() - 1] - x[0];
    let x0 = x[0];
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for tau in log_grid(span / 100.0, span * 100.0, 81) {
        let e = move |v: f64| (-(v - x0) / tau).exp();
        let one = |_: f64| 1.0;
        if let Some((c, ssr)) = linear_lsq(&x, &y, &[&e, &one]) {
            if best.map_or(true, |b| ssr < b.3) {
                best = Some((c[0], tau, c[1], ssr));
            }
        }
    }
    let (a0, t0, c0, _) = best.ok_or_else(|| failed("no usable seed", &[]))?;
    // amplitude referenced to the first sample for conditioning
    let shift = T::of(x0);
    let out = levenberg_marquardt(xs, ys, &[T::of(a0), T::of(t0), T::of(c0)], |x, p| {
        p[0] * (-(x - shift) / p[1]).exp() + p[2]
    });
    if !out.converged || !out.params.iter().all(|v| v.is_finite()) {
        return Err(failed("exponential fit did not converge", &out.trace));
    }
    let mut out = out;
    // back to amplitude at x = 0
    let scale = (shift / out.params[1]).exp();
    out.params[0] *= scale;
    out.uncertainties[0] *= scale;
    Ok(assemble(&["A", "T", "offset"], &out))
}

/// Periodogram `|Σ (y - ȳ) e^{-2πi f x}|²` on `freqs`.
fn periodogram(x: &[f64], y: &[f64], freqs: &[f64]) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    freqs
        .iter()
        .map(|f| {
            let (mut re, mut im) = (0.0, 0.0);
            for (xi, yi) in x.iter().zip(y) {
                let ph = 2.0 * PI * f * xi;
                re += (yi - mean) * ph.cos();
                im -= (yi - mean) * ph.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Fit `A exp(-x/T2) cos(2π f x + φ) + offset`.
pub fn fit_decaying_cosine<T: Real>(xs: &[T], ys: &[T]) -> Result<FitResult<T>, AnalysisError> {
    check_series(xs, ys, 8)?;
    let (x, y) = (to_f64(xs), to_f64(ys));
    if is_flat(&y) {
        return Err(failed("zero-amplitude data", &[]));
    }
    let span = x[x.len() - 1] - x[0];
    let mut dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    dx.sort_by(f64::total_cmp);
    let nyquist = 0.5 / dx[dx.len() / 2];
    let df = 1.0 / (8.0 * span);
    let nf = (nyquist / df).ceil() as usize + 1;
    let freqs: Vec<f64> = (0..nf).map(|k| k as f64 * df).collect();
    let power = periodogram(&x, &y, &freqs);
    let k_peak = (0..nf).max_by(|&a, &b| power[a].total_cmp(&power[b])).expect("nonempty");
    let mut sorted = power.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(power[k_peak] > 20.0 * median) {
        return Err(failed(
            format!("no spectral peak above the noise floor (peak/median = {:.2})", power[k_peak] / median),
            &[],
        ));
    }
    let f0 = freqs[k_peak];

    let mut best: Option<(Vec<f64>, f64, f64, f64)> = None;
    for fs in [f0 - 0.5 * df, f0, f0 + 0.5 * df].into_iter().filter(|f| *f >= 0.0) {
        for tau in log_grid(span / 20.0, span * 100.0, 61) {
            let one = |_: f64| 1.0;
            let c = move |v: f64| (-v / tau).exp() * (2.0 * PI * fs * v).cos();
            let s = move |v: f64| (-v / tau).exp() * (2.0 * PI * fs * v).sin();
            if let Some((coef, ssr)) = linear_lsq(&x, &y, &[&one, &c, &s]) {
                if best.as_ref().map_or(true, |b| ssr < b.3) {
                    best = Some((coef, tau, fs, ssr));
                }
            }
        }
    }
    let (coef, t0, fs, _) = best.ok_or_else(|| failed("no usable seed", &[]))?;
    let amp = coef[1].hypot(coef[2]);
    let phase = (-coef[2]).atan2(coef[1]);
    let two_pi = T::of(2.0 * PI);
    let p0 = [T::of(amp), T::of(t0), T::of(fs), T::of(phase), T::of(coef[0])];
    let out = levenberg_marquardt(xs, ys, &p0, |x, p| {
        p[0] * (-x / p[1]).exp() * (two_pi * p[2] * x + p[3]).cos() + p[4]
    });
    if !out.converged || !out.params.iter().all(|v| v.is_finite()) {
        return Err(failed("decaying-cosine fit did not converge", &out.trace));
    }
    let mut out = out;
    // canonical form: A > 0, f >= 0, φ in (-π, π]
    if out.params[2] < T::zero() {
        out.params[2] = -out.params[2];
        out.params[3] = -out.params[3];
    }
    if out.params[0] < T::zero() {
        out.params[0] = -out.params[0];
        out.params[3] += T::pi();
    }
    let ph = out.params[3].to_f64_lossy();
    out.params[3] = T::of((ph + PI).rem_euclid(2.0 * PI) - PI);
    if out.params[0] == T::zero() {
        return Err(failed("fitted amplitude vanished", &out.trace));
    }
    Ok(assemble(&["A", "T2", "f", "phase", "offset"], &out))
}

/// Fit `peak / (1 + 4 (f - f0)² / fwhm²) + floor`.
pub fn fit_lorentzian<T: Real>(freqs: &[T], powers: &[T]) -> Result<FitResult<T>, AnalysisError> {
    check_series(freqs, powers, 7)?;
    let (x, y) = (to_f64(freqs), to_f64(powers));
    let n = x.len();
    if is_flat(&y) {
        return Err(failed("flat spectrum", &[]));
    }
    // work in units of the span around the grid centre
    let center = 0.5 * (x[0] + x[n - 1]);
    let span = x[n - 1] - x[0];
    let u: Vec<f64> = x.iter().map(|f| (f - center) / span).collect();
    let k = (0..n).max_by(|&a, &b| y[a].total_cmp(&y[b])).expect("nonempty");
    let floor0 = y.iter().copied().fold(f64::INFINITY, f64::min);
    let peak0 = y[k] - floor0;
    let above = y.iter().filter(|&&v| v - floor0 >= 0.5 * peak0).count();
    let width0 = (above as f64 / n as f64).max(2.0 / n as f64);
    if width0 * 3.0 > 1.0 + 1e-12 {
        return Err(AnalysisError::InsufficientSpan(format!(
            "span {span:e} covers fewer than 3 linewidths (estimated width {:e})",
            width0 * span
        )));
    }
    let us: Vec<T> = u.iter().map(|v| T::of(*v)).collect();
    let four = T::of(4.0);
    let p0 = [T::of(u[k]), T::of(width0), T::of(peak0), T::of(floor0)];
    let out = levenberg_marquardt(&us, powers, &p0, |v, p| {
        let z = (v - p[0]) / p[1];
        p[2] / (T::one() + four * z * z) + p[3]
    });
    if !out.converged || !out.params.iter().all(|v| v.is_finite()) {
        return Err(failed("Lorentzian fit did not converge", &out.trace));
    }
    let fwhm = out.params[1].abs().to_f64_lossy() * span;
    if 3.0 * fwhm > span * (1.0 + 1e-9) {
        return Err(AnalysisError::InsufficientSpan(format!(
            "span {span:e} covers fewer than 3 fitted linewidths ({fwhm:e})"
        )));
    }
    let mut out = out;
    let s = T::of(span);
    out.params[0] = T::of(center) + out.params[0] * s;
    out.uncertainties[0] *= s;
    out.params[1] = out.params[1].abs() * s;
    out.uncertainties[1] *= s;
    Ok(assemble(&["f0", "fwhm", "peak", "floor"], &out))
}

/// Steady-state leakage population
/// `P_L = a / (2a + γ_sp t_p) · [1 - exp(-2a - γ_sp t_p)]`.
///
/// `gamma_sp` in 1/µs, `t_p` in µs. Returns NaN unless `a >= 0`,
/// `gamma_sp >= 0` and `t_p > 0`.
pub fn leakage_population<T: Real>(t_p: T, a: T, gamma_sp: T) -> T {
    if !(a >= T::zero() && gamma_sp >= T::zero() && t_p > T::zero()) {
        return T::of(f64::NAN);
    }
    leakage_unchecked(t_p, a, gamma_sp)
}

fn leakage_unchecked<T: Real>(t_p: T, a: T, gamma_sp: T) -> T {
    let s = a + a + gamma_sp * t_p;
    if s.abs() < T::of(1e-8) {
        // (1 - e^{-s})/s → 1 - s/2
        return a * (T::one() - s / T::of(2.0));
    }
    a * (T::one() - (-s).exp()) / s
}

/// Fit `F_corr = 1 - P_L(t_p, a, γ_sp)` with a single global `a`. Adds the
/// short-pulse fidelity floor `1 - (1 - e^{-2a})/2` as derived quantity
/// `floor`.
pub fn fit_leakage<T: Real>(t_ps: &[T], f_corrs: &[T]) -> Result<FitResult<T>, AnalysisError> {
    check_series(t_ps, f_corrs, 4)?;
    if t_ps[0] <= T::zero() {
        return Err(AnalysisError::Invalid("protocol lengths must be > 0".into()));
    }
    let (x, y) = (to_f64(t_ps), to_f64(f_corrs));
    let model = |t: f64, a: f64, g: f64| 1.0 - leakage_unchecked(t, a, g);
    // shortest pulse: 1 - F ≈ (1 - e^{-2a}) / 2 when γ t is small
    let l0 = (1.0 - y[0]).clamp(0.0, 0.499);
    let a_seed = -(1.0 - 2.0 * l0).ln() / 2.0;
    let mut best = (a_seed, 0.0, f64::INFINITY);
    let span = x[x.len() - 1];
    for a in [0.25 * a_seed, 0.5 * a_seed, a_seed, 2.0 * a_seed, 4.0 * a_seed] {
        for g in std::iter::once(0.0).chain(log_grid(1e-3 / span, 1e3 / span, 61)) {
            let ssr: f64 = x.iter().zip(&y).map(|(t, f)| (model(*t, a, g) - f).powi(2)).sum();
            if ssr < best.2 {
                best = (a, g, ssr);
            }
        }
    }
    let out = levenberg_marquardt(t_ps, f_corrs, &[T::of(best.0), T::of(best.1)], |t, p| {
        T::one() - leakage_unchecked(t, p[0], p[1])
    });
    if !out.converged || !out.params.iter().all(|v| v.is_finite()) {
        return Err(failed("leakage fit did not converge", &out.trace));
    }
    let mut res = assemble(&["a", "gamma_sp"], &out);
    let a = out.params[0];
    let two = T::of(2.0);
    res.derived.push(FitParam {
        name: "floor".into(),
        value: T::one() - (T::one() - (-two * a).exp()) / two,
        uncertainty: (-two * a).exp() * out.uncertainties[0],
    });
    Ok(res)
}

/// Linear fit of `offset + amplitude·cos(x - phase)` with fixed unit
/// frequency, as for a population against a rotation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosinePattern {
    pub offset: f64,
    /// Non-negative; the sign goes into `phase`.
    pub amplitude: f64,
    pub phase: f64,
    /// Coefficient of determination.
    pub r_squared: f64,
}

impl CosinePattern {
    pub fn eval(&self, x: f64) -> f64 {
        self.offset + self.amplitude * (x - self.phase).cos()
    }
}

pub fn fit_cosine_pattern<T: Real>(xs: &[T], ys: &[T]) -> Result<CosinePattern, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::Invalid(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    if xs.len() < 4 {
        return Err(AnalysisError::InsufficientData(format!("need >= 4 points, got {}", xs.len())));
    }
    let (x, y) = (to_f64(xs), to_f64(ys));
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Invalid("non-finite data".into()));
    }
    let (c, ssr) = linear_lsq(&x, &y, &[&|_| 1.0, &|t: f64| t.cos(), &|t: f64| t.sin()])
        .ok_or_else(|| AnalysisError::Invalid("angles do not determine a cosine".into()))?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    Ok(CosinePattern { offset: c[0], amplitude: c[1].hypot(c[2]), phase: c[2].atan2(c[1]), r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStatistics {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1).
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Jarque–Bera statistic.
    pub jarque_bera: f64,
    /// p-value of the Jarque–Bera statistic against χ²(2). Samples with a
    /// score below [`NORMALITY_THRESHOLD`] are treated as non-normal.
    pub normality: f64,
    /// Freedman–Diaconis bins: width `2 IQR n^{-1/3}`, at most 100 bins, a
    /// single bin when the IQR vanishes.
    pub histogram: Vec<HistogramBin>,
}

impl SampleStatistics {
    pub fn looks_normal(&self) -> bool {
        self.normality >= NORMALITY_THRESHOLD
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sample_statistics<T: Real>(samples: &[T]) -> Result<SampleStatistics, AnalysisError> {
    let n = samples.len();
    if n < 8 {
        return Err(AnalysisError::InsufficientData(format!("need >= 8 samples, got {n}")));
    }
    let x = to_f64(samples);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Invalid("non-finite sample".into()));
    }
    // moments about the first sample keep constant data exact
    let x0 = x[0];
    let d: Vec<f64> = x.iter().map(|v| v - x0).collect();
    let md = d.iter().sum::<f64>() / n as f64;
    let mean = x0 + md;
    let c: Vec<f64> = d.iter().map(|v| v - md).collect();
    let m2 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let m3 = c.iter().map(|v| v.powi(3)).sum::<f64>() / n as f64;
    let m4 = c.iter().map(|v| v.powi(4)).sum::<f64>() / n as f64;
    let std = (m2 * n as f64 / (n - 1) as f64).sqrt();
    let (skewness, excess_kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
    let jb = n as f64 / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    let normality = if m2 > 0.0 {
        let chi2 = ChiSquared::new(2.0).expect("valid dof");
        1.0 - chi2.cdf(jb)
    } else {
        1.0
    };

    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let nbins = if iqr > 0.0 && hi > lo {
        let h = 2.0 * iqr / (n as f64).cbrt();
        (((hi - lo) / h).ceil() as usize).clamp(1, 100)
    } else {
        1
    };
    let width = if hi > lo { (hi - lo) / nbins as f64 } else { 0.0 };
    let mut histogram: Vec<HistogramBin> = (0..nbins)
        .map(|k| HistogramBin {
            lo: lo + width * k as f64,
            hi: if k + 1 == nbins { hi } else { lo + width * (k + 1) as f64 },
            count: 0,
        })
        .collect();
    for v in &x {
        let k = if width > 0.0 { (((v - lo) / width) as usize).min(nbins - 1) } else { 0 };
        histogram[k].count += 1;
    }
    Ok(SampleStatistics { n, mean, std, skewness, excess_kurtosis, jarque_bera: jb, normality, histogram })
}
