// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines show up in plain `cargo test` output.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use cavmem::analysis::{fit_decaying_cosine, fit_exponential, fit_leakage, fit_lorentzian, leakage_population};
use cavmem::device::{self, DeviceParams};
use cavmem::lindblad::{
    effective_bsb_check, frame_transform, BsbCheckOptions, Decoherence, EvolveOptions, FrameChoice, LindbladModel,
    ModelOptions, OpenSystem, SpectrumModel,
};
use cavmem::protocol::{mode_ringdown_experiment, MemoryExperiment, Mode, ProtocolOptions, QptOptions, RingdownOptions};
use cavmem::pulse::{DriveChannel, PulseSegment, PulseSequence, SegmentRole};
use cavmem::qsys::{SubsystemDims, Slot};
use cavmem::tomography::{process_fidelity, process_tomography, ChiMatrix};
use cavmem::units::{khz, mhz};
use cavmem::State;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn dephasing_relation() -> Check {
    let t = device::pure_dephasing_time(8.0, 15.5).map_err(|e| e.to_string())?;
    verdict(rel(t, 500.0) <= 0.02, format!("T_phi = {t:.1} us vs 0.5 ms"))
}

fn thermal_population() -> Check {
    let pe = device::thermal_population(1.0 / 496.0, 1.0 / 1.32).map_err(|e| e.to_string())?;
    verdict((pe - 0.003).abs() <= 0.001, format!("P_e = {:.3} % vs 0.3 %", 100.0 * pe))
}

fn readout_ringdown() -> Check {
    let p = DeviceParams::default();
    let r = mode_ringdown_experiment(&p, Mode::Readout, &RingdownOptions::default()).map_err(|e| e.to_string())?;
    let ns = r.amplitude_decay_time * 1e3;
    let ideal = 2e3 / p.kappa_ro_rate();
    verdict(
        rel(ns, 80.0) <= 0.02 && rel(ns, ideal) <= 0.01,
        format!("amplitude decay {ns:.2} ns (2/kappa_RO = {ideal:.2} ns, measured 80 ns)"),
    )
}

/// Criteria 4 and 5 share one run.
fn fock_decay() -> (Check, Check) {
    let p = DeviceParams::default();
    let run = MemoryExperiment::new(&p, &ProtocolOptions::default()).and_then(|e| e.fock_decay(&linspace(0.0, 28.0, 29)));
    let f = match run {
        Ok(f) => f,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let ideal = 1.0 / p.kappa_s_rate();
    let c4 = verdict(
        rel(f.t1_s, ideal) <= 0.10 && (f.t1_s - 8.0).abs() <= 1.8,
        format!("T1_s = {:.3} +- {:.3} us (1/kappa_s = {ideal:.3} us, band 8.0 +- 1.8 us)", f.t1_s, f.t1_s_uncertainty),
    );
    let ratio = f.t1_s / p.t1_q;
    (c4, verdict(ratio >= 4.0, format!("T1_s / T1_q = {ratio:.2}")))
}

fn sideband_scaling() -> Check {
    let p = DeviceParams::default();
    let opts = BsbCheckOptions::default();
    let check = |p: &DeviceParams, a: f64| effective_bsb_check(p, mhz(a), &opts).map_err(|e| e.to_string());
    let (lo, hi) = (check(&p, 2000.0)?, check(&p, 6000.0)?);
    let amp_slope = (hi.measured_rate / lo.measured_rate).ln() / 3f64.ln();
    let at = check(&p, 4000.0)?;
    let half_g = check(&DeviceParams { g: p.g / 2.0, ..p }, 4000.0)?;
    let g_slope = (at.measured_rate / half_g.measured_rate).log2();
    let ratios = [lo.ratio, at.ratio, hi.ratio];
    let prefactor_ok = ratios.iter().all(|r| (0.8..=1.25).contains(r));
    verdict(
        (amp_slope - 2.0).abs() <= 0.05 && (g_slope - 3.0).abs() <= 0.15 && prefactor_ok,
        format!("drive slope {amp_slope:.3}, coupling slope {g_slope:.3}, measured/predicted {ratios:.3?}"),
    )
}

fn superposition_storage() -> Check {
    let p = DeviceParams::default();
    let exp = MemoryExperiment::new(&p, &ProtocolOptions::noiseless()).map_err(|e| e.to_string())?;
    let m = exp.storage_mapping().map_err(|e| e.to_string())?;
    let (_, pattern) = exp.prep_angle_sweep(&linspace(0.0, 2.0 * PI, 13), 0.0).map_err(|e| e.to_string())?;
    verdict(
        m.ground_to_one >= 0.99 && m.excited_to_zero >= 0.99 && pattern.r_squared >= 0.98,
        format!(
            "|g> -> |1>_s {:.4}, |e> -> |0>_s {:.4}, cosine R^2 {:.5}",
            m.ground_to_one, m.excited_to_zero, pattern.r_squared
        ),
    )
}

/// Criteria 8 and 9 share the working point.
fn z_fidelity_and_qpt() -> (Check, Check) {
    let p = DeviceParams::default();
    let exp = match MemoryExperiment::new(&p, &ProtocolOptions::default()) {
        Ok(e) => e,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let w = match exp.z_fidelity_point() {
        Ok(w) => w,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let c8 = verdict(
        (0.70..=0.90).contains(&w.f_z) && w.f_z_corr >= 0.90 && (w.protocol_length - 0.37).abs() <= 0.02,
        format!("t_p = {:.3} us, F_Z = {:.3}, F_Z_corr = {:.3}", w.protocol_length, w.f_z, w.f_z_corr),
    );
    let identity: Result<ChiMatrix<f64>, _> = process_tomography(|rho: &cavmem::tomography::QubitMatrix<f64>| {
        Ok::<_, std::convert::Infallible>(rho.clone())
    });
    let c9 = match (exp.process_tomography(&QptOptions::default()), identity) {
        (Ok(q), Ok(id)) => {
            let f_id = process_fidelity(&id, &ChiMatrix::identity());
            let f = q.fidelity.corrected;
            verdict(
                (f - w.f_z).abs() <= 0.08 && (f_id - 1.0).abs() <= 1e-10,
                format!(
                    "F_QPT = {f:.3} (raw {:.3}) vs F_Z = {:.3}; identity channel F - 1 = {:.1e}",
                    q.fidelity.raw,
                    w.f_z,
                    f_id - 1.0
                ),
            )
        }
        (Err(e), _) => Err(e.to_string()),
        (_, Err(e)) => Err(format!("{e:?}")),
    };
    (c8, c9)
}

fn leakage_round_trip() -> Check {
    let (a, g) = (0.5, 2.0 * PI * 13.8);
    let ts = linspace(0.01, 0.5, 12);
    let clean: Vec<f64> = ts.iter().map(|t| 1.0 - leakage_population(*t, a, g)).collect();
    let fit = fit_leakage(&ts, &clean).map_err(|e| e.to_string())?;
    let (fa, fg) = (fit.value("a").unwrap(), fit.value("gamma_sp").unwrap());
    let noiseless_ok = rel(fa, a) <= 0.05 && rel(fg, g) <= 0.05;

    let noisy = |seed: u64| {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let noise = Normal::new(1.0, 0.02).unwrap();
        let ys: Vec<f64> = clean.iter().map(|y| y * noise.sample(&mut rng)).collect();
        let f = fit_leakage(&ts, &ys).map_err(|e| format!("seed {seed}: {e}"))?;
        let within = |name: &str, truth: f64| (f.value(name).unwrap() - truth).abs() <= f.uncertainty(name).unwrap();
        Ok::<_, String>((within("a", a), within("gamma_sp", g)))
    };
    let (single_a, single_g) = noisy(0)?;

    // coverage guards against an understated uncertainty; a conservative one
    // still satisfies the 1σ check
    let trials = 200;
    let (mut cover_a, mut cover_g) = (0, 0);
    for seed in 0..trials {
        let (ia, ig) = noisy(seed)?;
        cover_a += ia as u32;
        cover_g += ig as u32;
    }
    let (ca, cg) = (cover_a as f64 / trials as f64, cover_g as f64 / trials as f64);
    verdict(
        noiseless_ok && single_a && single_g && ca >= 0.60 && cg >= 0.60,
        format!(
            "noiseless a {fa:.4}, gamma_sp/2pi {:.3} MHz; 2 % noise realisation within 1 sigma: a {single_a}, gamma_sp {single_g}; coverage a {ca:.2}, gamma_sp {cg:.2}",
            fg / (2.0 * PI)
        ),
    )
}

fn integrator_invariants() -> Check {
    let p = DeviceParams::default();
    let mut notes = Vec::new();

    // trace, positivity and purity through a driven sequence with losses
    let sys = Arc::new(OpenSystem::<f64>::new(&p, &ModelOptions::default()).map_err(|e| e.to_string())?);
    let exp = MemoryExperiment::new(&p, &ProtocolOptions::default()).map_err(|e| e.to_string())?;
    let seq = exp.sequence(PI / 2.0, 2.0).map_err(|e| e.to_string())?;
    let m = LindbladModel::new(sys, &seq).map_err(|e| e.to_string())?;
    let rho0 = State::basis(*m.dims(), 0, 0, 0).map_err(|e| e.to_string())?;
    let tr = m.evolve(&rho0, 0.0, seq.end() + 1.0, &EvolveOptions::sampled(0.02).keep_states()).map_err(|e| e.to_string())?;
    let (mut trace_err, mut min_eig, mut max_pur) = (0.0f64, f64::INFINITY, 0.0f64);
    for s in &tr.states {
        trace_err = trace_err.max((s.trace() - num_complex::Complex::new(1.0, 0.0)).norm());
        min_eig = min_eig.min(s.min_eigenvalue());
        max_pur = max_pur.max(s.purity());
    }
    let states_ok = trace_err <= 1e-8 && min_eig >= -1e-9 && max_pur <= 1.0 + 1e-9;
    notes.push(format!("trace err {trace_err:.1e}, min eig {min_eig:.1e}, max purity - 1 {:.1e}", max_pur - 1.0));

    // step halving on a fast photon decay
    let fast = DeviceParams { g: 0.0, kappa_s: 1e5, ..DeviceParams::default() };
    let kappa = fast.kappa_s_rate();
    let mut deco = Decoherence::none();
    deco.storage_decay = true;
    let dims = SubsystemDims::new(2, 2, 1).map_err(|e| e.to_string())?;
    let o = ModelOptions { dims, spectrum: SpectrumModel::Bare, decoherence: deco, ..Default::default() };
    let idle = LindbladModel::new(Arc::new(OpenSystem::<f64>::new(&fast, &o).map_err(|e| e.to_string())?), &PulseSequence::default())
        .map_err(|e| e.to_string())?;
    let n = cavmem::qsys::tensor_embed(&cavmem::qsys::number(2), Slot::Storage, &dims).map_err(|e| e.to_string())?;
    let start = State::basis(dims, 0, 1, 0).map_err(|e| e.to_string())?;
    let t_end = 2.0 / kappa;
    let err = |dt: f64| -> Result<f64, String> {
        let mut opts = EvolveOptions::sampled(t_end / 20.0).observe("n", n.clone()).rk4_only();
        opts.dt = Some(dt);
        let tr = idle.evolve(&start, 0.0, t_end, &opts).map_err(|e| e.to_string())?;
        let ys = tr.real("n").expect("observed");
        Ok(tr.times.iter().zip(ys).map(|(t, v)| (v - (-kappa * t).exp()).abs()).fold(0.0, f64::max))
    };
    let ratio = err(0.05 / kappa)? / err(0.025 / kappa)?;
    let order_ok = (ratio - 16.0).abs() <= 4.0;
    notes.push(format!("step-halving error ratio {ratio:.2}"));

    // energy-basis populations agree between rotating and lab frames
    let small = ModelOptions { dims: SubsystemDims::new(2, 2, 2).map_err(|e| e.to_string())?, ..Default::default() };
    let seg = PulseSegment::new(DriveChannel::QubitCharge, SegmentRole::Other, mhz(10.0), p.w_q()).with_timing(0.0, 0.0);
    let pulse = PulseSequence::new(vec![seg]).map_err(|e| e.to_string())?;
    let t1 = pulse.end() + 0.005;
    let run = |frame: FrameChoice, dt: f64| -> Result<Vec<f64>, String> {
        let sys = Arc::new(OpenSystem::<f64>::new(&p, &ModelOptions { frame, dt, ..small }).map_err(|e| e.to_string())?);
        let m = LindbladModel::new(sys, &pulse).map_err(|e| e.to_string())?;
        let r0 = State::basis(*m.dims(), 0, 0, 0).map_err(|e| e.to_string())?;
        let fin = m.evolve(&r0, 0.0, t1, &EvolveOptions::default().rk4_only()).map_err(|e| e.to_string())?.final_state;
        let lab = frame_transform(&fin, m.frame(), [0.0; 3], t1);
        let eig = m.system().bare().lab_matrix(m.dims()).symmetric_eigen();
        let mut pops: Vec<(f64, f64)> = (0..eig.eigenvectors.ncols())
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                ((v.adjoint() * lab.rho() * v)[(0, 0)].re, eig.eigenvalues[k])
            })
            .collect();
        pops.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(pops.into_iter().map(|x| x.0).collect())
    };
    let rot = run(FrameChoice::BareRotating, 1e-6)?;
    let lab = run(FrameChoice::Lab, 2.5e-7)?;
    let diff = rot.iter().zip(&lab).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let frame_ok = diff <= 1e-6;
    notes.push(format!("frame population difference {diff:.1e}"));

    verdict(states_ok && order_ok && frame_ok, notes.join("; "))
}

fn fit_round_trips() -> Check {
    let xs = linspace(0.0, 28.0, 29);
    let t1 = 1.0 / khz(24.7);
    let ys: Vec<f64> = xs.iter().map(|x| 0.9 * (-x / t1).exp() + 0.05).collect();
    let e = fit_exponential(&xs, &ys).map_err(|e| e.to_string())?;
    let exp_ok = rel(e.value("T").unwrap(), t1) <= 1e-6;

    let xs = linspace(0.0, 20.0, 201);
    let ys: Vec<f64> = xs.iter().map(|x| 0.5 * (-x / 12.9).exp() * (2.0 * PI * 0.25 * x + 0.3).cos() + 0.5).collect();
    let c = fit_decaying_cosine(&xs, &ys).map_err(|e| e.to_string())?;
    let cos_ok = rel(c.value("T2").unwrap(), 12.9) <= 1e-4 && rel(c.value("f").unwrap(), 0.25) <= 1e-4;

    let (f0, fwhm) = (8.707546e3, 24.7e-3);
    let fs = linspace(f0 - 5.0 * fwhm, f0 + 5.0 * fwhm, 61);
    let ps: Vec<f64> = fs.iter().map(|f| 2.0 / (1.0 + 4.0 * ((f - f0) / fwhm).powi(2)) + 0.05).collect();
    let l = fit_lorentzian(&fs, &ps).map_err(|e| e.to_string())?;
    let lor_ok = rel(l.value("fwhm").unwrap(), fwhm) <= 1e-6 && (l.value("f0").unwrap() - f0).abs() <= 1e-3 * fwhm;

    verdict(
        exp_ok && cos_ok && lor_ok,
        format!(
            "T {:.6} us, T2 {:.6} us, linewidth {:.6} kHz",
            e.value("T").unwrap(),
            c.value("T2").unwrap(),
            l.value("fwhm").unwrap() * 1e3
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Check, f64)> = Vec::new();
    let mut timed = |n: u32, name: &'static str, f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let r = f();
        results.push((n, name, r, t.elapsed().as_secs_f64()));
    };
    timed(1, "dephasing relation", &dephasing_relation);
    timed(2, "thermal population", &thermal_population);
    timed(3, "readout ringdown", &readout_ringdown);
    let t = Instant::now();
    let (c4, c5) = fock_decay();
    let dt = t.elapsed().as_secs_f64();
    results.push((4, "Fock-state memory lifetime", c4, dt));
    results.push((5, "lifetime enhancement", c5, 0.0));
    let mut timed = |n: u32, name: &'static str, f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let r = f();
        results.push((n, name, r, t.elapsed().as_secs_f64()));
    };
    timed(6, "sideband rate scaling", &sideband_scaling);
    timed(7, "superposition storage", &superposition_storage);
    let t = Instant::now();
    let (c8, c9) = z_fidelity_and_qpt();
    let dt = t.elapsed().as_secs_f64();
    results.push((8, "Z fidelity", c8, dt));
    results.push((9, "process tomography", c9, 0.0));
    let mut timed = |n: u32, name: &'static str, f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let r = f();
        results.push((n, name, r, t.elapsed().as_secs_f64()));
    };
    timed(10, "leakage model round trip", &leakage_round_trip);
    timed(11, "integrator invariants", &integrator_invariants);
    timed(12, "fit round trips", &fit_round_trips);

    let mut failed = 0;
    for (n, name, r, secs) in &results {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag}: {name}: {detail} [{secs:.1} s]");
    }
    println!("acceptance: {} of {} passed in {:.0} s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
