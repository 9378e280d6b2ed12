// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cavmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cavmem")).args(args).output().expect("binary runs")
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.cfg")
}

/// Reference device with three storage levels and the given noise preset.
fn small_config(dir: &Path, noise: &str) -> String {
    let text = fs::read_to_string(reference_config())
        .unwrap()
        .replace("storage_levels = 5", "storage_levels = 3")
        .replace("decoherence = reference", &format!("decoherence = {noise}"));
    let path = dir.join("small.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_echoes_storage_frequency() {
    let o = cavmem(&["validate", "--config", reference_config().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("omega_s/2pi = 8.707546 GHz"), "{s}");
    assert!(s.contains("omega_s = 5.47111"), "{s}");
    assert!(s.trim_end().ends_with("valid"));
}

#[test]
fn validate_flags_t2_above_twice_t1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "t1_q = 1.32 us\nt2_q = 3.96 us\n").unwrap();
    let o = cavmem(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("breach: qubit T2"), "{}", stdout(&o));
}

#[test]
fn validate_suggests_a_step() {
    let o = cavmem(&["validate", "--dt", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    let line = s.lines().find(|l| l.contains("suggested dt")).expect("dt breach");
    let suggested: f64 = line.rsplit("<= ").next().unwrap().trim_end_matches(" ns").parse().unwrap();
    assert!(suggested > 0.0 && suggested < 0.5);
    let ok = cavmem(&["validate", "--dt", &format!("{}", suggested * 0.99)]);
    assert!(ok.status.success(), "{}", stdout(&ok));
}

#[test]
fn usage_errors_exit_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let unitless = dir.path().join("unitless.cfg");
    fs::write(&unitless, "omega_q = 6.234\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--experiment", "no-such-thing", "--out", o],
        vec!["run", "--experiment", "fock-decay", "--config", "/no/such/file.cfg", "--out", o],
        vec!["run", "--experiment", "fock-decay", "--config", unitless.to_str().unwrap(), "--out", o],
        vec!["run", "--experiment", "fock-decay", "--sweep", "bsb_amplitude_mhz=1:2:3", "--out", o],
        vec!["run", "--experiment", "fock-decay", "--shots", "100", "--out", o],
        vec!["run", "--experiment", "ringdown", "--out", o],
        vec!["run", "--experiment", "fock-decay", "--jobs", "0", "--out", o],
        vec!["run", "--experiment", "fit", "--model", "exponential", "--input", "/no/such.csv", "--out", o],
        vec!["run", "--out", o],
    ];
    for args in cases {
        let r = cavmem(&args);
        assert_eq!(r.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(!out.exists(), "{args:?} left outputs behind");
    }
}

#[test]
fn readout_ringdown_amplitude_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rd");
    let o = cavmem(&[
        "run", "--experiment", "ringdown", "--mode", "readout",
        "--config", reference_config().to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fits = json(out.join("fits.json"));
    let ns = fits["amplitude_decay_time_ns"].as_f64().unwrap();
    assert!((ns - 79.6).abs() < 0.01 * 79.6, "{ns}");
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let row = csv.lines().nth(2).unwrap();
    // 17 significant digits: one leading digit and 16 decimals
    let mantissa = row.split(',').nth(1).unwrap().split('e').next().unwrap();
    assert_eq!(mantissa.len(), 18, "{mantissa}");
}

#[test]
fn fock_decay_reports_storage_lifetime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "reference");
    let out = dir.path().join("fd");
    let o = cavmem(&["run", "--experiment", "fock-decay", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t1 = json(out.join("fits.json"))["t1_s_us"].as_f64().unwrap();
    assert!((t1 - 6.44).abs() < 0.1 * 6.44, "{t1}");
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap().lines().count(), 30);
}

#[test]
fn reruns_are_byte_identical_and_manifest_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "none");
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = cavmem(&[
            "run", "--experiment", "memory-protocol", "--config", &cfg, "--sweep",
            "prep_angle_rad=0:3.141592653589793:4", "--jobs", jobs, "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "2");
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "results.csv"), read(&b, "results.csv"));
    assert_eq!(read(&a, "fits.json"), read(&b, "fits.json"));

    let c = dir.path().join("c");
    let m = a.join("manifest.json");
    let o = cavmem(&["run", "--manifest", m.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&a, "results.csv"), read(&c, "results.csv"));
    assert_eq!(json(a.join("manifest.json"))["run"], json(c.join("manifest.json"))["run"]);

    let csv = String::from_utf8(read(&a, "results.csv")).unwrap();
    let first: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(first[1] >= 0.99, "noiseless p_g {}", first[1]);
}

#[test]
fn fit_experiment_recovers_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let data: String = (0..30)
        .map(|k| {
            let t = k as f64;
            format!("{t},{}\n", 0.9 * (-t / 6.44).exp() + 0.05)
        })
        .collect();
    let input = dir.path().join("decay.csv");
    fs::write(&input, format!("t_us,p\n{data}")).unwrap();
    let out = dir.path().join("fit");
    let o = cavmem(&[
        "run", "--experiment", "fit", "--model", "exponential", "--input", input.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fits = json(out.join("fits.json"));
    let t = fits["fit"]["params"].as_array().unwrap().iter().find(|p| p["name"] == "T").unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!((t - 6.44).abs() < 1e-6, "{t}");

    let flat = dir.path().join("flat.csv");
    fs::write(&flat, (0..20).map(|k| format!("{k},0.5\n")).collect::<String>()).unwrap();
    let o = cavmem(&[
        "run", "--experiment", "fit", "--model", "decaying-cosine", "--input", flat.to_str().unwrap(),
        "--out", dir.path().join("bad").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn sampled_qpt_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "none");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = cavmem(&[
            "run", "--experiment", "qpt", "--config", &cfg, "--shots", "500", "--seed", seed, "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("fits.json")).unwrap()
    };
    assert_eq!(run("a", "11"), run("b", "11"));
    assert_ne!(run("a", "11"), run("c", "12"));
}
