// Copyright 2026 The cavmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Conversions between linear lab units and the internal convention
//! (angular frequency in rad/µs, time in µs).

use std::f64::consts::TAU;

/// Linear GHz to rad/µs.
pub fn ghz(f: f64) -> f64 {
    TAU * f * 1e3
}

/// Linear MHz to rad/µs.
pub fn mhz(f: f64) -> f64 {
    TAU * f
}

/// Linear kHz to rad/µs.
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e-3
}

/// rad/µs to linear GHz.
pub fn to_ghz(w: f64) -> f64 {
    w / TAU * 1e-3
}

/// rad/µs to linear MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / TAU
}

/// rad/µs to linear kHz.
pub fn to_khz(w: f64) -> f64 {
    w / TAU * 1e3
}

/// Nanoseconds to µs.
pub fn ns(t: f64) -> f64 {
    t * 1e-3
}

/// µs to nanoseconds.
pub fn to_ns(t: f64) -> f64 {
    t * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((to_ghz(ghz(8.707546)) - 8.707546).abs() < 1e-12);
        assert!((to_mhz(mhz(53.0)) - 53.0).abs() < 1e-12);
        assert!((to_khz(khz(24.7)) - 24.7).abs() < 1e-12);
        assert!((to_ns(ns(20.0)) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn one_mhz_is_two_pi_per_microsecond() {
        assert!((mhz(1.0) - TAU).abs() < 1e-15);
        assert!((ghz(1.0) - 1e3 * TAU).abs() < 1e-9);
    }
}
