#![allow(dead_code)]

use num_complex::Complex64;
use proptest::test_runner::{Config, FileFailurePersistence, RngSeed};

/// Pinned seed for every randomized suite.
pub const SEED: u64 = 0x5eed_d0b1_e7a9;

pub fn pinned(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(SEED),
        failure_persistence: Some(Box::new(FileFailurePersistence::Off)),
        ..Config::default()
    }
}

pub fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Symmetric grid with spacing growing geometrically away from the origin.
pub fn geometric_grid(reach: f64, ratio: f64) -> Vec<f64> {
    let mut pos = vec![0.0];
    let mut x = 0.01;
    while x < reach {
        pos.push(x);
        x = (x * ratio).max(x + 0.01);
    }
    pos.push(reach);
    let mut grid: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
    grid.extend(pos.iter().skip(1));
    grid
}
