//! Small generated datasets that need no downloads.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeds::{self, Purpose};

pub const SINE_SAMPLES: usize = 1000;
pub const QUADRATIC_SAMPLES: usize = 400;
/// Standard deviation of the additive target noise.
pub const NOISE_STD: f64 = 0.005;
const BUNDLED_SEED: u64 = 20_240_101;

pub const NAMES: [&str; 2] = ["sine", "quadratic"];

/// `y = sin(3x) + e`, `x ~ U[-1, 1]`, `e ~ N(0, NOISE_STD^2)`.
pub fn sine(n: usize, seed: u64) -> Result<Dataset> {
    sine_with_noise(n, seed, NOISE_STD)
}

pub fn sine_with_noise(n: usize, seed: u64, noise_std: f64) -> Result<Dataset> {
    let mut rng = seeds::rng(seed, Purpose::Synthetic, &[1]);
    let noise = Normal::new(0.0, noise_std).expect("valid normal");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-1.0..=1.0);
        xs.push(x);
        ys.push((3.0 * x).sin() + noise.sample(&mut rng));
    }
    let mut ds = Dataset::new("sine", Matrix::column(&xs), ys, ids(n), "1")?;
    ds.provenance
        .notes
        .push(format!("generated: y = sin(3x) + N(0, {noise_std}^2), x ~ U[-1,1], n = {n}, seed = {seed}"));
    Ok(ds)
}

/// `y = x1^2 + 0.5 x1 x2 - x2^2 + e` on `[-1, 1]^2`.
pub fn quadratic(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = seeds::rng(seed, Purpose::Synthetic, &[2]);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    let mut data = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random_range(-1.0..=1.0);
        let b: f64 = rng.random_range(-1.0..=1.0);
        data.extend([a, b]);
        ys.push(a * a + 0.5 * a * b - b * b + noise.sample(&mut rng));
    }
    let mut ds = Dataset::new("quadratic", Matrix::from_vec(n, 2, data)?, ys, ids(n), "1")?;
    ds.provenance.notes.push(format!(
        "generated: y = x1^2 + 0.5 x1 x2 - x2^2 + N(0, {NOISE_STD}^2), x ~ U[-1,1]^2, n = {n}, seed = {seed}"
    ));
    Ok(ds)
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// One of the bundled datasets by name.
pub fn bundled(name: &str) -> Result<Dataset> {
    match name {
        "sine" => sine(SINE_SAMPLES, BUNDLED_SEED),
        "quadratic" => quadratic(QUADRATIC_SAMPLES, BUNDLED_SEED),
        other => Err(Error::InvalidConfig(format!(
            "unknown bundled dataset '{other}' (available: {})",
            NAMES.join(", ")
        ))),
    }
}
