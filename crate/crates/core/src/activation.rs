//! Neuron activation functions (NAFs): the clean tanh sigmoid, its smooth
//! per-neuron shape perturbation, and additive recall-time noise.
//!
//! A smooth perturbation is a tabulated function `rands(x)` with values in
//! `[0, 1]`, realized once per neuron from a seed and then frozen. The
//! perturbed NAF is `tanh(x) + A * (rands(x) - 0.5)`; random recall noise is
//! `tanh(x) + A * (r - 0.5)` with a fresh uniform `r` on every evaluation.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{self, Purpose};

/// `tanh(x)`. Saturates to exactly `±1` for large `|x|`.
#[inline]
pub fn eval_clean(x: f64) -> f64 {
    x.tanh()
}

/// `1 - tanh(x)^2`, never negative.
#[inline]
pub fn eval_clean_derivative(x: f64) -> f64 {
    let t = x.tanh();
    (1.0 - t * t).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    None,
    RandomNoise,
    SmoothShape,
}

impl PerturbationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationMode::None => "none",
            PerturbationMode::RandomNoise => "random-noise",
            PerturbationMode::SmoothShape => "smooth-shape",
        }
    }
}

impl std::str::FromStr for PerturbationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PerturbationMode::None),
            "random-noise" | "random" | "noise" => Ok(PerturbationMode::RandomNoise),
            "smooth-shape" | "smooth" => Ok(PerturbationMode::SmoothShape),
            other => Err(Error::InvalidConfig(format!("unknown perturbation mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for PerturbationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_SIGMA: f64 = 0.2;
pub const DEFAULT_DOMAIN: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub mode: PerturbationMode,
    pub amplitude: f64,
    pub seed: u64,
    /// Gaussian smoothing width, in pre-activation units.
    pub sigma: f64,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub step: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            mode: PerturbationMode::None,
            amplitude: 0.0,
            seed: 0,
            sigma: DEFAULT_SIGMA,
            domain_lo: DEFAULT_DOMAIN.0,
            domain_hi: DEFAULT_DOMAIN.1,
            step: DEFAULT_STEP,
        }
    }
}

impl PerturbationConfig {
    pub fn smooth(amplitude: f64, seed: u64) -> Self {
        Self {
            mode: PerturbationMode::SmoothShape,
            amplitude,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return bad(format!("amplitude must be finite and >= 0, got {}", self.amplitude));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.domain_lo.is_finite() && self.domain_hi.is_finite() && self.domain_lo < self.domain_hi)
        {
            return bad(format!(
                "table domain must satisfy lo < hi, got [{}, {}]",
                self.domain_lo, self.domain_hi
            ));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("table step must be > 0, got {}", self.step));
        }
        Ok(())
    }

    /// Number of grid points, checking that the step tiles the domain.
    pub fn grid_len(&self) -> Result<usize> {
        let span = (self.domain_hi - self.domain_lo) / self.step;
        let intervals = span.round();
        if (span - intervals).abs() > 1e-6 || intervals < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "step {} does not tile [{}, {}] into at least one whole interval",
                self.step, self.domain_lo, self.domain_hi
            )));
        }
        Ok(intervals as usize + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TableSource {
    Generated {
        seed: u64,
        neuron_id: u64,
        sigma: f64,
        domain_lo: f64,
        domain_hi: f64,
        step: f64,
    },
    /// Read from a CSV, e.g. a measured I-V curve.
    Loaded { origin: String },
}

/// A realized smooth random function `rands(x)` and its derivative on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPerturbationTable {
    xs: Vec<f64>,
    values: Vec<f64>,
    derivative_values: Vec<f64>,
    /// Set only for generated tables, whose grid is exactly `lo + i * step`.
    uniform_step: Option<f64>,
    source: TableSource,
}

enum Cell {
    Below,
    Above,
    Inside(usize, f64),
}

impl SmoothPerturbationTable {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivative_values(&self) -> &[f64] {
        &self.derivative_values
    }

    pub fn domain_lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn domain_hi(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn step(&self) -> Option<f64> {
        self.uniform_step
    }

    pub fn source(&self) -> &TableSource {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    fn locate(&self, x: f64) -> Cell {
        let n = self.xs.len();
        if x < self.xs[0] {
            return Cell::Below;
        }
        if x > self.xs[n - 1] {
            return Cell::Above;
        }
        let i = match self.uniform_step {
            Some(step) => (((x - self.xs[0]) / step).floor() as usize).min(n - 2),
            None => self.xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2),
        };
        let frac = ((x - self.xs[i]) / (self.xs[i + 1] - self.xs[i])).clamp(0.0, 1.0);
        Cell::Inside(i, frac)
    }

    /// Linear interpolation of `rands`; clamps to the boundary values outside the grid.
    pub fn interp(&self, x: f64) -> f64 {
        match self.locate(x) {
            Cell::Below => self.values[0],
            Cell::Above => self.values[self.values.len() - 1],
            Cell::Inside(i, t) => lerp(self.values[i], self.values[i + 1], t),
        }
    }

    /// Linear interpolation of `d rands / dx`; zero outside the grid.
    pub fn interp_derivative(&self, x: f64) -> f64 {
        match self.locate(x) {
            Cell::Below | Cell::Above => 0.0,
            Cell::Inside(i, t) => lerp(self.derivative_values[i], self.derivative_values[i + 1], t),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.xs.len();
        if n < 2 {
            return Err(Error::Data(format!("a table needs at least 2 points, got {n}")));
        }
        if self.values.len() != n || self.derivative_values.len() != n {
            return Err(Error::Data("table columns have different lengths".into()));
        }
        if !self.xs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Data("table grid must be strictly increasing".into()));
        }
        if !self
            .xs
            .iter()
            .chain(&self.values)
            .chain(&self.derivative_values)
            .all(|v| v.is_finite())
        {
            return Err(Error::Data("table contains non-finite entries".into()));
        }
        if self.values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Data("table values must lie in [0, 1]".into()));
        }
        let (lo, hi) = min_max(&self.values);
        if lo != 0.0 || hi != 1.0 {
            return Err(Error::Data(format!(
                "table values must span exactly [0, 1], got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Write as CSV with columns `x,rands,drands_dx`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "rands", "drands_dx"])?;
        for i in 0..self.xs.len() {
            w.write_record([
                self.xs[i].to_string(),
                self.values[i].to_string(),
                self.derivative_values[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<table csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Read a `x,rands,drands_dx` CSV. Any strictly increasing grid is accepted;
    /// the value invariants are re-checked.
    pub fn read_csv<R: Read>(reader: R, origin: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("{origin}: missing column '{name}'")))
        };
        let (cx, cv, cd) = (col("x")?, col("rands")?, col("drands_dx")?);
        let mut xs = Vec::new();
        let mut values = Vec::new();
        let mut derivative_values = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                let cell = rec.get(c).unwrap_or("");
                cell.parse::<f64>()
                    .map_err(|_| Error::parse(origin, row + 2, format!("not a number: '{cell}'")))
            };
            xs.push(num(cx)?);
            values.push(num(cv)?);
            derivative_values.push(num(cd)?);
        }
        let table = Self {
            xs,
            values,
            derivative_values,
            uniform_step: None,
            source: TableSource::Loaded {
                origin: origin.to_string(),
            },
        };
        table.validate()?;
        Ok(table)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = a + t * (b - a);
    // keep rounding from leaving the segment's range
    v.clamp(a.min(b), a.max(b))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Half-sample symmetric reflection of an index into `0..n`.
#[inline]
fn reflect(idx: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = idx.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Raw i.i.d. uniform samples behind a table.
pub(crate) fn raw_samples(seed: u64, neuron_id: u64, n: usize) -> Vec<f64> {
    let mut rng = seeds::rng(seed, Purpose::SmoothTable, &[neuron_id]);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Realize the smooth perturbation of neuron `neuron_id`.
///
/// Uniform samples on the grid are convolved with a normalized Gaussian of
/// width `sigma` (truncated at `4 sigma`, reflected at the ends), then mapped
/// affinely onto `[0, 1]`. The derivative column convolves the same samples
/// with the analytic kernel derivative and takes the same scale factor.
pub fn make_smooth_table(config: &PerturbationConfig, neuron_id: u64) -> Result<SmoothPerturbationTable> {
    if config.mode != PerturbationMode::SmoothShape {
        return Err(Error::InvalidConfig(format!(
            "smooth tables need mode smooth-shape, got {}",
            config.mode
        )));
    }
    config.validate()?;
    let n = config.grid_len()?;
    if n < 2 {
        return Err(Error::InvalidConfig("table grid needs at least 2 points".into()));
    }
    if config.sigma < config.step {
        return Err(Error::InvalidConfig(format!(
            "sigma {} is below the grid step {}; the table would be undersmoothed",
            config.sigma, config.step
        )));
    }

    let raw = raw_samples(config.seed, neuron_id, n);

    let sigma_pts = config.sigma / config.step;
    let radius = (4.0 * sigma_pts).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| {
            let u = k as f64 / sigma_pts;
            (-0.5 * u * u).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let sigma2 = config.sigma * config.sigma;
    // d/dx g(x - x_j) at x - x_j = k * step
    let dkernel: Vec<f64> = (-radius..=radius)
        .zip(&kernel)
        .map(|(k, g)| -(k as f64 * config.step) / sigma2 * g)
        .collect();

    let mut smooth = vec![0.0; n];
    let mut dsmooth = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        let mut ds = 0.0;
        for (j, k) in (-radius..=radius).enumerate() {
            let r = raw[reflect(i as isize - k, n)];
            s += kernel[j] * r;
            ds += dkernel[j] * r;
        }
        smooth[i] = s / norm;
        dsmooth[i] = ds / norm;
    }

    let (lo, hi) = min_max(&smooth);
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::NonFinite("smoothed samples are constant; cannot rescale".into()));
    }
    let values: Vec<f64> = smooth.iter().map(|&s| (s - lo) / range).collect();
    let derivative_values: Vec<f64> = dsmooth.iter().map(|&d| d / range).collect();
    let xs: Vec<f64> = (0..n).map(|i| config.domain_lo + i as f64 * config.step).collect();

    let table = SmoothPerturbationTable {
        xs,
        values,
        derivative_values,
        uniform_step: Some(config.step),
        source: TableSource::Generated {
            seed: config.seed,
            neuron_id,
            sigma: config.sigma,
            domain_lo: config.domain_lo,
            domain_hi: config.domain_hi,
            step: config.step,
        },
    };
    debug_assert!(table.validate().is_ok());
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NafKind {
    Clean,
    SmoothPerturbed,
}

/// The activation function owned by one hidden neuron.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NafInstance {
    #[default]
    Clean,
    SmoothPerturbed {
        amplitude: f64,
        table: Arc<SmoothPerturbationTable>,
    },
}

impl NafInstance {
    pub fn smooth(amplitude: f64, table: SmoothPerturbationTable) -> Self {
        NafInstance::SmoothPerturbed {
            amplitude,
            table: Arc::new(table),
        }
    }

    pub fn kind(&self) -> NafKind {
        match self {
            NafInstance::Clean => NafKind::Clean,
            NafInstance::SmoothPerturbed { .. } => NafKind::SmoothPerturbed,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match self {
            NafInstance::Clean => 0.0,
            NafInstance::SmoothPerturbed { amplitude, .. } => *amplitude,
        }
    }

    pub fn table(&self) -> Option<&SmoothPerturbationTable> {
        match self {
            NafInstance::Clean => None,
            NafInstance::SmoothPerturbed { table, .. } => Some(table),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            NafInstance::SmoothPerturbed { amplitude, table } if *amplitude != 0.0 => {
                eval_clean(x) + amplitude * (table.interp(x) - 0.5)
            }
            _ => eval_clean(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            NafInstance::SmoothPerturbed { amplitude, table } if *amplitude != 0.0 => {
                eval_clean_derivative(x) + amplitude * table.interp_derivative(x)
            }
            _ => eval_clean_derivative(x),
        }
    }
}

pub fn eval_naf(naf: &NafInstance, x: f64) -> f64 {
    naf.eval(x)
}

pub fn eval_naf_derivative(naf: &NafInstance, x: f64) -> f64 {
    naf.derivative(x)
}

/// Add `amplitude * (r - 0.5)` with a fresh uniform `r` to every element.
pub fn apply_recall_noise<R: Rng + ?Sized>(values: &mut [f64], amplitude: f64, rng: &mut R) {
    if amplitude == 0.0 {
        return;
    }
    for v in values.iter_mut() {
        let r: f64 = rng.random();
        *v += amplitude * (r - 0.5);
    }
}
