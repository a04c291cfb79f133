//! Dense feed-forward regression network.
//!
//! Hidden neurons each own a [`NafInstance`]; the output layer is affine.
//! Parameters flatten layer by layer (hidden layers first, output last), each
//! layer as its weights in row-major `(outputs x inputs)` order followed by
//! its biases. Training, serialization and the Jacobian all use this order.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::activation::{
    apply_recall_noise, make_smooth_table, NafInstance, PerturbationConfig, PerturbationMode,
    SmoothPerturbationTable, TableSource,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::seeds::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_layers,
            output_dim: 1,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "hidden layers must be a non-empty list of positive sizes, got {:?}",
                self.hidden_layers
            )));
        }
        if self.output_dim != 1 {
            return Err(Error::InvalidConfig(format!(
                "only scalar regression is supported (output_dim = 1), got {}",
                self.output_dim
            )));
        }
        Ok(())
    }

    pub fn total_hidden(&self) -> usize {
        self.hidden_layers.iter().sum()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().map(|(i, o)| o * (i + 1)).sum()
    }

    /// `(inputs, outputs)` of every layer including the output layer.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ins = std::iter::once(self.input_dim).chain(self.hidden_layers.iter().copied());
        let outs = self
            .hidden_layers
            .iter()
            .copied()
            .chain(std::iter::once(self.output_dim));
        ins.zip(outs)
    }

    /// Bracketed label, e.g. `[15 15]`.
    pub fn label(&self) -> String {
        hidden_label(&self.hidden_layers)
    }
}

pub fn hidden_label(hidden: &[usize]) -> String {
    let inner: Vec<String> = hidden.iter().map(usize::to_string).collect();
    format!("[{}]", inner.join(" "))
}

/// Parse `"[15 15]"`, `"15 15"` or `"15,15"` into layer sizes.
pub fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    let trimmed = s.trim().trim_start_matches('[').trim_end_matches(']');
    let sizes = trimmed
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad layer size '{t}' in '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!("bad architecture '{s}'")));
    }
    Ok(sizes)
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// row-major, `outputs x inputs`
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    #[inline]
    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.weights[j * self.inputs..(j + 1) * self.inputs];
            let mut z = self.biases[j];
            for (w, a) in row.iter().zip(input) {
                z += w * a;
            }
            *o = z;
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Additive recall noise for a forward pass. Sample `i` draws from its own
/// stream derived from `(seed, i)`, so noisy recall is reproducible and can
/// be split across threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallNoise {
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Layer>,
    nafs: Vec<NafInstance>,
}

impl Network {
    /// All-zero parameters with clean NAFs.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch.layer_shapes().map(|(i, o)| Layer::zeros(i, o)).collect();
        Ok(Self {
            arch: arch.clone(),
            layers,
            nafs: vec![NafInstance::Clean; arch.total_hidden()],
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.num_params()
            )));
        }
        if let Some(bad) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {bad} is {}", params[bad])));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Per-hidden-neuron NAFs, numbered layer by layer.
    pub fn nafs(&self) -> &[NafInstance] {
        &self.nafs
    }

    pub fn set_nafs(&mut self, nafs: Vec<NafInstance>) -> Result<()> {
        if nafs.len() != self.arch.total_hidden() {
            return Err(Error::Shape(format!(
                "{} NAFs given, network has {} hidden neurons",
                nafs.len(),
                self.arch.total_hidden()
            )));
        }
        self.nafs = nafs;
        Ok(())
    }

    /// Replace every NAF with a smooth-perturbed one realized from `config`,
    /// neuron `k` (flat index) using table `k`.
    pub fn realize_smooth_nafs(&mut self, config: &PerturbationConfig) -> Result<()> {
        let n = self.arch.total_hidden();
        let tables = par::map_range(n, |k| make_smooth_table(config, k as u64));
        let nafs = tables
            .into_iter()
            .map(|t| t.map(|t| NafInstance::smooth(config.amplitude, t)))
            .collect::<Result<Vec<_>>>()?;
        self.nafs = nafs;
        Ok(())
    }

    pub fn clear_nafs(&mut self) {
        self.nafs = vec![NafInstance::Clean; self.arch.total_hidden()];
    }

    fn hidden(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 1]
    }

    fn output(&self) -> &Layer {
        &self.layers[self.layers.len() - 1]
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    fn predict_row<R: Rng>(&self, row: &[f64], mut noise: Option<(f64, &mut R)>) -> Result<f64> {
        let mut a = row.to_vec();
        let mut naf_off = 0;
        for layer in self.hidden() {
            let mut z = vec![0.0; layer.outputs];
            layer.affine(&a, &mut z);
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = self.nafs[naf_off + j].eval(*zj);
            }
            if let Some((amp, rng)) = noise.as_mut() {
                apply_recall_noise(&mut z, *amp, &mut **rng);
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("hidden activation".into()));
            }
            naf_off += layer.outputs;
            a = z;
        }
        let mut out = [0.0];
        self.output().affine(&a, &mut out);
        if !out[0].is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(out[0])
    }

    /// Predictions for every row of `x`.
    pub fn forward(&self, x: &Matrix, noise: Option<&RecallNoise>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let out = par::map_range(x.rows(), |i| match noise {
            Some(n) => {
                let mut rng = seeds::rng(n.seed, Purpose::RecallNoise, &[i as u64]);
                self.predict_row(x.row(i), Some((n.amplitude, &mut rng)))
            }
            None => self.predict_row::<seeds::Rng>(x.row(i), None),
        });
        out.into_iter().collect()
    }

    /// Forward pass for one sample with an explicitly supplied noise stream.
    pub fn forward_row_with_stream<R: Rng>(&self, row: &[f64], amplitude: f64, rng: &mut R) -> Result<f64> {
        if row.len() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "sample has {} features, network expects {}",
                row.len(),
                self.arch.input_dim
            )));
        }
        self.predict_row(row, Some((amplitude, rng)))
    }

    /// Writes `d prediction / d theta` into `grad` and returns the prediction.
    fn gradient_row(&self, row: &[f64], grad: &mut [f64]) -> Result<f64> {
        let hidden = self.hidden();
        // forward, keeping pre-activations and activations
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(hidden.len());
        let mut act: Vec<Vec<f64>> = Vec::with_capacity(hidden.len() + 1);
        act.push(row.to_vec());
        let mut naf_off = 0;
        for layer in hidden {
            let mut z = vec![0.0; layer.outputs];
            layer.affine(act.last().expect("input present"), &mut z);
            let a: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(j, &zj)| self.nafs[naf_off + j].eval(zj))
                .collect();
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("hidden activation".into()));
            }
            naf_off += layer.outputs;
            pre.push(z);
            act.push(a);
        }
        let out_layer = self.output();
        let mut out = [0.0];
        out_layer.affine(act.last().expect("hidden activations"), &mut out);
        if !out[0].is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }

        // parameter offsets per layer
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.num_params();
        }

        // output layer: d out / d w_j = a_j, d out / d b = 1
        let last_act = act.last().expect("hidden activations");
        let o = offsets[self.layers.len() - 1];
        grad[o..o + last_act.len()].copy_from_slice(last_act);
        grad[o + last_act.len()] = 1.0;

        // back through hidden layers; `upstream[j]` = d out / d a_j of the current layer
        let mut upstream: Vec<f64> = (0..out_layer.inputs).map(|j| out_layer.weight(0, j)).collect();
        let mut naf_end = self.arch.total_hidden();
        for (li, layer) in hidden.iter().enumerate().rev() {
            let naf_start = naf_end - layer.outputs;
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&pre[li])
                .enumerate()
                .map(|(j, (u, &z))| u * self.nafs[naf_start + j].derivative(z))
                .collect();
            let input = &act[li];
            let o = offsets[li];
            for (j, &dj) in delta.iter().enumerate() {
                let w_row = &mut grad[o + j * layer.inputs..o + (j + 1) * layer.inputs];
                for (g, &a) in w_row.iter_mut().zip(input) {
                    *g = dj * a;
                }
            }
            let b = o + layer.outputs * layer.inputs;
            grad[b..b + layer.outputs].copy_from_slice(&delta);
            if li > 0 {
                upstream = (0..layer.inputs)
                    .map(|k| {
                        let mut s = 0.0;
                        for (j, &dj) in delta.iter().enumerate() {
                            s += layer.weight(j, k) * dj;
                        }
                        s
                    })
                    .collect();
            }
            naf_end = naf_start;
        }
        Ok(out[0])
    }

    /// Residuals `prediction - y` and their Jacobian (samples x parameters).
    pub fn jacobian(&self, x: &Matrix, y: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        let (r, j) = self.jacobian_rows(x, y)?;
        Ok((r, Matrix::from_vec(x.rows(), self.num_params(), j)?))
    }

    /// Same as [`Network::jacobian`] with the Jacobian as a flat row-major buffer.
    pub(crate) fn jacobian_rows(&self, x: &Matrix, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        if y.len() != x.rows() {
            return Err(Error::Shape(format!("{} targets for {} samples", y.len(), x.rows())));
        }
        let np = self.num_params();
        let mut jac = vec![0.0; x.rows() * np];
        let mut preds: Vec<Option<f64>> = vec![None; x.rows()];
        par::for_each_row_mut_with(&mut jac, np, &mut preds, |i, grad, pred| {
            *pred = self.gradient_row(x.row(i), grad).ok();
        });
        let preds = preds
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::NonFinite("forward pass during Jacobian evaluation".into()))?;
        let residuals = preds.iter().zip(y).map(|(p, t)| p - t).collect();
        Ok((residuals, jac))
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            format: NETWORK_FORMAT.to_string(),
            version: 1,
            architecture: self.arch.clone(),
            parameter_order: PARAMETER_ORDER.to_string(),
            parameters: self.params(),
            nafs: self.nafs.iter().map(NafDescriptor::from_instance).collect(),
        }
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        if file.format != NETWORK_FORMAT {
            return Err(Error::Data(format!("not a network file (format '{}')", file.format)));
        }
        let mut net = Network::zeros(&file.architecture)?;
        net.set_params(&file.parameters)?;
        let nafs = file
            .nafs
            .iter()
            .map(NafDescriptor::to_instance)
            .collect::<Result<Vec<_>>>()?;
        net.set_nafs(nafs)?;
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Nguyen-Widrow initialization for hidden layers (inputs assumed in
/// `[-1, 1]`, which also holds for tanh outputs feeding deeper layers) and
/// small uniform output weights. All NAFs are clean.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<Network> {
    let mut net = Network::zeros(arch)?;
    let mut rng = seeds::rng(seed, Purpose::Init, &[]);
    let n_layers = net.layers.len();
    for (li, layer) in net.layers.iter_mut().enumerate() {
        if li + 1 < n_layers {
            let s = layer.outputs as f64;
            let r = layer.inputs as f64;
            let magnitude = 0.7 * s.powf(1.0 / r);
            for j in 0..layer.outputs {
                let row = &mut layer.weights[j * layer.inputs..(j + 1) * layer.inputs];
                loop {
                    for w in row.iter_mut() {
                        *w = StandardNormal.sample(&mut rng);
                    }
                    let norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        row.iter_mut().for_each(|w| *w *= magnitude / norm);
                        break;
                    }
                }
            }
            if layer.outputs > 1 {
                for j in 0..layer.outputs {
                    let t = -1.0 + 2.0 * j as f64 / (layer.outputs - 1) as f64;
                    let sign = layer.weights[j * layer.inputs].signum();
                    layer.biases[j] = magnitude * t * sign;
                }
            }
        } else {
            let dist = Uniform::new_inclusive(-0.5, 0.5).expect("valid range");
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = dist.sample(&mut rng);
            }
        }
    }
    Ok(net)
}

const NETWORK_FORMAT: &str = "nafsim-network";
const PARAMETER_ORDER: &str =
    "layer by layer (hidden layers, then output); weights row-major (outputs x inputs), then biases";

/// Self-describing text form of a [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub parameter_order: String,
    pub parameters: Vec<f64>,
    pub nafs: Vec<NafDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NafDescriptor {
    Clean,
    /// Table regenerated bit-exactly from its generation parameters.
    SmoothGenerated { amplitude: f64, table: TableSource },
    /// Table stored inline (loaded tables cannot be regenerated).
    SmoothEmbedded {
        amplitude: f64,
        origin: String,
        x: Vec<f64>,
        rands: Vec<f64>,
        drands_dx: Vec<f64>,
    },
}

impl NafDescriptor {
    fn from_instance(naf: &NafInstance) -> Self {
        match naf {
            NafInstance::Clean => NafDescriptor::Clean,
            NafInstance::SmoothPerturbed { amplitude, table } => match table.source() {
                src @ TableSource::Generated { .. } => NafDescriptor::SmoothGenerated {
                    amplitude: *amplitude,
                    table: src.clone(),
                },
                TableSource::Loaded { origin } => NafDescriptor::SmoothEmbedded {
                    amplitude: *amplitude,
                    origin: origin.clone(),
                    x: table.xs().to_vec(),
                    rands: table.values().to_vec(),
                    drands_dx: table.derivative_values().to_vec(),
                },
            },
        }
    }

    fn to_instance(&self) -> Result<NafInstance> {
        match self {
            NafDescriptor::Clean => Ok(NafInstance::Clean),
            NafDescriptor::SmoothGenerated { amplitude, table } => match table {
                TableSource::Generated {
                    seed,
                    neuron_id,
                    sigma,
                    domain_lo,
                    domain_hi,
                    step,
                } => {
                    let cfg = PerturbationConfig {
                        mode: PerturbationMode::SmoothShape,
                        amplitude: *amplitude,
                        seed: *seed,
                        sigma: *sigma,
                        domain_lo: *domain_lo,
                        domain_hi: *domain_hi,
                        step: *step,
                    };
                    Ok(NafInstance::SmoothPerturbed {
                        amplitude: *amplitude,
                        table: Arc::new(make_smooth_table(&cfg, *neuron_id)?),
                    })
                }
                TableSource::Loaded { .. } => Err(Error::Data(
                    "a loaded table must be embedded, not referenced".into(),
                )),
            },
            NafDescriptor::SmoothEmbedded {
                amplitude,
                origin,
                x,
                rands,
                drands_dx,
            } => {
                let mut buf = Vec::new();
                {
                    let mut w = csv::Writer::from_writer(&mut buf);
                    w.write_record(["x", "rands", "drands_dx"])?;
                    for i in 0..x.len().min(rands.len()).min(drands_dx.len()) {
                        w.write_record([x[i].to_string(), rands[i].to_string(), drands_dx[i].to_string()])?;
                    }
                    w.flush().map_err(|e| Error::io("<embedded table>", e))?;
                }
                let table = SmoothPerturbationTable::read_csv(&buf[..], origin)?;
                Ok(NafInstance::smooth(*amplitude, table))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::eval_clean;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeds::rng(seed, Purpose::Synthetic, &[]);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Central differences of the residual with respect to each parameter.
    fn fd_jacobian(net: &Network, x: &Matrix, y: &[f64]) -> Matrix {
        let p0 = net.params();
        let mut j = Matrix::zeros(x.rows(), p0.len());
        let mut probe = net.clone();
        for k in 0..p0.len() {
            let h = 1e-6 * p0[k].abs().max(1.0);
            let mut p = p0.clone();
            p[k] = p0[k] + h;
            probe.set_params(&p).unwrap();
            let plus = probe.forward(x, None).unwrap();
            p[k] = p0[k] - h;
            probe.set_params(&p).unwrap();
            let minus = probe.forward(x, None).unwrap();
            for i in 0..x.rows() {
                j.set(i, k, ((plus[i] - y[i]) - (minus[i] - y[i])) / (2.0 * h));
            }
        }
        j
    }

    fn max_rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
            .fold(0.0, f64::max)
    }

    #[test]
    fn init_is_deterministic_with_expected_shapes() {
        let arch = Architecture::new(62, vec![30]).unwrap();
        let a = init_network(&arch, 1).unwrap();
        let b = init_network(&arch, 1).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.layers[0].weights.len(), 30 * 62);
        assert_eq!((a.layers[0].outputs, a.layers[0].inputs), (30, 62));
        assert_eq!((a.layers[1].outputs, a.layers[1].inputs), (1, 30));
        assert!(a.layers[0].weights.iter().all(|w| w.is_finite() && *w != 0.0));
        assert_eq!(a.num_params(), arch.num_params());
        assert!(a.nafs().iter().all(|n| *n == NafInstance::Clean));
        assert_ne!(init_network(&arch, 2).unwrap().params(), a.params());
    }

    #[test]
    fn zero_weights_predict_output_bias() {
        let arch = Architecture::new(3, vec![1]).unwrap();
        let mut net = Network::zeros(&arch).unwrap();
        let mut p = net.params();
        *p.last_mut().unwrap() = 0.75;
        net.set_params(&p).unwrap();
        let x = random_matrix(5, 3, 1);
        assert!(net.forward(&x, None).unwrap().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn hand_computed_two_neuron_net() {
        let arch = Architecture::new(2, vec![2]).unwrap();
        let mut net = Network::zeros(&arch).unwrap();
        // W = [[0.5, -1.2], [0.3, 0.8]], b = [0.1, -0.4], w_out = [1.5, -0.7], b_out = 0.2
        net.set_params(&[0.5, -1.2, 0.3, 0.8, 0.1, -0.4, 1.5, -0.7, 0.2]).unwrap();
        let x = Matrix::from_rows(&[vec![0.6, -0.25]]).unwrap();
        let h1 = (0.5f64 * 0.6 + -1.2 * -0.25 + 0.1).tanh();
        let h2 = (0.3f64 * 0.6 + 0.8 * -0.25 - 0.4).tanh();
        let expected = 1.5 * h1 - 0.7 * h2 + 0.2;
        let got = net.forward(&x, None).unwrap()[0];
        assert!((got - expected).abs() <= 1e-14);
    }

    #[test]
    fn zero_amplitude_noise_matches_noiseless() {
        let arch = Architecture::new(4, vec![6, 3]).unwrap();
        let net = init_network(&arch, 5).unwrap();
        let x = random_matrix(40, 4, 2);
        let clean = net.forward(&x, None).unwrap();
        let noisy = net
            .forward(&x, Some(&RecallNoise { amplitude: 0.0, seed: 9 }))
            .unwrap();
        assert_eq!(clean, noisy);
        let really_noisy = net
            .forward(&x, Some(&RecallNoise { amplitude: 0.1, seed: 9 }))
            .unwrap();
        assert_ne!(clean, really_noisy);
        let again = net
            .forward(&x, Some(&RecallNoise { amplitude: 0.1, seed: 9 }))
            .unwrap();
        assert_eq!(really_noisy, again);
    }

    #[test]
    fn explicit_stream_matches_seeded_noise() {
        let arch = Architecture::new(2, vec![3]).unwrap();
        let net = init_network(&arch, 1).unwrap();
        let x = random_matrix(3, 2, 3);
        let seeded = net.forward(&x, Some(&RecallNoise { amplitude: 0.2, seed: 4 })).unwrap();
        for (i, &expected) in seeded.iter().enumerate() {
            let mut rng = seeds::rng(4, Purpose::RecallNoise, &[i as u64]);
            let v = net.forward_row_with_stream(x.row(i), 0.2, &mut rng).unwrap();
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn shape_errors() {
        let arch = Architecture::new(3, vec![2]).unwrap();
        let net = init_network(&arch, 1).unwrap();
        assert!(net.forward(&random_matrix(2, 4, 1), None).is_err());
        assert!(net.jacobian(&random_matrix(2, 3, 1), &[0.0]).is_err());
        assert!(Architecture::new(3, vec![]).is_err());
        assert!(Architecture::new(0, vec![2]).is_err());
        let mut net2 = net.clone();
        assert!(net2.set_params(&[0.0]).is_err());
        let mut p = net.params();
        p[0] = f64::NAN;
        assert!(net2.set_params(&p).is_err());
    }

    #[test]
    fn non_finite_input_is_reported() {
        let arch = Architecture::new(1, vec![2]).unwrap();
        let net = init_network(&arch, 1).unwrap();
        let x = Matrix::column(&[f64::NAN]);
        assert!(matches!(net.forward(&x, None), Err(Error::NonFinite(_))));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for (hidden, seed) in [(vec![5], 1u64), (vec![4, 3], 2), (vec![3, 2, 2], 3)] {
            let arch = Architecture::new(3, hidden).unwrap();
            let net = init_network(&arch, seed).unwrap();
            let x = random_matrix(20, 3, seed + 10);
            let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.1).sin()).collect();
            let (r, j) = net.jacobian(&x, &y).unwrap();
            let pred = net.forward(&x, None).unwrap();
            for i in 0..20 {
                assert_eq!(r[i], pred[i] - y[i]);
            }
            let fd = fd_jacobian(&net, &x, &y);
            let err = max_rel_err(&j, &fd);
            assert!(err < 1e-6, "{arch}: max relative error {err}");
        }
    }

    #[test]
    fn jacobian_with_smooth_nafs_matches_finite_differences() {
        let arch = Architecture::new(2, vec![4]).unwrap();
        let mut net = init_network(&arch, 3).unwrap();
        net.realize_smooth_nafs(&PerturbationConfig::smooth(0.1, 11)).unwrap();
        let x = random_matrix(10, 2, 4);
        let y = vec![0.0; 10];
        let (_, j) = net.jacobian(&x, &y).unwrap();
        let fd = fd_jacobian(&net, &x, &y);
        // NAF derivative comes from the interpolated derivative table, so the
        // agreement is limited by the table resolution
        assert!(max_rel_err(&j, &fd) < 1e-2);
    }

    #[test]
    fn output_bias_column_is_ones() {
        let arch = Architecture::new(3, vec![4, 2]).unwrap();
        let net = init_network(&arch, 7).unwrap();
        let x = random_matrix(8, 3, 1);
        let (_, j) = net.jacobian(&x, &[0.0; 8]).unwrap();
        let last = j.cols() - 1;
        assert!((0..8).all(|i| j.get(i, last) == 1.0));
    }

    #[test]
    fn zero_output_weights_zero_hidden_columns() {
        let arch = Architecture::new(3, vec![4]).unwrap();
        let mut net = init_network(&arch, 7).unwrap();
        let mut p = net.params();
        let out_start = 4 * 3 + 4;
        for v in &mut p[out_start..out_start + 4] {
            *v = 0.0;
        }
        net.set_params(&p).unwrap();
        let x = random_matrix(6, 3, 1);
        let (_, j) = net.jacobian(&x, &[0.0; 6]).unwrap();
        for i in 0..6 {
            assert!(j.row(i)[..out_start].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn smooth_nafs_at_zero_amplitude_match_clean() {
        let arch = Architecture::new(3, vec![5, 2]).unwrap();
        let clean = init_network(&arch, 2).unwrap();
        let mut perturbed = clean.clone();
        perturbed.realize_smooth_nafs(&PerturbationConfig::smooth(0.0, 1)).unwrap();
        let x = random_matrix(15, 3, 8);
        let y = vec![0.5; 15];
        assert_eq!(clean.forward(&x, None).unwrap(), perturbed.forward(&x, None).unwrap());
        assert_eq!(clean.jacobian(&x, &y).unwrap(), perturbed.jacobian(&x, &y).unwrap());
    }

    #[test]
    fn serialization_round_trip_is_bit_exact() {
        let arch = Architecture::new(3, vec![4, 3]).unwrap();
        let mut net = init_network(&arch, 9).unwrap();
        net.realize_smooth_nafs(&PerturbationConfig::smooth(0.07, 21)).unwrap();
        // one neuron with a loaded table
        let mut nafs = net.nafs().to_vec();
        let csv = "x,rands,drands_dx\n-2,0,0.5\n0,1,0\n2,0.5,-0.25\n";
        let loaded = SmoothPerturbationTable::read_csv(csv.as_bytes(), "iv.csv").unwrap();
        nafs[2] = NafInstance::smooth(0.05, loaded);
        net.set_nafs(nafs).unwrap();

        let text = net.to_json().unwrap();
        let back = Network::from_json(&text).unwrap();
        assert_eq!(back, net);
        let x = random_matrix(12, 3, 3);
        let a = net.forward(&x, None).unwrap();
        let b = back.forward(&x, None).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn architecture_labels() {
        assert_eq!(Architecture::new(2, vec![15, 15]).unwrap().label(), "[15 15]");
        assert_eq!(parse_hidden("[10 10 10 10]").unwrap(), vec![10, 10, 10, 10]);
        assert_eq!(parse_hidden("30").unwrap(), vec![30]);
        assert_eq!(parse_hidden("20,20").unwrap(), vec![20, 20]);
        assert!(parse_hidden("[]").is_err());
        assert!(parse_hidden("a b").is_err());
    }

    #[test]
    fn clean_net_uses_tanh() {
        let arch = Architecture::new(1, vec![1]).unwrap();
        let mut net = Network::zeros(&arch).unwrap();
        net.set_params(&[2.0, 0.5, 1.0, 0.0]).unwrap();
        let x = Matrix::column(&[0.3]);
        assert_eq!(net.forward(&x, None).unwrap()[0], eval_clean(2.0 * 0.3 + 0.5));
    }
}
