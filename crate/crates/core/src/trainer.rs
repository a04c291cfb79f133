//! Levenberg-Marquardt training with validation-based early stopping, and
//! retraining against realized (perturbed) activation functions.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::{PerturbationConfig, PerturbationMode};
use crate::error::{Error, Result};
use crate::features::DimScale;
use crate::matrix::Matrix;
use crate::network::{init_network, Network, RecallNoise};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub mu0: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    pub mu_max: f64,
    pub max_validation_failures: usize,
    /// Stop once the MSE gradient norm falls to this value.
    pub min_grad: f64,
    /// Seed for parameter initialization.
    pub seed: u64,
    /// Retraining starts from the trained parameters (true) or re-initializes (false).
    pub warm_start: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            mu0: 1e-3,
            mu_inc: 10.0,
            mu_dec: 0.1,
            mu_max: 1e10,
            max_validation_failures: 6,
            min_grad: 1e-7,
            seed: 0,
            warm_start: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.max_epochs < 1 {
            return bad("max_epochs must be >= 1");
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return bad("mu0 must be > 0");
        }
        if !(self.mu_inc > 1.0 && self.mu_inc.is_finite()) {
            return bad("mu_inc must be > 1");
        }
        if !(self.mu_dec > 0.0 && self.mu_dec < 1.0) {
            return bad("mu_dec must lie in (0, 1)");
        }
        if !(self.mu_max >= self.mu0) {
            return bad("mu_max must be >= mu0");
        }
        if self.max_validation_failures < 1 {
            return bad("max_validation_failures must be >= 1");
        }
        if !(self.min_grad >= 0.0) {
            return bad("min_grad must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxEpochs,
    ValidationFailures,
    MuOverflow,
    GradientTolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub initial_train_mse: f64,
    pub initial_validation_mse: Option<f64>,
    /// One entry per epoch, epoch `k` at index `k - 1`.
    pub train_mse_history: Vec<f64>,
    pub validation_mse_history: Vec<Option<f64>>,
    /// Damping in effect when the epoch ended.
    pub mu_history: Vec<f64>,
    pub accepted: Vec<bool>,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were returned; 0 is the starting point.
    pub best_epoch: usize,
    /// Set for retraining runs.
    pub warm_start: Option<bool>,
}

impl TrainReport {
    pub fn best_validation_mse(&self) -> Option<f64> {
        if self.best_epoch == 0 {
            self.initial_validation_mse
        } else {
            self.validation_mse_history[self.best_epoch - 1]
        }
    }

    pub fn final_train_mse(&self) -> f64 {
        if self.best_epoch == 0 {
            self.initial_train_mse
        } else {
            self.train_mse_history[self.best_epoch - 1]
        }
    }

    /// Training MSE restricted to accepted epochs, preceded by the starting value.
    pub fn accepted_train_mse(&self) -> Vec<f64> {
        std::iter::once(self.initial_train_mse)
            .chain(
                self.train_mse_history
                    .iter()
                    .zip(&self.accepted)
                    .filter(|(_, a)| **a)
                    .map(|(m, _)| *m),
            )
            .collect()
    }

    /// CSV with columns `epoch,train_mse,val_mse,mu,accepted`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_mse", "val_mse", "mu", "accepted"])?;
        for k in 0..self.epochs_run {
            w.write_record([
                (k + 1).to_string(),
                self.train_mse_history[k].to_string(),
                self.validation_mse_history[k].map_or(String::new(), |v| v.to_string()),
                self.mu_history[k].to_string(),
                self.accepted[k].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<train report>", e))?;
        Ok(())
    }
}

/// A least-squares objective `sum r_i(theta)^2`.
pub trait LeastSquaresProblem {
    fn num_residuals(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    fn residuals(&self) -> Result<Vec<f64>>;
    /// Residuals and the row-major Jacobian (residuals x parameters).
    fn residuals_and_jacobian(&self) -> Result<(Vec<f64>, Vec<f64>)>;
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// `J^T J` and `J^T r` from a row-major Jacobian.
fn normal_equations(residuals: &[f64], jac_rows: Vec<f64>, n_params: usize) -> (DMatrix<f64>, DVector<f64>) {
    let m = residuals.len();
    // a row-major m x n buffer is a column-major n x m matrix, i.e. J^T
    let jt = DMatrix::from_vec(n_params, m, jac_rows);
    let grad = &jt * DVector::from_column_slice(residuals);

    // column blocks of the Gram matrix are independent; the partition depends
    // only on the problem size so results do not depend on the thread count
    const BLOCK: usize = 64;
    let n_blocks = n_params.div_ceil(BLOCK);
    let blocks = par::map_range(n_blocks, |b| {
        let start = b * BLOCK;
        let len = BLOCK.min(n_params - start);
        &jt * jt.rows(start, len).transpose()
    });
    let mut gram = DMatrix::zeros(n_params, n_params);
    for (b, block) in blocks.into_iter().enumerate() {
        gram.columns_mut(b * BLOCK, block.ncols()).copy_from(&block);
    }
    // mirror the lower triangle so the matrix is exactly symmetric
    for j in 0..n_params {
        for i in 0..j {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    (gram, grad)
}

/// Levenberg-Marquardt minimization with early stopping.
///
/// `validation` returns the validation MSE for the problem's current
/// parameters, or `None` when there is no validation set (early stopping is
/// then disabled and the last accepted parameters are kept). On return the
/// problem holds the parameters of the best epoch.
pub fn minimize<P, V>(problem: &mut P, config: &TrainConfig, mut validation: V) -> Result<TrainReport>
where
    P: LeastSquaresProblem,
    V: FnMut(&P) -> Result<Option<f64>>,
{
    config.validate()?;
    let m = problem.num_residuals();
    if m == 0 {
        return Err(Error::Shape("no training samples".into()));
    }
    let mut params = problem.params();
    let n_params = params.len();
    let (mut residuals, mut jac) = problem.residuals_and_jacobian()?;
    let mut sse = sum_sq(&residuals);
    if !sse.is_finite() {
        return Err(Error::NonFinite("training residuals at the starting point".into()));
    }
    let initial_train_mse = sse / m as f64;
    let initial_validation_mse = validation(problem)?;

    let mut best_epoch = 0;
    let mut best_params = params.clone();
    let mut best_val = initial_validation_mse;
    let mut failures = 0;
    let mut mu = config.mu0;

    let mut report = TrainReport {
        epochs_run: 0,
        initial_train_mse,
        initial_validation_mse,
        train_mse_history: Vec::new(),
        validation_mse_history: Vec::new(),
        mu_history: Vec::new(),
        accepted: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_epoch: 0,
        warm_start: None,
    };

    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=config.max_epochs {
        let (gram, grad) = normal_equations(&residuals, std::mem::take(&mut jac), n_params);
        let grad_norm = 2.0 * grad.norm() / m as f64;
        if grad_norm <= config.min_grad {
            stop = StopReason::GradientTolerance;
            break;
        }

        let mut accepted = false;
        let mut any_factorized = false;
        loop {
            let mut a = gram.clone();
            for i in 0..n_params {
                a[(i, i)] += mu;
            }
            if let Some(chol) = a.cholesky() {
                any_factorized = true;
                let delta = chol.solve(&grad);
                let trial: Vec<f64> = params.iter().zip(delta.iter()).map(|(p, d)| p - d).collect();
                if problem.set_params(&trial).is_ok() {
                    if let Ok(r) = problem.residuals() {
                        let trial_sse = sum_sq(&r);
                        if trial_sse.is_finite() && trial_sse < sse {
                            params = trial;
                            sse = trial_sse;
                            accepted = true;
                            mu = (mu * config.mu_dec).max(f64::MIN_POSITIVE);
                            break;
                        }
                    }
                }
            }
            mu *= config.mu_inc;
            if mu > config.mu_max {
                break;
            }
        }

        if !accepted {
            problem.set_params(&params)?;
            if !any_factorized {
                return Err(Error::Singular { mu: config.mu_max });
            }
            report.train_mse_history.push(sse / m as f64);
            report.validation_mse_history.push(best_val_or_current(&report, initial_validation_mse));
            report.mu_history.push(mu);
            report.accepted.push(false);
            report.epochs_run = epoch;
            stop = StopReason::MuOverflow;
            break;
        }

        let val = validation(problem)?;
        report.train_mse_history.push(sse / m as f64);
        report.validation_mse_history.push(val);
        report.mu_history.push(mu);
        report.accepted.push(true);
        report.epochs_run = epoch;

        match (val, best_val) {
            (Some(v), Some(b)) => {
                if v < b {
                    best_val = Some(v);
                    best_epoch = epoch;
                    best_params.clone_from(&params);
                    failures = 0;
                } else if v > b {
                    failures += 1;
                }
            }
            _ => {
                best_epoch = epoch;
                best_params.clone_from(&params);
            }
        }
        if best_val.is_some() && failures >= config.max_validation_failures {
            stop = StopReason::ValidationFailures;
            break;
        }
        if epoch == config.max_epochs {
            break;
        }
        let (r, j) = problem.residuals_and_jacobian()?;
        residuals = r;
        jac = j;
    }

    problem.set_params(&best_params)?;
    report.stop_reason = stop;
    report.best_epoch = best_epoch;
    Ok(report)
}

fn best_val_or_current(report: &TrainReport, initial: Option<f64>) -> Option<f64> {
    report.validation_mse_history.last().copied().unwrap_or(initial)
}

/// Network regression as a least-squares problem.
pub struct NetworkProblem<'a> {
    pub net: Network,
    x: &'a Matrix,
    y: &'a [f64],
}

impl<'a> NetworkProblem<'a> {
    pub fn new(net: Network, x: &'a Matrix, y: &'a [f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!("{} targets for {} samples", y.len(), x.rows())));
        }
        if x.cols() != net.architecture().input_dim {
            return Err(Error::Shape(format!(
                "data has {} features, network expects {}",
                x.cols(),
                net.architecture().input_dim
            )));
        }
        Ok(Self { net, x, y })
    }
}

impl LeastSquaresProblem for NetworkProblem<'_> {
    fn num_residuals(&self) -> usize {
        self.y.len()
    }

    fn params(&self) -> Vec<f64> {
        self.net.params()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.set_params(params)
    }

    fn residuals(&self) -> Result<Vec<f64>> {
        let pred = self.net.forward(self.x, None)?;
        Ok(pred.iter().zip(self.y).map(|(p, t)| p - t).collect())
    }

    fn residuals_and_jacobian(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.net.jacobian_rows(self.x, self.y)
    }
}

pub fn mse(net: &Network, x: &Matrix, y: &[f64]) -> Result<f64> {
    let pred = net.forward(x, None)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
}

/// Train `net` with Levenberg-Marquardt, stopping early on the validation set.
///
/// The network's NAFs (clean or smooth-perturbed) are used in both the
/// forward pass and the Jacobian. Recall noise is never part of training:
/// it exists only as an argument to [`Network::forward`]. Returns the
/// parameters of the epoch with the lowest validation MSE.
pub fn train_lm(
    net: Network,
    train_x: &Matrix,
    train_y: &[f64],
    val_x: &Matrix,
    val_y: &[f64],
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if val_x.rows() != val_y.len() {
        return Err(Error::Shape(format!(
            "{} validation targets for {} samples",
            val_y.len(),
            val_x.rows()
        )));
    }
    let mut problem = NetworkProblem::new(net, train_x, train_y)?;
    let report = minimize(&mut problem, config, |p| {
        if val_y.is_empty() {
            Ok(None)
        } else {
            mse(&p.net, val_x, val_y).map(Some)
        }
    })?;
    Ok((problem.net, report))
}

/// Scaled training and validation data.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train_x: Matrix,
    pub train_y: Vec<f64>,
    pub val_x: Matrix,
    pub val_y: Vec<f64>,
}

/// Retrain with one realized smooth-perturbed NAF per hidden neuron.
///
/// Neuron `k` (flat index) gets table `k` of `perturbation`, so the NAFs are
/// identical in every epoch. Parameters warm-start from `trained` unless
/// `config.warm_start` is false, in which case they are re-initialized from
/// `config.seed`. The returned network carries the realized NAFs.
pub fn retrain_with_realized_nafs(
    trained: &Network,
    perturbation: &PerturbationConfig,
    data: &TrainData,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if perturbation.mode != PerturbationMode::SmoothShape {
        return Err(Error::InvalidConfig(format!(
            "retraining needs smooth-shape perturbations, got {}",
            perturbation.mode
        )));
    }
    let mut net = trained.clone();
    if !config.warm_start {
        let fresh = init_network(trained.architecture(), config.seed)?;
        net.set_params(&fresh.params())?;
    }
    net.realize_smooth_nafs(perturbation)?;
    let (net, mut report) = train_lm(net, &data.train_x, &data.train_y, &data.val_x, &data.val_y, config)?;
    report.warm_start = Some(config.warm_start);
    Ok((net, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    /// `None` when either vector is constant.
    pub pearson_r: Option<f64>,
}

pub fn metrics(pred: &[f64], y: &[f64]) -> Result<Metrics> {
    if pred.len() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            y.len()
        )));
    }
    let n = y.len() as f64;
    let rmse = (pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt();
    Ok(Metrics {
        rmse,
        pearson_r: pearson(pred, y),
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Predictions in original target units.
pub fn predict(net: &Network, x: &Matrix, target: &DimScale, noise: Option<&RecallNoise>) -> Result<Vec<f64>> {
    let mut pred = net.forward(x, noise)?;
    for p in &mut pred {
        *p = target.invert(*p);
    }
    Ok(pred)
}

/// RMSE and Pearson R of `net` on scaled inputs `x` against `y` in original units.
pub fn evaluate(
    net: &Network,
    x: &Matrix,
    y: &[f64],
    target: &DimScale,
    noise: Option<&RecallNoise>,
) -> Result<Metrics> {
    metrics(&predict(net, x, target, noise)?, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;

    /// r = A p - b
    struct Linear {
        a: Matrix,
        b: Vec<f64>,
        p: Vec<f64>,
    }

    impl LeastSquaresProblem for Linear {
        fn num_residuals(&self) -> usize {
            self.b.len()
        }
        fn params(&self) -> Vec<f64> {
            self.p.clone()
        }
        fn set_params(&mut self, params: &[f64]) -> Result<()> {
            self.p = params.to_vec();
            Ok(())
        }
        fn residuals(&self) -> Result<Vec<f64>> {
            Ok(self
                .a
                .row_iter()
                .zip(&self.b)
                .map(|(row, b)| row.iter().zip(&self.p).map(|(x, p)| x * p).sum::<f64>() - b)
                .collect())
        }
        fn residuals_and_jacobian(&self) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((self.residuals()?, self.a.as_slice().to_vec()))
        }
    }

    /// Least squares via Householder QR, independent of the LM path.
    fn qr_solution(a: &Matrix, b: &[f64]) -> Vec<f64> {
        let am = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
        let qr = am.qr();
        let qtb = qr.q().transpose() * DVector::from_column_slice(b);
        let x = qr.r().solve_upper_triangular(&qtb).unwrap();
        x.iter().copied().collect()
    }

    fn linear_problem() -> Linear {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64 / 29.0;
                vec![1.0, t, t * t, (3.0 * t).sin()]
            })
            .collect();
        let b: Vec<f64> = (0..30).map(|i| ((i * 7 % 11) as f64) / 11.0).collect();
        Linear {
            a: Matrix::from_rows(&rows).unwrap(),
            b,
            p: vec![0.3, -0.2, 0.1, 0.5],
        }
    }

    #[test]
    fn one_step_at_vanishing_damping_is_gauss_newton() {
        let mut prob = linear_problem();
        let expected = qr_solution(&prob.a, &prob.b);
        let config = TrainConfig {
            max_epochs: 1,
            mu0: 1e-14,
            mu_max: 1e10,
            ..TrainConfig::default()
        };
        let report = minimize(&mut prob, &config, |_| Ok(None)).unwrap();
        assert_eq!(report.epochs_run, 1);
        assert!(report.accepted[0]);
        for (p, e) in prob.p.iter().zip(&expected) {
            assert!((p - e).abs() <= 1e-8, "{p} vs {e}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { mu0: 0.0, ..Default::default() },
            TrainConfig { mu_inc: 1.0, ..Default::default() },
            TrainConfig { mu_dec: 1.0, ..Default::default() },
            TrainConfig { max_epochs: 0, ..Default::default() },
            TrainConfig { max_validation_failures: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn line_data(n: usize) -> (Matrix, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        (Matrix::column(&xs), ys)
    }

    #[test]
    fn fits_a_line() {
        let (x, y) = line_data(50);
        let arch = Architecture::new(1, vec![3]).unwrap();
        let net = init_network(&arch, 1).unwrap();
        let config = TrainConfig {
            max_epochs: 200,
            min_grad: 0.0,
            ..Default::default()
        };
        let empty = Matrix::zeros(0, 1);
        let (net, report) = train_lm(net, &x, &y, &empty, &[], &config).unwrap();
        let rmse = mse(&net, &x, &y).unwrap().sqrt();
        assert!(rmse < 1e-4, "rmse {rmse} after {} epochs", report.epochs_run);
        assert!(report.epochs_run <= 200);
        let acc = report.accepted_train_mse();
        assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_residual_start_is_a_fixed_point() {
        let arch = Architecture::new(1, vec![2]).unwrap();
        let net = init_network(&arch, 3).unwrap();
        let x = Matrix::column(&[-0.5, 0.0, 0.5, 0.9]);
        let y = net.forward(&x, None).unwrap();
        let (trained, report) = train_lm(net.clone(), &x, &y, &x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(report.epochs_run, 0);
        assert_eq!(report.stop_reason, StopReason::GradientTolerance);
        assert_eq!(report.initial_train_mse, 0.0);
        assert_eq!(trained.params(), net.params());
    }

    #[test]
    fn early_stopping_returns_best_validation_epoch() {
        // noisy targets and a roomy network so validation error turns upward
        let n = 40;
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let noise = |i: usize| (((i * 7919) % 101) as f64 / 101.0 - 0.5) * 0.6;
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + noise(i)).collect();
        let (tx, ty): (Vec<_>, Vec<_>) = xs.iter().zip(&ys).step_by(2).unzip();
        let (vx, vy): (Vec<_>, Vec<_>) = xs.iter().zip(&ys).skip(1).step_by(2).unzip();
        let (tx, vx) = (Matrix::column(&tx), Matrix::column(&vx));
        let arch = Architecture::new(1, vec![12]).unwrap();
        let net = init_network(&arch, 5).unwrap();
        let (trained, report) = train_lm(net, &tx, &ty, &vx, &vy, &TrainConfig::default()).unwrap();

        assert_eq!(report.train_mse_history.len(), report.epochs_run);
        assert_eq!(report.validation_mse_history.len(), report.epochs_run);
        let best = report.best_validation_mse().unwrap();
        let min_hist = report
            .validation_mse_history
            .iter()
            .flatten()
            .chain(report.initial_validation_mse.iter())
            .fold(f64::INFINITY, |a, &b| a.min(b));
        assert_eq!(best, min_hist);
        assert_eq!(mse(&trained, &vx, &vy).unwrap(), best);
        let acc = report.accepted_train_mse();
        assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn csv_has_one_row_per_epoch() {
        let (x, y) = line_data(20);
        let arch = Architecture::new(1, vec![2]).unwrap();
        let config = TrainConfig {
            max_epochs: 5,
            ..Default::default()
        };
        let (_, report) = train_lm(init_network(&arch, 1).unwrap(), &x, &y, &x, &y, &config).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,train_mse,val_mse,mu,accepted\n"));
        assert_eq!(text.lines().count(), report.epochs_run + 1);
    }

    #[test]
    fn retrain_requires_smooth_mode() {
        let arch = Architecture::new(1, vec![2]).unwrap();
        let net = init_network(&arch, 1).unwrap();
        let (x, y) = line_data(10);
        let data = TrainData {
            train_x: x.clone(),
            train_y: y.clone(),
            val_x: x,
            val_y: y,
        };
        let cfg = PerturbationConfig {
            mode: PerturbationMode::RandomNoise,
            amplitude: 0.1,
            ..Default::default()
        };
        assert!(retrain_with_realized_nafs(&net, &cfg, &data, &TrainConfig::default()).is_err());
    }

    #[test]
    fn metric_edge_cases() {
        let y = [1.0, 2.0, 4.0, 7.0];
        let m = metrics(&y, &y).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert!((m.pearson_r.unwrap() - 1.0).abs() < 1e-15);

        let mean = y.iter().sum::<f64>() / 4.0;
        let m = metrics(&[mean; 4], &y).unwrap();
        let pop_std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((m.rmse - pop_std).abs() < 1e-14);
        assert_eq!(m.pearson_r, None);

        assert!(metrics(&[1.0], &y).is_err());
    }
}
