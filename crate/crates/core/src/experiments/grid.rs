use serde::Serialize;

use crate::data::{make_split, Dataset};
use crate::error::{Error, Result};
use crate::experiments::plan::ExperimentPlan;
use crate::experiments::sweep::{evaluate_both, non_finite_check, train_clean};
use crate::network::hidden_label;
use crate::par;
use crate::seeds::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub architecture: Vec<usize>,
    pub epochs: usize,
    pub mu0: f64,
    /// Mean over converged runs; `None` if every run diverged.
    pub mean_test_rmse: Option<f64>,
    pub std_test_rmse: Option<f64>,
    pub n_runs: usize,
    pub n_diverged: usize,
    /// More than 20% of runs diverged.
    pub disqualified: bool,
}

impl GridPoint {
    pub fn total_neurons(&self) -> usize {
        self.architecture.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
    /// Index into `points`.
    pub best: Option<usize>,
    pub unit: String,
}

impl GridResult {
    pub fn best_point(&self) -> Option<&GridPoint> {
        self.best.map(|i| &self.points[i])
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W, plan_sha256: &str) -> Result<()> {
        let mut writer = writer;
        writeln!(writer, "# plan_sha256: {plan_sha256}").map_err(|e| Error::io("<grid>", e))?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "architecture",
            "epochs",
            "mu0",
            "mean_test_rmse",
            "std_test_rmse",
            "n_runs",
            "n_diverged",
            "disqualified",
            "best",
            "unit",
        ])?;
        for (i, p) in self.points.iter().enumerate() {
            w.write_record([
                hidden_label(&p.architecture),
                p.epochs.to_string(),
                p.mu0.to_string(),
                opt(p.mean_test_rmse),
                opt(p.std_test_rmse),
                p.n_runs.to_string(),
                p.n_diverged.to_string(),
                p.disqualified.to_string(),
                (self.best == Some(i)).to_string(),
                self.unit.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<grid>", e))?;
        Ok(())
    }
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Best point by mean test RMSE, ties going to fewer total neurons, then fewer layers.
pub fn select_best(points: &[GridPoint]) -> Option<usize> {
    points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| match (p.disqualified, p.mean_test_rmse) {
            (false, Some(m)) => Some((i, m, p.total_neurons(), p.architecture.len())),
            _ => None,
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)).then(a.0.cmp(&b.0)))
        .map(|t| t.0)
}

/// Clean training over architectures x epochs x mu0, each point averaged over
/// `n_runs` splits with split seed `base_seed + run_id`.
pub fn grid_search(plan: &ExperimentPlan, ds: &Dataset) -> Result<GridResult> {
    plan.validate()?;
    ds.validate()?;
    let spec = plan.grid.clone().unwrap_or_default();
    let archs = if spec.architectures.is_empty() { plan.architectures.clone() } else { spec.architectures };
    let epochs = if spec.epochs.is_empty() { vec![plan.train.max_epochs] } else { spec.epochs };
    let mus = if spec.mu0.is_empty() { vec![plan.train.mu0] } else { spec.mu0 };
    let n_runs = if spec.n_runs == 0 { plan.n_runs } else { spec.n_runs };
    let base = plan.seed();

    let mut grid = Vec::new();
    for a in &archs {
        for &e in &epochs {
            for &m in &mus {
                grid.push((a.clone(), e, m));
            }
        }
    }
    let splits = (0..n_runs)
        .map(|r| make_split(ds.len(), base.wrapping_add(r as u64)).and_then(|s| ds.prepare(&s)))
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..n_runs).map(move |r| (g, r))).collect();
    let scores = par::map_slice(&tasks, |&(g, r)| {
        let (arch, epochs, mu0) = &grid[g];
        let mut p = plan.clone();
        p.train.max_epochs = *epochs;
        p.train.mu0 = *mu0;
        p.train.mu_max = p.train.mu_max.max(*mu0);
        let data = &splits[r];
        train_clean(arch, data, &p, seeds::derive(base, Purpose::Init, &[r as u64]))
            .and_then(|(net, _)| evaluate_both(&net, data, None))
            .and_then(non_finite_check)
            .map(|e| e.test.rmse)
            .map_err(|e| {
                log::warn!("grid point {} run {r} diverged: {e}", hidden_label(arch));
                e
            })
            .ok()
    });

    let points: Vec<GridPoint> = grid
        .iter()
        .enumerate()
        .map(|(g, (arch, epochs, mu0))| {
            let ok: Vec<f64> = scores[g * n_runs..(g + 1) * n_runs].iter().flatten().copied().collect();
            let n_diverged = n_runs - ok.len();
            let (mean, std) = super::report::mean_std(&ok);
            GridPoint {
                architecture: arch.clone(),
                epochs: *epochs,
                mu0: *mu0,
                mean_test_rmse: mean,
                std_test_rmse: std,
                n_runs,
                n_diverged,
                disqualified: n_diverged * 5 > n_runs,
            }
        })
        .collect();
    Ok(GridResult {
        best: select_best(&points),
        points,
        unit: ds.unit.clone(),
    })
}
