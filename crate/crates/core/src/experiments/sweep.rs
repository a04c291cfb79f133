use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activation::PerturbationMode;
use crate::data::{make_split, Dataset, Prepared};
use crate::error::Result;
use crate::experiments::plan::ExperimentPlan;
use crate::network::{hidden_label, init_network, Architecture, Network, RecallNoise};
use crate::par;
use crate::seeds::{self, Purpose};
use crate::trainer::{metrics, predict, retrain_with_realized_nafs, train_lm, Metrics, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Clean,
    Perturbed,
    Retrained,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Clean => "clean",
            Arm::Perturbed => "perturbed",
            Arm::Retrained => "retrained",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Arm::Clean),
            "perturbed" => Ok(Arm::Perturbed),
            "retrained" => Ok(Arm::Retrained),
            o => Err(crate::Error::Data(format!("unknown arm '{o}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub architecture: String,
    pub mode: PerturbationMode,
    pub amplitude: f64,
    pub run_id: usize,
    pub arm: Arm,
    pub train_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub train_r: Option<f64>,
    pub test_r: Option<f64>,
    pub unit: String,
    /// Empty unless the row failed.
    pub diagnostic: String,
    /// Seconds; kept out of the result CSVs.
    pub wall_time: f64,
}

/// Reference vs. predicted value for one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub architecture: String,
    pub mode: PerturbationMode,
    pub amplitude: f64,
    pub arm: Arm,
    pub split: &'static str,
    pub id: String,
    pub reference: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub dataset: String,
    pub unit: String,
    /// Canonical order: architecture, mode, amplitude (plan order), run, arm.
    pub rows: Vec<SweepRow>,
    /// Run 0 predictions for every grid point and arm.
    pub scatter: Vec<ScatterPoint>,
    /// Clean training report per architecture, in plan order.
    pub clean_reports: Vec<Option<TrainReport>>,
}

pub(crate) struct Evaluated {
    pub train: Metrics,
    pub test: Metrics,
    pub train_pred: Vec<f64>,
    pub test_pred: Vec<f64>,
}

pub(crate) fn evaluate_both(net: &Network, data: &Prepared, noise: Option<(f64, u64)>) -> Result<Evaluated> {
    let (n_train, n_test) = match noise {
        Some((amplitude, seed)) => (
            Some(RecallNoise {
                amplitude,
                seed: seeds::derive(seed, Purpose::RecallNoise, &[0]),
            }),
            Some(RecallNoise {
                amplitude,
                seed: seeds::derive(seed, Purpose::RecallNoise, &[1]),
            }),
        ),
        None => (None, None),
    };
    let train_pred = predict(net, &data.train.train_x, &data.scaling.target, n_train.as_ref())?;
    let test_pred = predict(net, &data.test_x, &data.scaling.target, n_test.as_ref())?;
    Ok(Evaluated {
        train: metrics(&train_pred, &data.train_y_orig)?,
        test: metrics(&test_pred, &data.test_y_orig)?,
        train_pred,
        test_pred,
    })
}

pub(crate) fn non_finite_check(e: Evaluated) -> Result<Evaluated> {
    if e.train.rmse.is_finite() && e.test.rmse.is_finite() {
        Ok(e)
    } else {
        Err(crate::Error::NonFinite("prediction metrics".into()))
    }
}

struct Ctx<'a> {
    data: &'a Prepared,
    ds: &'a Dataset,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
}

impl Ctx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        arch: &str,
        mode: PerturbationMode,
        amplitude: f64,
        run_id: usize,
        arm: Arm,
        outcome: &Result<Evaluated>,
        wall_time: f64,
    ) -> SweepRow {
        let (train, test, diagnostic) = match outcome {
            Ok(e) => (Some(e.train), Some(e.test), String::new()),
            Err(err) => (None, None, err.to_string()),
        };
        SweepRow {
            dataset: self.ds.name.clone(),
            architecture: arch.to_string(),
            mode,
            amplitude,
            run_id,
            arm,
            train_rmse: train.map(|m| m.rmse),
            test_rmse: test.map(|m| m.rmse),
            train_r: train.and_then(|m| m.pearson_r),
            test_r: test.and_then(|m| m.pearson_r),
            unit: self.ds.unit.clone(),
            diagnostic,
            wall_time,
        }
    }

    fn scatter(&self, arch: &str, mode: PerturbationMode, amplitude: f64, arm: Arm, e: &Evaluated) -> Vec<ScatterPoint> {
        let mk = |split: &'static str, ids: &[String], refs: &[f64], preds: &[f64]| {
            ids.iter()
                .zip(refs.iter().zip(preds))
                .map(|(id, (r, p))| ScatterPoint {
                    architecture: arch.to_string(),
                    mode,
                    amplitude,
                    arm,
                    split,
                    id: id.clone(),
                    reference: *r,
                    predicted: *p,
                })
                .collect::<Vec<_>>()
        };
        let mut out = mk("train", &self.train_ids, &self.data.train_y_orig, &e.train_pred);
        out.extend(mk("test", &self.test_ids, &self.data.test_y_orig, &e.test_pred));
        out
    }
}

/// Clean training of one architecture on the prepared data.
pub(crate) fn train_clean(
    hidden: &[usize],
    data: &Prepared,
    plan: &ExperimentPlan,
    init_seed: u64,
) -> Result<(Network, TrainReport)> {
    let arch = Architecture::new(data.train.train_x.cols(), hidden.to_vec())?;
    let net = init_network(&arch, init_seed)?;
    let t = &data.train;
    train_lm(net, &t.train_x, &t.train_y, &t.val_x, &t.val_y, &plan.train)
}

/// Train each architecture once on the plan's fixed split, then evaluate
/// every (mode, amplitude, run) with perturbed recall and, for smooth
/// shapes with `plan.retrain`, after retraining on the realized NAFs.
///
/// Seeds: initialization from `(base_seed, Init, [arch])`; recall noise from
/// `(base_seed, RecallNoise, [arch, amplitude index, run])`; smooth tables
/// from `(base_seed, SmoothShape, [amplitude index, run])`, table `k` going
/// to flat hidden neuron `k`. Errors are recorded per row.
pub fn run_sweep(plan: &ExperimentPlan, ds: &Dataset) -> Result<SweepResult> {
    plan.validate()?;
    ds.validate()?;
    let base = plan.seed();
    let split = make_split(ds.len(), plan.split_seed.unwrap_or(base))?;
    let data = ds.prepare(&split)?;
    let ctx = Ctx {
        data: &data,
        ds,
        train_ids: split.train.iter().map(|&i| ds.ids[i].clone()).collect(),
        test_ids: split.test.iter().map(|&i| ds.ids[i].clone()).collect(),
    };

    let clean = par::map_range(plan.architectures.len(), |a| {
        let start = Instant::now();
        let r = train_clean(&plan.architectures[a], &data, plan, seeds::derive(base, Purpose::Init, &[a as u64]));
        (r, start.elapsed().as_secs_f64())
    });

    let mut tasks = Vec::new();
    for a in 0..plan.architectures.len() {
        for (m, _) in plan.modes.iter().enumerate() {
            for k in 0..plan.amplitudes.len() {
                for run in 0..plan.n_runs {
                    tasks.push((a, m, k, run));
                }
            }
        }
    }

    let outputs = par::map_slice(&tasks, |&(a, m, k, run)| {
        let arch = hidden_label(&plan.architectures[a]);
        let mode = plan.modes[m];
        let amp = plan.amplitudes[k];
        let mut rows = Vec::new();
        let mut scatter = Vec::new();
        let (trained, train_time) = &clean[a];
        let net = match trained {
            Ok((net, _)) => net,
            Err(e) => {
                let err: Result<Evaluated> = Err(crate::Error::Data(format!("clean training failed: {e}")));
                rows.push(ctx.row(&arch, mode, amp, run, Arm::Clean, &err, 0.0));
                rows.push(ctx.row(&arch, mode, amp, run, Arm::Perturbed, &err, 0.0));
                if plan.retrain && mode == PerturbationMode::SmoothShape {
                    rows.push(ctx.row(&arch, mode, amp, run, Arm::Retrained, &err, 0.0));
                }
                return (rows, scatter);
            }
        };
        let want_scatter = run == 0;

        let start = Instant::now();
        let clean_eval = evaluate_both(net, &data, None).and_then(non_finite_check);
        let t = *train_time + start.elapsed().as_secs_f64();
        rows.push(ctx.row(&arch, mode, amp, run, Arm::Clean, &clean_eval, t));
        if want_scatter {
            if let Ok(e) = &clean_eval {
                scatter.extend(ctx.scatter(&arch, mode, amp, Arm::Clean, e));
            }
        }

        let start = Instant::now();
        let pcfg = plan.perturbation.config(
            mode,
            amp,
            seeds::derive(base, Purpose::SmoothShape, &[k as u64, run as u64]),
        );
        let perturbed = match mode {
            PerturbationMode::None => evaluate_both(net, &data, None),
            PerturbationMode::RandomNoise => evaluate_both(
                net,
                &data,
                Some((amp, seeds::derive(base, Purpose::RecallNoise, &[a as u64, k as u64, run as u64]))),
            ),
            PerturbationMode::SmoothShape => {
                let mut p = net.clone();
                p.realize_smooth_nafs(&pcfg).and_then(|_| evaluate_both(&p, &data, None))
            }
        }
        .and_then(non_finite_check);
        rows.push(ctx.row(&arch, mode, amp, run, Arm::Perturbed, &perturbed, start.elapsed().as_secs_f64()));
        if want_scatter {
            if let Ok(e) = &perturbed {
                scatter.extend(ctx.scatter(&arch, mode, amp, Arm::Perturbed, e));
            }
        }

        if plan.retrain && mode == PerturbationMode::SmoothShape {
            let start = Instant::now();
            let mut cfg = plan.train.clone();
            cfg.seed = seeds::derive(base, Purpose::Init, &[a as u64, k as u64, run as u64]);
            let retrained = retrain_with_realized_nafs(net, &pcfg, &data.train, &cfg)
                .and_then(|(r, _)| evaluate_both(&r, &data, None))
                .and_then(non_finite_check);
            if let Err(e) = &retrained {
                log::warn!("retraining {arch} at A = {amp}, run {run}: {e}");
            }
            rows.push(ctx.row(&arch, mode, amp, run, Arm::Retrained, &retrained, start.elapsed().as_secs_f64()));
            if want_scatter {
                if let Ok(e) = &retrained {
                    scatter.extend(ctx.scatter(&arch, mode, amp, Arm::Retrained, e));
                }
            }
        }
        (rows, scatter)
    });

    let mut result = SweepResult {
        dataset: ds.name.clone(),
        unit: ds.unit.clone(),
        clean_reports: clean.iter().map(|(r, _)| r.as_ref().ok().map(|(_, rep)| rep.clone())).collect(),
        ..Default::default()
    };
    for (rows, scatter) in outputs {
        result.rows.extend(rows);
        result.scatter.extend(scatter);
    }
    Ok(result)
}
