//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad configuration, 3 data error, 4 numeric failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::activation::{PerturbationConfig, PerturbationMode};
use crate::data::{
    build_compas3, build_perovskites, build_qm9_zpve, featurize_molecules, make_split, parse_xyz, write_drop_log,
    Compas3Columns, Dataset, DropRecord, PerovskiteColumns,
};
use crate::error::{Error, ErrorClass, Result};
use crate::experiments::{
    aggregate, emit_report, grid_search, read_long_csv, resolve_seed, run_sweep, tolerance_thresholds,
    write_aggregated_csv, write_thresholds_csv, Arm, DatasetRef, ExperimentPlan, AGGREGATED_FILE, SEED_ENV,
    THRESHOLDS_FILE,
};
use crate::features::EigenOrder;
use crate::network::{init_network, parse_hidden, Architecture, Network};
use crate::par;
use crate::seeds::{self, Purpose};
use crate::trainer::{evaluate, retrain_with_realized_nafs, train_lm};

#[derive(Debug, Parser)]
#[command(name = "nafsim", version, about = "Activation-function perturbation and retraining experiments")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a featurized CSV (id, f_1.., target) and its provenance sidecar.
    Featurize(FeaturizeArgs),
    /// Train one network with clean activations.
    Train(TrainArgs),
    /// Retrain a trained network against realized smooth-perturbed activations.
    Retrain(RetrainArgs),
    /// Run an amplitude sweep plan and write its report.
    Sweep(PlanArgs),
    /// Grid-search architectures, epochs and initial damping.
    Gridsearch(PlanArgs),
    /// Check a featurized dataset against expected counts.
    VerifyData(VerifyArgs),
    /// Re-aggregate a long-form sweep CSV and compute tolerance thresholds.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    /// Multi-record XYZ; the target is the comment line's second token, if numeric.
    Xyz,
    /// Geometry XYZ plus an energy table
    Compas3,
    /// Directory of per-molecule QM9 XYZ files; keeps 16-atom molecules
    Qm9,
    /// Perovskite CSV; writes band-gap and formation-energy datasets
    Perovskite,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long, value_enum, default_value = "xyz")]
    pub kind: SourceKind,
    /// XYZ file, QM9 directory, or perovskite CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Energy table (compas3).
    #[arg(long)]
    pub energies: Option<PathBuf>,
    /// TOML file with column names (compas3, perovskite).
    #[arg(long)]
    pub columns: Option<PathBuf>,
    /// Feature length; defaults to the largest molecule (xyz) or the source's fixed size.
    #[arg(long)]
    pub pad_to: Option<usize>,
    /// Eigenvalue order: abs (descending magnitude) or signed.
    #[arg(long, default_value = "abs")]
    pub order: String,
    /// CSV listing dropped records and why.
    #[arg(long)]
    pub drop_log: Option<PathBuf>,
    /// Output CSV (perovskite: prefix for two files).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Bundled dataset name (sine, quadratic).
    #[arg(long, conflicts_with = "data")]
    pub dataset: Option<String>,
    /// Featurized CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target unit label, overriding the sidecar.
    #[arg(long)]
    pub unit: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Plan file supplying dataset, train settings and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hidden layers, e.g. "[15 15]".
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value = "nafsim-out/train")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Network JSON written by `train`.
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub amplitude: f64,
    /// Split seed; must match the one used for training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the realized tables (default: the split seed).
    #[arg(long)]
    pub naf_seed: Option<u64>,
    /// Re-initialize parameters instead of starting from the trained network.
    #[arg(long)]
    pub cold: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value = "nafsim-out/retrain")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides the plan).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Benchmark {
    Compas3,
    Qm9,
    PerovskiteBandGap,
    PerovskiteFormation,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub kind: Benchmark,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Long-form sweep CSV.
    #[arg(long)]
    pub long: PathBuf,
    #[arg(long = "waterline")]
    pub waterlines: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

impl CommandOutcome {
    fn ok(summary: String, artifacts: Vec<PathBuf>) -> Self {
        Self {
            exit_code: 0,
            summary,
            artifacts,
        }
    }

    pub fn from_error(e: &Error) -> Self {
        Self {
            exit_code: exit_code(e.class()),
            summary: format!("error: {e}"),
            artifacts: Vec::new(),
        }
    }
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

pub fn run(cli: Cli) -> CommandOutcome {
    let jobs = cli.jobs;
    let result = par::with_jobs(jobs, move || dispatch(cli.command));
    match result {
        Ok(o) => o,
        Err(e) => CommandOutcome::from_error(&e),
    }
}

fn dispatch(cmd: Command) -> Result<CommandOutcome> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let env_seed = env_seed.as_deref();
    match cmd {
        Command::Featurize(a) => cmd_featurize(&a),
        Command::Train(a) => cmd_train(&a, env_seed),
        Command::Retrain(a) => cmd_retrain(&a, env_seed),
        Command::Sweep(a) => cmd_sweep(&a, env_seed),
        Command::Gridsearch(a) => cmd_gridsearch(&a, env_seed),
        Command::VerifyData(a) => cmd_verify_data(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn read_columns<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
        }
    }
}

fn write_drops(path: Option<&Path>, drops: &[DropRecord], artifacts: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        ensure_parent(p)?;
        let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        write_drop_log(drops, f)?;
        artifacts.push(p.to_path_buf());
    }
    Ok(())
}

pub fn cmd_featurize(a: &FeaturizeArgs) -> Result<CommandOutcome> {
    let order: EigenOrder = a.order.parse()?;
    ensure_parent(&a.out)?;
    let mut artifacts = Vec::new();
    match a.kind {
        SourceKind::Xyz => {
            let mols = parse_xyz(&a.input)?;
            if mols.is_empty() {
                return Err(Error::Data(format!("{}: no molecules", a.input.display())));
            }
            let pad_to = a.pad_to.unwrap_or_else(|| mols.iter().map(|m| m.len()).max().unwrap_or(1));
            let (kept, x, drops) = featurize_molecules(&mols, pad_to, order)?;
            let targets = comment_targets(&a.input)?;
            let mut w = csv::Writer::from_path(&a.out)?;
            let mut header = vec!["id".to_string()];
            header.extend((1..=pad_to).map(|k| format!("f_{k}")));
            header.push("target".into());
            w.write_record(&header)?;
            for (row, &i) in x.row_iter().zip(&kept) {
                let mut rec = vec![mols[i].id.clone()];
                rec.extend(row.iter().map(f64::to_string));
                rec.push(targets.get(i).copied().flatten().map_or(String::new(), |t| t.to_string()));
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| Error::io(&a.out, e))?;
            artifacts.push(a.out.clone());
            write_drops(a.drop_log.as_deref(), &drops, &mut artifacts)?;
            Ok(CommandOutcome::ok(
                format!("featurized {} molecules (pad_to {pad_to}), {} dropped", kept.len(), drops.len()),
                artifacts,
            ))
        }
        SourceKind::Compas3 => {
            let energies = a
                .energies
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("compas3 needs --energies".into()))?;
            let mut cols: Compas3Columns = read_columns(a.columns.as_deref())?;
            if let Some(p) = a.pad_to {
                cols.pad_to = p;
            }
            cols.order = order;
            let ds = build_compas3(&a.input, energies, &cols)?;
            save_dataset(&ds, &a.out, a.drop_log.as_deref(), artifacts)
        }
        SourceKind::Qm9 => {
            if a.pad_to.is_some_and(|p| p != crate::data::QM9_ATOM_COUNT) {
                return Err(Error::InvalidConfig("the QM9 subset is padded to 16".into()));
            }
            let ds = build_qm9_zpve(&a.input, order)?;
            save_dataset(&ds, &a.out, a.drop_log.as_deref(), artifacts)
        }
        SourceKind::Perovskite => {
            let cols: PerovskiteColumns = read_columns(a.columns.as_deref())?;
            let (gap, form) = build_perovskites(&a.input, &cols)?;
            let stem = a.out.with_extension("");
            let gap_path = PathBuf::from(format!("{}_band_gap.csv", stem.display()));
            let form_path = PathBuf::from(format!("{}_formation.csv", stem.display()));
            artifacts.push(gap_path.clone());
            artifacts.push(gap.save(&gap_path)?);
            artifacts.push(form_path.clone());
            artifacts.push(form.save(&form_path)?);
            write_drops(a.drop_log.as_deref(), &gap.provenance.drops, &mut artifacts)?;
            Ok(CommandOutcome::ok(
                format!(
                    "featurized {} perovskites with {} features, {} rows dropped",
                    gap.len(),
                    gap.dim(),
                    gap.provenance.drops.len()
                ),
                artifacts,
            ))
        }
    }
}

/// Second token of each comment line, when numeric.
fn comment_targets(path: &Path) -> Result<Vec<Option<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let n: usize = lines[i].trim().parse().unwrap_or(0);
        let comment = lines.get(i + 1).copied().unwrap_or("");
        out.push(comment.split_whitespace().nth(1).and_then(crate::data::parse_float));
        i += n + 2;
    }
    Ok(out)
}

fn save_dataset(ds: &Dataset, out: &Path, drop_log: Option<&Path>, mut artifacts: Vec<PathBuf>) -> Result<CommandOutcome> {
    artifacts.push(out.to_path_buf());
    artifacts.push(ds.save(out)?);
    write_drops(drop_log, &ds.provenance.drops, &mut artifacts)?;
    Ok(CommandOutcome::ok(
        format!(
            "featurized {}: {} molecules, dim {}, {} dropped",
            ds.name,
            ds.len(),
            ds.dim(),
            ds.provenance.drops.len()
        ),
        artifacts,
    ))
}

fn load_plan_opt(path: Option<&Path>) -> Result<ExperimentPlan> {
    match path {
        Some(p) => ExperimentPlan::load(p),
        None => Ok(ExperimentPlan::default()),
    }
}

fn resolve_dataset(args: &DataArgs, plan: &ExperimentPlan) -> Result<Dataset> {
    let r = match (&args.dataset, &args.data) {
        (Some(name), _) => DatasetRef {
            bundled: Some(name.clone()),
            csv: None,
            unit: args.unit.clone(),
        },
        (None, Some(path)) => DatasetRef {
            bundled: None,
            csv: Some(path.clone()),
            unit: args.unit.clone(),
        },
        (None, None) => {
            if plan.dataset == DatasetRef::default() {
                return Err(Error::InvalidConfig("no dataset: pass --dataset, --data or a config".into()));
            }
            plan.dataset.clone()
        }
    };
    r.load()
}

fn fmt_r(r: Option<f64>) -> String {
    r.map_or("undefined".into(), |v| format!("{v:.4}"))
}

pub fn cmd_train(a: &TrainArgs, env_seed: Option<&str>) -> Result<CommandOutcome> {
    let mut plan = load_plan_opt(a.config.as_deref())?;
    let seed = resolve_seed(a.seed, plan.base_seed, env_seed)?;
    if let Some(e) = a.epochs {
        plan.train.max_epochs = e;
    }
    plan.train.validate()?;
    let hidden = match &a.arch {
        Some(s) => parse_hidden(s)?,
        None => plan.architectures[0].clone(),
    };
    let ds = resolve_dataset(&a.data, &plan)?;
    let split = make_split(ds.len(), seed)?;
    let data = ds.prepare(&split)?;
    let arch = Architecture::new(ds.dim(), hidden)?;
    let net = init_network(&arch, seeds::derive(seed, Purpose::Init, &[0]))?;
    let t = &data.train;
    let (net, report) = train_lm(net, &t.train_x, &t.train_y, &t.val_x, &t.val_y, &plan.train)?;
    let train_m = evaluate(&net, &t.train_x, &data.train_y_orig, &data.scaling.target, None)?;
    let test_m = evaluate(&net, &data.test_x, &data.test_y_orig, &data.scaling.target, None)?;

    ensure_dir(&a.out)?;
    let net_path = a.out.join("network.json");
    save_trained(&net, &data.scaling, &net_path)?;
    let rep_path = a.out.join("train_report.csv");
    let f = std::fs::File::create(&rep_path).map_err(|e| Error::io(&rep_path, e))?;
    report.write_csv(f)?;
    Ok(CommandOutcome::ok(
        format!(
            "trained {} on {} (seed {seed}): {} epochs, stop {:?}; train RMSE {:.6} {u}, test RMSE {:.6} {u}, test R {}",
            arch.label(),
            ds.name,
            report.epochs_run,
            report.stop_reason,
            train_m.rmse,
            test_m.rmse,
            fmt_r(test_m.pearson_r),
            u = ds.unit
        ),
        vec![net_path, rep_path],
    ))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TrainedFile {
    network: crate::network::NetworkFile,
    scaling: crate::features::ScalingParams,
}

fn save_trained(net: &Network, scaling: &crate::features::ScalingParams, path: &Path) -> Result<()> {
    let f = TrainedFile {
        network: net.to_file(),
        scaling: scaling.clone(),
    };
    let json = serde_json::to_string_pretty(&f)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn load_trained(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let f: TrainedFile = serde_json::from_str(&text)?;
    Network::from_file(&f.network)
}

pub fn cmd_retrain(a: &RetrainArgs, env_seed: Option<&str>) -> Result<CommandOutcome> {
    let mut plan = load_plan_opt(a.config.as_deref())?;
    let seed = resolve_seed(a.seed, plan.base_seed, env_seed)?;
    if let Some(e) = a.epochs {
        plan.train.max_epochs = e;
    }
    plan.train.warm_start = !a.cold;
    plan.train.seed = seeds::derive(seed, Purpose::Init, &[1]);
    let trained = load_trained(&a.network)?;
    let ds = resolve_dataset(&a.data, &plan)?;
    let data = ds.prepare(&make_split(ds.len(), seed)?)?;
    let pcfg: PerturbationConfig =
        plan.perturbation
            .config(PerturbationMode::SmoothShape, a.amplitude, a.naf_seed.unwrap_or(seed));
    pcfg.validate()?;

    let mut perturbed = trained.clone();
    perturbed.realize_smooth_nafs(&pcfg)?;
    let before = evaluate(&perturbed, &data.test_x, &data.test_y_orig, &data.scaling.target, None)?;
    let (net, report) = retrain_with_realized_nafs(&trained, &pcfg, &data.train, &plan.train)?;
    let after = evaluate(&net, &data.test_x, &data.test_y_orig, &data.scaling.target, None)?;

    ensure_dir(&a.out)?;
    let net_path = a.out.join("network.json");
    save_trained(&net, &data.scaling, &net_path)?;
    let rep_path = a.out.join("train_report.csv");
    let f = std::fs::File::create(&rep_path).map_err(|e| Error::io(&rep_path, e))?;
    report.write_csv(f)?;
    Ok(CommandOutcome::ok(
        format!(
            "A = {}: perturbed test RMSE {:.6} {u}, retrained ({}) test RMSE {:.6} {u}, test R {}",
            a.amplitude,
            before.rmse,
            if plan.train.warm_start { "warm start" } else { "cold start" },
            after.rmse,
            fmt_r(after.pearson_r),
            u = ds.unit
        ),
        vec![net_path, rep_path],
    ))
}

fn plan_with_overrides(a: &PlanArgs, env_seed: Option<&str>) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::load(&a.plan)?;
    plan.base_seed = Some(resolve_seed(a.seed, plan.base_seed, env_seed)?);
    if let Some(o) = &a.out {
        plan.output_dir = Some(o.clone());
    }
    Ok(plan)
}

fn output_dir(plan: &ExperimentPlan) -> PathBuf {
    plan.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("nafsim-out").join(&plan.name))
}

pub fn cmd_sweep(a: &PlanArgs, env_seed: Option<&str>) -> Result<CommandOutcome> {
    let plan = plan_with_overrides(a, env_seed)?;
    let ds = plan.dataset.load()?;
    let result = run_sweep(&plan, &ds)?;
    let dir = output_dir(&plan);
    let artifacts = emit_report(&result, &dir, &plan.checksum()?, &plan.waterlines)?;
    let failed = result.rows.iter().filter(|r| !r.diagnostic.is_empty()).count();
    let best = result
        .rows
        .iter()
        .filter(|r| r.arm == Arm::Clean)
        .filter_map(|r| r.test_rmse.map(|t| (t, r)))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let summary = match best {
        Some((t, r)) => format!(
            "{} rows ({failed} failed); best clean test RMSE {t:.6} {} with {}, R {}",
            result.rows.len(),
            result.unit,
            r.architecture,
            fmt_r(r.test_r)
        ),
        None => format!("{} rows ({failed} failed); no clean run succeeded", result.rows.len()),
    };
    Ok(CommandOutcome {
        exit_code: if failed > 0 { 4 } else { 0 },
        summary,
        artifacts,
    })
}

pub fn cmd_gridsearch(a: &PlanArgs, env_seed: Option<&str>) -> Result<CommandOutcome> {
    let plan = plan_with_overrides(a, env_seed)?;
    let ds = plan.dataset.load()?;
    let result = grid_search(&plan, &ds)?;
    let dir = output_dir(&plan);
    ensure_dir(&dir)?;
    let path = dir.join("gridsearch.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    result.write_csv(f, &plan.checksum()?)?;
    match result.best_point() {
        Some(p) => Ok(CommandOutcome::ok(
            format!(
                "best {} epochs {} mu0 {}: mean test RMSE {:.6} {} over {} runs",
                crate::network::hidden_label(&p.architecture),
                p.epochs,
                p.mu0,
                p.mean_test_rmse.unwrap_or(f64::NAN),
                result.unit,
                p.n_runs - p.n_diverged
            ),
            vec![path],
        )),
        None => Ok(CommandOutcome {
            exit_code: 4,
            summary: "every grid point was disqualified".into(),
            artifacts: vec![path],
        }),
    }
}

struct Expectation {
    dim: usize,
    rows: Option<usize>,
    drops: Option<usize>,
}

fn expectation(kind: Benchmark) -> Expectation {
    match kind {
        Benchmark::Compas3 => Expectation {
            dim: 62,
            rows: None,
            drops: None,
        },
        Benchmark::Qm9 => Expectation {
            dim: 16,
            rows: Some(14_252),
            drops: Some(18),
        },
        Benchmark::PerovskiteBandGap | Benchmark::PerovskiteFormation => Expectation {
            dim: 31,
            rows: None,
            drops: None,
        },
    }
}

pub fn cmd_verify_data(a: &VerifyArgs) -> Result<CommandOutcome> {
    let ds = Dataset::load(&a.data, None)?;
    let exp = expectation(a.kind);
    let mut problems = Vec::new();
    if ds.dim() != exp.dim {
        problems.push(format!("dim {} (expected {})", ds.dim(), exp.dim));
    }
    if let Some(r) = exp.rows {
        if ds.len() != r {
            problems.push(format!("{} rows (expected {r})", ds.len()));
        }
    }
    if let Some(d) = exp.drops {
        if ds.provenance.drops.len() != d {
            problems.push(format!("{} drops (expected {d})", ds.provenance.drops.len()));
        }
    }
    let summary = format!(
        "{}: {} rows, dim {}, {} drops, unit {}",
        ds.name,
        ds.len(),
        ds.dim(),
        ds.provenance.drops.len(),
        ds.unit
    );
    if problems.is_empty() {
        Ok(CommandOutcome::ok(format!("{summary}; ok"), vec![]))
    } else {
        Ok(CommandOutcome {
            exit_code: 3,
            summary: format!("{summary}; mismatch: {}", problems.join(", ")),
            artifacts: vec![],
        })
    }
}

pub fn cmd_report(a: &ReportArgs) -> Result<CommandOutcome> {
    let f = std::fs::File::open(&a.long).map_err(|e| Error::io(&a.long, e))?;
    let (checksum, rows) = read_long_csv(f, &a.long.display().to_string())?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no rows", a.long.display())));
    }
    if rows.iter().any(|r| r.unit.trim().is_empty()) {
        return Err(Error::Data("rows without a target unit".into()));
    }
    let checksum = checksum.unwrap_or_default();
    ensure_dir(&a.out)?;
    let agg = aggregate(&rows);
    let agg_path = a.out.join(AGGREGATED_FILE);
    let f = std::fs::File::create(&agg_path).map_err(|e| Error::io(&agg_path, e))?;
    write_aggregated_csv(&agg, f, &checksum)?;
    let mut artifacts = vec![agg_path];
    if !a.waterlines.is_empty() {
        let p = a.out.join(THRESHOLDS_FILE);
        let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write_thresholds_csv(&tolerance_thresholds(&agg, &a.waterlines), f, &checksum)?;
        artifacts.push(p);
    }
    Ok(CommandOutcome::ok(
        format!("{} rows aggregated into {} groups", rows.len(), agg.len()),
        artifacts,
    ))
}
