use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::activation::PerturbationMode;
use crate::error::{Error, Result};
use crate::experiments::grid::opt;
use crate::experiments::sweep::{Arm, SweepResult, SweepRow};

const LONG_HEADER: [&str; 12] = [
    "dataset",
    "architecture",
    "mode",
    "amplitude",
    "run_id",
    "arm",
    "train_rmse",
    "test_rmse",
    "train_r",
    "test_r",
    "unit",
    "diagnostic",
];

pub const LONG_FILE: &str = "sweep_long.csv";
pub const AGGREGATED_FILE: &str = "sweep_aggregated.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

/// Mean and population standard deviation; `None` for an empty slice.
pub fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn checksum_line<W: Write>(w: &mut W, plan_sha256: &str) -> Result<()> {
    writeln!(w, "# plan_sha256: {plan_sha256}").map_err(|e| Error::io("<report>", e))
}

pub fn write_long_csv<W: Write>(rows: &[SweepRow], mut writer: W, plan_sha256: &str) -> Result<()> {
    checksum_line(&mut writer, plan_sha256)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LONG_HEADER)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.architecture.clone(),
            r.mode.as_str().to_string(),
            r.amplitude.to_string(),
            r.run_id.to_string(),
            r.arm.as_str().to_string(),
            opt(r.train_rmse),
            opt(r.test_rmse),
            opt(r.train_r),
            opt(r.test_r),
            r.unit.clone(),
            r.diagnostic.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

/// Rows of a long-form CSV and the plan checksum from its first line.
pub fn read_long_csv<R: Read>(mut reader: R, origin: &str) -> Result<(Option<String>, Vec<SweepRow>)> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io(origin, e))?;
    let checksum = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# plan_sha256: "))
        .map(str::to_string);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().ne(LONG_HEADER) {
        return Err(Error::parse(origin, 2, "not a long-form sweep CSV"));
    }
    let line_of = |k: usize| k + 3;
    let num = |s: &str, k: usize, col: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::parse(origin, line_of(k), format!("{col}: not a number: '{s}'")))
    };
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let req = |v: Result<Option<f64>>, col: &str| {
            v?.ok_or_else(|| Error::parse(origin, line_of(k), format!("{col} is empty")))
        };
        rows.push(SweepRow {
            dataset: rec[0].to_string(),
            architecture: rec[1].to_string(),
            mode: rec[2]
                .parse::<PerturbationMode>()
                .map_err(|e| Error::parse(origin, line_of(k), e.to_string()))?,
            amplitude: req(num(&rec[3], k, "amplitude"), "amplitude")?,
            run_id: rec[4]
                .parse()
                .map_err(|_| Error::parse(origin, line_of(k), format!("run_id: '{}'", &rec[4])))?,
            arm: rec[5].parse().map_err(|e: Error| Error::parse(origin, line_of(k), e.to_string()))?,
            train_rmse: num(&rec[6], k, "train_rmse")?,
            test_rmse: num(&rec[7], k, "test_rmse")?,
            train_r: num(&rec[8], k, "train_r")?,
            test_r: num(&rec[9], k, "test_r")?,
            unit: rec[10].to_string(),
            diagnostic: rec[11].to_string(),
            wall_time: 0.0,
        });
    }
    Ok((checksum, rows))
}

/// Mean and population std over runs of one (architecture, mode, amplitude, arm).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub architecture: String,
    pub mode: PerturbationMode,
    pub amplitude: f64,
    pub arm: Arm,
    pub n_runs: usize,
    pub n_failed: usize,
    pub train_rmse: (Option<f64>, Option<f64>),
    pub test_rmse: (Option<f64>, Option<f64>),
    pub train_r: (Option<f64>, Option<f64>),
    pub test_r: (Option<f64>, Option<f64>),
    pub unit: String,
}

/// Groups in first-appearance order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut index: HashMap<(String, String, PerturbationMode, u64, Arm), usize> = HashMap::new();
    let mut groups: Vec<Vec<&SweepRow>> = Vec::new();
    for r in rows {
        let key = (r.dataset.clone(), r.architecture.clone(), r.mode, r.amplitude.to_bits(), r.arm);
        let i = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[i].push(r);
    }
    groups
        .into_iter()
        .map(|g| {
            let col = |f: fn(&SweepRow) -> Option<f64>| mean_std(&g.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let first = g[0];
            AggregateRow {
                dataset: first.dataset.clone(),
                architecture: first.architecture.clone(),
                mode: first.mode,
                amplitude: first.amplitude,
                arm: first.arm,
                n_runs: g.len(),
                n_failed: g.iter().filter(|r| r.test_rmse.is_none()).count(),
                train_rmse: col(|r| r.train_rmse),
                test_rmse: col(|r| r.test_rmse),
                train_r: col(|r| r.train_r),
                test_r: col(|r| r.test_r),
                unit: first.unit.clone(),
            }
        })
        .collect()
}

pub fn write_aggregated_csv<W: Write>(agg: &[AggregateRow], mut writer: W, plan_sha256: &str) -> Result<()> {
    checksum_line(&mut writer, plan_sha256)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "dataset",
        "architecture",
        "mode",
        "amplitude",
        "arm",
        "n_runs",
        "n_failed",
        "train_rmse_mean",
        "train_rmse_std",
        "test_rmse_mean",
        "test_rmse_std",
        "train_r_mean",
        "train_r_std",
        "test_r_mean",
        "test_r_std",
        "unit",
    ])?;
    for a in agg {
        w.write_record([
            a.dataset.clone(),
            a.architecture.clone(),
            a.mode.as_str().to_string(),
            a.amplitude.to_string(),
            a.arm.as_str().to_string(),
            a.n_runs.to_string(),
            a.n_failed.to_string(),
            opt(a.train_rmse.0),
            opt(a.train_rmse.1),
            opt(a.test_rmse.0),
            opt(a.test_rmse.1),
            opt(a.train_r.0),
            opt(a.train_r.1),
            opt(a.test_r.0),
            opt(a.test_r.1),
            a.unit.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThresholdValue {
    /// Linear interpolation between the bracketing amplitudes.
    Interpolated(f64),
    /// Never crossed in the swept range.
    AtLeast(f64),
    /// Already at or above the waterline at the smallest amplitude.
    ExceededAtStart,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Threshold {
    pub architecture: String,
    pub mode: PerturbationMode,
    pub waterline: f64,
    pub value: ThresholdValue,
    /// Grid amplitudes bracketing the crossing.
    pub bracket: Option<(f64, f64)>,
}

/// Largest amplitude whose mean test RMSE (perturbed arm) stays below each
/// waterline, interpolated at the first crossing.
pub fn tolerance_thresholds(agg: &[AggregateRow], waterlines: &[f64]) -> Vec<Threshold> {
    type Curve = ((String, PerturbationMode), Vec<(f64, f64)>);
    let mut curves: Vec<Curve> = Vec::new();
    for a in agg.iter().filter(|a| a.arm == Arm::Perturbed) {
        let Some(rmse) = a.test_rmse.0 else { continue };
        let key = (a.architecture.clone(), a.mode);
        match curves.iter_mut().find(|(k, _)| *k == key) {
            Some((_, c)) => c.push((a.amplitude, rmse)),
            None => curves.push((key, vec![(a.amplitude, rmse)])),
        }
    }
    let mut out = Vec::new();
    for ((arch, mode), mut curve) in curves {
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &w in waterlines {
            let (value, bracket) = match curve.iter().position(|&(_, r)| r >= w) {
                Some(0) => (ThresholdValue::ExceededAtStart, None),
                Some(i) => {
                    let (a0, r0) = curve[i - 1];
                    let (a1, r1) = curve[i];
                    let t = (w - r0) / (r1 - r0);
                    (ThresholdValue::Interpolated(a0 + t * (a1 - a0)), Some((a0, a1)))
                }
                None => (ThresholdValue::AtLeast(curve.last().map_or(0.0, |c| c.0)), None),
            };
            out.push(Threshold {
                architecture: arch.clone(),
                mode,
                waterline: w,
                value,
                bracket,
            });
        }
    }
    out
}

pub fn write_thresholds_csv<W: Write>(t: &[Threshold], mut writer: W, plan_sha256: &str) -> Result<()> {
    checksum_line(&mut writer, plan_sha256)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["architecture", "mode", "waterline", "threshold", "kind", "bracket_lo", "bracket_hi"])?;
    for th in t {
        let (value, kind) = match th.value {
            ThresholdValue::Interpolated(v) => (v.to_string(), "interpolated"),
            ThresholdValue::AtLeast(v) => (v.to_string(), "at-least-max-amplitude"),
            ThresholdValue::ExceededAtStart => (String::new(), "exceeded-at-start"),
        };
        w.write_record([
            th.architecture.clone(),
            th.mode.as_str().to_string(),
            th.waterline.to_string(),
            value,
            kind.to_string(),
            opt(th.bracket.map(|b| b.0)),
            opt(th.bracket.map(|b| b.1)),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<report>", e))?;
    Ok(())
}

fn arch_file_label(arch: &str) -> String {
    let s: Vec<&str> = arch.trim_matches(['[', ']']).split_whitespace().collect();
    s.join("-")
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Write the long-form, aggregated, threshold, scatter and timing CSVs.
/// Every file except the timings is a pure function of the result rows.
pub fn emit_report(result: &SweepResult, dir: &Path, plan_sha256: &str, waterlines: &[f64]) -> Result<Vec<PathBuf>> {
    if result.rows.is_empty() {
        return Err(Error::Data("empty sweep result".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();

    let p = dir.join(LONG_FILE);
    write_long_csv(&result.rows, create(&p)?, plan_sha256)?;
    paths.push(p);

    let agg = aggregate(&result.rows);
    let p = dir.join(AGGREGATED_FILE);
    write_aggregated_csv(&agg, create(&p)?, plan_sha256)?;
    paths.push(p);

    if !waterlines.is_empty() {
        let p = dir.join(THRESHOLDS_FILE);
        write_thresholds_csv(&tolerance_thresholds(&agg, waterlines), create(&p)?, plan_sha256)?;
        paths.push(p);
    }

    let mut archs: Vec<&str> = Vec::new();
    for s in &result.scatter {
        if !archs.contains(&s.architecture.as_str()) {
            archs.push(&s.architecture);
        }
    }
    for arch in archs {
        let p = dir.join(format!("scatter_{}.csv", arch_file_label(arch)));
        let mut f = create(&p)?;
        checksum_line(&mut f, plan_sha256)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["architecture", "mode", "amplitude", "arm", "split", "id", "reference", "predicted", "unit"])?;
        for s in result.scatter.iter().filter(|s| s.architecture == arch) {
            w.write_record([
                s.architecture.clone(),
                s.mode.as_str().to_string(),
                s.amplitude.to_string(),
                s.arm.as_str().to_string(),
                s.split.to_string(),
                s.id.clone(),
                s.reference.to_string(),
                s.predicted.to_string(),
                result.unit.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }

    let p = dir.join(TIMINGS_FILE);
    let mut f = create(&p)?;
    checksum_line(&mut f, plan_sha256)?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["architecture", "mode", "amplitude", "run_id", "arm", "wall_time_s"])?;
    for r in &result.rows {
        w.write_record([
            r.architecture.clone(),
            r.mode.as_str().to_string(),
            r.amplitude.to_string(),
            r.run_id.to_string(),
            r.arm.as_str().to_string(),
            format!("{:.6}", r.wall_time),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    paths.push(p);
    Ok(paths)
}
