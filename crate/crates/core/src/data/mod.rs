//! Dataset ingestion, assembly, splitting and the bundled synthetic sets.

mod builders;
pub mod periodic;
pub mod synthetic;
pub mod xyz;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{fit_scaling, ScalingParams};
use crate::matrix::Matrix;
use crate::seeds::{self, Purpose};
use crate::trainer::TrainData;

pub use builders::{
    build_compas3, build_perovskites, build_qm9_zpve, featurize_molecules, Compas3Columns, PerovskiteColumns,
    QM9_ATOM_COUNT,
};
pub use xyz::{parse_float, parse_qm9_file, parse_qm9_str, parse_xyz, parse_xyz_str, Qm9Record, HARTREE_TO_EV};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl SourceFile {
    pub fn from_bytes(path: &Path, data: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: sha256_hex(data),
            bytes: data.len() as u64,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(path, &data))
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<SourceFile>,
    pub drops: Vec<DropRecord>,
    pub notes: Vec<String>,
}

pub fn write_drop_log<W: Write>(drops: &[DropRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "reason"])?;
    for d in drops {
        w.write_record([&d.id, &d.reason])?;
    }
    w.flush().map_err(|e| Error::io("<drop log>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    /// Targets in original units.
    pub y: Vec<f64>,
    pub ids: Vec<String>,
    pub unit: String,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    name: String,
    unit: String,
    rows: usize,
    dim: usize,
    csv_sha256: String,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, y: Vec<f64>, ids: Vec<String>, unit: impl Into<String>) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            x,
            y,
            ids,
            unit: unit.into(),
            provenance: Provenance::default(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.y.len() || self.ids.len() != self.y.len() {
            return Err(Error::Shape(format!(
                "dataset {}: {} feature rows, {} targets, {} ids",
                self.name,
                self.x.rows(),
                self.y.len(),
                self.ids.len()
            )));
        }
        if self.x.cols() == 0 {
            return Err(Error::Data(format!("dataset {} has no features", self.name)));
        }
        if !self.x.all_finite() || !self.y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("dataset {}", self.name)));
        }
        if self.unit.trim().is_empty() {
            return Err(Error::Data(format!("dataset {} has no target unit", self.name)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Featurized CSV: `id,f_1..f_d,target`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("f_{k}")));
        header.push("target".into());
        w.write_record(&header)?;
        for (i, row) in self.x.row_iter().enumerate() {
            let mut rec = Vec::with_capacity(row.len() + 2);
            rec.push(self.ids[i].clone());
            rec.extend(row.iter().map(f64::to_string));
            rec.push(self.y[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<dataset>", e))?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        let mut p = csv_path.as_os_str().to_owned();
        p.push(".provenance.json");
        PathBuf::from(p)
    }

    /// Write the CSV and its provenance sidecar (`<csv>.provenance.json`).
    pub fn save(&self, csv_path: &Path) -> Result<PathBuf> {
        let bytes = self.to_csv_bytes()?;
        std::fs::write(csv_path, &bytes).map_err(|e| Error::io(csv_path, e))?;
        let sidecar = Sidecar {
            name: self.name.clone(),
            unit: self.unit.clone(),
            rows: self.len(),
            dim: self.dim(),
            csv_sha256: sha256_hex(&bytes),
            provenance: self.provenance.clone(),
        };
        let side = Self::sidecar_path(csv_path);
        let json = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))?;
        Ok(side)
    }

    pub fn read_csv<R: Read>(reader: R, name: &str, unit: &str, origin: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "id" || &header[header.len() - 1] != "target" {
            return Err(Error::parse(origin, 1, "expected header id,f_1..f_d,target"));
        }
        let dim = header.len() - 2;
        let (mut ids, mut data, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            ids.push(rec[0].to_string());
            for j in 1..=dim + 1 {
                let v = parse_float(&rec[j]).ok_or_else(|| {
                    Error::parse(origin, line, format!("column {}: not a number: '{}'", &header[j], &rec[j]))
                })?;
                if j <= dim {
                    data.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        let x = Matrix::from_vec(y.len(), dim, data)?;
        Dataset::new(name, x, y, ids, unit)
    }

    /// Load a featurized CSV. Name and unit come from the sidecar when present.
    pub fn load(csv_path: &Path, unit_override: Option<&str>) -> Result<Self> {
        let bytes = std::fs::read(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let side = Self::sidecar_path(csv_path);
        let sidecar: Option<Sidecar> = match std::fs::read_to_string(&side) {
            Ok(s) => Some(serde_json::from_str(&s)?),
            Err(_) => None,
        };
        let name = sidecar.as_ref().map_or_else(
            || {
                csv_path
                    .file_stem()
                    .map_or("dataset".into(), |s| s.to_string_lossy().into_owned())
            },
            |s| s.name.clone(),
        );
        let unit = unit_override
            .map(str::to_string)
            .or_else(|| sidecar.as_ref().map(|s| s.unit.clone()))
            .unwrap_or_default();
        let mut ds = Self::read_csv(bytes.as_slice(), &name, &unit, &csv_path.display().to_string())?;
        ds.provenance = sidecar.map(|s| s.provenance).unwrap_or_default();
        ds.provenance.sources.push(SourceFile::from_bytes(csv_path, &bytes));
        Ok(ds)
    }

    pub fn subset(&self, idx: &[usize]) -> (Matrix, Vec<f64>) {
        (self.x.select_rows(idx), idx.iter().map(|&i| self.y[i]).collect())
    }

    /// Scale with parameters fitted on the training rows only.
    pub fn prepare(&self, split: &Split) -> Result<Prepared> {
        split.check(self.len())?;
        let (tx, ty) = self.subset(&split.train);
        let (vx, vy) = self.subset(&split.validation);
        let (sx, sy) = self.subset(&split.test);
        let scaling = fit_scaling(&tx, &ty)?;
        Ok(Prepared {
            train: TrainData {
                train_x: scaling.apply_features(&tx)?,
                train_y: scaling.apply_target(&ty),
                val_x: scaling.apply_features(&vx)?,
                val_y: scaling.apply_target(&vy),
            },
            test_x: scaling.apply_features(&sx)?,
            train_y_orig: ty,
            test_y_orig: sy,
            scaling,
        })
    }
}

/// A dataset split and scaled for training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: TrainData,
    pub test_x: Matrix,
    pub train_y_orig: Vec<f64>,
    pub test_y_orig: Vec<f64>,
    pub scaling: ScalingParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    fn check(&self, n: usize) -> Result<()> {
        let total = self.train.len() + self.validation.len() + self.test.len();
        let in_range = self.train.iter().chain(&self.validation).chain(&self.test).all(|&i| i < n);
        if total != n || !in_range {
            return Err(Error::Shape(format!("split covers {total} rows, dataset has {n}")));
        }
        Ok(())
    }
}

/// 70/10/20 split: validation and test take the floor, train the remainder.
pub fn make_split(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::Data(format!("{n} samples cannot populate a 70/10/20 split (need >= 10)")));
    }
    let n_val = n / 10;
    let n_test = n / 5;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeds::rng(seed, Purpose::Split, &[n as u64]));
    let test = perm.split_off(n - n_test);
    let validation = perm.split_off(perm.len() - n_val);
    Ok(Split {
        train: perm,
        validation,
        test,
        seed,
    })
}
