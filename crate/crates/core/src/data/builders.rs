//! Assembly of the molecular and perovskite benchmark datasets.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::xyz::{parse_xyz, HARTREE_TO_EV};
use crate::data::{periodic, parse_float, Dataset, DropRecord, SourceFile};
use crate::error::{Error, Result};
use crate::features::{ecm_batch, EigenOrder, Molecule};
use crate::matrix::Matrix;
use crate::par;

/// Atom count (hydrogens included) of the QM9 subset.
pub const QM9_ATOM_COUNT: usize = 16;

/// ECM rows for the molecules that featurize; geometry and eigensolver
/// failures become drop records, anything else is an error.
pub fn featurize_molecules(
    mols: &[Molecule],
    pad_to: usize,
    order: EigenOrder,
) -> Result<(Vec<usize>, Matrix, Vec<DropRecord>)> {
    let results = ecm_batch(mols, pad_to, order);
    let mut kept = Vec::new();
    let mut data = Vec::new();
    let mut drops = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                kept.push(i);
                data.extend(v);
            }
            Err(e @ (Error::GeometryInconsistent { .. } | Error::Eigen(_))) => {
                log::info!("dropping {}: {e}", mols[i].id);
                drops.push(DropRecord {
                    id: mols[i].id.clone(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let x = Matrix::from_vec(kept.len(), pad_to, data)?;
    Ok((kept, x, drops))
}

/// Hill-order formula, e.g. `C6H6`.
fn formula(mol: &Molecule) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &mol.atoms {
        *counts.entry(periodic::symbol(a.z).unwrap_or("X")).or_default() += 1;
    }
    let mut out = String::new();
    let mut push = |sym: &str, n: usize| {
        out.push_str(sym);
        if n > 1 {
            out.push_str(&n.to_string());
        }
    };
    let has_c = counts.contains_key("C");
    if has_c {
        push("C", counts["C"]);
        if let Some(&h) = counts.get("H") {
            push("H", h);
        }
    }
    for (sym, &n) in &counts {
        if has_c && (*sym == "C" || *sym == "H") {
            continue;
        }
        push(sym, n);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Compas3Columns {
    pub id: String,
    /// Used when present in the header.
    pub relative_energy: String,
    /// Fallback: relative energy = E - min(E) over molecules of one formula.
    pub total_energy: String,
    pub pad_to: usize,
    pub order: EigenOrder,
}

impl Default for Compas3Columns {
    fn default() -> Self {
        Self {
            id: "molecule".into(),
            relative_energy: "Erel_eV".into(),
            total_energy: "Etot_eV".into(),
            pad_to: 62,
            order: EigenOrder::DescendingAbs,
        }
    }
}

fn column(header: &csv::StringRecord, name: &str, origin: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data(format!("{origin}: missing column '{name}'")))
}

/// ECM features from a multi-record XYZ (molecule id = first token of the
/// comment line) and energies from a CSV keyed by the same ids.
pub fn build_compas3(geometry: &Path, energies: &Path, cols: &Compas3Columns) -> Result<Dataset> {
    let mols = parse_xyz(geometry)?;
    let origin = energies.display().to_string();
    let bytes = std::fs::read(energies).map_err(|e| Error::io(energies, e))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header = rdr.headers()?.clone();
    let id_col = column(&header, &cols.id, &origin)?;
    let (energy_col, relative) = match column(&header, &cols.relative_energy, &origin) {
        Ok(c) => (c, true),
        Err(_) => (column(&header, &cols.total_energy, &origin)?, false),
    };
    let mut energy: HashMap<String, f64> = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v = parse_float(&rec[energy_col]).filter(|v| v.is_finite()).ok_or_else(|| {
            Error::parse(&origin, k + 2, format!("column {}: not a number: '{}'", &header[energy_col], &rec[energy_col]))
        })?;
        energy.insert(rec[id_col].trim().to_string(), v);
    }

    let mut targets = Vec::with_capacity(mols.len());
    for m in &mols {
        let e = energy
            .get(&m.id)
            .ok_or_else(|| Error::Data(format!("no energy for geometry '{}' in {origin}", m.id)))?;
        targets.push(*e);
    }
    let mut notes = vec![format!("{} geometries, {} energy rows", mols.len(), energy.len())];
    if !relative {
        let mut min_by_formula: HashMap<String, f64> = HashMap::new();
        let formulas: Vec<String> = mols.iter().map(formula).collect();
        for (f, &e) in formulas.iter().zip(&targets) {
            let slot = min_by_formula.entry(f.clone()).or_insert(f64::INFINITY);
            *slot = slot.min(e);
        }
        for (f, t) in formulas.iter().zip(targets.iter_mut()) {
            *t -= min_by_formula[f];
        }
        notes.push(format!(
            "relative energy computed as {} - min per formula over {} formulas",
            cols.total_energy,
            min_by_formula.len()
        ));
    } else {
        notes.push(format!("relative energy read from column {}", cols.relative_energy));
    }

    let (kept, x, drops) = featurize_molecules(&mols, cols.pad_to, cols.order)?;
    let y = kept.iter().map(|&i| targets[i]).collect();
    let ids = kept.iter().map(|&i| mols[i].id.clone()).collect();
    let mut ds = Dataset::new("compas3", x, y, ids, "eV")?;
    ds.provenance.sources = vec![SourceFile::from_path(geometry)?, SourceFile::from_bytes(energies, &bytes)];
    ds.provenance.drops = drops;
    ds.provenance.notes = notes;
    Ok(ds)
}

/// Every `*.xyz` record in `dir` with exactly 16 atoms, ECM padded to 16,
/// target ZPVE in eV.
pub fn build_qm9_zpve(dir: &Path, order: EigenOrder) -> Result<Dataset> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xyz"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no .xyz records", dir.display())));
    }
    let parsed = par::map_slice(&files, |p| -> Result<(_, String, u64)> {
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let rec = crate::data::parse_qm9_str(
            std::str::from_utf8(&bytes).map_err(|_| Error::parse(p.display().to_string(), 0, "not UTF-8"))?,
            &p.display().to_string(),
        )?;
        Ok((rec, crate::data::sha256_hex(&bytes), bytes.len() as u64))
    });
    let mut hasher = Sha256::new();
    let mut total = 0;
    let mut subset = Vec::new();
    for (path, r) in files.iter().zip(parsed) {
        let (rec, digest, n) = r?;
        hasher.update(path.file_name().map_or_else(Vec::new, |f| f.to_string_lossy().as_bytes().to_vec()));
        hasher.update(digest.as_bytes());
        total += n;
        if rec.molecule.len() == QM9_ATOM_COUNT {
            subset.push(rec);
        }
    }
    let mols: Vec<Molecule> = subset.iter().map(|r| r.molecule.clone()).collect();
    let (kept, x, drops) = featurize_molecules(&mols, QM9_ATOM_COUNT, order)?;
    let y = kept.iter().map(|&i| subset[i].zpve_hartree() * HARTREE_TO_EV).collect();
    let ids = kept.iter().map(|&i| mols[i].id.clone()).collect();
    let mut ds = Dataset::new("qm9_zpve", x, y, ids, "eV")?;
    ds.provenance.sources = vec![SourceFile {
        path: dir.display().to_string(),
        sha256: hex::encode(hasher.finalize()),
        bytes: total,
    }];
    ds.provenance.notes = vec![
        format!("{} records read", files.len()),
        format!("{} records with {QM9_ATOM_COUNT} atoms before drops", subset.len()),
        format!("zpve converted from Hartree with factor {HARTREE_TO_EV}"),
    ];
    ds.provenance.drops = drops;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerovskiteColumns {
    pub id: Option<String>,
    pub band_gap: String,
    pub formation: String,
    pub symmetry: String,
    /// Explicit feature list; otherwise every remaining column.
    pub features: Option<Vec<String>>,
    /// Columns left out of the automatic feature list.
    pub exclude: Vec<String>,
    pub band_gap_unit: String,
    pub formation_unit: String,
}

impl Default for PerovskiteColumns {
    fn default() -> Self {
        Self {
            id: None,
            band_gap: "band_gap".into(),
            formation: "heat_of_formation".into(),
            symmetry: "symmetry".into(),
            features: None,
            exclude: Vec::new(),
            band_gap_unit: "eV".into(),
            formation_unit: "eV/atom".into(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "null" | "none" | "?"
    )
}

/// Band-gap and formation-energy datasets sharing one feature matrix. The
/// symmetry column never enters the features. Rows with a missing value in
/// any used column are dropped and logged.
pub fn build_perovskites(path: &Path, cols: &PerovskiteColumns) -> Result<(Dataset, Dataset)> {
    let origin = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let header = rdr.headers()?.clone();
    let gap_col = column(&header, &cols.band_gap, &origin)?;
    let form_col = column(&header, &cols.formation, &origin)?;
    let sym_col = column(&header, &cols.symmetry, &origin)?;
    let id_col = cols.id.as_deref().map(|c| column(&header, c, &origin)).transpose()?;
    let feature_cols: Vec<usize> = match &cols.features {
        Some(names) => {
            let idx = names.iter().map(|n| column(&header, n, &origin)).collect::<Result<Vec<_>>>()?;
            if idx.contains(&sym_col) {
                return Err(Error::InvalidConfig(format!("symmetry column '{}' cannot be a feature", cols.symmetry)));
            }
            idx
        }
        None => (0..header.len())
            .filter(|&j| {
                j != gap_col
                    && j != form_col
                    && j != sym_col
                    && Some(j) != id_col
                    && !cols.exclude.iter().any(|e| e == header[j].trim())
            })
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Data(format!("{origin}: no feature columns")));
    }

    let (mut data, mut gap, mut form, mut ids, mut drops) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut source_rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        source_rows += 1;
        let line = k + 2;
        let id = id_col.map_or_else(|| format!("row{}", k + 1), |c| rec[c].trim().to_string());
        let used = feature_cols.iter().chain([&gap_col, &form_col]);
        if let Some(&j) = used.clone().find(|&&j| rec.get(j).is_none_or(is_missing)) {
            drops.push(DropRecord {
                id,
                reason: format!("missing value in column '{}'", &header[j]),
            });
            continue;
        }
        let mut values = Vec::with_capacity(feature_cols.len() + 2);
        for &j in used {
            let v = parse_float(&rec[j]).filter(|v| v.is_finite()).ok_or_else(|| {
                Error::parse(&origin, line, format!("row {}, column '{}': not a number: '{}'", k + 1, &header[j], &rec[j]))
            })?;
            values.push(v);
        }
        form.push(values.pop().expect("two targets"));
        gap.push(values.pop().expect("two targets"));
        data.extend(values);
        ids.push(id);
    }
    for d in &drops {
        log::info!("dropping {}: {}", d.id, d.reason);
    }
    let x = Matrix::from_vec(gap.len(), feature_cols.len(), data)?;
    let names: Vec<&str> = feature_cols.iter().map(|&j| header[j].trim()).collect();
    let source = SourceFile::from_bytes(path, &bytes);
    let make = |name: &str, y: Vec<f64>, unit: &str, target: &str| -> Result<Dataset> {
        let mut ds = Dataset::new(name, x.clone(), y, ids.clone(), unit)?;
        ds.provenance.sources = vec![source.clone()];
        ds.provenance.drops = drops.clone();
        ds.provenance.notes = vec![
            format!("{source_rows} source rows, {} dropped", drops.len()),
            format!("target column '{target}' ({unit})"),
            format!("features: {}", names.join(",")),
        ];
        Ok(ds)
    };
    Ok((
        make("perovskite_band_gap", gap.clone(), &cols.band_gap_unit, &cols.band_gap)?,
        make("perovskite_formation", form.clone(), &cols.formation_unit, &cols.formation)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::xyz::CH4_RECORD;
    use std::io::Write as _;

    #[test]
    fn hill_formula() {
        let mols = crate::data::parse_xyz_str("3\nw\nO 0 0 0\nH 0 1 0\nH 1 0 0\n2\nm\nH 0 0 0\nC 1 0 0\n", "t").unwrap();
        assert_eq!(formula(&mols[0]), "H2O");
        assert_eq!(formula(&mols[1]), "CH");
    }

    #[test]
    fn compas_relative_energy_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let geo = dir.path().join("g.xyz");
        std::fs::write(
            &geo,
            "2\na\nC 0 0 0\nC 1.3 0 0\n2\nb\nC 0 0 0\nC 1.5 0 0\n2\nc\nO 0 0 0\nO 1.2 0 0\n",
        )
        .unwrap();
        let csv = dir.path().join("e.csv");
        std::fs::write(&csv, "molecule,Etot_eV\na,-10.5\nb,-10.0\nc,-3.0\n").unwrap();
        let ds = build_compas3(&geo, &csv, &Compas3Columns { pad_to: 4, ..Default::default() }).unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.y, vec![0.0, 0.5, 0.0]);

        std::fs::write(&csv, "molecule,Erel_eV\na,0.1\nb,0.0\n").unwrap();
        let err = build_compas3(&geo, &csv, &Compas3Columns { pad_to: 4, ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("'c'"), "{err}");
    }

    #[test]
    fn compas_drops_bad_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let geo = dir.path().join("g.xyz");
        std::fs::write(&geo, "2\na\nH 0 0 0\nH 0.74 0 0\n2\nbad\nH 0 0 0\nH 0 0 0\n").unwrap();
        let csv = dir.path().join("e.csv");
        std::fs::write(&csv, "molecule,Erel_eV\na,0.0\nbad,0.2\n").unwrap();
        let ds = build_compas3(&geo, &csv, &Compas3Columns { pad_to: 2, ..Default::default() }).unwrap();
        assert_eq!(ds.ids, vec!["a"]);
        assert_eq!(ds.provenance.drops.len(), 1);
        assert_eq!(ds.provenance.drops[0].id, "bad");
    }

    #[test]
    fn qm9_subset_filter() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("dsgdb9nsd_000001.xyz"), CH4_RECORD).unwrap();
        // a 16-atom record: methane's property line on a stretched chain
        let mut rec = String::from("16\n");
        rec.push_str(CH4_RECORD.lines().nth(1).unwrap());
        rec.push('\n');
        for k in 0..16 {
            rec.push_str(&format!("{} {} 0.0 0.0 0.0\n", if k % 3 == 0 { "C" } else { "H" }, k as f64 * 1.2));
        }
        std::fs::write(dir.path().join("dsgdb9nsd_000002.xyz"), &rec).unwrap();
        let ds = build_qm9_zpve(dir.path(), EigenOrder::DescendingAbs).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.dim(), 16);
        assert_eq!(ds.y[0], 0.044749 * HARTREE_TO_EV);
        assert!(ds.provenance.notes.iter().any(|n| n.contains("1 records with 16 atoms")));
    }

    #[test]
    fn perovskite_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "name,a,b,symmetry,band_gap,heat_of_formation").unwrap();
        writeln!(f, "x1,1.0,2.0,cubic,0.5,-0.1").unwrap();
        writeln!(f, "x2,1.5,,cubic,0.7,-0.2").unwrap();
        writeln!(f, "x3,1.7,2.2,ortho,0.9,-0.3").unwrap();
        drop(f);
        let cols = PerovskiteColumns {
            id: Some("name".into()),
            ..Default::default()
        };
        let (gap, form) = build_perovskites(&path, &cols).unwrap();
        assert_eq!(gap.dim(), 2);
        assert_eq!(gap.len(), 2);
        assert_eq!(gap.x, form.x);
        assert_eq!(gap.y, vec![0.5, 0.9]);
        assert_eq!(form.y, vec![-0.1, -0.3]);
        assert_eq!(gap.provenance.drops[0].id, "x2");
        assert_eq!(form.unit, "eV/atom");

        // name column becomes a non-numeric feature when not declared as id
        let err = build_perovskites(&path, &PerovskiteColumns::default()).unwrap_err();
        assert!(err.to_string().contains("'name'"), "{err}");

        let missing = PerovskiteColumns {
            band_gap: "gap".into(),
            ..cols
        };
        assert!(build_perovskites(&path, &missing).unwrap_err().to_string().contains("missing column"));
    }
}
