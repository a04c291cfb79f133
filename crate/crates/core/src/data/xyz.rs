//! Multi-record XYZ and QM9 per-molecule files.

use std::path::Path;

use crate::data::periodic;
use crate::error::{Error, Result};
use crate::features::{Atom, Molecule};

/// Parse a float allowing `D` and Mathematica-style `*^` exponent markers.
pub fn parse_float(token: &str) -> Option<f64> {
    let t = token.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let normalized = t.replace("*^", "e").replace(['D', 'd'], "e");
    normalized.parse().ok()
}

fn element(token: &str) -> Option<u32> {
    match token.parse::<u32>() {
        Ok(z) if (1..=118).contains(&z) => Some(z),
        Ok(_) => None,
        Err(_) => periodic::atomic_number(token),
    }
}

fn parse_atom(line: &str, origin: &str, line_no: usize, record: usize) -> Result<Atom> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 4 {
        return Err(Error::parse(
            origin,
            line_no,
            format!("record {record}: atom line needs a symbol and three coordinates: '{}'", line.trim()),
        ));
    }
    let z = element(tokens[0]).ok_or_else(|| {
        Error::parse(origin, line_no, format!("record {record}: unknown element '{}'", tokens[0]))
    })?;
    let mut position = [0.0; 3];
    for (k, p) in position.iter_mut().enumerate() {
        *p = parse_float(tokens[k + 1]).filter(|v| v.is_finite()).ok_or_else(|| {
            Error::parse(
                origin,
                line_no,
                format!("record {record}: bad coordinate '{}'", tokens[k + 1]),
            )
        })?;
    }
    Ok(Atom { z, position })
}

fn looks_like_atom_line(line: &str) -> bool {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    tokens.len() >= 4 && element(tokens[0]).is_some() && tokens[1..4].iter().all(|t| parse_float(t).is_some())
}

/// Parse every record of a multi-record XYZ text.
///
/// The molecule id is the first token of the comment line, or `record<k>`
/// (1-based) when the comment is empty.
pub fn parse_xyz_str(text: &str, origin: &str) -> Result<Vec<Molecule>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    let mut molecules = Vec::new();
    loop {
        while i < lines.len() && lines[i].trim().is_empty() {
            i += 1;
        }
        if i >= lines.len() {
            break;
        }
        let record = molecules.len() + 1;
        let count_line = lines[i].trim();
        let n: usize = match count_line.parse() {
            Ok(n) if n > 0 => n,
            _ => {
                let msg = if record > 1 && looks_like_atom_line(count_line) {
                    format!(
                        "record {} has more atom lines than its count of {}",
                        record - 1,
                        molecules.last().map_or(0, Molecule::len)
                    )
                } else {
                    format!("record {record}: malformed atom count '{count_line}'")
                };
                return Err(Error::parse(origin, i + 1, msg));
            }
        };
        let start = i + 1;
        if start >= lines.len() {
            return Err(Error::parse(origin, i + 1, format!("record {record}: missing comment line")));
        }
        let comment = lines[start].trim();
        let mut atoms = Vec::with_capacity(n);
        for k in 0..n {
            let ln = start + 1 + k;
            let Some(line) = lines.get(ln) else {
                return Err(Error::parse(
                    origin,
                    ln,
                    format!("record {record}: count line says {n} atoms, found {k}"),
                ));
            };
            if line.trim().is_empty() || !looks_like_atom_line(line) && line.trim().parse::<usize>().is_ok() {
                return Err(Error::parse(
                    origin,
                    ln + 1,
                    format!("record {record}: count line says {n} atoms, found {k}"),
                ));
            }
            atoms.push(parse_atom(line, origin, ln + 1, record)?);
        }
        let id = comment
            .split_whitespace()
            .next()
            .map_or_else(|| format!("record{record}"), str::to_string);
        molecules.push(Molecule::new(id, atoms)?);
        i = start + 1 + n;
    }
    Ok(molecules)
}

pub fn parse_xyz(path: &Path) -> Result<Vec<Molecule>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz_str(&text, &path.display().to_string())
}

/// Property names on the second line of a QM9 record, after the `gdb` tag.
pub const QM9_PROPERTIES: [&str; 16] = [
    "index", "A", "B", "C", "mu", "alpha", "homo", "lumo", "gap", "r2", "zpve", "U0", "U", "H", "G", "Cv",
];

/// Hartree to eV.
pub const HARTREE_TO_EV: f64 = 27.211386245988;

#[derive(Debug, Clone, PartialEq)]
pub struct Qm9Record {
    pub index: u64,
    pub molecule: Molecule,
    /// Values in [`QM9_PROPERTIES`] order; energies in Hartree.
    pub properties: [f64; 16],
}

impl Qm9Record {
    pub fn property(&self, name: &str) -> Option<f64> {
        QM9_PROPERTIES.iter().position(|p| *p == name).map(|i| self.properties[i])
    }

    pub fn zpve_hartree(&self) -> f64 {
        self.properties[10]
    }
}

/// Parse one QM9 record: count, property line, atoms with partial charges,
/// then frequency, SMILES and InChI lines (ignored).
///
/// Properties are read by position; the line is accepted only if it carries
/// the `gdb` tag, 16 numeric fields, and `gap = lumo - homo` to within 1e-3 Ha.
pub fn parse_qm9_str(text: &str, origin: &str) -> Result<Qm9Record> {
    let mut lines = text.lines().enumerate();
    let (_, count_line) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty QM9 record"))?;
    let n: usize = count_line
        .trim()
        .parse()
        .map_err(|_| Error::parse(origin, 1, format!("malformed atom count '{}'", count_line.trim())))?;
    let (_, prop_line) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 2, "missing property line"))?;
    let tokens: Vec<&str> = prop_line.split_whitespace().collect();
    if tokens.len() != 17 || tokens[0] != "gdb" {
        return Err(Error::parse(
            origin,
            2,
            format!("property line does not match the QM9 layout (tag 'gdb' plus 16 fields): '{}'", prop_line.trim()),
        ));
    }
    let mut properties = [0.0; 16];
    for (k, p) in properties.iter_mut().enumerate() {
        *p = parse_float(tokens[k + 1]).ok_or_else(|| {
            Error::parse(origin, 2, format!("property {} is not numeric: '{}'", QM9_PROPERTIES[k], tokens[k + 1]))
        })?;
    }
    let (homo, lumo, gap) = (properties[6], properties[7], properties[8]);
    if !((gap - (lumo - homo)).abs() <= 1e-3) {
        return Err(Error::parse(
            origin,
            2,
            format!("property line fails the layout check: gap {gap} != lumo {lumo} - homo {homo}"),
        ));
    }
    let index = properties[0] as u64;
    let mut atoms = Vec::with_capacity(n);
    for k in 0..n {
        let (ln, line) = lines.next().ok_or_else(|| {
            Error::parse(origin, 3 + k, format!("count line says {n} atoms, found {k}"))
        })?;
        atoms.push(parse_atom(line, origin, ln + 1, 1)?);
    }
    Ok(Qm9Record {
        index,
        molecule: Molecule::new(format!("gdb_{index}"), atoms)?,
        properties,
    })
}

pub fn parse_qm9_file(path: &Path) -> Result<Qm9Record> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qm9_str(&text, &path.display().to_string())
}

#[cfg(test)]
pub(crate) const CH4_RECORD: &str = "5
gdb 1\t157.7118\t157.70997\t157.70699\t0.\t13.21\t-0.3877\t0.1171\t0.5048\t35.3641\t0.044749\t-40.47893\t-40.476062\t-40.475117\t-40.498597\t6.469\t
C\t-0.0126981359\t 1.0858041578\t 0.0080009958\t-0.535689
H\t 0.002150416\t-0.0060313176\t 0.0019761204\t 0.133921
H\t 1.0117308433\t 1.4637511618\t 0.0002765748\t 0.133922
H\t-0.540815069\t 1.4475266138\t-0.8766437152\t 0.133923
H\t-0.5238136345\t 1.4379326443\t 0.9063972942\t 0.133923
1341.307\t1341.3284\t1341.365\t1562.6731\t1562.7453\t3038.3205\t3151.6034\t3151.6788\t3151.7078
C\tC\t
InChI=1S/CH4/h1H4\tInChI=1S/CH4/h1H4
";
