//! Coulomb-matrix eigenspectrum descriptors and min-max scaling.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;

pub const BOHR_RADIUS_ANGSTROM: f64 = 0.529177210903;
/// Two atoms closer than this (Å) make a geometry inconsistent.
pub const DISTANCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: u32,
    /// Å
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub id: String,
    pub atoms: Vec<Atom>,
}

impl Molecule {
    pub fn new(id: impl Into<String>, atoms: Vec<Atom>) -> Result<Self> {
        let mol = Self { id: id.into(), atoms };
        mol.validate()?;
        Ok(mol)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::Data(format!("molecule {} has no atoms", self.id)));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.z < 1 {
                return Err(Error::Data(format!("molecule {}: atom {i} has Z = 0", self.id)));
            }
            if !a.position.iter().all(|c| c.is_finite()) {
                return Err(Error::Data(format!("molecule {}: atom {i} has a non-finite position", self.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d: [f64; 3] = std::array::from_fn(|k| a[k] - b[k]);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `C_ii = 0.5 Z_i^2.4`, `C_ij = Z_i Z_j / d_ij` with `d_ij` in Bohr.
pub fn coulomb_matrix(mol: &Molecule) -> Result<Matrix> {
    mol.validate()?;
    let n = mol.len();
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        let zi = mol.atoms[i].z as f64;
        c.set(i, i, 0.5 * zi.powf(2.4));
        for j in 0..i {
            let d = distance(&mol.atoms[i].position, &mol.atoms[j].position);
            if !(d > DISTANCE_EPSILON) {
                return Err(Error::GeometryInconsistent {
                    id: mol.id.clone(),
                    i: j,
                    j: i,
                    distance: d,
                });
            }
            let v = zi * mol.atoms[j].z as f64 / (d / BOHR_RADIUS_ANGSTROM);
            c.set(i, j, v);
            c.set(j, i, v);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenOrder {
    #[default]
    DescendingAbs,
    DescendingSigned,
}

impl std::str::FromStr for EigenOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "descending-abs" | "abs" => Ok(Self::DescendingAbs),
            "descending-signed" | "signed" => Ok(Self::DescendingSigned),
            other => Err(Error::InvalidConfig(format!("unknown eigenvalue order '{other}'"))),
        }
    }
}

const EIGEN_MAX_ITER: usize = 10_000;

/// Eigenvalues of a symmetric matrix, checked by residual `|Cv - λv| <= 1e-8 |C|`.
pub fn symmetric_eigenvalues(m: &Matrix, context: &str) -> Result<Vec<f64>> {
    let n = m.rows();
    let dm = DMatrix::from_row_slice(n, n, m.as_slice());
    let norm = dm.norm();
    let eig = SymmetricEigen::try_new(dm.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Eigen(format!("{context}: no convergence")))?;
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        let residual = (&dm * v - v * eig.eigenvalues[k]).norm();
        if residual > 1e-8 * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Eigen(format!(
                "{context}: eigenpair {k} residual {residual:e} exceeds tolerance"
            )));
        }
    }
    Ok(eig.eigenvalues.iter().copied().collect())
}

/// Sorted Coulomb-matrix eigenvalues, zero-padded to `pad_to`.
pub fn ecm(mol: &Molecule, pad_to: usize) -> Result<Vec<f64>> {
    ecm_with_order(mol, pad_to, EigenOrder::DescendingAbs)
}

pub fn ecm_with_order(mol: &Molecule, pad_to: usize, order: EigenOrder) -> Result<Vec<f64>> {
    if mol.len() > pad_to {
        return Err(Error::Data(format!(
            "molecule {} has {} atoms, more than pad_to = {pad_to}",
            mol.id,
            mol.len()
        )));
    }
    let c = coulomb_matrix(mol)?;
    let mut ev = symmetric_eigenvalues(&c, &mol.id)?;
    match order {
        EigenOrder::DescendingAbs => ev.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a))),
        EigenOrder::DescendingSigned => ev.sort_by(|a, b| b.total_cmp(a)),
    }
    ev.resize(pad_to, 0.0);
    Ok(ev)
}

/// ECM for each molecule, in input order.
pub fn ecm_batch(mols: &[Molecule], pad_to: usize, order: EigenOrder) -> Vec<Result<Vec<f64>>> {
    par::map_slice(mols, |m| ecm_with_order(m, pad_to, order))
}

/// Affine map of one dimension onto [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimScale {
    pub min: f64,
    pub max: f64,
    /// Constant on the training split; values pass through unchanged.
    pub constant: bool,
}

impl DimScale {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot fit scaling on an empty split".into()));
        }
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            if !v.is_finite() {
                return Err(Error::NonFinite("value in scaling fit".into()));
            }
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self {
            min,
            max,
            constant: !(max > min),
        })
    }

    pub fn identity() -> Self {
        Self {
            min: -1.0,
            max: 1.0,
            constant: false,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if self.constant {
            x
        } else {
            2.0 * (x - self.min) / (self.max - self.min) - 1.0
        }
    }

    #[inline]
    pub fn invert(&self, s: f64) -> f64 {
        if self.constant {
            s
        } else {
            (s + 1.0) * 0.5 * (self.max - self.min) + self.min
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub features: Vec<DimScale>,
    pub target: DimScale,
}

impl ScalingParams {
    pub fn constant_features(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, d)| d.constant)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn apply_features(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.features.len() {
            return Err(Error::Shape(format!(
                "{} columns, scaling fitted on {}",
                x.cols(),
                self.features.len()
            )));
        }
        let mut out = x.clone();
        let width = out.cols();
        par::for_each_row_mut(out.as_mut_slice(), width, |_, row| {
            for (v, d) in row.iter_mut().zip(&self.features) {
                *v = d.apply(*v);
            }
        });
        Ok(out)
    }

    pub fn apply_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| self.target.apply(v)).collect()
    }

    pub fn invert_target(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|&v| self.target.invert(v)).collect()
    }
}

/// Fit per-dimension extrema on the training split only.
pub fn fit_scaling(train_x: &Matrix, train_y: &[f64]) -> Result<ScalingParams> {
    if train_x.rows() == 0 || train_x.rows() != train_y.len() {
        return Err(Error::Data(format!(
            "scaling needs a non-empty training split with matching targets ({} rows, {} targets)",
            train_x.rows(),
            train_y.len()
        )));
    }
    let features = (0..train_x.cols())
        .map(|j| {
            let col: Vec<f64> = train_x.row_iter().map(|r| r[j]).collect();
            DimScale::fit(&col)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingParams {
        features,
        target: DimScale::fit(train_y)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn h2() -> Molecule {
        Molecule::new(
            "h2",
            vec![
                Atom { z: 1, position: [0.0; 3] },
                Atom { z: 1, position: [0.74, 0.0, 0.0] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_hydrogen() {
        let m = Molecule::new("h", vec![Atom { z: 1, position: [1.0, 2.0, 3.0] }]).unwrap();
        assert_eq!(coulomb_matrix(&m).unwrap().as_slice(), &[0.5]);
        assert_eq!(ecm(&m, 3).unwrap(), vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn hydrogen_molecule() {
        let c = coulomb_matrix(&h2()).unwrap();
        let off = 0.529177210903 / 0.74;
        assert_eq!(c.get(0, 0), 0.5);
        assert!((c.get(0, 1) - off).abs() < 1e-15);
        assert!((off - 0.71510).abs() < 1e-5);
        let e = ecm(&h2(), 2).unwrap();
        assert!((e[0] - 1.21510).abs() < 1e-4);
        assert!((e[1] + 0.21510).abs() < 1e-4);
        assert!((e[0] - (0.5 + off)).abs() < 1e-12);
    }

    #[test]
    fn coincident_atoms_rejected() {
        let m = Molecule::new(
            "bad",
            vec![
                Atom { z: 6, position: [0.0; 3] },
                Atom { z: 1, position: [0.0, 0.0, 5e-7] },
            ],
        )
        .unwrap();
        assert!(matches!(coulomb_matrix(&m), Err(Error::GeometryInconsistent { .. })));
        assert!(matches!(ecm(&m, 2), Err(Error::GeometryInconsistent { .. })));
    }

    #[test]
    fn too_many_atoms_for_padding() {
        assert!(ecm(&h2(), 1).is_err());
    }

    fn random_molecule(rng: &mut ChaCha8Rng, id: usize) -> Molecule {
        let n = rng.random_range(1..=12);
        let zs = [1, 6, 7, 8, 9, 16];
        let atoms = (0..n)
            .map(|k| Atom {
                z: zs[rng.random_range(0..zs.len())],
                // lattice offset keeps atoms well separated
                position: [
                    k as f64 * 1.1 + rng.random_range(-0.3..0.3),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ],
            })
            .collect();
        Molecule::new(format!("m{id}"), atoms).unwrap()
    }

    fn rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
    }

    #[test]
    fn trace_and_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in 0..100 {
            let mol = random_molecule(&mut rng, id);
            let e = ecm(&mol, 12).unwrap();
            let trace: f64 = mol.atoms.iter().map(|a| 0.5 * (a.z as f64).powf(2.4)).sum();
            let sum: f64 = e.iter().sum();
            assert!((sum - trace).abs() <= 1e-9 * trace, "{sum} vs {trace}");

            let mut perm = mol.clone();
            perm.atoms.reverse();
            let k = perm.atoms.len() / 2;
            perm.atoms.rotate_left(k);
            assert!(close(&e, &ecm(&perm, 12).unwrap(), 1e-10));

            let r = rotation(&mut rng);
            let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
            let mut moved = mol.clone();
            for a in &mut moved.atoms {
                let p = a.position;
                a.position = std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + t[i]);
            }
            assert!(close(&e, &ecm(&moved, 12).unwrap(), 1e-9));
        }
    }

    #[test]
    fn sort_orders() {
        let e = ecm_with_order(&h2(), 3, EigenOrder::DescendingAbs).unwrap();
        assert!(e[0].abs() >= e[1].abs());
        let mol = Molecule::new(
            "h3",
            vec![
                Atom { z: 1, position: [0.0; 3] },
                Atom { z: 1, position: [0.3, 0.0, 0.0] },
                Atom { z: 1, position: [0.6, 0.0, 0.0] },
            ],
        )
        .unwrap();
        let signed = ecm_with_order(&mol, 4, EigenOrder::DescendingSigned).unwrap();
        assert!(signed[..3].windows(2).all(|w| w[0] >= w[1]));
        let abs = ecm(&mol, 4).unwrap();
        assert!(abs[..3].windows(2).all(|w| w[0].abs() >= w[1].abs()));
        assert_eq!(abs[3], 0.0);
    }

    #[test]
    fn scaling_contract() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![2.0, 5.0]]).unwrap();
        let y = [10.0, 20.0, 15.0];
        let s = fit_scaling(&x, &y).unwrap();
        assert_eq!(s.constant_features(), vec![1]);
        let xs = s.apply_features(&x).unwrap();
        assert_eq!(xs.get(0, 0), -1.0);
        assert_eq!(xs.get(1, 0), 1.0);
        assert_eq!(xs.get(0, 1), 5.0);
        assert!(s.features[0].apply(4.0) > 1.0);
        for v in [-3.7, 0.0, 1.25, 2.0, 1e3] {
            assert!((s.features[0].invert(s.features[0].apply(v)) - v).abs() <= 1e-12 * v.abs().max(1.0));
            assert!((s.target.invert(s.target.apply(v)) - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn scaling_does_not_see_held_out_rows() {
        let train = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let s1 = fit_scaling(&train, &[0.0, 1.0]).unwrap();
        let test = Matrix::from_rows(&[vec![7.0]]).unwrap();
        let applied = s1.apply_features(&test).unwrap();
        let s2 = fit_scaling(&train, &[0.0, 1.0]).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(applied.get(0, 0), 13.0);
        assert!(fit_scaling(&Matrix::zeros(0, 1), &[]).is_err());
    }
}
