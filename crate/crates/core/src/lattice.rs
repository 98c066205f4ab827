//! Crystal geometry: Bravais lattices, supercells, lattice-offset shells,
//! reciprocal bases and periodic minimum-image displacements.
//!
//! All cell matrices store lattice vectors as *columns*.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatticeKind {
    Fcc,
    Bcc,
    SimpleCubic,
}

impl LatticeKind {
    /// Atoms per conventional cubic cell.
    pub fn atoms_per_conventional_cell(self) -> usize {
        match self {
            LatticeKind::Fcc => 4,
            LatticeKind::Bcc => 2,
            LatticeKind::SimpleCubic => 1,
        }
    }

    /// Primitive vectors in units of a0/2, as integer columns.
    fn primitive_half_units(self) -> [[i64; 3]; 3] {
        match self {
            LatticeKind::Fcc => [[0, 1, 1], [1, 0, 1], [1, 1, 0]],
            LatticeKind::Bcc => [[-1, 1, 1], [1, -1, 1], [1, 1, -1]],
            LatticeKind::SimpleCubic => [[2, 0, 0], [0, 2, 0], [0, 0, 2]],
        }
    }

    /// Basis of the conventional cell in units of a0/2.
    fn conventional_basis_half_units(self) -> &'static [[i64; 3]] {
        match self {
            LatticeKind::Fcc => &[[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]],
            LatticeKind::Bcc => &[[0, 0, 0], [1, 1, 1]],
            LatticeKind::SimpleCubic => &[[0, 0, 0]],
        }
    }
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fcc" => Ok(LatticeKind::Fcc),
            "bcc" => Ok(LatticeKind::Bcc),
            "sc" | "simple-cubic" | "simplecubic" => Ok(LatticeKind::SimpleCubic),
            other => Err(Error::InvalidArgument(format!("unknown lattice kind '{other}'"))),
        }
    }
}

/// A cubic Bravais lattice with lattice constant `a0` (Angstrom).
#[derive(Debug, Clone, PartialEq)]
pub struct BravaisLattice {
    kind: LatticeKind,
    a0: f64,
    conventional: Mat3,
    primitive: Mat3,
}

impl BravaisLattice {
    pub fn new(kind: LatticeKind, a0: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::InvalidArgument(format!("lattice constant must be positive, got {a0}")));
        }
        let half = 0.5 * a0;
        let p = kind.primitive_half_units();
        let primitive = Mat3::from_columns(&[
            Vec3::new(p[0][0] as f64, p[0][1] as f64, p[0][2] as f64) * half,
            Vec3::new(p[1][0] as f64, p[1][1] as f64, p[1][2] as f64) * half,
            Vec3::new(p[2][0] as f64, p[2][1] as f64, p[2][2] as f64) * half,
        ]);
        Ok(BravaisLattice {
            kind,
            a0,
            conventional: Mat3::identity() * a0,
            primitive,
        })
    }

    pub fn fcc(a0: f64) -> Result<Self> {
        Self::new(LatticeKind::Fcc, a0)
    }

    pub fn bcc(a0: f64) -> Result<Self> {
        Self::new(LatticeKind::Bcc, a0)
    }

    pub fn simple_cubic(a0: f64) -> Result<Self> {
        Self::new(LatticeKind::SimpleCubic, a0)
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn conventional_vectors(&self) -> &Mat3 {
        &self.conventional
    }

    pub fn primitive_vectors(&self) -> &Mat3 {
        &self.primitive
    }

    /// Primitive cell volume V0.
    pub fn primitive_volume(&self) -> f64 {
        self.primitive.determinant()
    }

    /// Cartesian position of a lattice point given in units of a0/2.
    pub fn half_to_cartesian(&self, half: [i64; 3]) -> Vec3 {
        Vec3::new(half[0] as f64, half[1] as f64, half[2] as f64) * (0.5 * self.a0)
    }

    fn primitive_to_half(&self, n: [i64; 3]) -> [i64; 3] {
        let p = self.kind.primitive_half_units();
        let mut h = [0i64; 3];
        for (col, &ni) in p.iter().zip(n.iter()) {
            for k in 0..3 {
                h[k] += col[k] * ni;
            }
        }
        h
    }
}

/// Deformation gradient `A` with positive determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationGradient(Mat3);

impl DeformationGradient {
    pub fn new(a: Mat3) -> Result<Self> {
        let det = a.determinant();
        if !(det > 0.0) || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "deformation gradient must have positive determinant, got {det}"
            )));
        }
        Ok(DeformationGradient(a))
    }

    pub fn identity() -> Self {
        DeformationGradient(Mat3::identity())
    }

    /// Uniaxial stretch `s` along x.
    pub fn uniaxial_x(s: f64) -> Result<Self> {
        Self::new(Mat3::new(s, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0))
    }

    /// Undeformed reference state.
    pub fn a0() -> Self {
        Self::identity()
    }

    /// 1% uniaxial tension along x.
    pub fn a1() -> Self {
        Self::uniaxial_x(1.01).expect("positive stretch")
    }

    /// 1% uniaxial compression along x.
    pub fn a2() -> Self {
        Self::uniaxial_x(0.99).expect("positive stretch")
    }

    /// Built-in presets `A0`, `A1`, `A2`.
    pub fn preset(name: &str) -> Option<Self> {
        match name.trim().to_ascii_uppercase().as_str() {
            "A0" => Some(Self::a0()),
            "A1" => Some(Self::a1()),
            "A2" => Some(Self::a2()),
            _ => None,
        }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Returns `A + step * e_alpha e_beta^T`.
    pub fn perturbed(&self, alpha: usize, beta: usize, step: f64) -> Result<Self> {
        let mut m = self.0;
        m[(alpha, beta)] += step;
        Self::new(m)
    }

    /// Smallest singular value of `A`.
    pub fn min_singular_value(&self) -> f64 {
        self.0.singular_values().min()
    }
}

impl Default for DeformationGradient {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Conventional,
    Primitive,
}

/// A periodic block of `counts` cells of a Bravais lattice.
#[derive(Debug, Clone)]
pub struct Supercell {
    lattice: BravaisLattice,
    cell_kind: CellKind,
    counts: [usize; 3],
    positions: Vec<Vec3>,
    cell_index: Vec<[usize; 3]>,
    cell: Mat3,
}

/// Builds a supercell of `counts` conventional cubic cells.
///
/// Atoms are ordered cell-major over `(i1, i2, i3)`, then by basis atom.
pub fn build_supercell(lattice: &BravaisLattice, counts: [usize; 3]) -> Result<Supercell> {
    Supercell::build(lattice, counts, CellKind::Conventional)
}

/// Builds a supercell of `counts` primitive cells (one atom per cell).
pub fn build_primitive_supercell(lattice: &BravaisLattice, counts: [usize; 3]) -> Result<Supercell> {
    Supercell::build(lattice, counts, CellKind::Primitive)
}

impl Supercell {
    fn build(lattice: &BravaisLattice, counts: [usize; 3], cell_kind: CellKind) -> Result<Self> {
        if counts.contains(&0) {
            return Err(Error::InvalidArgument(format!("supercell counts must be >= 1, got {counts:?}")));
        }
        let (unit, basis): (Mat3, Vec<Vec3>) = match cell_kind {
            CellKind::Conventional => (
                *lattice.conventional_vectors(),
                lattice
                    .kind
                    .conventional_basis_half_units()
                    .iter()
                    .map(|&h| lattice.half_to_cartesian(h))
                    .collect(),
            ),
            CellKind::Primitive => (*lattice.primitive_vectors(), vec![Vec3::zeros()]),
        };
        let n = counts[0] * counts[1] * counts[2] * basis.len();
        let mut positions = Vec::with_capacity(n);
        let mut cell_index = Vec::with_capacity(n);
        for i1 in 0..counts[0] {
            for i2 in 0..counts[1] {
                for i3 in 0..counts[2] {
                    let origin = unit * Vec3::new(i1 as f64, i2 as f64, i3 as f64);
                    for b in &basis {
                        positions.push(origin + b);
                        cell_index.push([i1, i2, i3]);
                    }
                }
            }
        }
        let cell = Mat3::from_columns(&[
            unit.column(0) * counts[0] as f64,
            unit.column(1) * counts[1] as f64,
            unit.column(2) * counts[2] as f64,
        ]);
        Ok(Supercell {
            lattice: lattice.clone(),
            cell_kind,
            counts,
            positions,
            cell_index,
            cell,
        })
    }

    pub fn lattice(&self) -> &BravaisLattice {
        &self.lattice
    }

    pub fn cell_kind(&self) -> CellKind {
        self.cell_kind
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Reference positions `x_j`.
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    /// Index `(i1, i2, i3)` of the cell that holds each atom.
    pub fn cell_indices(&self) -> &[[usize; 3]] {
        &self.cell_index
    }

    /// Reference cell vectors (columns).
    pub fn cell_vectors(&self) -> &Mat3 {
        &self.cell
    }

    /// Reference volume `N * V0`.
    pub fn volume(&self) -> f64 {
        self.len() as f64 * self.lattice.primitive_volume()
    }

    /// Atom index lookup keyed by reduced fractional coordinates.
    pub fn site_index(&self) -> SiteIndex {
        SiteIndex::new(self)
    }
}

/// Maps arbitrary lattice points onto supercell atoms modulo the supercell.
#[derive(Debug, Clone)]
pub struct SiteIndex {
    inverse_cell: Mat3,
    grid: i64,
    map: HashMap<[i64; 3], usize>,
}

impl SiteIndex {
    fn new(supercell: &Supercell) -> Self {
        let inverse_cell = supercell.cell.try_inverse().expect("supercell cell is nonsingular");
        let grid = 1_000_000;
        let mut map = HashMap::with_capacity(supercell.len());
        let mut index = SiteIndex {
            inverse_cell,
            grid,
            map: HashMap::new(),
        };
        for (i, x) in supercell.positions.iter().enumerate() {
            map.insert(index.key(x), i);
        }
        index.map = map;
        index
    }

    fn key(&self, x: &Vec3) -> [i64; 3] {
        let f = self.inverse_cell * x;
        let g = self.grid as f64;
        let mut k = [0i64; 3];
        for d in 0..3 {
            k[d] = ((f[d] - f[d].floor()) * g).round() as i64 % self.grid;
        }
        k
    }

    /// Atom whose reference position equals `x` modulo the supercell.
    pub fn find(&self, x: &Vec3) -> Option<usize> {
        self.map.get(&self.key(x)).copied()
    }
}

/// A lattice vector, kept both exactly (units of a0/2) and in Cartesian form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeOffset {
    pub half: [i64; 3],
    pub r: Vec3,
}

/// Lattice vectors with `0 < |r| <= radius`, closed under inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellTable {
    radius: f64,
    offsets: Vec<LatticeOffset>,
}

impl ShellTable {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn offsets(&self) -> &[LatticeOffset] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Index of the offset `-r` for every entry.
    pub fn inversion_partners(&self) -> Vec<usize> {
        let lookup: HashMap<[i64; 3], usize> =
            self.offsets.iter().enumerate().map(|(i, o)| (o.half, i)).collect();
        self.offsets
            .iter()
            .map(|o| lookup[&[-o.half[0], -o.half[1], -o.half[2]]])
            .collect()
    }

    /// Position of each offset keyed by its exact coordinates.
    pub fn lookup(&self) -> HashMap<[i64; 3], usize> {
        self.offsets.iter().enumerate().map(|(i, o)| (o.half, i)).collect()
    }
}

/// Enumerates all lattice vectors of the infinite lattice with `0 < |r| <= radius`,
/// sorted by length and then lexicographically.
pub fn reference_shells(lattice: &BravaisLattice, radius: f64) -> Result<ShellTable> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("shell radius must be positive, got {radius}")));
    }
    let widths = perpendicular_widths(lattice.primitive_vectors());
    let reach: Vec<i64> = widths.iter().map(|w| (radius / w).floor() as i64 + 1).collect();
    let limit = radius * (1.0 + 1e-12);
    let mut offsets = Vec::new();
    for n1 in -reach[0]..=reach[0] {
        for n2 in -reach[1]..=reach[1] {
            for n3 in -reach[2]..=reach[2] {
                if n1 == 0 && n2 == 0 && n3 == 0 {
                    continue;
                }
                let half = lattice.primitive_to_half([n1, n2, n3]);
                let r = lattice.half_to_cartesian(half);
                if r.norm() <= limit {
                    offsets.push(LatticeOffset { half, r });
                }
            }
        }
    }
    offsets.sort_by(|a, b| {
        let na: i64 = a.half.iter().map(|v| v * v).sum();
        let nb: i64 = b.half.iter().map(|v| v * v).sum();
        na.cmp(&nb).then(a.half.cmp(&b.half))
    });
    Ok(ShellTable { radius, offsets })
}

/// Reciprocal basis `b_i` (columns) with `b_i . a_j = 2 pi delta_ij`.
pub fn reciprocal_basis(cell: &Mat3) -> Result<Mat3> {
    let det = cell.determinant();
    let scale = cell.column(0).norm() * cell.column(1).norm() * cell.column(2).norm();
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::DegenerateCell { det });
    }
    let inv = cell.try_inverse().ok_or(Error::DegenerateCell { det })?;
    Ok(inv.transpose() * (2.0 * PI))
}

/// Distance between opposite faces of the cell along each cell vector.
pub fn perpendicular_widths(cell: &Mat3) -> [f64; 3] {
    let vol = cell.determinant().abs();
    let (a, b, c) = (cell.column(0), cell.column(1), cell.column(2));
    [
        vol / b.cross(&c).norm(),
        vol / c.cross(&a).norm(),
        vol / a.cross(&b).norm(),
    ]
}

/// Smallest periodic image of `p - q` in the cell spanned by `cell`'s columns.
pub fn min_image_displacement(p: &Vec3, q: &Vec3, cell: &Mat3) -> Vec3 {
    let inv = cell.try_inverse().expect("nondegenerate cell");
    min_image_with_inverse(&(p - q), cell, &inv).0
}

/// Minimum image of `d`, returning the image vector and the integer cell shift added.
pub(crate) fn min_image_with_inverse(d: &Vec3, cell: &Mat3, inv: &Mat3) -> (Vec3, [i64; 3]) {
    let f = inv * d;
    let base = [-f[0].round(), -f[1].round(), -f[2].round()];
    let mut best = (f64::INFINITY, Vec3::zeros(), [0i64; 3]);
    for s1 in -1..=1 {
        for s2 in -1..=1 {
            for s3 in -1..=1 {
                let n = Vec3::new(base[0] + s1 as f64, base[1] + s2 as f64, base[2] + s3 as f64);
                let v = d + cell * n;
                let n2 = v.norm_squared();
                if n2 < best.0 {
                    best = (n2, v, [n[0] as i64, n[1] as i64, n[2] as i64]);
                }
            }
        }
    }
    (best.1, best.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn supercell_atom_counts() {
        let fcc = BravaisLattice::fcc(3.6).unwrap();
        assert_eq!(build_supercell(&fcc, [1, 1, 1]).unwrap().len(), 4);
        let bcc = BravaisLattice::bcc(2.87).unwrap();
        assert_eq!(build_supercell(&bcc, [2, 2, 2]).unwrap().len(), 16);
        let a0 = 3.803619;
        let cu = BravaisLattice::fcc(a0).unwrap();
        let big = build_supercell(&cu, [12, 12, 12]).unwrap();
        assert_eq!(big.len(), 6912);
        assert_relative_eq!(big.volume(), 1728.0 * a0.powi(3), max_relative = 1e-12);
    }

    #[test]
    fn zero_count_rejected() {
        let fcc = BravaisLattice::fcc(3.6).unwrap();
        assert!(matches!(build_supercell(&fcc, [0, 1, 1]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn primitive_volumes() {
        let a0 = 2.5;
        let v = |k| BravaisLattice::new(k, a0).unwrap().primitive_volume();
        assert_relative_eq!(v(LatticeKind::Fcc), a0.powi(3) / 4.0, max_relative = 1e-14);
        assert_relative_eq!(v(LatticeKind::Bcc), a0.powi(3) / 2.0, max_relative = 1e-14);
        assert_relative_eq!(v(LatticeKind::SimpleCubic), a0.powi(3), max_relative = 1e-14);
        for kind in [LatticeKind::Fcc, LatticeKind::Bcc, LatticeKind::SimpleCubic] {
            for counts in [[1, 1, 1], [2, 3, 1]] {
                let lat = BravaisLattice::new(kind, a0).unwrap();
                let sc = build_supercell(&lat, counts).unwrap();
                assert_relative_eq!(sc.volume(), sc.cell_vectors().determinant(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn nearest_neighbor_shells() {
        let a0 = 3.0;
        let fcc = reference_shells(&BravaisLattice::fcc(a0).unwrap(), 0.8 * a0).unwrap();
        assert_eq!(fcc.len(), 12);
        for o in fcc.offsets() {
            assert_relative_eq!(o.r.norm(), a0 / 2f64.sqrt(), max_relative = 1e-14);
        }
        let bcc = reference_shells(&BravaisLattice::bcc(a0).unwrap(), 0.9 * a0).unwrap();
        assert_eq!(bcc.len(), 8);
        for o in bcc.offsets() {
            assert_relative_eq!(o.r.norm(), 3f64.sqrt() / 2.0 * a0, max_relative = 1e-14);
        }
        let sc = reference_shells(&BravaisLattice::simple_cubic(a0).unwrap(), 1.05 * a0).unwrap();
        assert_eq!(sc.len(), 6);
    }

    #[test]
    fn shells_are_inversion_closed_and_sum_to_zero() {
        let lat = BravaisLattice::fcc(3.6).unwrap();
        let t = reference_shells(&lat, 11.0).unwrap();
        let sum: Vec3 = t.offsets().iter().map(|o| o.r).sum();
        assert!(sum.norm() < 1e-10);
        let partners = t.inversion_partners();
        for (i, &j) in partners.iter().enumerate() {
            assert_eq!(t.offsets()[i].half.map(|v| -v), t.offsets()[j].half);
        }
        let norms: Vec<f64> = t.offsets().iter().map(|o| o.r.norm()).collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }

    #[test]
    fn reciprocal_of_cubic_and_general_cells() {
        let l = 4.0;
        let b = reciprocal_basis(&(Mat3::identity() * l)).unwrap();
        assert_relative_eq!(b, Mat3::identity() * (2.0 * PI / l), epsilon = 1e-14);
        let b2 = reciprocal_basis(&(Mat3::identity() * 2.0 * l)).unwrap();
        assert_relative_eq!(b2 * 2.0, b, epsilon = 1e-14);

        let cell = Mat3::new(3.1, 0.4, -0.2, 0.3, 2.7, 0.5, -0.1, 0.6, 4.2);
        let b = reciprocal_basis(&cell).unwrap();
        let prod = b.transpose() * cell;
        assert_relative_eq!(prod, Mat3::identity() * (2.0 * PI), epsilon = 1e-12);
    }

    #[test]
    fn singular_cell_rejected() {
        let cell = Mat3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0);
        assert!(matches!(reciprocal_basis(&cell), Err(Error::DegenerateCell { .. })));
    }

    #[test]
    fn min_image_trivial_cases() {
        let cell = Mat3::new(5.0, 1.0, 0.0, 0.0, 5.0, 0.5, 0.0, 0.0, 6.0);
        let p = Vec3::new(0.3, 1.2, -0.7);
        assert_eq!(min_image_displacement(&p, &p, &cell), Vec3::zeros());
        let q = p - cell.column(1);
        assert!(min_image_displacement(&p, &q, &cell).norm() < 1e-14);
    }
}
