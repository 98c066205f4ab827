//! k-point grids and dynamical matrices.

use std::collections::BTreeSet;

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::harmonics::ForceConstantTable;
use crate::lattice::{reciprocal_basis, BravaisLattice, Mat3, Supercell, Vec3};

pub type CMat3 = Matrix3<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// `sum_i (2 n_i - N_i - 1) / (2 N_i) b_i`.
    MonkhorstPack,
    /// `sum_i (n_i - 1) / N_i b_i`; the wavevectors of a supercell of
    /// `N_1 x N_2 x N_3` primitive cells.
    GammaCentered,
    /// Wavevectors commensurate with an arbitrary supercell.
    Commensurate,
}

/// A set of wavevectors in the first Brillouin zone (reciprocal-space units of 1/Angstrom).
#[derive(Debug, Clone)]
pub struct KPointGrid {
    pub kind: GridKind,
    pub sizes: [usize; 3],
    pub points: Vec<Vec3>,
    pub includes_gamma: bool,
    reciprocal: Mat3,
}

impl KPointGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether `xi` is a reciprocal lattice vector (equivalent to Gamma).
    pub fn is_gamma(&self, xi: &Vec3) -> bool {
        is_reciprocal_lattice_vector(xi, &self.reciprocal)
    }

    /// Points other than Gamma.
    pub fn nonzero_points(&self) -> impl Iterator<Item = &Vec3> + '_ {
        self.points.iter().filter(move |p| !self.is_gamma(p))
    }

    /// Reciprocal basis the grid was generated from (columns).
    pub fn reciprocal_basis(&self) -> &Mat3 {
        &self.reciprocal
    }

    /// True if `-xi` is in the grid for every `xi`, modulo reciprocal lattice vectors.
    pub fn is_inversion_closed(&self) -> bool {
        let keys: BTreeSet<[i64; 3]> = self.points.iter().map(|p| self.reduced_key(p)).collect();
        self.points.iter().all(|p| keys.contains(&self.reduced_key(&-p)))
    }

    fn reduced_key(&self, p: &Vec3) -> [i64; 3] {
        reduced_key(p, &self.reciprocal)
    }
}

fn fractional(xi: &Vec3, reciprocal: &Mat3) -> Vec3 {
    reciprocal.try_inverse().expect("nonsingular reciprocal basis") * xi
}

fn is_reciprocal_lattice_vector(xi: &Vec3, reciprocal: &Mat3) -> bool {
    fractional(xi, reciprocal).iter().all(|f| (f - f.round()).abs() < 1e-9)
}

fn reduced_key(p: &Vec3, reciprocal: &Mat3) -> [i64; 3] {
    let f = fractional(p, reciprocal);
    let scale = 1e8;
    [0, 1, 2].map(|d| {
        let t = f[d] - f[d].floor();
        ((t * scale).round() as i64).rem_euclid(scale as i64)
    })
}

fn check_sizes(sizes: [usize; 3]) -> Result<()> {
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!("grid sizes must be >= 1, got {sizes:?}")));
    }
    Ok(())
}

fn regular_grid(kind: GridKind, sizes: [usize; 3], b: &Mat3, coefficient: impl Fn(usize, usize) -> f64) -> KPointGrid {
    let mut points = Vec::with_capacity(sizes.iter().product());
    for n1 in 1..=sizes[0] {
        for n2 in 1..=sizes[1] {
            for n3 in 1..=sizes[2] {
                let c = Vec3::new(coefficient(n1, sizes[0]), coefficient(n2, sizes[1]), coefficient(n3, sizes[2]));
                points.push(b * c);
            }
        }
    }
    let includes_gamma = points.iter().any(|p| is_reciprocal_lattice_vector(p, b));
    KPointGrid {
        kind,
        sizes,
        points,
        includes_gamma,
        reciprocal: *b,
    }
}

/// Monkhorst-Pack grid, ordered by `(n1, n2, n3)`.
pub fn monkhorst_pack(sizes: [usize; 3], b: &Mat3) -> Result<KPointGrid> {
    check_sizes(sizes)?;
    Ok(regular_grid(GridKind::MonkhorstPack, sizes, b, |n, nn| {
        (2.0 * n as f64 - nn as f64 - 1.0) / (2.0 * nn as f64)
    }))
}

/// Gamma-centred grid: the wavevectors of an `N_1 x N_2 x N_3` primitive supercell.
/// Coincides with the Monkhorst-Pack set (modulo reciprocal lattice vectors) when every `N_i` is odd.
pub fn gamma_centered(sizes: [usize; 3], b: &Mat3) -> Result<KPointGrid> {
    check_sizes(sizes)?;
    Ok(regular_grid(GridKind::GammaCentered, sizes, b, |n, nn| (n - 1) as f64 / nn as f64))
}

/// Monkhorst-Pack grid on the primitive reciprocal basis of `lattice`.
pub fn lattice_monkhorst_pack(lattice: &BravaisLattice, sizes: [usize; 3]) -> Result<KPointGrid> {
    monkhorst_pack(sizes, &reciprocal_basis(lattice.primitive_vectors())?)
}

/// Gamma-centred grid on the primitive reciprocal basis of `lattice`.
pub fn lattice_gamma_centered(lattice: &BravaisLattice, sizes: [usize; 3]) -> Result<KPointGrid> {
    gamma_centered(sizes, &reciprocal_basis(lattice.primitive_vectors())?)
}

/// All wavevectors compatible with the periodicity of `supercell`, one per
/// primitive cell, reduced into the primitive reciprocal cell.
pub fn commensurate_grid(supercell: &Supercell) -> Result<KPointGrid> {
    let lattice = supercell.lattice();
    let bp = reciprocal_basis(lattice.primitive_vectors())?;
    let bs = reciprocal_basis(supercell.cell_vectors())?;
    let n_cells = (supercell.cell_vectors().determinant() / lattice.primitive_volume()).round() as usize;
    // frac_p(m) = M^T m with M = C_s^-1 C_p; its entries are multiples of 1/period.
    let m = supercell.cell_vectors().try_inverse().ok_or(Error::DegenerateCell { det: 0.0 })? * lattice.primitive_vectors();
    let period = (1..=n_cells.max(1))
        .find(|&d| (m * d as f64).iter().all(|v| (v - v.round()).abs() < 1e-8))
        .unwrap_or(n_cells);
    let mut seen = BTreeSet::new();
    let mut points = Vec::with_capacity(n_cells);
    for i in 0..period {
        for j in 0..period {
            for k in 0..period {
                let xi = bs * Vec3::new(i as f64, j as f64, k as f64);
                let key = reduced_key(&xi, &bp);
                if seen.insert(key) {
                    let f = fractional(&xi, &bp).map(|v| v - v.floor());
                    points.push(bp * f);
                }
            }
        }
    }
    if points.len() != n_cells {
        return Err(Error::InvalidArgument(format!(
            "found {} commensurate wavevectors for {} primitive cells",
            points.len(),
            n_cells
        )));
    }
    Ok(KPointGrid {
        kind: GridKind::Commensurate,
        sizes: supercell.counts(),
        includes_gamma: true,
        points,
        reciprocal: bp,
    })
}

/// `sum_j T_{0,j} exp(-i xi . x_j)` including the self block.
pub fn lattice_fourier_sum(table: &ForceConstantTable, xi: &Vec3) -> CMat3 {
    let phases: Vec<Complex64> = table
        .offsets()
        .iter()
        .map(|o| Complex64::from_polar(1.0, -xi.dot(&o.r)))
        .collect();
    fourier_with_phases(table, &phases)
}

pub(crate) fn fourier_with_phases(table: &ForceConstantTable, phases: &[Complex64]) -> CMat3 {
    let mut out = table.self_block.map(|v| Complex64::new(v, 0.0));
    for (block, &ph) in table.blocks.iter().zip(phases) {
        for (o, &b) in out.iter_mut().zip(block.iter()) {
            *o += ph * b;
        }
    }
    out
}

/// Dynamical matrix at wavevector `xi`.
#[derive(Debug, Clone, Copy)]
pub struct DynamicalMatrix {
    pub xi: Vec3,
    pub value: CMat3,
}

impl DynamicalMatrix {
    /// `max |M - M^H|`.
    pub fn hermiticity_residual(&self) -> f64 {
        (self.value - self.value.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let h = (self.value + self.value.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        [ev[0], ev[1], ev[2]]
    }
}

pub fn dynamical_matrix(table: &ForceConstantTable, xi: &Vec3) -> DynamicalMatrix {
    DynamicalMatrix {
        xi: *xi,
        value: lattice_fourier_sum(table, xi),
    }
}
