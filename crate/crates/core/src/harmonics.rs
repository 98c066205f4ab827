//! Quasi-harmonic building blocks: the deformation derivative `phi` of the
//! energy, force-constant blocks `D_{0,j}(A)`, and their deformation
//! derivatives `H_{ab;0,j}(A) = dD_{0,j}/dA_ab`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::atoms::{evaluate, evaluate_with, Configuration, NeighborList};
use crate::crystal::lattice_sums;
use crate::error::{Error, Result};
use crate::lattice::{
    build_supercell, perpendicular_widths, reference_shells, BravaisLattice, DeformationGradient, LatticeOffset,
    Mat3, ShellTable, Vec3,
};
use crate::potential::Potential;

/// Displacement step for force differences, Angstrom.
pub const FORCE_DIFFERENCE_STEP: f64 = 1e-5;
/// Step in `A` for deformation derivatives.
pub const DEFORMATION_STEP: f64 = 1e-6;

/// `phi_ab = dV/dA_ab` at fixed displacements (equivalently `-sum_k f_k^a x_k^b`
/// in pair form, with periodic images resolved in the reference frame).
pub fn phi_tensor(config: &Configuration, pot: &dyn Potential) -> Result<Mat3> {
    Ok(evaluate(config, pot)?.phi)
}

/// Force-constant blocks of the uniformly deformed lattice, indexed by lattice offset.
///
/// `blocks[k]` is `d^2 E / du_0 du_j` for the site `j` at `shells.offsets()[k]`;
/// rows refer to atom 0, columns to atom `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceConstantTable {
    pub deformation: DeformationGradient,
    pub shells: ShellTable,
    pub self_block: Mat3,
    pub blocks: Vec<Mat3>,
}

impl ForceConstantTable {
    /// `max |D_00 + sum_j D_0j|`.
    pub fn acoustic_sum_residual(&self) -> f64 {
        let sum = self.blocks.iter().fold(self.self_block, |acc, b| acc + b);
        sum.amax()
    }

    /// `max |D_{0,-j} - D_{0,j}^T|` over the table.
    pub fn inversion_residual(&self) -> f64 {
        let partners = self.shells.inversion_partners();
        self.blocks
            .iter()
            .zip(partners)
            .map(|(b, p)| (self.blocks[p] - b.transpose()).amax())
            .fold((self.self_block - self.self_block.transpose()).amax(), f64::max)
    }

    pub fn offsets(&self) -> &[LatticeOffset] {
        self.shells.offsets()
    }

    /// Writes one line per block: offset (3 values, Angstrom) then the nine
    /// entries in row-major order, 17 significant digits. The self block comes first.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = |r: &Vec3, m: &Mat3| -> std::io::Result<()> {
            let mut fields: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            for a in 0..3 {
                for b in 0..3 {
                    fields.push(format!("{:.16e}", m[(a, b)]));
                }
            }
            writeln!(w, "{}", fields.join(" "))
        };
        line(&Vec3::zeros(), &self.self_block)?;
        for (o, b) in self.offsets().iter().zip(&self.blocks) {
            line(&o.r, b)?;
        }
        Ok(())
    }
}

/// Parses a dump produced by [`ForceConstantTable::write_text`] into
/// `(offset, block)` rows.
pub fn read_table_text<R: BufRead>(r: R) -> Result<Vec<(Vec3, Mat3)>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", n + 1)))?;
        if vals.len() != 12 {
            return Err(Error::InvalidArgument(format!("line {}: expected 12 fields, got {}", n + 1, vals.len())));
        }
        rows.push((Vec3::new(vals[0], vals[1], vals[2]), Mat3::from_row_slice(&vals[3..])));
    }
    Ok(rows)
}

/// Shell radius that captures every nonzero block at deformation `A`:
/// force constants reach out to twice the potential cutoff in the deformed frame.
pub fn default_shell_radius(pot: &dyn Potential, a: &DeformationGradient) -> f64 {
    2.0 * pot.cutoff() / a.min_singular_value() * (1.0 + 1e-3)
}

/// Hessian of `f(|d|)` with respect to `d`.
fn radial_hessian(d: &Vec3, r: f64, d1: f64, d2: f64) -> Mat3 {
    let n = d / r;
    let nn = n * n.transpose();
    nn * d2 + (Mat3::identity() - nn) * (d1 / r)
}

/// Force-constant table from the closed-form second derivatives of the
/// embedded-atom energy summed over the perfect lattice.
pub fn force_constant_table(
    a: &DeformationGradient,
    pot: &dyn Potential,
    lattice: &BravaisLattice,
    shell_radius: f64,
) -> Result<ForceConstantTable> {
    let shells = reference_shells(lattice, shell_radius)?;
    let sums = lattice_sums(pot, lattice, a)?;
    let (f1, f2) = (sums.embedding.d1, sums.embedding.d2);

    struct Site {
        pair_hessian: Mat3,
        density_hessian: Mat3,
        density_gradient: Vec3,
    }
    let sites: Vec<Site> = sums
        .neighbors
        .iter()
        .map(|n| Site {
            pair_hessian: radial_hessian(&n.deformed, n.distance, n.pair.d1, n.pair.d2),
            density_hessian: radial_hessian(&n.deformed, n.distance, n.density.d1, n.density.d2),
            density_gradient: n.deformed * (n.density.d1 / n.distance),
        })
        .collect();
    let index: HashMap<[i64; 3], usize> = sums.neighbors.iter().enumerate().map(|(k, n)| (n.half, k)).collect();

    let mut self_block = Mat3::zeros();
    let mut gradient_sum = Vec3::zeros();
    for s in &sites {
        self_block += s.pair_hessian + s.density_hessian * (2.0 * f1) + s.density_gradient * s.density_gradient.transpose() * f2;
        gradient_sum += s.density_gradient;
    }
    self_block += gradient_sum * gradient_sum.transpose() * f2;

    let blocks = shells
        .offsets()
        .iter()
        .map(|o| {
            let mut block = Mat3::zeros();
            if let Some(&k) = index.get(&o.half) {
                block -= sites[k].pair_hessian + sites[k].density_hessian * (2.0 * f1);
            }
            if f2 != 0.0 {
                for (s, site) in sums.neighbors.iter().zip(&sites) {
                    let t = [o.half[0] - s.half[0], o.half[1] - s.half[1], o.half[2] - s.half[2]];
                    if let Some(&k) = index.get(&t) {
                        block -= site.density_gradient * sites[k].density_gradient.transpose() * f2;
                    }
                }
            }
            block
        })
        .collect();

    Ok(ForceConstantTable {
        deformation: *a,
        shells,
        self_block,
        blocks,
    })
}

/// Smallest cubic count `M` of conventional cells with `M * width >= 2 R + 2 r_c`.
pub fn extraction_supercell_size(
    a: &DeformationGradient,
    pot: &dyn Potential,
    lattice: &BravaisLattice,
    shell_radius: f64,
) -> usize {
    let required = 2.0 * shell_radius + 2.0 * pot.cutoff();
    let unit = perpendicular_widths(&(a.matrix() * lattice.conventional_vectors()));
    let width = unit.iter().cloned().fold(f64::INFINITY, f64::min).min(lattice.a0());
    (required / width).ceil() as usize
}

/// Force-constant table from central differences of analytic forces in a
/// periodic supercell of `counts` conventional cells: atom 0 is displaced by
/// `+-step` along each axis and `D_{0,j} = -df_j/du_0`.
pub fn force_constant_table_by_force_differences(
    a: &DeformationGradient,
    pot: &dyn Potential,
    lattice: &BravaisLattice,
    shell_radius: f64,
    counts: Option<[usize; 3]>,
    step: f64,
) -> Result<ForceConstantTable> {
    let counts = counts.unwrap_or_else(|| {
        let m = extraction_supercell_size(a, pot, lattice, shell_radius);
        [m, m, m]
    });
    let supercell = build_supercell(lattice, counts)?;
    let required = 2.0 * shell_radius + 2.0 * pot.cutoff();
    let width = perpendicular_widths(supercell.cell_vectors())
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if width < required * (1.0 - 1e-9) {
        return Err(Error::Aliasing {
            width,
            required,
            shell_radius,
        });
    }
    let shells = reference_shells(lattice, shell_radius)?;
    let sites = supercell.site_index();
    let atom_of: Vec<usize> = shells
        .offsets()
        .iter()
        .map(|o| sites.find(&o.r).expect("lattice offset maps onto a supercell site"))
        .collect();

    let base = Configuration::uniform(supercell, *a);
    let list = NeighborList::build(&base, pot.cutoff(), 0.1)?;
    let columns: Vec<(Vec<Vec3>, Vec<Vec3>)> = (0..3)
        .into_par_iter()
        .map(|alpha| {
            let mut cfg = base.clone();
            cfg.displacements[0][alpha] = step;
            let plus = evaluate_with(&cfg, pot, &list).forces;
            cfg.displacements[0][alpha] = -step;
            let minus = evaluate_with(&cfg, pot, &list).forces;
            (plus, minus)
        })
        .collect();

    let block_for = |atom: usize| {
        let mut m = Mat3::zeros();
        for (alpha, (plus, minus)) in columns.iter().enumerate() {
            for beta in 0..3 {
                m[(alpha, beta)] = -(plus[atom][beta] - minus[atom][beta]) / (2.0 * step);
            }
        }
        m
    };
    Ok(ForceConstantTable {
        deformation: *a,
        self_block: block_for(0),
        blocks: atom_of.iter().map(|&j| block_for(j)).collect(),
        shells,
    })
}

/// Deformation derivatives `H_ab = dD/dA_ab`, one table per component.
#[derive(Debug, Clone)]
pub struct DeformationDerivativeTable {
    pub deformation: DeformationGradient,
    pub step: f64,
    /// `components[a][b]` holds `H_ab`.
    pub components: [[ForceConstantTable; 3]; 3],
}

impl DeformationDerivativeTable {
    pub fn component(&self, alpha: usize, beta: usize) -> &ForceConstantTable {
        &self.components[alpha][beta]
    }

    /// Largest acoustic-sum residual over the nine components.
    pub fn acoustic_sum_residual(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .map(|t| t.acoustic_sum_residual())
            .fold(0.0, f64::max)
    }
}

/// Central differences in `A` of any force-constant routine.
pub fn deformation_derivatives_with<F>(a: &DeformationGradient, step: f64, table_at: F) -> Result<DeformationDerivativeTable>
where
    F: Fn(&DeformationGradient) -> Result<ForceConstantTable> + Sync,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("deformation step must be positive, got {step}")));
    }
    let tables: Vec<ForceConstantTable> = (0..9)
        .into_par_iter()
        .map(|k| -> Result<ForceConstantTable> {
            let (alpha, beta) = (k / 3, k % 3);
            let plus = table_at(&a.perturbed(alpha, beta, step)?)?;
            let minus = table_at(&a.perturbed(alpha, beta, -step)?)?;
            let scale = 1.0 / (2.0 * step);
            Ok(ForceConstantTable {
                deformation: *a,
                self_block: (plus.self_block - minus.self_block) * scale,
                blocks: plus
                    .blocks
                    .iter()
                    .zip(&minus.blocks)
                    .map(|(p, m)| (p - m) * scale)
                    .collect(),
                shells: plus.shells,
            })
        })
        .collect::<Result<_>>()?;
    let mut it = tables.into_iter();
    let mut next = || it.next().expect("nine components");
    let components = [[next(), next(), next()], [next(), next(), next()], [next(), next(), next()]];
    Ok(DeformationDerivativeTable {
        deformation: *a,
        step,
        components,
    })
}

/// `H_ab = [D(A + h e_a e_b^T) - D(A - h e_a e_b^T)] / 2h` on a fixed shell table.
pub fn deformation_derivative_table(
    a: &DeformationGradient,
    pot: &dyn Potential,
    lattice: &BravaisLattice,
    shell_radius: f64,
    step: f64,
) -> Result<DeformationDerivativeTable> {
    deformation_derivatives_with(a, step, |ap| force_constant_table(ap, pot, lattice, shell_radius))
}
