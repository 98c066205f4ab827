//! Periodic atomic configurations about a uniformly deformed supercell,
//! neighbor lists, and energy/force/virial evaluation.

use crate::error::{Error, Result};
use crate::lattice::{min_image_with_inverse, perpendicular_widths, DeformationGradient, Mat3, Supercell, Vec3};
use crate::potential::Potential;

/// Atoms at `y_j = A x_j + u_j` in the periodic cell `A * cell`.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub supercell: Supercell,
    pub deformation: DeformationGradient,
    pub displacements: Vec<Vec3>,
}

impl Configuration {
    /// Uniformly deformed state, `u = 0`.
    pub fn uniform(supercell: Supercell, deformation: DeformationGradient) -> Self {
        let n = supercell.len();
        Configuration {
            supercell,
            deformation,
            displacements: vec![Vec3::zeros(); n],
        }
    }

    pub fn with_displacements(supercell: Supercell, deformation: DeformationGradient, u: Vec<Vec3>) -> Result<Self> {
        if u.len() != supercell.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} displacements, got {}",
                supercell.len(),
                u.len()
            )));
        }
        Ok(Configuration {
            supercell,
            deformation,
            displacements: u,
        })
    }

    pub fn positions(&self) -> Vec<Vec3> {
        let a = self.deformation.matrix();
        self.supercell
            .positions()
            .iter()
            .zip(&self.displacements)
            .map(|(x, u)| a * x + u)
            .collect()
    }

    pub fn deformed_cell(&self) -> Mat3 {
        self.deformation.matrix() * self.supercell.cell_vectors()
    }

    /// Reference volume of the supercell.
    pub fn volume(&self) -> f64 {
        self.supercell.volume()
    }
}

/// A neighbor pair `i < j` with its reference separation
/// `x_j - x_i + cell * n`, where `n` picks the nearest periodic image.
#[derive(Debug, Clone, Copy)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub separation: Vec3,
}

/// Half neighbor list with a Verlet skin.
#[derive(Debug, Clone)]
pub struct NeighborList {
    pairs: Vec<Pair>,
    cutoff: f64,
    skin: f64,
    built_from: Vec<Vec3>,
}

impl NeighborList {
    /// Lists every pair closer than `cutoff + skin` in the deformed cell.
    ///
    /// Requires every perpendicular width of the deformed cell to be at least
    /// `2 * cutoff`; the skin is shrunk if needed so that at most one periodic
    /// image of each pair can fall inside the list radius.
    pub fn build(config: &Configuration, cutoff: f64, skin: f64) -> Result<Self> {
        let cell = config.deformed_cell();
        let widths = perpendicular_widths(&cell);
        let min_width = widths.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_width < 2.0 * cutoff {
            return Err(Error::CellTooSmall {
                width: min_width,
                required: 2.0 * cutoff,
            });
        }
        let skin = skin.min(0.5 * min_width - cutoff).max(0.0);
        let reach = cutoff + skin;
        let reach2 = reach * reach;
        let inv = cell.try_inverse().ok_or(Error::DegenerateCell { det: cell.determinant() })?;
        let ref_cell = config.supercell.cell_vectors();
        let x = config.supercell.positions();
        let y = config.positions();
        let n = y.len();

        let bins: [usize; 3] = [0, 1, 2].map(|d| ((widths[d] / reach).floor() as usize).max(1));
        let mut pairs = Vec::new();
        let push = |i: usize, j: usize, pairs: &mut Vec<Pair>| {
            let (d, shift) = min_image_with_inverse(&(y[j] - y[i]), &cell, &inv);
            if d.norm_squared() < reach2 {
                let s = Vec3::new(shift[0] as f64, shift[1] as f64, shift[2] as f64);
                pairs.push(Pair {
                    i,
                    j,
                    separation: x[j] - x[i] + ref_cell * s,
                });
            }
        };

        if bins.iter().any(|&b| b < 3) {
            for i in 0..n {
                for j in (i + 1)..n {
                    push(i, j, &mut pairs);
                }
            }
        } else {
            let bin_of = |p: &Vec3| -> [usize; 3] {
                let f = inv * p;
                [0, 1, 2].map(|d| {
                    let t = f[d] - f[d].floor();
                    ((t * bins[d] as f64) as usize).min(bins[d] - 1)
                })
            };
            let flat = |b: [usize; 3]| (b[0] * bins[1] + b[1]) * bins[2] + b[2];
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins[0] * bins[1] * bins[2]];
            let atom_bins: Vec<[usize; 3]> = y.iter().map(bin_of).collect();
            for (i, b) in atom_bins.iter().enumerate() {
                members[flat(*b)].push(i);
            }
            for i in 0..n {
                let b = atom_bins[i];
                for d0 in 0..3 {
                    for d1 in 0..3 {
                        for d2 in 0..3 {
                            let nb = [
                                (b[0] + bins[0] + d0 - 1) % bins[0],
                                (b[1] + bins[1] + d1 - 1) % bins[1],
                                (b[2] + bins[2] + d2 - 1) % bins[2],
                            ];
                            for &j in &members[flat(nb)] {
                                if j > i {
                                    push(i, j, &mut pairs);
                                }
                            }
                        }
                    }
                }
            }
            pairs.sort_unstable_by_key(|p| (p.i, p.j));
        }

        Ok(NeighborList {
            pairs,
            cutoff,
            skin,
            built_from: config.displacements.clone(),
        })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn skin(&self) -> f64 {
        self.skin
    }

    /// True once some atom has moved more than half the skin since the build.
    pub fn is_stale(&self, displacements: &[Vec3]) -> bool {
        let limit = 0.25 * self.skin * self.skin;
        self.built_from
            .iter()
            .zip(displacements)
            .any(|(a, b)| (a - b).norm_squared() > limit)
    }
}

/// Energy, forces and the deformation derivative `phi = dV/dA` (at fixed `u`).
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: f64,
    pub forces: Vec<Vec3>,
    pub phi: Mat3,
}

/// Evaluates a configuration with a prebuilt neighbor list.
pub fn evaluate_with(config: &Configuration, pot: &dyn Potential, list: &NeighborList) -> Evaluation {
    let n = config.supercell.len();
    let a = config.deformation.matrix();
    let u = &config.displacements;
    let rc = pot.cutoff();
    let embedding = pot.has_embedding();

    struct Active {
        i: usize,
        j: usize,
        d: Vec3,
        r: f64,
        dv: f64,
        drho: f64,
        sep: Vec3,
    }

    let mut energy = 0.0;
    let mut rho_bar = vec![0.0; n];
    let mut active = Vec::with_capacity(list.pairs.len());
    for p in &list.pairs {
        let d = a * p.separation + u[p.j] - u[p.i];
        let r = d.norm();
        if r >= rc {
            continue;
        }
        let v = pot.pair(r);
        energy += v.v;
        let mut drho = 0.0;
        if embedding {
            let rho = pot.density(r);
            rho_bar[p.i] += rho.v;
            rho_bar[p.j] += rho.v;
            drho = rho.d1;
        }
        active.push(Active {
            i: p.i,
            j: p.j,
            d,
            r,
            dv: v.d1,
            drho,
            sep: p.separation,
        });
    }

    let mut dfdrho = vec![0.0; n];
    if embedding {
        for (rho, slot) in rho_bar.iter().zip(dfdrho.iter_mut()) {
            let f = pot.embed(*rho);
            energy += f.v;
            *slot = f.d1;
        }
    }

    let mut forces = vec![Vec3::zeros(); n];
    let mut phi = Mat3::zeros();
    for p in &active {
        // dE/dd for d = y_j - y_i
        let scalar = (p.dv + (dfdrho[p.i] + dfdrho[p.j]) * p.drho) / p.r;
        let b = p.d * scalar;
        forces[p.i] += b;
        forces[p.j] -= b;
        phi += b * p.sep.transpose();
    }

    Evaluation { energy, forces, phi }
}

/// Default Verlet skin, Angstrom.
pub const DEFAULT_SKIN: f64 = 0.5;

pub fn evaluate(config: &Configuration, pot: &dyn Potential) -> Result<Evaluation> {
    let list = NeighborList::build(config, pot.cutoff(), 0.0)?;
    Ok(evaluate_with(config, pot, &list))
}

/// Total potential energy, eV.
pub fn total_energy(config: &Configuration, pot: &dyn Potential) -> Result<f64> {
    Ok(evaluate(config, pot)?.energy)
}

/// Forces `-dE/dy_k`, eV/Angstrom.
pub fn forces(config: &Configuration, pot: &dyn Potential) -> Result<Vec<Vec3>> {
    Ok(evaluate(config, pot)?.forces)
}
