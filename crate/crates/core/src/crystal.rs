//! Lattice sums over the perfect, uniformly deformed crystal (one atom per
//! primitive cell, every site equivalent).

use crate::jet::Jet;
use crate::lattice::{reference_shells, BravaisLattice, DeformationGradient, Mat3, Vec3};
use crate::potential::Potential;
use crate::Result;

/// A neighbor of the site at the origin inside the potential cutoff.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub half: [i64; 3],
    /// Reference offset.
    pub reference: Vec3,
    /// Deformed offset `A r`.
    pub deformed: Vec3,
    pub distance: f64,
    pub pair: Jet,
    pub density: Jet,
}

/// Site-level quantities of the uniformly deformed lattice.
#[derive(Debug, Clone)]
pub struct LatticeSums {
    pub neighbors: Vec<Neighbor>,
    pub rho_bar: f64,
    pub embedding: Jet,
    /// Potential energy per site, eV.
    pub energy_per_site: f64,
    /// Derivative of the per-site energy with respect to `A`, eV.
    pub phi_per_site: Mat3,
}

/// Evaluates the neighbor shell, host density, per-site energy and its
/// deformation derivative.
pub fn lattice_sums(pot: &dyn Potential, lattice: &BravaisLattice, a: &DeformationGradient) -> Result<LatticeSums> {
    let rc = pot.cutoff();
    let reach = rc / a.min_singular_value() * (1.0 + 1e-9);
    let shells = reference_shells(lattice, reach)?;
    let am = a.matrix();
    let mut neighbors = Vec::new();
    for o in shells.offsets() {
        let deformed = am * o.r;
        let distance = deformed.norm();
        if distance >= rc {
            continue;
        }
        neighbors.push(Neighbor {
            half: o.half,
            reference: o.r,
            deformed,
            distance,
            pair: pot.pair(distance),
            density: pot.density(distance),
        });
    }
    let rho_bar: f64 = neighbors.iter().map(|n| n.density.v).sum();
    let embedding = if pot.has_embedding() { pot.embed(rho_bar) } else { Jet::ZERO };
    let energy_per_site = 0.5 * neighbors.iter().map(|n| n.pair.v).sum::<f64>() + embedding.v;
    let mut phi_per_site = Mat3::zeros();
    for n in &neighbors {
        let scalar = (0.5 * n.pair.d1 + embedding.d1 * n.density.d1) / n.distance;
        phi_per_site += (n.deformed * scalar) * n.reference.transpose();
    }
    Ok(LatticeSums {
        neighbors,
        rho_bar,
        embedding,
        energy_per_site,
        phi_per_site,
    })
}
