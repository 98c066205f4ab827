//! Stress and free-energy assembly.
//!
//! The finite-temperature stress in the quasi-harmonic approximation is
//!
//! ```text
//! P_ab = phi_ab(Ax) / Omega + k_B T / (2 Omega_0) * sum_{xi != 0} D(xi)^-1 : H_ab(xi)
//! ```
//!
//! where `D(xi)` and `H_ab(xi)` are plain lattice Fourier sums of the
//! force-constant blocks and their deformation derivatives, and
//! `Omega_0 = N_k V_0` is the reference volume of the supercell implied by a
//! grid of `N_k` wavevectors. Two real-space routes evaluate the same
//! expression with full `3N x 3N` matrices and serve as oracles.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::brillouin::{fourier_with_phases, CMat3, KPointGrid};
use crate::crystal::lattice_sums;
use crate::error::{Error, Result};
use crate::harmonics::{
    default_shell_radius, deformation_derivative_table, force_constant_table, DeformationDerivativeTable,
    ForceConstantTable, DEFORMATION_STEP,
};
use crate::lattice::{BravaisLattice, DeformationGradient, LatticeKind, Mat3, Supercell, Vec3};
use crate::potential::Potential;

/// Boltzmann constant, eV/K.
pub const BOLTZMANN_EV: f64 = 8.617333262e-5;

/// Smallest admissible eigenvalue of a dynamical matrix away from Gamma, eV/A^2.
pub const SOFT_MODE_THRESHOLD: f64 = 1e-10;

/// Eigenvalues below this magnitude count as translational zero modes, eV/A^2.
pub const ZERO_MODE_THRESHOLD: f64 = 1e-8;

/// First Piola-Kirchhoff stress, eV/A^3. Not symmetric in general.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressTensor(pub Mat3);

impl StressTensor {
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.0[(a, b)]
    }
}

impl std::ops::Sub for StressTensor {
    type Output = StressTensor;
    fn sub(self, o: StressTensor) -> StressTensor {
        StressTensor(self.0 - o.0)
    }
}

/// Largest entrywise relative deviation of `a` from `reference`, over entries
/// of `reference` whose magnitude exceeds `floor`.
pub fn max_relative_deviation(a: &Mat3, reference: &Mat3, floor: f64) -> f64 {
    a.iter()
        .zip(reference.iter())
        .filter(|(_, r)| r.abs() > floor)
        .map(|(x, r)| ((x - r) / r).abs())
        .fold(0.0, f64::max)
}

/// Cauchy-Born stress at zero temperature, `phi(Ax) / Omega` on the primitive cell.
pub fn zero_t_stress(a: &DeformationGradient, pot: &dyn Potential, lattice: &BravaisLattice) -> Result<StressTensor> {
    let sums = lattice_sums(pot, lattice, a)?;
    Ok(StressTensor(sums.phi_per_site / lattice.primitive_volume()))
}

/// Potential energy per reference volume of the uniformly deformed lattice, eV/A^3.
pub fn energy_density(a: &DeformationGradient, pot: &dyn Potential, lattice: &BravaisLattice) -> Result<f64> {
    Ok(lattice_sums(pot, lattice, a)?.energy_per_site / lattice.primitive_volume())
}

/// Lattice constant at which the undeformed cubic crystal carries zero stress,
/// searched within 20% of `guess`.
pub fn equilibrium_lattice_constant(pot: &dyn Potential, kind: LatticeKind, guess: f64) -> Result<f64> {
    let a = DeformationGradient::identity();
    let pressure = |a0: f64| -> Result<f64> { Ok(zero_t_stress(&a, pot, &BravaisLattice::new(kind, a0)?)?.get(0, 0)) };
    let (mut lo, mut hi) = (0.8 * guess, 1.2 * guess);
    let (mut plo, phi) = (pressure(lo)?, pressure(hi)?);
    if plo.signum() == phi.signum() {
        return Err(Error::InvalidArgument(format!(
            "no zero-stress lattice constant within 20% of {guess}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let pm = pressure(mid)?;
        if pm == 0.0 || hi - lo < 1e-14 * guess {
            return Ok(mid);
        }
        if pm.signum() == plo.signum() {
            lo = mid;
            plo = pm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Settings for the force-constant tables behind [`QuasiHarmonic`].
#[derive(Debug, Clone, Copy)]
pub struct QhOptions {
    /// Reference shell radius; defaults to twice the cutoff scaled by `1/sigma_min(A)`.
    pub shell_radius: Option<f64>,
    /// Step in `A` for `H = dD/dA`.
    pub deformation_step: f64,
}

impl Default for QhOptions {
    fn default() -> Self {
        QhOptions {
            shell_radius: None,
            deformation_step: DEFORMATION_STEP,
        }
    }
}

/// Force constants and their deformation derivatives at one deformation,
/// ready to be contracted over any k-point grid or temperature.
#[derive(Debug, Clone)]
pub struct QuasiHarmonic {
    pub deformation: DeformationGradient,
    pub primitive_volume: f64,
    pub zero_t: StressTensor,
    pub energy_density: f64,
    pub force_constants: ForceConstantTable,
    pub derivatives: DeformationDerivativeTable,
}

/// Per-wavevector data needed by the stress and free energy.
struct ModeSum {
    correction: Mat3,
    log_det: f64,
}

impl QuasiHarmonic {
    pub fn new(a: &DeformationGradient, pot: &dyn Potential, lattice: &BravaisLattice) -> Result<Self> {
        Self::with_options(a, pot, lattice, QhOptions::default())
    }

    pub fn with_options(
        a: &DeformationGradient,
        pot: &dyn Potential,
        lattice: &BravaisLattice,
        options: QhOptions,
    ) -> Result<Self> {
        let radius = options.shell_radius.unwrap_or_else(|| default_shell_radius(pot, a));
        let sums = lattice_sums(pot, lattice, a)?;
        let v0 = lattice.primitive_volume();
        Ok(QuasiHarmonic {
            deformation: *a,
            primitive_volume: v0,
            zero_t: StressTensor(sums.phi_per_site / v0),
            energy_density: sums.energy_per_site / v0,
            force_constants: force_constant_table(a, pot, lattice, radius)?,
            derivatives: deformation_derivative_table(a, pot, lattice, radius, options.deformation_step)?,
        })
    }

    fn mode_sums(&self, grid: &KPointGrid, with_derivatives: bool) -> Result<ModeSum> {
        let points: Vec<&Vec3> = grid.nonzero_points().collect();
        let per_point: Vec<ModeSum> = points
            .par_iter()
            .map(|xi| self.mode_at(xi, with_derivatives))
            .collect::<Result<_>>()?;
        // Fixed reduction order for reproducibility.
        let mut total = ModeSum {
            correction: Mat3::zeros(),
            log_det: 0.0,
        };
        for m in per_point {
            total.correction += m.correction;
            total.log_det += m.log_det;
        }
        Ok(total)
    }

    fn mode_at(&self, xi: &Vec3, with_derivatives: bool) -> Result<ModeSum> {
        let phases: Vec<Complex64> = self
            .force_constants
            .offsets()
            .iter()
            .map(|o| Complex64::from_polar(1.0, -xi.dot(&o.r)))
            .collect();
        let d = fourier_with_phases(&self.force_constants, &phases);
        let d = (d + d.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(d);
        let min = eig.eigenvalues.min();
        if !(min > SOFT_MODE_THRESHOLD) {
            return Err(Error::SoftMode {
                xi: [xi[0], xi[1], xi[2]],
                eigenvalue: min,
            });
        }
        let log_det = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        let mut correction = Mat3::zeros();
        if with_derivatives {
            let inv_diag = CMat3::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(1.0 / l, 0.0)));
            let inverse = eig.eigenvectors * inv_diag * eig.eigenvectors.adjoint();
            for alpha in 0..3 {
                for beta in 0..3 {
                    let h = fourier_with_phases(self.derivatives.component(alpha, beta), &phases);
                    // L : M = sum_ij L_ij conj(M_ij) = tr(L M^H); real for Hermitian pairs.
                    correction[(alpha, beta)] = inverse.iter().zip(h.iter()).map(|(l, m)| (l * m.conj()).re).sum();
                }
            }
        }
        Ok(ModeSum { correction, log_det })
    }

    /// `sum_{xi != 0} D(xi)^-1 : H_ab(xi)`, eV^0 (dimensionless per-mode sum).
    pub fn correction_sum(&self, grid: &KPointGrid) -> Result<Mat3> {
        Ok(self.mode_sums(grid, true)?.correction)
    }

    /// Reference volume of the supercell represented by `grid`.
    pub fn grid_volume(&self, grid: &KPointGrid) -> f64 {
        grid.len() as f64 * self.primitive_volume
    }

    /// Stress from a precomputed [`Self::correction_sum`].
    pub fn stress_from_sum(&self, temperature: f64, sum: &Mat3, grid_volume: f64) -> StressTensor {
        let kt = BOLTZMANN_EV * temperature;
        StressTensor(self.zero_t.0 + sum * (kt / (2.0 * grid_volume)))
    }

    /// Quasi-harmonic first Piola-Kirchhoff stress at `temperature` (K).
    pub fn stress(&self, temperature: f64, grid: &KPointGrid) -> Result<StressTensor> {
        check_temperature(temperature)?;
        let sum = self.correction_sum(grid)?;
        Ok(self.stress_from_sum(temperature, &sum, self.grid_volume(grid)))
    }

    /// Quasi-harmonic free energy density, eV/A^3.
    pub fn free_energy_density(&self, temperature: f64, grid: &KPointGrid) -> Result<f64> {
        free_energy_from_table(&self.force_constants, self.energy_density, self.primitive_volume, temperature, grid)
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("temperature must be >= 0, got {t}")))
    }
}

fn free_energy_from_table(
    table: &ForceConstantTable,
    energy_density: f64,
    v0: f64,
    temperature: f64,
    grid: &KPointGrid,
) -> Result<f64> {
    check_temperature(temperature)?;
    if temperature == 0.0 {
        return Ok(energy_density);
    }
    let kt = BOLTZMANN_EV * temperature;
    let points: Vec<&Vec3> = grid.nonzero_points().collect();
    let logs: Vec<f64> = points
        .par_iter()
        .map(|xi| -> Result<f64> {
            let d = crate::brillouin::lattice_fourier_sum(table, xi);
            let d = (d + d.adjoint()) * Complex64::new(0.5, 0.0);
            let ev = d.symmetric_eigenvalues();
            let min = ev.min();
            if !(min > SOFT_MODE_THRESHOLD) {
                return Err(Error::SoftMode {
                    xi: [xi[0], xi[1], xi[2]],
                    eigenvalue: min,
                });
            }
            Ok(ev.iter().map(|l| (l / (2.0 * std::f64::consts::PI * kt)).ln()).sum())
        })
        .collect::<Result<_>>()?;
    let sum: f64 = logs.iter().sum();
    Ok(energy_density + kt / (2.0 * grid.len() as f64 * v0) * sum)
}

/// Quasi-harmonic stress at `(A, T)` on a k-point grid.
pub fn qh_stress(
    a: &DeformationGradient,
    temperature: f64,
    pot: &dyn Potential,
    lattice: &BravaisLattice,
    grid: &KPointGrid,
) -> Result<StressTensor> {
    check_temperature(temperature)?;
    QuasiHarmonic::new(a, pot, lattice)?.stress(temperature, grid)
}

/// Quasi-harmonic free energy density
/// `V(Ax)/Omega + k_B T/(2 Omega_0) sum_{xi != 0} ln det[D(xi) / (2 pi k_B T)]`.
/// Needs only the force constants, not their deformation derivatives.
pub fn qh_free_energy_density(
    a: &DeformationGradient,
    temperature: f64,
    pot: &dyn Potential,
    lattice: &BravaisLattice,
    grid: &KPointGrid,
    shell_radius: Option<f64>,
) -> Result<f64> {
    let radius = shell_radius.unwrap_or_else(|| default_shell_radius(pot, a));
    let table = force_constant_table(a, pot, lattice, radius)?;
    free_energy_from_table(
        &table,
        energy_density(a, pot, lattice)?,
        lattice.primitive_volume(),
        temperature,
        grid,
    )
}

/// Assembles the `3N x 3N` matrix of a lattice-periodic block table on `supercell`,
/// summing every periodic image of each offset.
pub fn fold_periodic(table: &ForceConstantTable, supercell: &Supercell) -> DMatrix<f64> {
    let n = supercell.len();
    let sites = supercell.site_index();
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    let x = supercell.positions();
    for i in 0..n {
        add_block(&mut m, i, i, &table.self_block);
        for (o, block) in table.offsets().iter().zip(&table.blocks) {
            let j = sites.find(&(x[i] + o.r)).expect("lattice offset maps onto a supercell site");
            add_block(&mut m, i, j, block);
        }
    }
    m
}

fn add_block(m: &mut DMatrix<f64>, i: usize, j: usize, block: &Mat3) {
    for a in 0..3 {
        for b in 0..3 {
            m[(3 * i + a, 3 * j + b)] += block[(a, b)];
        }
    }
}

/// Full periodic Hessian with its translational zero modes separated out.
#[derive(Debug, Clone)]
pub struct PbcHessian {
    pub matrix: DMatrix<f64>,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl PbcHessian {
    pub fn new(table: &ForceConstantTable, supercell: &Supercell) -> Self {
        let raw = fold_periodic(table, supercell);
        let sym = (&raw + raw.transpose()) * 0.5;
        let projector = translation_projector(supercell.len());
        let projected = &projector * &sym * &projector;
        let eigen = SymmetricEigen::new(projected);
        PbcHessian { matrix: sym, eigen }
    }

    /// Number of eigenvalues of the (projected) Hessian with `|lambda| < tol`.
    pub fn zero_mode_count(&self, tol: f64) -> usize {
        self.eigen.eigenvalues.iter().filter(|l| l.abs() < tol).count()
    }

    /// Smallest eigenvalue once the translation subspace is lifted out of the
    /// null space (`D + c T T^T` with `c` the largest eigenvalue).
    pub fn deflated_min_eigenvalue(&self) -> f64 {
        let n = self.matrix.nrows() / 3;
        let c = self.eigen.eigenvalues.max().max(1.0);
        let t = translation_basis(n);
        let lifted = &self.matrix + &t * t.transpose() * c;
        lifted.symmetric_eigenvalues().min()
    }

    /// Pseudo-inverse on the complement of the three translations.
    pub fn pseudo_inverse(&self) -> Result<DMatrix<f64>> {
        let mut order: Vec<usize> = (0..self.eigen.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| self.eigen.eigenvalues[a].partial_cmp(&self.eigen.eigenvalues[b]).expect("finite"));
        let zero: Vec<usize> = order.iter().cloned().filter(|&k| self.eigen.eigenvalues[k].abs() < ZERO_MODE_THRESHOLD).collect();
        let negative = order.iter().find(|&&k| self.eigen.eigenvalues[k] <= -ZERO_MODE_THRESHOLD);
        if let Some(&k) = negative {
            return Err(Error::Instability(format!(
                "periodic Hessian has negative eigenvalue {:e}",
                self.eigen.eigenvalues[k]
            )));
        }
        if zero.len() != 3 {
            return Err(Error::Instability(format!(
                "periodic Hessian has {} near-zero modes, expected the 3 translations",
                zero.len()
            )));
        }
        let dim = self.matrix.nrows();
        let mut g = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            if zero.contains(&k) {
                continue;
            }
            let v = self.eigen.eigenvectors.column(k);
            g += v * v.transpose() / self.eigen.eigenvalues[k];
        }
        Ok(g)
    }
}

fn translation_basis(n: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(3 * n, 3);
    let w = 1.0 / (n as f64).sqrt();
    for i in 0..n {
        for a in 0..3 {
            t[(3 * i + a, a)] = w;
        }
    }
    t
}

fn translation_projector(n: usize) -> DMatrix<f64> {
    let t = translation_basis(n);
    DMatrix::identity(3 * n, 3 * n) - &t * t.transpose()
}

fn contract(g: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    g.iter().zip(h.iter()).map(|(a, b)| a * b).sum()
}

fn tables_for(
    a: &DeformationGradient,
    pot: &dyn Potential,
    lattice: &BravaisLattice,
) -> Result<(ForceConstantTable, DeformationDerivativeTable)> {
    let radius = default_shell_radius(pot, a);
    Ok((
        force_constant_table(a, pot, lattice, radius)?,
        deformation_derivative_table(a, pot, lattice, radius, DEFORMATION_STEP)?,
    ))
}

/// Real-space quasi-harmonic stress on a small periodic supercell, using
/// full `3N x 3N` matrices and a pseudo-inverse that removes the three
/// uniform translations (the centre-of-mass constraint).
pub fn realspace_oracle_pbc(
    a: &DeformationGradient,
    temperature: f64,
    pot: &dyn Potential,
    supercell: &Supercell,
) -> Result<StressTensor> {
    check_temperature(temperature)?;
    let lattice = supercell.lattice();
    let p0 = zero_t_stress(a, pot, lattice)?;
    if temperature == 0.0 {
        return Ok(p0);
    }
    let (d, h) = tables_for(a, pot, lattice)?;
    let g = PbcHessian::new(&d, supercell).pseudo_inverse()?;
    let omega = supercell.volume();
    let kt = BOLTZMANN_EV * temperature;
    let mut p = p0.0;
    for alpha in 0..3 {
        for beta in 0..3 {
            let hm = fold_periodic(h.component(alpha, beta), supercell);
            p[(alpha, beta)] += kt / (2.0 * omega) * contract(&g, &hm);
        }
    }
    Ok(StressTensor(p))
}

/// Atoms of `supercell` more than `boundary_width` cell layers from its faces.
pub fn interior_atoms(supercell: &Supercell, boundary_width: usize) -> Vec<usize> {
    let counts = supercell.counts();
    supercell
        .cell_indices()
        .iter()
        .enumerate()
        .filter(|(_, c)| (0..3).all(|d| c[d] >= boundary_width && c[d] + boundary_width < counts[d]))
        .map(|(i, _)| i)
        .collect()
}

/// Assembles interior-only blocks (no periodic images) of a lattice table.
fn restrict_interior(table: &ForceConstantTable, supercell: &Supercell, interior: &[usize]) -> DMatrix<f64> {
    let lookup = table.shells.lookup();
    let x = supercell.positions();
    let half = 0.5 * supercell.lattice().a0();
    let n = interior.len();
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    for (p, &i) in interior.iter().enumerate() {
        for (q, &j) in interior.iter().enumerate() {
            let block = if i == j {
                Some(&table.self_block)
            } else {
                let d = (x[j] - x[i]) / half;
                let key = [d[0].round() as i64, d[1].round() as i64, d[2].round() as i64];
                lookup.get(&key).map(|&k| &table.blocks[k])
            };
            if let Some(b) = block {
                add_block(&mut m, p, q, b);
            }
        }
    }
    m
}

/// Quasi-harmonic stress with the atoms outside the interior of `supercell`
/// clamped at `A x` (the surrounding infinite lattice is held fixed as well).
/// `G` is the true inverse of the interior Hessian; `Omega` is the interior reference volume.
pub fn dirichlet_oracle(
    a: &DeformationGradient,
    temperature: f64,
    pot: &dyn Potential,
    supercell: &Supercell,
    boundary_width: usize,
) -> Result<StressTensor> {
    check_temperature(temperature)?;
    let lattice = supercell.lattice();
    let interior = interior_atoms(supercell, boundary_width);
    if interior.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no interior atoms remain after removing {boundary_width} boundary layers"
        )));
    }
    let p0 = zero_t_stress(a, pot, lattice)?;
    if temperature == 0.0 {
        return Ok(p0);
    }
    let (d, h) = tables_for(a, pot, lattice)?;
    let dm = restrict_interior(&d, supercell, &interior);
    let dm = (&dm + dm.transpose()) * 0.5;
    let chol = dm
        .cholesky()
        .ok_or_else(|| Error::Instability("interior Hessian is not positive definite".into()))?;
    let g = chol.inverse();
    let omega = interior.len() as f64 * lattice.primitive_volume();
    let kt = BOLTZMANN_EV * temperature;
    let mut p = p0.0;
    for alpha in 0..3 {
        for beta in 0..3 {
            let hm = restrict_interior(h.component(alpha, beta), supercell, &interior);
            p[(alpha, beta)] += kt / (2.0 * omega) * contract(&g, &hm);
        }
    }
    Ok(StressTensor(p))
}

/// Smallest eigenvalue of the interior Hessian used by [`dirichlet_oracle`].
pub fn dirichlet_min_eigenvalue(
    a: &DeformationGradient,
    pot: &dyn Potential,
    supercell: &Supercell,
    boundary_width: usize,
) -> Result<f64> {
    let lattice = supercell.lattice();
    let interior = interior_atoms(supercell, boundary_width);
    let d = force_constant_table(a, pot, lattice, default_shell_radius(pot, a))?;
    let dm = restrict_interior(&d, supercell, &interior);
    Ok(((&dm + dm.transpose()) * 0.5).symmetric_eigenvalues().min())
}

/// One CSV record: temperature, `A` (9), `P` (9), free energy density.
pub fn csv_header() -> String {
    let mut cols = vec!["T".to_string()];
    for prefix in ["A", "P"] {
        for a in 1..=3 {
            for b in 1..=3 {
                cols.push(format!("{prefix}{a}{b}"));
            }
        }
    }
    cols.push("F".to_string());
    cols.join(",")
}

pub fn csv_row(temperature: f64, a: &DeformationGradient, p: &StressTensor, free_energy: f64) -> String {
    let mut vals = vec![format_float(temperature)];
    for m in [a.matrix(), p.matrix()] {
        for r in 0..3 {
            for c in 0..3 {
                vals.push(format_float(m[(r, c)]));
            }
        }
    }
    vals.push(format_float(free_energy));
    vals.join(",")
}

/// 17 significant digits, locale independent.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
