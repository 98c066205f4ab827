//! Constant-temperature molecular dynamics on a deformed periodic supercell,
//! used to sample the time-averaged configurational virial.
//!
//! Internal units are eV, Angstrom and amu, so the natural time unit is
//! `sqrt(amu A^2 / eV)` (about 10.18 fs). [`MdConfig::dt`] is given in the
//! external time unit of 0.052880 ps.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::atoms::{evaluate_with, Configuration, NeighborList, DEFAULT_SKIN};
use crate::error::{Error, Result};
use crate::lattice::{DeformationGradient, Mat3, Supercell, Vec3};
use crate::potential::Potential;
use crate::stress::{format_float, StressTensor, BOLTZMANN_EV};

/// External MD time unit, ps.
pub const TIME_UNIT_PS: f64 = 0.052880;

/// `sqrt(amu A^2 / eV)` in ps.
pub fn internal_time_unit_ps() -> f64 {
    const AMU_KG: f64 = 1.660_539_066_60e-27;
    const EV_J: f64 = 1.602_176_634e-19;
    (AMU_KG * 1e-20 / EV_J).sqrt() * 1e12
}

/// Nose-Hoover chain length.
pub const CHAIN_LENGTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MdConfig {
    /// Target temperature, K.
    pub temperature: f64,
    /// Time step in units of [`TIME_UNIT_PS`].
    pub dt: f64,
    pub n_equilibrate: usize,
    pub n_sample: usize,
    pub sample_stride: usize,
    /// Thermostat period in units of `dt`; `None` runs plain NVE.
    pub thermostat_period: Option<f64>,
}

impl Default for MdConfig {
    fn default() -> Self {
        MdConfig {
            temperature: 100.0,
            dt: 0.025,
            n_equilibrate: 4000,
            n_sample: 20000,
            sample_stride: 20,
            thermostat_period: Some(50.0),
        }
    }
}

impl MdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidArgument("sample_stride must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if let Some(p) = self.thermostat_period {
            if !(p > 0.0) {
                return Err(Error::InvalidArgument(format!("thermostat period must be positive, got {p}")));
            }
        }
        Ok(())
    }

    /// Time step in internal units.
    pub fn internal_dt(&self) -> f64 {
        self.dt * TIME_UNIT_PS / internal_time_unit_ps()
    }
}

/// Nose-Hoover chain positions, velocities and masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub xi: [f64; CHAIN_LENGTH],
    pub v: [f64; CHAIN_LENGTH],
    pub q: [f64; CHAIN_LENGTH],
}

/// Dynamical state. Atom positions are kept as unwrapped displacements `u`
/// from `A x`; periodic images enter only through the neighbor list.
#[derive(Debug, Clone)]
pub struct MdState {
    pub config: Configuration,
    /// Velocities, Angstrom per internal time unit.
    pub velocities: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub chain: Chain,
    pub forces: Vec<Vec3>,
    pub potential_energy: f64,
    pub phi: Mat3,
    pub step: usize,
    list: NeighborList,
}

impl MdState {
    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    /// Degrees of freedom after removing total momentum.
    pub fn degrees_of_freedom(&self) -> usize {
        3 * self.len() - 3
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.velocities
            .iter()
            .zip(&self.masses)
            .map(|(v, m)| 0.5 * m * v.norm_squared())
            .sum()
    }

    pub fn temperature(&self) -> f64 {
        2.0 * self.kinetic_energy() / (self.degrees_of_freedom() as f64 * BOLTZMANN_EV)
    }

    pub fn total_momentum(&self) -> Vec3 {
        self.velocities.iter().zip(&self.masses).map(|(v, m)| v * *m).sum()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.config.positions()
    }

    /// Energy of the extended system, conserved by the thermostatted dynamics.
    pub fn conserved_energy(&self, target_temperature: f64) -> f64 {
        let kt = BOLTZMANN_EV * target_temperature;
        let nf = self.degrees_of_freedom() as f64;
        let c = &self.chain;
        let mut h = self.kinetic_energy() + self.potential_energy;
        if c.q[0].is_finite() {
            for k in 0..CHAIN_LENGTH {
                h += 0.5 * c.q[k] * c.v[k] * c.v[k];
            }
            h += nf * kt * c.xi[0] + kt * c.xi[1..].iter().sum::<f64>();
        }
        h
    }

    fn refresh(&mut self, pot: &dyn Potential) -> Result<()> {
        if self.list.is_stale(&self.config.displacements) {
            self.list = NeighborList::build(&self.config, pot.cutoff(), DEFAULT_SKIN)?;
        }
        let e = evaluate_with(&self.config, pot, &self.list);
        self.forces = e.forces;
        self.potential_energy = e.energy;
        self.phi = e.phi;
        Ok(())
    }
}

fn chain_masses(n_dof: usize, temperature: f64, config: &MdConfig) -> [f64; CHAIN_LENGTH] {
    match config.thermostat_period {
        Some(p) => {
            let tau = p * config.internal_dt();
            let kt = BOLTZMANN_EV * temperature.max(1e-3);
            let mut q = [kt * tau * tau; CHAIN_LENGTH];
            q[0] *= n_dof as f64;
            q
        }
        None => [f64::INFINITY; CHAIN_LENGTH],
    }
}

/// Atoms at `A x` with Maxwell-Boltzmann velocities at `config.temperature`,
/// shifted to zero momentum and rescaled to the exact target temperature.
pub fn init_state(
    supercell: Supercell,
    a: DeformationGradient,
    config: &MdConfig,
    pot: &dyn Potential,
    seed: u64,
) -> Result<MdState> {
    config.validate()?;
    let n = supercell.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two atoms".into()));
    }
    let cfg = Configuration::uniform(supercell, a);
    let list = NeighborList::build(&cfg, pot.cutoff(), DEFAULT_SKIN)?;
    let masses = vec![pot.mass(); n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kt = BOLTZMANN_EV * config.temperature;
    let mut velocities: Vec<Vec3> = masses
        .iter()
        .map(|m| {
            let s = (kt / m).sqrt();
            Vec3::from_fn(|_, _| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        })
        .collect();
    let total_mass: f64 = masses.iter().sum();
    let drift: Vec3 = velocities.iter().zip(&masses).map(|(v, m)| v * *m).sum::<Vec3>() / total_mass;
    for v in velocities.iter_mut() {
        *v -= drift;
    }
    let n_dof = 3 * n - 3;
    let mut state = MdState {
        config: cfg,
        velocities,
        masses,
        chain: Chain {
            xi: [0.0; CHAIN_LENGTH],
            v: [0.0; CHAIN_LENGTH],
            q: chain_masses(n_dof, config.temperature, config),
        },
        forces: Vec::new(),
        potential_energy: 0.0,
        phi: Mat3::zeros(),
        step: 0,
        list,
    };
    let t = state.temperature();
    if config.temperature == 0.0 {
        state.velocities.iter_mut().for_each(|v| *v = Vec3::zeros());
    } else if t > 0.0 {
        let s = (config.temperature / t).sqrt();
        state.velocities.iter_mut().for_each(|v| *v *= s);
    }
    state.refresh(pot)?;
    Ok(state)
}

// Suzuki-Yoshida third-order weights.
fn yoshida_weights() -> [f64; 3] {
    let w1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
    [w1, 1.0 - 2.0 * w1, w1]
}

/// Propagates the chain and rescales particle velocities over half a step.
fn chain_half_step(state: &mut MdState, temperature: f64, dt: f64) {
    if !state.chain.q[0].is_finite() {
        return;
    }
    let kt = BOLTZMANN_EV * temperature;
    let nf = state.degrees_of_freedom() as f64;
    let m = CHAIN_LENGTH;
    let mut ke2 = 2.0 * state.kinetic_energy();
    let mut scale = 1.0;
    for w in yoshida_weights() {
        let d = w * dt;
        let c = &mut state.chain;
        let mut g = [0.0; CHAIN_LENGTH];
        g[0] = (ke2 - nf * kt) / c.q[0];
        for k in 1..m {
            g[k] = (c.q[k - 1] * c.v[k - 1] * c.v[k - 1] - kt) / c.q[k];
        }
        c.v[m - 1] += 0.25 * d * g[m - 1];
        for k in (0..m - 1).rev() {
            let e = (-0.125 * d * c.v[k + 1]).exp();
            c.v[k] = (c.v[k] * e + 0.25 * d * g[k]) * e;
        }
        let s = (-0.5 * d * c.v[0]).exp();
        scale *= s;
        ke2 *= s * s;
        for k in 0..m {
            c.xi[k] += 0.5 * d * c.v[k];
        }
        g[0] = (ke2 - nf * kt) / c.q[0];
        for k in 0..m - 1 {
            let e = (-0.125 * d * c.v[k + 1]).exp();
            c.v[k] = (c.v[k] * e + 0.25 * d * g[k]) * e;
            g[k + 1] = (c.q[k] * c.v[k] * c.v[k] - kt) / c.q[k + 1];
        }
        c.v[m - 1] += 0.25 * d * g[m - 1];
    }
    for v in state.velocities.iter_mut() {
        *v *= scale;
    }
}

/// One velocity-Verlet step between two thermostat half-steps.
pub fn nvt_step(state: &mut MdState, config: &MdConfig, pot: &dyn Potential) -> Result<()> {
    let dt = config.internal_dt();
    chain_half_step(state, config.temperature, dt);
    for ((v, f), m) in state.velocities.iter_mut().zip(&state.forces).zip(&state.masses) {
        *v += f * (0.5 * dt / m);
    }
    for (u, v) in state.config.displacements.iter_mut().zip(&state.velocities) {
        *u += v * dt;
    }
    state.refresh(pot)?;
    for ((v, f), m) in state.velocities.iter_mut().zip(&state.forces).zip(&state.masses) {
        *v += f * (0.5 * dt / m);
    }
    chain_half_step(state, config.temperature, dt);
    state.step += 1;
    Ok(())
}

/// Configurational virial `phi(y) / Omega` with `Omega` the reference volume.
pub fn virial_instant(state: &MdState) -> StressTensor {
    StressTensor(state.phi / state.config.volume())
}

/// Time-averaged virial with a block-averaged standard error.
#[derive(Debug, Clone)]
pub struct SamplingResult {
    pub mean: StressTensor,
    pub standard_error: Mat3,
    pub samples: usize,
    pub mean_temperature: f64,
    /// Change of the block-averaged conserved energy between the first and
    /// last sampling blocks, eV/atom.
    pub conserved_drift: f64,
    /// Largest excursion of the conserved energy from its start of sampling, eV/atom.
    pub conserved_excursion: f64,
}

pub const BLOCKS: usize = 10;

/// Runs `n_equilibrate` unsampled steps, then `n_sample` steps recording
/// the virial every `sample_stride` steps. When `trajectory` is given, a CSV
/// row (step, temperature, 9 stress entries) is written per sample.
pub fn run_sampling(
    state: &mut MdState,
    config: &MdConfig,
    pot: &dyn Potential,
    mut trajectory: Option<&mut dyn Write>,
) -> Result<SamplingResult> {
    config.validate()?;
    for _ in 0..config.n_equilibrate {
        nvt_step(state, config, pot)?;
    }
    if let Some(w) = trajectory.as_mut() {
        let mut cols = vec!["step".to_string(), "T".to_string()];
        for a in 1..=3 {
            for b in 1..=3 {
                cols.push(format!("P{a}{b}"));
            }
        }
        writeln!(w, "{}", cols.join(","))?;
    }
    let n = state.len() as f64;
    let h0 = state.conserved_energy(config.temperature);
    let mut excursion: f64 = 0.0;
    let mut conserved = Vec::new();
    let mut samples = Vec::new();
    let mut temp_sum = 0.0;
    for k in 1..=config.n_sample {
        nvt_step(state, config, pot)?;
        if k % config.sample_stride == 0 {
            let p = virial_instant(state);
            let t = state.temperature();
            let h = (state.conserved_energy(config.temperature) - h0) / n;
            excursion = excursion.max(h.abs());
            conserved.push(h);
            temp_sum += t;
            if let Some(w) = trajectory.as_mut() {
                let mut row = vec![state.step.to_string(), format_float(t)];
                row.extend(p.0.transpose().iter().map(|x| format_float(*x)));
                writeln!(w, "{}", row.join(","))?;
            }
            samples.push(p.0);
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("n_sample is smaller than sample_stride; no samples taken".into()));
    }
    let count = samples.len();
    let mean = samples.iter().sum::<Mat3>() / count as f64;
    let block = (count / BLOCKS).max(1);
    let block_mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let drift = (block_mean(&conserved[count - block..]) - block_mean(&conserved[..block])).abs();
    Ok(SamplingResult {
        mean: StressTensor(mean),
        standard_error: block_standard_error(&samples, BLOCKS),
        samples: count,
        mean_temperature: temp_sum / count as f64,
        conserved_drift: drift,
        conserved_excursion: excursion,
    })
}

/// Standard error of the mean from `blocks` contiguous block averages.
/// Falls back to one sample per block when there are fewer samples than blocks.
pub fn block_standard_error(samples: &[Mat3], blocks: usize) -> Mat3 {
    let blocks = blocks.min(samples.len());
    if blocks < 2 {
        return Mat3::zeros();
    }
    let per = samples.len() / blocks;
    let means: Vec<Mat3> = (0..blocks)
        .map(|b| samples[b * per..(b + 1) * per].iter().sum::<Mat3>() / per as f64)
        .collect();
    let grand = means.iter().sum::<Mat3>() / blocks as f64;
    let var = means
        .iter()
        .map(|m| (m - grand).component_mul(&(m - grand)))
        .sum::<Mat3>()
        / (blocks - 1) as f64;
    (var / blocks as f64).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_supercell, BravaisLattice, LatticeKind};
    use crate::potential::EamCu;
    use crate::stress::{equilibrium_lattice_constant, zero_t_stress};

    fn setup(t: f64) -> (MdConfig, Supercell, EamCu) {
        let pot = EamCu::default();
        let a0 = equilibrium_lattice_constant(&pot, LatticeKind::Fcc, 3.6).unwrap();
        let sc = build_supercell(&BravaisLattice::fcc(a0).unwrap(), [4, 4, 4]).unwrap();
        let cfg = MdConfig {
            temperature: t,
            ..MdConfig::default()
        };
        (cfg, sc, pot)
    }

    #[test]
    fn time_units() {
        assert!((internal_time_unit_ps() - 0.0101805).abs() < 1e-6);
    }

    #[test]
    fn init_contract() {
        let (cfg, sc, pot) = setup(100.0);
        let s = init_state(sc.clone(), DeformationGradient::a1(), &cfg, &pot, 7).unwrap();
        assert!(s.total_momentum().amax() < 1e-12);
        assert!((s.temperature() / 100.0 - 1.0).abs() < 1e-10);
        let again = init_state(sc, DeformationGradient::a1(), &cfg, &pot, 7).unwrap();
        assert_eq!(s.velocities, again.velocities);
    }

    #[test]
    fn too_small_cell() {
        let (cfg, _, pot) = setup(100.0);
        let sc = build_supercell(&BravaisLattice::fcc(3.615).unwrap(), [2, 2, 2]).unwrap();
        let r = init_state(sc, DeformationGradient::identity(), &cfg, &pot, 1);
        assert!(matches!(r, Err(Error::CellTooSmall { .. })));
    }

    #[test]
    fn zero_temperature_is_static() {
        let (mut cfg, sc, pot) = setup(0.0);
        cfg.thermostat_period = None;
        cfg.n_equilibrate = 0;
        cfg.n_sample = 40;
        let lat = sc.lattice().clone();
        let a = DeformationGradient::a1();
        let mut s = init_state(sc, a, &cfg, &pot, 3).unwrap();
        let r = run_sampling(&mut s, &cfg, &pot, None).unwrap();
        let p0 = zero_t_stress(&a, &pot, &lat).unwrap();
        assert!((r.mean.0 - p0.0).amax() < 1e-12 * p0.max_abs().max(1.0), "{} {}", r.mean.0, p0.0);
    }

    #[test]
    fn momentum_and_conserved_energy() {
        let (mut cfg, sc, pot) = setup(100.0);
        cfg.n_equilibrate = 500;
        cfg.n_sample = 10_000;
        cfg.sample_stride = 20;
        let mut s = init_state(sc, DeformationGradient::a0(), &cfg, &pot, 11).unwrap();
        let r = run_sampling(&mut s, &cfg, &pot, None).unwrap();
        assert!(s.total_momentum().amax() < 1e-10);
        assert!(r.conserved_drift < 1e-5, "{}", r.conserved_drift);
    }

    #[test]
    fn verlet_is_second_order() {
        let (mut cfg, sc, pot) = setup(100.0);
        cfg.thermostat_period = None;
        let drift = |dt: f64, steps: usize| {
            let mut c = cfg.clone();
            c.dt = dt;
            let mut s = init_state(sc.clone(), DeformationGradient::identity(), &c, &pot, 5).unwrap();
            let h0 = s.conserved_energy(c.temperature);
            let mut worst: f64 = 0.0;
            for _ in 0..steps {
                nvt_step(&mut s, &c, &pot).unwrap();
                worst = worst.max((s.conserved_energy(c.temperature) - h0).abs());
            }
            worst
        };
        let ratio = drift(0.2, 50) / drift(0.1, 100);
        assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn block_errors() {
        let samples: Vec<Mat3> = (0..100).map(|k| Mat3::from_element(if k % 2 == 0 { 1.0 } else { -1.0 })).collect();
        assert_eq!(block_standard_error(&samples, 10), Mat3::zeros());
    }
}
