use proptest::prelude::*;
use qhstress::atoms::{evaluate, total_energy, Configuration};
use qhstress::harmonics::phi_tensor;
use qhstress::lattice::{build_supercell, BravaisLattice, DeformationGradient, Mat3, Vec3};
use qhstress::potential::{EamCu, PairForm, PairPotential, Potential};
use qhstress::stress::zero_t_stress;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A0: f64 = 3.6145187884090153;

fn perturbed(seed: u64, amplitude: f64, a: DeformationGradient) -> Configuration {
    let sc = build_supercell(&BravaisLattice::fcc(A0).unwrap(), [4, 4, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = (0..sc.len())
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-amplitude..amplitude)))
        .collect();
    Configuration::with_displacements(sc, a, u).unwrap()
}

/// Fourth-order central difference of `f` at 0.
fn derivative(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

fn check_forces(cfg: &Configuration, pot: &dyn Potential, atoms: &[usize]) -> f64 {
    let f = evaluate(cfg, pot).unwrap().forces;
    let scale = f.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for &i in atoms {
        for k in 0..3 {
            let g = derivative(
                |s| {
                    let mut c = cfg.clone();
                    c.displacements[i][k] += s;
                    total_energy(&c, pot).unwrap()
                },
                1e-3,
            );
            worst = worst.max((f[i][k] + g).abs() / scale);
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn forces_are_minus_energy_gradient(seed in any::<u64>(), preset in 0usize..3) {
        let a = [DeformationGradient::a0(), DeformationGradient::a1(), DeformationGradient::a2()][preset];
        let cfg = perturbed(seed, 0.1, a);
        let atoms: Vec<usize> = (0..cfg.supercell.len()).step_by(37).collect();
        prop_assert!(check_forces(&cfg, &EamCu::default(), &atoms) < 1e-6);
    }

    #[test]
    fn energy_is_translation_invariant(seed in any::<u64>(), shift in prop::array::uniform3(-3.0f64..3.0)) {
        let cfg = perturbed(seed, 0.1, DeformationGradient::a1());
        let pot = EamCu::default();
        let e = total_energy(&cfg, &pot).unwrap();
        let mut moved = cfg.clone();
        let c = Vec3::from(shift);
        moved.displacements.iter_mut().for_each(|u| *u += c);
        prop_assert!((total_energy(&moved, &pot).unwrap() - e).abs() < 1e-10 * e.abs());
        let f = evaluate(&cfg, &pot).unwrap().forces;
        prop_assert!(f.iter().sum::<Vec3>().amax() < 1e-10);
    }
}

#[test]
fn pair_potential_forces() {
    for form in [PairForm::MorseSmooth, PairForm::MorseC2] {
        let cfg = perturbed(5, 0.1, DeformationGradient::a1());
        assert!(check_forces(&cfg, &PairPotential::copper_like(form), &[0, 100, 200]) < 1e-6);
    }
}

/// Energy by explicit loops over atoms and periodic images.
fn energy_by_images(cfg: &Configuration, pot: &dyn Potential) -> f64 {
    let y = cfg.positions();
    let cell = cfg.deformed_cell();
    let n = y.len();
    let rc = pot.cutoff();
    let mut pair = 0.0;
    let mut rho = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            for a in -1i32..=1 {
                for b in -1i32..=1 {
                    for c in -1i32..=1 {
                        if i == j && a == 0 && b == 0 && c == 0 {
                            continue;
                        }
                        let r = (y[j] + cell * Vec3::new(a as f64, b as f64, c as f64) - y[i]).norm();
                        if r < rc {
                            pair += 0.5 * pot.pair(r).v;
                            rho[i] += pot.density(r).v;
                        }
                    }
                }
            }
        }
    }
    pair + rho.iter().map(|&r| pot.embed(r).v).sum::<f64>()
}

#[test]
fn energy_matches_image_sum() {
    let pot = EamCu::default();
    for (seed, a) in [(1, DeformationGradient::a0()), (2, DeformationGradient::a1()), (3, DeformationGradient::a2())] {
        let cfg = perturbed(seed, 0.15, a);
        let e = total_energy(&cfg, &pot).unwrap();
        let oracle = energy_by_images(&cfg, &pot);
        assert!((e - oracle).abs() < 1e-10 * oracle.abs(), "{e} {oracle}");
    }
}

#[test]
fn phi_is_deformation_derivative_of_energy() {
    let pot = EamCu::default();
    let cfg = perturbed(9, 0.1, DeformationGradient::a1());
    let phi = phi_tensor(&cfg, &pot).unwrap();
    let mut fd = Mat3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            fd[(a, b)] = derivative(
                |s| {
                    let mut c = cfg.clone();
                    c.deformation = cfg.deformation.perturbed(a, b, s).unwrap();
                    total_energy(&c, &pot).unwrap()
                },
                1e-4,
            );
        }
    }
    assert!((phi - fd).amax() < 1e-6 * phi.amax(), "{phi} {fd}");
}

#[test]
fn virial_of_uniform_state_is_zero_temperature_stress() {
    let pot = EamCu::default();
    let lat = BravaisLattice::fcc(A0).unwrap();
    for a in [DeformationGradient::a0(), DeformationGradient::a1(), DeformationGradient::a2()] {
        let cfg = Configuration::uniform(build_supercell(&lat, [4, 4, 4]).unwrap(), a);
        let v = phi_tensor(&cfg, &pot).unwrap() / cfg.volume();
        let p = zero_t_stress(&a, &pot, &lat).unwrap();
        assert!((v - p.0).amax() < 1e-12, "{v} {}", p.0);
    }
}
