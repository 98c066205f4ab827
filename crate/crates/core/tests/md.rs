use qhstress::lattice::{build_supercell, BravaisLattice, DeformationGradient};
use qhstress::md::{init_state, nvt_step, run_sampling, MdConfig};
use qhstress::potential::EamCu;

const A0: f64 = 3.6145187884090153;

fn config(n_sample: usize) -> MdConfig {
    MdConfig {
        temperature: 100.0,
        n_equilibrate: 500,
        n_sample,
        sample_stride: 20,
        ..MdConfig::default()
    }
}

#[test]
fn extended_energy_is_conserved_and_momentum_stays_zero() {
    let pot = EamCu::default();
    let sc = build_supercell(&BravaisLattice::fcc(A0).unwrap(), [4, 4, 4]).unwrap();
    let cfg = config(10_000);
    let mut s = init_state(sc, DeformationGradient::a1(), &cfg, &pot, 42).unwrap();
    let r = run_sampling(&mut s, &cfg, &pot, None).unwrap();
    assert!(r.conserved_drift < 1e-5, "{}", r.conserved_drift);
    assert!(s.total_momentum().amax() < 1e-10);
    assert!((r.mean_temperature - 100.0).abs() < 5.0);
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let pot = EamCu::default();
    let sc = build_supercell(&BravaisLattice::fcc(A0).unwrap(), [4, 4, 4]).unwrap();
    let cfg = config(200);
    let run = || {
        let mut s = init_state(sc.clone(), DeformationGradient::a1(), &cfg, &pot, 3).unwrap();
        let mut out = Vec::new();
        run_sampling(&mut s, &cfg, &pot, Some(&mut out)).unwrap();
        out
    };
    let a = run();
    assert_eq!(a, run());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 10);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 11);
}

#[test]
fn longer_runs_shrink_the_standard_error() {
    let pot = EamCu::default();
    let sc = build_supercell(&BravaisLattice::fcc(A0).unwrap(), [4, 4, 4]).unwrap();
    let se = |n: usize| {
        let cfg = config(n);
        let mut s = init_state(sc.clone(), DeformationGradient::a1(), &cfg, &pot, 8).unwrap();
        run_sampling(&mut s, &cfg, &pot, None).unwrap().standard_error[(0, 0)]
    };
    let ratio = se(16_000) / se(8_000);
    // About 1/sqrt(2) for independent blocks; generous bounds for a single realization.
    assert!(ratio > 0.35 && ratio < 1.05, "{ratio}");
}

#[test]
fn decoupled_thermostat_halving_dt_quarters_energy_error() {
    let pot = EamCu::default();
    let sc = build_supercell(&BravaisLattice::fcc(A0).unwrap(), [4, 4, 4]).unwrap();
    let error = |dt: f64, steps: usize| {
        let cfg = MdConfig {
            dt,
            thermostat_period: None,
            ..config(0)
        };
        let mut s = init_state(sc.clone(), DeformationGradient::identity(), &cfg, &pot, 5).unwrap();
        let h0 = s.conserved_energy(100.0);
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            nvt_step(&mut s, &cfg, &pot).unwrap();
            worst = worst.max((s.conserved_energy(100.0) - h0).abs());
        }
        worst
    };
    let ratio = error(0.1, 200) / error(0.05, 400);
    assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
}
