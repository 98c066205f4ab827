use qhstress::harmonics::{
    default_shell_radius, deformation_derivative_table, force_constant_table, force_constant_table_by_force_differences,
};
use qhstress::lattice::{BravaisLattice, DeformationGradient};
use qhstress::potential::EamCu;

const A0: f64 = 3.6145187884090153;

#[test]
fn closed_form_blocks_match_force_differences() {
    let pot = EamCu::default();
    let lat = BravaisLattice::fcc(A0).unwrap();
    for a in [DeformationGradient::a1(), DeformationGradient::a2()] {
        let r = default_shell_radius(&pot, &a);
        let exact = force_constant_table(&a, &pot, &lat, r).unwrap();
        let fd = force_constant_table_by_force_differences(&a, &pot, &lat, r, None, 1e-4).unwrap();
        let scale = exact.self_block.amax();
        assert!((exact.self_block - fd.self_block).amax() < 1e-5 * scale);
        let worst = exact
            .blocks
            .iter()
            .zip(&fd.blocks)
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max);
        assert!(worst < 1e-5 * scale, "{worst}");
        // Nearest-neighbor blocks agree to relative 1e-4 individually.
        let nn = exact.blocks.iter().zip(&fd.blocks).take(12);
        for (x, y) in nn {
            assert!((x - y).amax() < 1e-4 * x.amax());
        }
    }
}

#[test]
fn deformation_derivatives_converge_under_step_halving() {
    let pot = EamCu::default();
    let lat = BravaisLattice::fcc(A0).unwrap();
    let a = DeformationGradient::a1();
    let r = default_shell_radius(&pot, &a);
    let coarse = deformation_derivative_table(&a, &pot, &lat, r, 2e-4).unwrap();
    let fine = deformation_derivative_table(&a, &pot, &lat, r, 1e-4).unwrap();
    let finest = deformation_derivative_table(&a, &pot, &lat, r, 1e-6).unwrap();
    for al in 0..3 {
        for be in 0..3 {
            let (c, f, e) = (coarse.component(al, be), fine.component(al, be), finest.component(al, be));
            let scale = e.self_block.amax().max(1.0);
            let d1 = (c.self_block - e.self_block).amax();
            let d2 = (f.self_block - e.self_block).amax();
            // Second-order differences: halving the step cuts the error by about four.
            assert!(d2 < 1e-6 * scale, "{d2}");
            assert!(d1 > 2.0 * d2 || d1 < 1e-9 * scale, "{d1} {d2}");
        }
    }
}

#[test]
fn cubic_symmetry_of_deformation_derivatives() {
    let pot = EamCu::default();
    let lat = BravaisLattice::fcc(A0).unwrap();
    let a = DeformationGradient::identity();
    let h = deformation_derivative_table(&a, &pot, &lat, default_shell_radius(&pot, &a), 1e-6).unwrap();
    // Self blocks of H_11, H_22, H_33 are related by the axis permutation.
    let p = |m: &nalgebra::Matrix3<f64>, k: usize| {
        let perm = [[0, 1, 2], [1, 2, 0], [2, 0, 1]][k];
        nalgebra::Matrix3::from_fn(|i, j| m[(perm[i], perm[j])])
    };
    let h11 = h.component(0, 0).self_block;
    let h22 = h.component(1, 1).self_block;
    let h33 = h.component(2, 2).self_block;
    assert!((p(&h22, 1) - h11).amax() < 1e-6 * h11.amax());
    assert!((p(&h33, 2) - h11).amax() < 1e-6 * h11.amax());
}
