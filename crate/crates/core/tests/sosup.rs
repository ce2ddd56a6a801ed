mod common;

use bdris::arch::{self, ArchSpec};
use bdris::network::{scattering_from_susceptance, validate_scattering, DEFAULT_Z0};
use bdris::numlin::{least_squares, takagi, DEFAULT_RANK_TOL};
use bdris::rng::stream_rng;
use bdris::sosup::{build_linear_system, project};
use common::{catalog, random_complex, random_susceptance};

#[test]
fn feasible_points_are_recovered() {
    for (s, spec) in catalog(16).iter().enumerate() {
        for seed in 0..20 {
            let mut rng = stream_rng(seed, s as u64);
            let b0 = random_susceptance(&mut rng, spec, DEFAULT_Z0);
            let theta0 = scattering_from_susceptance(&b0, DEFAULT_Z0).unwrap();
            let r = project(theta0.matrix(), spec, DEFAULT_Z0).unwrap();
            let err = (r.theta.matrix() - theta0.matrix()).norm();
            assert!(err < 1e-6, "{spec} seed {seed}: recovery error {err:.3e}");
            assert!(
                r.ls_residual < 1e-8,
                "{spec} seed {seed}: residual {:.3e}",
                r.ls_residual
            );
        }
    }
}

#[test]
fn feasible_stem_system_is_consistent() {
    let spec = ArchSpec::stem(3, 1).unwrap();
    let mut rng = stream_rng(5, 0);
    let b0 = random_susceptance(&mut rng, &spec, DEFAULT_Z0);
    let theta0 = scattering_from_susceptance(&b0, DEFAULT_Z0).unwrap();
    let f = takagi(theta0.matrix(), DEFAULT_RANK_TOL).unwrap();
    let maps = arch::transform_matrix(&spec);
    let (a, z) = build_linear_system(&f.q_r(), &maps, DEFAULT_Z0).unwrap();
    let ls = least_squares(&a, &z).unwrap();
    assert!(ls.residual < 1e-8);
}

#[test]
fn linear_system_dimensions() {
    let spec = ArchSpec::stem(16, 3).unwrap();
    let maps = arch::transform_matrix(&spec);
    let q = random_complex(1, 0, 16, 2);
    let (a, z) = build_linear_system(&q, &maps, DEFAULT_Z0).unwrap();
    assert_eq!(a.shape(), (32, arch::circuit_complexity(&spec)));
    assert_eq!(z.len(), 32);
}

#[test]
fn random_inputs_project_to_feasible_points() {
    for spec in catalog(16) {
        let mask = arch::mask(&spec);
        for seed in 0..10 {
            let x = random_complex(seed, 7, 16, 16);
            let r = project(&x, &spec, DEFAULT_Z0).unwrap();
            let b = r.b.matrix();
            for i in 0..16 {
                for j in 0..16 {
                    if mask[(i, j)] == 0 {
                        assert_eq!(b[(i, j)], 0.0);
                    }
                }
            }
            assert!(validate_scattering(r.theta.matrix(), 1e-8).unwrap().pass);
            assert!(r.achieved >= r.lower_bound - 1e-6 * r.lower_bound.max(1.0));
        }
    }
}

#[test]
fn symmetric_unitary_full_rank_meets_the_bound() {
    // Symmetric input, full rank, fully connected: the bound is tight.
    for seed in 0..10 {
        let g = random_complex(seed, 3, 8, 8);
        let x = (&g + g.transpose()).scale(0.5);
        let spec = ArchSpec::fully(8).unwrap();
        let r = project(&x, &spec, DEFAULT_Z0).unwrap();
        assert!(r.ls_residual < 1e-8);
        assert!((r.achieved - r.lower_bound).abs() < 1e-6 * r.lower_bound.max(1.0));
    }
}
