#![allow(dead_code)]

use bdris::arch::{self, ArchSpec};
use bdris::network::Susceptance;
use bdris::numlin::CMatrix;
use bdris::rng::{complex_gaussian_matrix, stream_rng};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// Masked symmetric susceptance with `z0·B` entries of unit variance.
pub fn random_susceptance<R: Rng>(rng: &mut R, spec: &ArchSpec, z0: f64) -> Susceptance {
    let n_b = arch::circuit_complexity(spec);
    let vars = DVector::from_fn(n_b, |_, _| rng.sample::<f64, _>(StandardNormal) / z0);
    Susceptance::from_vars(&vars, *spec).unwrap()
}

pub fn random_complex(seed: u64, stream: u64, rows: usize, cols: usize) -> CMatrix {
    let mut rng = stream_rng(seed, stream);
    complex_gaussian_matrix(&mut rng, rows, cols)
}

/// One representative spec per architecture kind at size `n` (n divisible by 4).
pub fn catalog(n: usize) -> Vec<ArchSpec> {
    vec![
        ArchSpec::single(n).unwrap(),
        ArchSpec::fully(n).unwrap(),
        ArchSpec::group(n, 4).unwrap(),
        ArchSpec::tree(n).unwrap(),
        ArchSpec::forest(n, 4).unwrap(),
        ArchSpec::stem(n, 3).unwrap(),
        ArchSpec::cluster(n, 2, 2).unwrap(),
    ]
}
