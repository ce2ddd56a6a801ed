//! Seeded random streams.
//!
//! Every Monte-Carlo realization draws from its own ChaCha8 stream: the key is
//! derived from the 64-bit experiment seed (`ChaCha8Rng::seed_from_u64`) and the
//! realization index is used as the ChaCha stream id. A realization therefore
//! produces the same draws whether it runs alone, in a batch, or on any thread.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numlin::{c64, CMatrix};

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix with i.i.d. CN(0, 1) entries (unit total variance).
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(s * re, s * im)
    })
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}
