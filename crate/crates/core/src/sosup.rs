//! Structure-oriented symmetric unitary projection.
//!
//! Maps an arbitrary square matrix `X` to a scattering matrix realizable by a
//! given architecture. The symmetric part of `X` is Takagi-factored as
//! `Q Σ Q^T`; the rank-`R` factor `Q_R` defines the linear condition
//! `θ(B) conj(Q_R) = Q_R`, which for `θ = (I + jZ0B)^{-1}(I − jZ0B)` reads
//! `B · 2Z0·Re(Q_R) = −2·Im(Q_R)`. Restricting `B` to the architecture's
//! independent variables turns it into an overdetermined (or underdetermined)
//! real least-squares problem.

use nalgebra::DVector;

use crate::arch::{self, ArchSpec, StructureMaps};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::network::{scattering_from_matrix, Scattering, Susceptance};
use crate::numlin::{least_squares, takagi, CMatrix, RMatrix, DEFAULT_RANK_TOL};

/// A symmetrized input at or below this fraction of `‖X‖_F` is treated as zero.
const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub b: Susceptance,
    pub theta: Scattering,
    /// `Σ (σ_i − 1)²` over the retained Takagi values (summed over blocks).
    pub lower_bound: f64,
    /// `‖X − θ‖_F²`.
    pub achieved: f64,
    /// Euclidean residual of the structured linear system (root-sum-square over blocks).
    pub ls_residual: f64,
    /// Set when the symmetric part of `X` vanished; `B = 0`, `θ = I` then.
    pub degenerate: bool,
}

/// `Σ (σ_i − 1)²`.
pub fn lower_bound(sigma: &[f64]) -> f64 {
    sigma.iter().map(|s| (s - 1.0).powi(2)).sum()
}

/// Real system `A b = z` with `A = (Im C^T ⊗ I_N) R` and `z = vec(Im D)`, where
/// `C = jZ0(Q_R* + Q_R)` and `D = Q_R* − Q_R`.
///
/// `A` is assembled directly from the sparse rows of `R`: row `i + jN` of `R`
/// (entry `B_ij`) feeds rows `rN + i` of `A` with weight `Im C_jr`.
pub fn build_linear_system(q_r: &CMatrix, maps: &StructureMaps, z0: f64) -> Result<(RMatrix, DVector<f64>)> {
    let n = maps.spec.n();
    let r = q_r.ncols();
    if q_r.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "Q_R has {} rows, architecture has N = {n}",
            q_r.nrows()
        )));
    }
    let im_c = q_r.map(|q| 2.0 * z0 * q.re);
    let im_d = q_r.map(|q| -2.0 * q.im);
    debug_assert!({
        // Real parts of C and D vanish identically, so the real-part equation
        // B·Re C = Re D carries no information.
        let c = q_r.map(|q| nalgebra::Complex::new(0.0, z0) * (q.conj() + q));
        let d = q_r.map(|q| q.conj() - q);
        c.iter().chain(d.iter()).all(|v| v.re.abs() <= 1e-10 * (1.0 + z0))
    });

    let mut a = RMatrix::zeros(n * r, maps.n_b);
    for (m, col) in maps.transform.entries() {
        let (i, j) = (m % n, m / n);
        for k in 0..r {
            a[(k * n + i, col)] += im_c[(j, k)];
        }
    }
    let z = DVector::from_column_slice(im_d.as_slice());
    Ok((a, z))
}

struct BlockSolution {
    b: RMatrix,
    lower_bound: f64,
    residual_sq: f64,
}

fn project_block(x_sym: &CMatrix, spec: &ArchSpec, z0: f64) -> Result<BlockSolution> {
    let factors = takagi(x_sym, DEFAULT_RANK_TOL)?;
    let maps = arch::transform_matrix(spec);
    let (a, z) = build_linear_system(&factors.q_r(), &maps, z0)?;
    let ls = least_squares(&a, &z)?;
    Ok(BlockSolution {
        b: arch::expand(&ls.x, spec)?,
        lower_bound: lower_bound(factors.sigma_r()),
        residual_sq: ls.residual * ls.residual,
    })
}

/// Projects `x` onto the scattering matrices realizable by `spec`.
///
/// Block-diagonal architectures are handled one diagonal block at a time,
/// discarding the off-block part of `x`, which no feasible `θ` can match.
pub fn project(x: &CMatrix, spec: &ArchSpec, z0: f64) -> Result<ProjectionResult> {
    project_with(x, spec, z0, Execution::default())
}

/// [`project`] with an explicit executor for the per-block solves.
pub fn project_with(x: &CMatrix, spec: &ArchSpec, z0: f64, exec: Execution) -> Result<ProjectionResult> {
    let n = spec.n();
    if x.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "input is {}x{}, architecture has N = {n}",
            x.nrows(),
            x.ncols()
        )));
    }
    let x_sym = (x + x.transpose()).scale(0.5);
    if x_sym.norm() <= DEGENERATE_TOL * x.norm() {
        let b = Susceptance::zeros(*spec);
        let theta = scattering_from_matrix(b.matrix(), z0)?;
        let achieved = (x - theta.matrix()).norm_squared();
        return Ok(ProjectionResult {
            b,
            theta,
            lower_bound: 0.0,
            achieved,
            ls_residual: 0.0,
            degenerate: true,
        });
    }

    let layout = spec.layout();
    let block_spec = spec.block_spec();
    let size = layout.size;
    let blocks = exec.try_map(layout.groups, |g| {
        let xb = x_sym.view((g * size, g * size), (size, size)).into_owned();
        project_block(&xb, &block_spec, z0)
    })?;

    let mut b = RMatrix::zeros(n, n);
    let mut lb = 0.0;
    let mut res_sq = 0.0;
    for (g, blk) in blocks.into_iter().enumerate() {
        b.view_mut((g * size, g * size), (size, size)).copy_from(&blk.b);
        lb += blk.lower_bound;
        res_sq += blk.residual_sq;
    }
    // The least-squares output is exactly symmetric by construction through R.
    let b = Susceptance::new(b, *spec)?;
    let theta = scattering_from_matrix(b.matrix(), z0)?;
    let achieved = (x - theta.matrix()).norm_squared();
    Ok(ProjectionResult {
        b,
        theta,
        lower_bound: lb,
        achieved,
        ls_residual: res_sq.sqrt(),
        degenerate: false,
    })
}
