//! Dense linear-algebra kernels shared by the rest of the crate.
//!
//! Everything here is a pure function of its inputs. The SVD comes from
//! `faer`, Schur and LU from `nalgebra`; the Takagi factorization, the rank-revealing least-squares
//! solver and the Kronecker/vec helpers are implemented locally.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;

/// Relative threshold (w.r.t. the largest singular value) used to decide the
/// numerical rank of a Takagi factorization.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Singular values whose relative gap is below this are treated as one cluster
/// when extracting Takagi phases.
const CLUSTER_GAP: f64 = 1e-8;

/// Below this fraction of the leading singular value the phase block carries
/// no usable information and is left as the identity.
const NULL_CLUSTER: f64 = 1e-14;

const SYMMETRY_TOL: f64 = 1e-8;
const RECONSTRUCTION_TOL: f64 = 1e-6;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Takagi factors `A = Q · diag(sigma) · Q^T` of a complex symmetric matrix.
#[derive(Debug, Clone)]
pub struct TakagiFactors {
    pub q_full: CMatrix,
    /// Non-negative, sorted descending.
    pub sigma: Vec<f64>,
    pub rank: usize,
}

impl TakagiFactors {
    /// First `rank` columns of `q_full`.
    pub fn q_r(&self) -> CMatrix {
        self.q_full.columns(0, self.rank).into_owned()
    }

    pub fn sigma_r(&self) -> &[f64] {
        &self.sigma[..self.rank]
    }

    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.q_full.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.q_full.transpose()
    }
}

/// Frobenius norm of `a - a^T`.
pub fn symmetry_defect(a: &CMatrix) -> f64 {
    (a - a.transpose()).norm()
}

/// Frobenius norm of `a a^H - I`.
pub fn unitarity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    (a * a.adjoint() - CMatrix::identity(n, n)).norm()
}

/// Takagi factorization of a complex symmetric matrix.
///
/// Built from an SVD `A = U S V^H`: since `A = A^T`, `conj(V) = U D` with `D`
/// block-diagonal over clusters of equal singular values, each block being
/// symmetric unitary. Taking `W = D^{1/2}` per block gives `Q = U W`.
pub fn takagi(a: &CMatrix, rank_tol: f64) -> Result<TakagiFactors> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "takagi expects a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = a.norm();
    let defect = symmetry_defect(a);
    if defect > SYMMETRY_TOL * scale.max(1.0) {
        return Err(Error::NotSymmetric { defect });
    }
    if n == 0 {
        return Ok(TakagiFactors {
            q_full: CMatrix::zeros(0, 0),
            sigma: Vec::new(),
            rank: 0,
        });
    }

    let FullSvd { mut u, s: sigma, mut v } = full_svd(a)?;

    // Pin the per-pair phase freedom so the output is deterministic.
    for j in 0..n {
        let (imax, _) =
            u.column(j).iter().enumerate().fold(
                (0, -1.0),
                |best, (i, z)| {
                    if z.norm() > best.1 {
                        (i, z.norm())
                    } else {
                        best
                    }
                },
            );
        let pivot = u[(imax, j)];
        if pivot.norm() > 0.0 {
            let phase = (pivot / pivot.norm()).conj();
            u.column_mut(j).iter_mut().for_each(|x| *x *= phase);
            v.column_mut(j).iter_mut().for_each(|x| *x *= phase);
        }
    }

    let smax = sigma[0];
    let mut q_full = u.clone();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sigma[end - 1] - sigma[end] < CLUSTER_GAP * smax {
            end += 1;
        }
        let width = end - start;
        if smax > 0.0 && sigma[start] > NULL_CLUSTER * smax {
            let uc = u.columns(start, width);
            let vc = v.columns(start, width);
            let d = uc.adjoint() * vc.map(|z| z.conj());
            let w = if width == 1 {
                let d0 = d[(0, 0)];
                // Principal branch with the half-angle in (−π/2, π/2]; a
                // negative-zero imaginary part must not flip −1 to −π.
                let w0 = if d0.norm() > 0.0 {
                    let mut arg = d0.im.atan2(d0.re);
                    if arg <= -std::f64::consts::PI + 1e-15 {
                        arg = std::f64::consts::PI;
                    }
                    C64::from_polar(1.0, 0.5 * arg)
                } else {
                    c64(1.0, 0.0)
                };
                CMatrix::from_element(1, 1, w0)
            } else {
                let sym = (&d + d.transpose()).scale(0.5);
                symmetric_unitary_sqrt(&sym)?
            };
            let block = uc * w;
            q_full.columns_mut(start, width).copy_from(&block);
        }
        start = end;
    }

    let rank = if smax > 0.0 {
        sigma.iter().filter(|s| **s >= rank_tol * smax).count()
    } else {
        0
    };
    let factors = TakagiFactors { q_full, sigma, rank };
    let err = (factors.reconstruct() - a).norm();
    if err > RECONSTRUCTION_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DecompositionFailure(format!(
            "Takagi reconstruction error {err:.3e}"
        )));
    }
    Ok(factors)
}

/// Square root of a (numerically) symmetric unitary matrix via its Schur form.
///
/// The branch cut is placed in the widest gap between eigenvalue angles so
/// that nearby eigenvalues always receive nearby roots; this keeps the result
/// a function of the input and therefore symmetric.
fn symmetric_unitary_sqrt(d: &CMatrix) -> Result<CMatrix> {
    let n = d.nrows();
    let schur = Schur::try_new(d.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::DecompositionFailure("Schur iteration did not converge".into()))?;
    let (z, t) = schur.unpack();
    let angles: Vec<f64> = (0..n).map(|i| t[(i, i)].arg()).collect();

    let mut sorted = angles.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_gap = sorted[0] + 2.0 * std::f64::consts::PI - sorted[n - 1];
    let mut cut = sorted[n - 1] + 0.5 * best_gap;
    for k in 1..n {
        let gap = sorted[k] - sorted[k - 1];
        if gap > best_gap {
            best_gap = gap;
            cut = sorted[k - 1] + 0.5 * gap;
        }
    }

    let two_pi = 2.0 * std::f64::consts::PI;
    let mut scaled = z.clone();
    for (j, phi) in angles.iter().enumerate() {
        let rel = (phi - cut).rem_euclid(two_pi);
        let half = 0.5 * (cut + rel);
        let w = c64(half.cos(), half.sin());
        scaled.column_mut(j).iter_mut().for_each(|x| *x *= w);
    }
    Ok(scaled * z.adjoint())
}

/// Full SVD `a = U · diag(s) · V^H` with square unitary `U` and `V`.
#[derive(Debug, Clone)]
pub struct FullSvd {
    pub u: CMatrix,
    /// `min(rows, cols)` singular values, descending.
    pub s: Vec<f64>,
    pub v: CMatrix,
}

pub fn full_svd(a: &CMatrix) -> Result<FullSvd> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(FullSvd {
            u: CMatrix::identity(r, r),
            s: Vec::new(),
            v: CMatrix::identity(c, c),
        });
    }
    let m = faer::Mat::<C64>::from_fn(r, c, |i, j| a[(i, j)]);
    let svd = m
        .svd()
        .map_err(|e| Error::DecompositionFailure(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    Ok(FullSvd {
        u: CMatrix::from_fn(r, r, |i, j| u[(i, j)]),
        s: (0..r.min(c)).map(|k| s[k].re).collect(),
        v: CMatrix::from_fn(c, c, |i, j| v[(i, j)]),
    })
}

/// Singular values, descending.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(Vec::new());
    }
    let m = faer::Mat::<C64>::from_fn(r, c, |i, j| a[(i, j)]);
    let s = m
        .singular_values()
        .map_err(|e| Error::DecompositionFailure(format!("SVD did not converge: {e:?}")))?;
    Ok(s)
}

/// Eigendecomposition `a = V diag(e) V^H` of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigen expects a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let m = faer::Mat::<C64>::from_fn(n, n, |i, j| a[(i, j)]);
    let eig = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::DecompositionFailure(format!("eigendecomposition did not converge: {e:?}")))?;
    let (s, u) = (eig.S(), eig.U());
    Ok((
        (0..n).map(|k| s[k].re).collect(),
        CMatrix::from_fn(n, n, |i, j| u[(i, j)]),
    ))
}

/// SVD of a matrix with its unitary factors split after the first `m`
/// singular triplets.
#[derive(Debug, Clone)]
pub struct SvdPartition {
    pub svd: FullSvd,
    pub m: usize,
}

impl SvdPartition {
    pub fn u_m(&self) -> CMatrix {
        self.svd.u.columns(0, self.m).into_owned()
    }
    pub fn u_rest(&self) -> CMatrix {
        let n = self.svd.u.ncols();
        self.svd.u.columns(self.m, n - self.m).into_owned()
    }
    pub fn v_m(&self) -> CMatrix {
        self.svd.v.columns(0, self.m).into_owned()
    }
    pub fn v_rest(&self) -> CMatrix {
        let n = self.svd.v.ncols();
        self.svd.v.columns(self.m, n - self.m).into_owned()
    }
    pub fn s_m(&self) -> &[f64] {
        &self.svd.s[..self.m]
    }
}

pub fn svd_partition(a: &CMatrix, m: usize) -> Result<SvdPartition> {
    let (r, c) = a.shape();
    if m == 0 || m > r.min(c) {
        return Err(Error::DimensionMismatch(format!(
            "partition size {m} outside 1..={} for a {r}x{c} matrix",
            r.min(c)
        )));
    }
    Ok(SvdPartition { svd: full_svd(a)?, m })
}

/// Householder QR with column pivoting, `A P = Q R`.
struct PivotedQr {
    /// Householder vectors below the diagonal, R on and above it.
    packed: RMatrix,
    tau: Vec<f64>,
    perm: Vec<usize>,
}

impl PivotedQr {
    fn new(mut a: RMatrix, pivot: bool) -> Self {
        let (m, n) = a.shape();
        let k = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; k];
        let mut norms: Vec<f64> = (0..n).map(|j| a.column(j).norm_squared()).collect();

        for i in 0..k {
            if pivot {
                let (best, _) = norms[i..]
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |acc, (j, v)| if *v > acc.1 { (j, *v) } else { acc });
                let p = i + best;
                if p != i {
                    a.swap_columns(i, p);
                    norms.swap(i, p);
                    perm.swap(i, p);
                }
            }
            let alpha = a[(i, i)];
            let tail: f64 = (i + 1..m).map(|r| a[(r, i)] * a[(r, i)]).sum();
            let xnorm = (alpha * alpha + tail).sqrt();
            if xnorm == 0.0 {
                tau[i] = 0.0;
            } else {
                let beta = if alpha >= 0.0 { -xnorm } else { xnorm };
                let v0 = alpha - beta;
                for r in i + 1..m {
                    a[(r, i)] /= v0;
                }
                tau[i] = (beta - alpha) / beta;
                a[(i, i)] = beta;
                for j in i + 1..n {
                    let mut s = a[(i, j)];
                    for r in i + 1..m {
                        s += a[(r, i)] * a[(r, j)];
                    }
                    s *= tau[i];
                    a[(i, j)] -= s;
                    for r in i + 1..m {
                        let vr = a[(r, i)];
                        a[(r, j)] -= s * vr;
                    }
                }
            }
            if pivot {
                for j in i + 1..n {
                    norms[j] = (i + 1..m).map(|r| a[(r, j)] * a[(r, j)]).sum();
                }
            }
        }
        PivotedQr { packed: a, tau, perm }
    }

    fn diag_len(&self) -> usize {
        self.tau.len()
    }

    fn rank(&self, rel_tol: f64) -> usize {
        let k = self.diag_len();
        if k == 0 {
            return 0;
        }
        let lead = self.packed[(0, 0)].abs();
        if lead == 0.0 {
            return 0;
        }
        (0..k)
            .take_while(|&i| self.packed[(i, i)].abs() > rel_tol * lead)
            .count()
    }

    /// In-place `Q^T · b`.
    fn qt_mul(&self, b: &mut DVector<f64>) {
        let m = self.packed.nrows();
        for i in 0..self.diag_len() {
            let mut s = b[i];
            for r in i + 1..m {
                s += self.packed[(r, i)] * b[r];
            }
            s *= self.tau[i];
            b[i] -= s;
            for r in i + 1..m {
                b[r] -= s * self.packed[(r, i)];
            }
        }
    }

    /// In-place `Q · b` where `b` has length m.
    fn q_mul(&self, b: &mut DVector<f64>) {
        let m = self.packed.nrows();
        for i in (0..self.diag_len()).rev() {
            let mut s = b[i];
            for r in i + 1..m {
                s += self.packed[(r, i)] * b[r];
            }
            s *= self.tau[i];
            b[i] -= s;
            for r in i + 1..m {
                b[r] -= s * self.packed[(r, i)];
            }
        }
    }

    /// Solves `R[..k, ..k] x = y[..k]`.
    fn solve_upper(&self, y: &DVector<f64>, k: usize) -> DVector<f64> {
        let mut x = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = y[i];
            for j in i + 1..k {
                s -= self.packed[(i, j)] * x[j];
            }
            x[i] = s / self.packed[(i, i)];
        }
        x
    }

    /// Solves `R[..k, ..k]^T x = y[..k]`.
    fn solve_upper_transposed(&self, y: &DVector<f64>, k: usize) -> DVector<f64> {
        let mut x = DVector::zeros(k);
        for i in 0..k {
            let mut s = y[i];
            for j in 0..i {
                s -= self.packed[(j, i)] * x[j];
            }
            x[i] = s / self.packed[(i, i)];
        }
        x
    }
}

/// Result of [`least_squares`].
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: DVector<f64>,
    /// `‖a·x − z‖₂`.
    pub residual: f64,
    /// True when rank deficiency forced the Tikhonov path.
    pub regularized: bool,
}

const RANK_TOL: f64 = 1e-10;
const TIKHONOV: f64 = 1e-12;

/// Minimum-norm least-squares solution of `a·x ≈ z`.
///
/// Full-rank problems are solved through a pivoted Householder QR of `a`
/// (overdetermined) or `a^T` (underdetermined). Rank-deficient problems fall
/// back to Tikhonov regularization with `λ = 1e-12·‖a‖_F²/n`, again through
/// QR of an augmented matrix rather than the normal equations.
pub fn least_squares(a: &RMatrix, z: &DVector<f64>) -> Result<LeastSquares> {
    let (m, n) = a.shape();
    if z.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "least squares: {m} rows but rhs of length {}",
            z.len()
        )));
    }
    if m == 0 || n == 0 {
        return Ok(LeastSquares {
            x: DVector::zeros(n),
            residual: z.norm(),
            regularized: false,
        });
    }

    let (x, regularized) = if m >= n {
        let qr = PivotedQr::new(a.clone(), true);
        if qr.rank(RANK_TOL) == n {
            let mut y = z.clone();
            qr.qt_mul(&mut y);
            let xp = qr.solve_upper(&y, n);
            let mut x = DVector::zeros(n);
            for (k, &col) in qr.perm.iter().enumerate() {
                x[col] = xp[k];
            }
            (x, false)
        } else {
            (tikhonov_tall(a, z), true)
        }
    } else {
        // A^T P = Q R, so A = P R^T Q^T and x = Q y with R^T y = P^T z.
        let at = a.transpose();
        let qr = PivotedQr::new(at, true);
        if qr.rank(RANK_TOL) == m {
            let zp = DVector::from_iterator(m, qr.perm.iter().map(|&p| z[p]));
            let y = qr.solve_upper_transposed(&zp, m);
            let mut full = DVector::zeros(n);
            full.rows_mut(0, m).copy_from(&y);
            qr.q_mul(&mut full);
            (full, false)
        } else {
            (tikhonov_wide(a, z), true)
        }
    };
    let residual = (a * &x - z).norm();
    Ok(LeastSquares {
        x,
        residual,
        regularized,
    })
}

fn tikhonov_lambda(a: &RMatrix) -> f64 {
    TIKHONOV * a.norm_squared() / a.ncols() as f64
}

/// `min ‖a x − z‖² + λ‖x‖²` via QR of `[a; √λ I]`.
fn tikhonov_tall(a: &RMatrix, z: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let root = tikhonov_lambda(a).sqrt();
    let mut aug = RMatrix::zeros(m + n, n);
    aug.rows_mut(0, m).copy_from(a);
    for i in 0..n {
        aug[(m + i, i)] = root;
    }
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(z);
    let qr = PivotedQr::new(aug, false);
    qr.qt_mul(&mut rhs);
    qr.solve_upper(&rhs, n)
}

/// Same objective in dual form, `x = a^T (a a^T + λI)^{-1} z`, with the inner
/// solve done through QR of `[a^T; √λ I]`.
fn tikhonov_wide(a: &RMatrix, z: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let root = tikhonov_lambda(a).sqrt();
    let mut aug = RMatrix::zeros(n + m, m);
    aug.rows_mut(0, n).copy_from(&a.transpose());
    for i in 0..m {
        aug[(n + i, i)] = root;
    }
    let qr = PivotedQr::new(aug, false);
    let w = qr.solve_upper_transposed(z, m);
    let y = qr.solve_upper(&w, m);
    a.transpose() * y
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &RMatrix, b: &RMatrix) -> RMatrix {
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    let mut out = RMatrix::zeros(p * r, q * s);
    for i in 0..p {
        for j in 0..q {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * r, j * s), (r, s)).copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec_of<T: nalgebra::Scalar + Copy>(x: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec_of`] for an `rows × cols` matrix.
pub fn unvec<T: nalgebra::Scalar + Copy>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn to_complex(a: &RMatrix) -> CMatrix {
    a.map(|x| c64(x, 0.0))
}
