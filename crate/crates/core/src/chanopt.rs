//! Channels, the SVD upper bound on the sum channel gain, and the two
//! channel-gain designs: projecting the SVD-optimal scattering matrix, and
//! refining that projection with limited-memory quasi-Newton ascent.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{self, ArchSpec};
use crate::error::{Error, Result};
use crate::network::{scattering_from_matrix, Susceptance};
use crate::numlin::{c64, full_svd, CMatrix, RMatrix};
use crate::rng::{complex_gaussian_matrix, stream_rng};
use crate::sosup::{project, ProjectionResult};

/// Distance-based path loss `P(d) = L0 · d^{−α}` (reference distance 1 m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLoss {
    pub l0: f64,
    /// BS–RIS distance in metres.
    pub d_r: f64,
    /// RIS–user distance in metres.
    pub d_k: f64,
    pub alpha_r: f64,
    pub alpha_k: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            l0: 1e-3,
            d_r: 50.0 * std::f64::consts::SQRT_2,
            d_k: 50.0 * 5f64.sqrt(),
            alpha_r: 2.0,
            alpha_k: 2.2,
        }
    }
}

impl PathLoss {
    pub fn gain(&self, d: f64, alpha: f64) -> f64 {
        self.l0 * d.powf(-alpha)
    }
    pub fn bs_ris(&self) -> f64 {
        self.gain(self.d_r, self.alpha_r)
    }
    pub fn ris_user(&self) -> f64 {
        self.gain(self.d_k, self.alpha_k)
    }
}

/// Default per-user noise power in watts (−80 dBm).
pub const DEFAULT_NOISE_POWER: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS → RIS, N×L.
    pub e: CMatrix,
    /// RIS → users, N×K; column k is `h_k`.
    pub h: CMatrix,
    pub noise_power: f64,
    pub pathloss: PathLoss,
}

impl ChannelSet {
    pub fn n(&self) -> usize {
        self.e.nrows()
    }
    pub fn l(&self) -> usize {
        self.e.ncols()
    }
    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    /// Builds a channel set from explicit matrices.
    pub fn new(e: CMatrix, h: CMatrix, noise_power: f64) -> Result<Self> {
        if e.nrows() != h.nrows() || e.is_empty() || h.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "E is {}x{}, H is {}x{}",
                e.nrows(),
                e.ncols(),
                h.nrows(),
                h.ncols()
            )));
        }
        if e.iter().chain(h.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::DimensionMismatch("channel entries must be finite".into()));
        }
        Ok(Self {
            e,
            h,
            noise_power,
            pathloss: PathLoss::default(),
        })
    }

    /// Rayleigh channels scaled by path loss; `E` is drawn before `H`.
    pub fn generate<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        l: usize,
        k: usize,
        pathloss: &PathLoss,
        noise_power: f64,
    ) -> Self {
        let e = complex_gaussian_matrix(rng, n, l).scale(pathloss.bs_ris().sqrt());
        let h = complex_gaussian_matrix(rng, n, k).scale(pathloss.ris_user().sqrt());
        Self {
            e,
            h,
            noise_power,
            pathloss: *pathloss,
        }
    }
}

/// Channels for stream 0 of `seed`.
pub fn gen_channels(
    n: usize,
    l: usize,
    k: usize,
    seed: u64,
    pathloss: &PathLoss,
    noise_power: f64,
) -> Result<ChannelSet> {
    if n == 0 || l == 0 || k == 0 {
        return Err(Error::DimensionMismatch(format!(
            "dimensions must be positive (N={n}, L={l}, K={k})"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    Ok(ChannelSet::generate(&mut rng, n, l, k, pathloss, noise_power))
}

fn check_theta(ch: &ChannelSet, theta: &CMatrix) -> Result<()> {
    let n = ch.n();
    if theta.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "scattering matrix is {}x{}, channels have N = {n}",
            theta.nrows(),
            theta.ncols()
        )));
    }
    Ok(())
}

/// Cascaded channel `H^H θ E` (K×L).
pub fn cascaded(ch: &ChannelSet, theta: &CMatrix) -> Result<CMatrix> {
    check_theta(ch, theta)?;
    Ok(ch.h.adjoint() * theta * &ch.e)
}

/// `‖H^H θ E‖_F²`.
pub fn sum_gain(ch: &ChannelSet, theta: &CMatrix) -> Result<f64> {
    Ok(cascaded(ch, theta)?.norm_squared())
}

/// Number of independent streams, `min(K, L, N)`.
pub fn dof(k: usize, l: usize, n: usize) -> usize {
    k.min(l).min(n)
}

#[derive(Debug, Clone)]
pub struct UpperBoundAnalysis {
    pub m: usize,
    pub ub_value: f64,
    /// Right singular vectors of `H^H`, split after `m`.
    pub v_m: CMatrix,
    pub v_rest: CMatrix,
    /// Left singular vectors of `E`, split after `m`.
    pub p_m: CMatrix,
    pub p_rest: CMatrix,
    pub s_m: Vec<f64>,
    pub sigma_m: Vec<f64>,
}

/// SVD upper bound `Σ_i (s_i σ_i)²` over the leading `M` singular values of
/// `H^H` and `E`.
pub fn upper_bound(ch: &ChannelSet) -> Result<UpperBoundAnalysis> {
    let n = ch.n();
    let m = dof(ch.k(), ch.l(), n);
    let hh = full_svd(&ch.h.adjoint())?;
    let ee = full_svd(&ch.e)?;
    let s_m = hh.s[..m].to_vec();
    let sigma_m = ee.s[..m].to_vec();
    let ub_value = s_m.iter().zip(&sigma_m).map(|(s, g)| (s * g).powi(2)).sum();
    Ok(UpperBoundAnalysis {
        m,
        ub_value,
        v_m: hh.v.columns(0, m).into_owned(),
        v_rest: hh.v.columns(m, n - m).into_owned(),
        p_m: ee.u.columns(0, m).into_owned(),
        p_rest: ee.u.columns(m, n - m).into_owned(),
        s_m,
        sigma_m,
    })
}

/// `θ* = V_M P_M^H + V_{N−M} X0 P_{N−M}^H`; `x0` is (N−M)×(N−M), unitary or zero.
pub fn theta_star(analysis: &UpperBoundAnalysis, x0: &CMatrix) -> Result<CMatrix> {
    let rest = analysis.v_rest.ncols();
    if x0.shape() != (rest, rest) {
        return Err(Error::DimensionMismatch(format!(
            "X0 must be {rest}x{rest}, got {}x{}",
            x0.nrows(),
            x0.ncols()
        )));
    }
    let mut theta = &analysis.v_m * analysis.p_m.adjoint();
    if rest > 0 {
        theta += &analysis.v_rest * x0 * analysis.p_rest.adjoint();
    }
    Ok(theta)
}

/// `‖Λ − Λ^T‖_F` with `Λ = P_M^H conj(V_M)`; zero exactly when `V_M P_M^H`
/// can be completed to a symmetric unitary matrix.
pub fn prop1_defect(ch: &ChannelSet) -> Result<f64> {
    let a = upper_bound(ch)?;
    let lambda = a.p_m.adjoint() * a.v_m.map(|z| z.conj());
    Ok((&lambda - lambda.transpose()).norm())
}

/// Projection of `V_M P_M^H` onto the architecture, with the resulting gain.
#[derive(Debug, Clone)]
pub struct GainDesign {
    pub projection: ProjectionResult,
    pub gain: f64,
    pub upper_bound: f64,
}

pub fn ub_sosup(ch: &ChannelSet, spec: &ArchSpec, z0: f64) -> Result<GainDesign> {
    let analysis = upper_bound(ch)?;
    let rest = ch.n() - analysis.m;
    let x = theta_star(&analysis, &CMatrix::zeros(rest, rest))?;
    let projection = project(&x, spec, z0)?;
    let gain = sum_gain(ch, projection.theta.matrix())?;
    Ok(GainDesign {
        projection,
        gain,
        upper_bound: analysis.ub_value,
    })
}

/// Sum gain as a function of the independent susceptance variables.
#[derive(Debug, Clone)]
pub struct GainProblem<'a> {
    ch: &'a ChannelSet,
    spec: ArchSpec,
    z0: f64,
    pairs: Vec<(usize, usize)>,
}

impl<'a> GainProblem<'a> {
    pub fn new(ch: &'a ChannelSet, spec: &ArchSpec, z0: f64) -> Result<Self> {
        if spec.n() != ch.n() {
            return Err(Error::DimensionMismatch(format!(
                "architecture has N = {}, channels have N = {}",
                spec.n(),
                ch.n()
            )));
        }
        let layout = spec.layout();
        let n = spec.n();
        let pairs = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .filter(|&(i, j)| layout.connected(i, j))
            .collect();
        Ok(Self {
            ch,
            spec: *spec,
            z0,
            pairs,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.pairs.len()
    }

    fn matrix(&self, b: &DVector<f64>) -> Result<RMatrix> {
        arch::expand(b, &self.spec)
    }

    pub fn value(&self, b: &DVector<f64>) -> Result<f64> {
        let theta = scattering_from_matrix(&self.matrix(b)?, self.z0)?;
        sum_gain(self.ch, theta.matrix())
    }

    /// Objective and gradient with respect to the independent variables.
    ///
    /// With `M = I + jZ0B` and `θ = 2M^{-1} − I`, the differential is
    /// `dθ = −jZ0 M^{-1} dB (I + θ)`, so `df = 2 Re tr(Γ dB)` where
    /// `Γ = −jZ0 (I + θ) E G^H H^H M^{-1}` and `G = H^H θ E`.
    pub fn value_and_gradient(&self, b: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let n = self.spec.n();
        let bm = self.matrix(b)?;
        let id = CMatrix::identity(n, n);
        let m = &id + bm.map(|x| c64(0.0, self.z0 * x));
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("I + j·z0·B".into()))?;
        let theta = m_inv.scale(2.0) - &id;
        let hh = self.ch.h.adjoint();
        let g = &hh * &theta * &self.ch.e;
        let f = g.norm_squared();
        let gamma = (&id + &theta) * &self.ch.e * g.adjoint() * &hh * &m_inv * c64(0.0, -self.z0);
        let grad = DVector::from_iterator(
            self.pairs.len(),
            self.pairs.iter().map(|&(i, j)| {
                if i == j {
                    2.0 * gamma[(i, i)].re
                } else {
                    2.0 * (gamma[(i, j)].re + gamma[(j, i)].re)
                }
            }),
        );
        Ok((f, grad))
    }
}

pub fn gain_objective(b: &DVector<f64>, ch: &ChannelSet, spec: &ArchSpec, z0: f64) -> Result<f64> {
    GainProblem::new(ch, spec, z0)?.value(b)
}

pub fn gain_gradient(b: &DVector<f64>, ch: &ChannelSet, spec: &ArchSpec, z0: f64) -> Result<DVector<f64>> {
    Ok(GainProblem::new(ch, spec, z0)?.value_and_gradient(b)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QnOptions {
    pub history: usize,
    pub max_iter: usize,
    /// Stop when `‖∇‖∞ < grad_tol · max(1, |f|)` in normalized units.
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for QnOptions {
    fn default() -> Self {
        Self {
            history: 10,
            max_iter: 500,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QnStatus {
    Converged,
    MaxIterations,
    /// No step satisfying the Wolfe conditions was found; the best iterate is returned.
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct QnResult {
    pub b: DVector<f64>,
    pub gain: f64,
    /// Sum gain after every accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: QnStatus,
}

/// Limited-memory BFGS ascent of the sum gain from `b_init`.
///
/// The optimizer works on `u = Z0·b` and on the gain divided by the SVD upper
/// bound, so that both variables and objective are of order one.
pub fn quasi_newton_gain(
    ch: &ChannelSet,
    spec: &ArchSpec,
    z0: f64,
    b_init: &DVector<f64>,
    opts: &QnOptions,
) -> Result<QnResult> {
    let problem = GainProblem::new(ch, spec, z0)?;
    if b_init.len() != problem.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "initial point has {} entries, architecture has {} variables",
            b_init.len(),
            problem.n_vars()
        )));
    }
    let f_ref = upper_bound(ch)?.ub_value.max(f64::MIN_POSITIVE);
    // Minimize φ(u) = −f(u / Z0) / f_ref.
    let eval = |u: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (f, g) = problem.value_and_gradient(&u.unscale(z0))?;
        Ok((-f / f_ref, g.scale(-1.0 / (z0 * f_ref))))
    };

    let mut x = b_init.scale(z0);
    let (mut fx, mut gx) = eval(&x)?;
    let mut trace = vec![-fx * f_ref];
    let mut mem_s: Vec<DVector<f64>> = Vec::with_capacity(opts.history);
    let mut mem_y: Vec<DVector<f64>> = Vec::with_capacity(opts.history);
    let mut status = QnStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if gx.amax() < opts.grad_tol * fx.abs().max(1.0) {
            status = QnStatus::Converged;
            break;
        }
        let mut d = two_loop(&gx, &mem_s, &mem_y);
        if d.dot(&gx) >= 0.0 {
            mem_s.clear();
            mem_y.clear();
            d = -&gx;
        }
        let alpha0 = if mem_s.is_empty() {
            (1.0 / gx.amax()).min(1.0)
        } else {
            1.0
        };
        let step = match wolfe_search(&eval, &x, fx, &gx, &d, alpha0, opts)? {
            Some(step) => step,
            None if !mem_s.is_empty() => {
                mem_s.clear();
                mem_y.clear();
                continue;
            }
            None => {
                status = QnStatus::LineSearchFailure;
                break;
            }
        };
        let s = &step.x - &x;
        let y = &step.g - &gx;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if mem_s.len() == opts.history {
                mem_s.remove(0);
                mem_y.remove(0);
            }
            mem_s.push(s);
            mem_y.push(y);
        }
        x = step.x;
        fx = step.f;
        gx = step.g;
        iterations += 1;
        trace.push(-fx * f_ref);
    }

    let b = x.unscale(z0);
    let gain = problem.value(&b)?;
    Ok(QnResult {
        b,
        gain,
        trace,
        iterations,
        status,
    })
}

/// `−H g` for the L-BFGS inverse-Hessian approximation `H`.
fn two_loop(g: &DVector<f64>, mem_s: &[DVector<f64>], mem_y: &[DVector<f64>]) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(mem_s.len());
    for (s, y) in mem_s.iter().zip(mem_y).rev() {
        let rho = 1.0 / y.dot(s);
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push((rho, a));
    }
    if let (Some(s), Some(y)) = (mem_s.last(), mem_y.last()) {
        q.scale_mut(s.dot(y) / y.dot(y));
    }
    for ((s, y), (rho, a)) in mem_s.iter().zip(mem_y).zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

struct Step {
    x: DVector<f64>,
    f: f64,
    g: DVector<f64>,
}

/// Strong-Wolfe line search with bracketing and cubic-interpolation zoom.
fn wolfe_search<F>(
    eval: &F,
    x: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    d: &DVector<f64>,
    alpha0: f64,
    opts: &QnOptions,
) -> Result<Option<Step>>
where
    F: Fn(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let dg0 = g0.dot(d);
    let at = |alpha: f64| -> Result<(Step, f64)> {
        let xa = x + d.scale(alpha);
        let (f, g) = eval(&xa)?;
        let dg = g.dot(d);
        Ok((Step { x: xa, f, g }, dg))
    };

    let mut evals = 0;
    let (mut a_prev, mut f_prev, mut dg_prev) = (0.0, f0, dg0);
    let mut alpha = alpha0;
    loop {
        if evals >= opts.max_line_search {
            return Ok(None);
        }
        evals += 1;
        let (step, dg) = at(alpha)?;
        if !step.f.is_finite() {
            alpha = 0.5 * (a_prev + alpha);
            continue;
        }
        if step.f > f0 + opts.c1 * alpha * dg0 || (evals > 1 && step.f >= f_prev) {
            return zoom(
                &at,
                f0,
                dg0,
                (a_prev, f_prev, dg_prev),
                (alpha, step.f, dg),
                opts,
                evals,
            );
        }
        if dg.abs() <= -opts.c2 * dg0 {
            return Ok(Some(step));
        }
        if dg >= 0.0 {
            return zoom(
                &at,
                f0,
                dg0,
                (alpha, step.f, dg),
                (a_prev, f_prev, dg_prev),
                opts,
                evals,
            );
        }
        a_prev = alpha;
        f_prev = step.f;
        dg_prev = dg;
        alpha *= 2.0;
    }
}

type Probe = (f64, f64, f64);

fn zoom<A>(
    at: &A,
    f0: f64,
    dg0: f64,
    mut lo: Probe,
    mut hi: Probe,
    opts: &QnOptions,
    mut evals: usize,
) -> Result<Option<Step>>
where
    A: Fn(f64) -> Result<(Step, f64)>,
{
    let mut best: Option<Step> = None;
    while evals < opts.max_line_search {
        evals += 1;
        let alpha = cubic_min(lo, hi);
        let (step, dg) = at(alpha)?;
        if step.f > f0 + opts.c1 * alpha * dg0 || step.f >= lo.1 {
            hi = (alpha, step.f, dg);
        } else {
            if dg.abs() <= -opts.c2 * dg0 {
                return Ok(Some(step));
            }
            if dg * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, step.f, dg);
            best = Some(step);
        }
        if (hi.0 - lo.0).abs() <= 1e-14 * lo.0.abs().max(1e-300) {
            break;
        }
    }
    // A point with sufficient decrease is still progress even if the
    // curvature condition was not met within the budget.
    Ok(best.filter(|s| s.f < f0))
}

/// Minimizer of the cubic interpolating two probes, safeguarded into the
/// interior of the bracket.
fn cubic_min((a0, f0, d0): Probe, (a1, f1, d1): Probe) -> f64 {
    let (lo, hi) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let width = hi - lo;
    let d1_ = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let disc = d1_ * d1_ - d0 * d1;
    let candidate = if disc >= 0.0 {
        let d2 = (a1 - a0).signum() * disc.sqrt();
        a1 - (a1 - a0) * (d1 + d2 - d1_) / (d1 - d0 + 2.0 * d2)
    } else {
        f64::NAN
    };
    if candidate.is_finite() && candidate > lo + 0.1 * width && candidate < hi - 0.1 * width {
        candidate
    } else {
        0.5 * (lo + hi)
    }
}

/// Projection followed by quasi-Newton refinement.
#[derive(Debug, Clone)]
pub struct RefinedDesign {
    pub initial: GainDesign,
    pub refined: QnResult,
    pub b: Susceptance,
}

pub fn sosup_quasi_newton(ch: &ChannelSet, spec: &ArchSpec, z0: f64, opts: &QnOptions) -> Result<RefinedDesign> {
    let initial = ub_sosup(ch, spec, z0)?;
    let refined = quasi_newton_gain(ch, spec, z0, &initial.projection.b.vars(), opts)?;
    let b = Susceptance::from_vars(&refined.b, *spec)?;
    Ok(RefinedDesign { initial, refined, b })
}
