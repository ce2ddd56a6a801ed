//! Transmit precoding with a fixed scattering matrix, utility evaluation and
//! the two-stage joint design.

use serde::{Deserialize, Serialize};

use crate::arch::ArchSpec;
use crate::chanopt::{cascaded, quasi_newton_gain, sum_gain, ub_sosup, ChannelSet, QnOptions};
use crate::error::{Error, Result};
use crate::network::{Scattering, Susceptance};
use crate::numlin::{c64, hermitian_eigen, CMatrix, C64};
use crate::sosup::project;

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    /// L×K, column k is `w_k`.
    pub w: CMatrix,
    pub p_t: f64,
}

impl Precoder {
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    /// Per-user rates in bits/s/Hz.
    pub rates: Vec<f64>,
    pub wsr: f64,
    pub mmf: f64,
    pub ee: f64,
    pub weights: Vec<f64>,
    pub eta: f64,
    pub p_cir: f64,
}

/// Rates from the effective channel `G = H^H θ E` (K×L).
fn rates_effective(g: &CMatrix, w: &CMatrix, noise: f64) -> Vec<f64> {
    let gw = g * w;
    (0..g.nrows())
        .map(|k| {
            let total: f64 = gw.row(k).iter().map(|z| z.norm_sqr()).sum();
            let signal = gw[(k, k)].norm_sqr();
            (1.0 + signal / (total - signal + noise)).log2()
        })
        .collect()
}

/// `R_k = log2(1 + |f_k^H w_k|² / (Σ_{j≠k} |f_k^H w_j|² + σ²))`, `f_k^H = h_k^H θ E`.
pub fn rates(ch: &ChannelSet, theta: &CMatrix, precoder: &Precoder) -> Result<Vec<f64>> {
    let g = cascaded(ch, theta)?;
    if precoder.w.shape() != (ch.l(), ch.k()) {
        return Err(Error::DimensionMismatch(format!(
            "precoder is {}x{}, expected {}x{}",
            precoder.w.nrows(),
            precoder.w.ncols(),
            ch.l(),
            ch.k()
        )));
    }
    Ok(rates_effective(&g, &precoder.w, ch.noise_power))
}

pub fn utilities(rates: &[f64], weights: &[f64], precoder: &Precoder, eta: f64, p_cir: f64) -> Result<UtilityReport> {
    if rates.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rates but {} weights",
            rates.len(),
            weights.len()
        )));
    }
    let wsr: f64 = rates.iter().zip(weights).map(|(r, d)| r * d).sum();
    let mmf = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let mmf = if mmf.is_finite() { mmf } else { 0.0 };
    let consumed = precoder.power() / eta + p_cir;
    let ee = if wsr == 0.0 { 0.0 } else { wsr / consumed };
    Ok(UtilityReport {
        rates: rates.to_vec(),
        wsr,
        mmf,
        ee,
        weights: weights.to_vec(),
        eta,
        p_cir,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpOptions {
    pub max_iter: usize,
    /// Stop when the relative WSR change falls below this.
    pub rel_tol: f64,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FpResult {
    pub precoder: Precoder,
    /// Weighted sum rate (bits) of the initial point and of every iterate.
    pub trace: Vec<f64>,
    /// `‖W‖_F²` of the same iterates.
    pub powers: Vec<f64>,
    pub iterations: usize,
}

fn weighted_sum(rates: &[f64], weights: &[f64]) -> f64 {
    rates.iter().zip(weights).map(|(r, d)| r * d).sum()
}

/// Matched filter per user, equal power split.
fn matched_filter(g: &CMatrix, p_t: f64) -> CMatrix {
    let (k, l) = g.shape();
    let per_user = (p_t / k as f64).sqrt();
    let mut w = CMatrix::zeros(l, k);
    for u in 0..k {
        let f = g.row(u).adjoint();
        let norm = f.norm();
        if norm > 0.0 {
            w.set_column(u, &f.scale(per_user / norm));
        }
    }
    w
}

/// Solves `W = (λI + A)^{-1} B` for the smallest `λ ≥ 0` with `‖W‖_F² ≤ p_t`,
/// `A` Hermitian positive semidefinite. Components of `B` in the numerical
/// null space of `A` are dropped.
fn power_constrained_solve(a: &CMatrix, b: &CMatrix, p_t: f64) -> Result<CMatrix> {
    let (e, v) = hermitian_eigen(a)?;
    let emax = e.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..e.len()).filter(|&i| e[i] > 1e-12 * emax).collect();
    let c = v.adjoint() * b;
    let weight: Vec<f64> = keep.iter().map(|&i| c.row(i).norm_squared()).collect();
    let power = |lambda: f64| -> f64 {
        keep.iter()
            .zip(&weight)
            .map(|(&i, w)| w / (e[i] + lambda).powi(2))
            .sum()
    };

    let lambda = if power(0.0) <= p_t {
        0.0
    } else {
        let mut lo = 0.0;
        let mut hi = (weight.iter().sum::<f64>() / p_t).sqrt();
        while power(hi) > p_t {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if power(mid) > p_t {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    };

    let mut scaled = CMatrix::zeros(e.len(), b.ncols());
    for &i in &keep {
        let s = 1.0 / (e[i] + lambda);
        for j in 0..b.ncols() {
            scaled[(i, j)] = c[(i, j)] * s;
        }
    }
    Ok(&v * scaled)
}

/// Fractional-programming (quadratic transform) WSR precoder for a fixed `θ`.
///
/// Each iteration updates the SINR auxiliaries `γ_k`, the quadratic-transform
/// auxiliaries `y_k`, then `W` in closed form with the power multiplier found
/// by bisection. The objective is non-decreasing across iterations.
pub fn fp_wsr_precoder(
    ch: &ChannelSet,
    theta: &CMatrix,
    p_t: f64,
    weights: &[f64],
    opts: &FpOptions,
) -> Result<FpResult> {
    if p_t.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidParameter(format!(
            "power budget must be positive, got {p_t}"
        )));
    }
    let k = ch.k();
    if weights.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {k} users",
            weights.len()
        )));
    }
    let g = cascaded(ch, theta)?;
    let noise = ch.noise_power;
    let l = ch.l();

    let mut w = matched_filter(&g, p_t);
    let mut wsr = weighted_sum(&rates_effective(&g, &w, noise), weights);
    let mut trace = vec![wsr];
    let mut powers = vec![w.norm_squared()];
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let gw = &g * &w;
        let mut y = vec![C64::new(0.0, 0.0); k];
        let mut amp = vec![0.0; k];
        for u in 0..k {
            let total: f64 = gw.row(u).iter().map(|z| z.norm_sqr()).sum::<f64>() + noise;
            let signal = gw[(u, u)].norm_sqr();
            let gamma = signal / (total - signal);
            amp[u] = (weights[u] * (1.0 + gamma)).sqrt();
            y[u] = gw[(u, u)] * (amp[u] / total);
        }
        let mut a = CMatrix::zeros(l, l);
        let mut rhs = CMatrix::zeros(l, k);
        for u in 0..k {
            let f = g.row(u).adjoint();
            a += &f * f.adjoint() * c64(y[u].norm_sqr(), 0.0);
            rhs.set_column(u, &(&f * (y[u] * amp[u])));
        }
        w = power_constrained_solve(&a, &rhs, p_t)?;
        let next = weighted_sum(&rates_effective(&g, &w, noise), weights);
        iterations += 1;
        trace.push(next);
        powers.push(w.norm_squared());
        let change = (next - wsr).abs();
        wsr = next;
        if change <= opts.rel_tol * wsr.abs() || wsr == 0.0 {
            break;
        }
    }

    Ok(FpResult {
        precoder: Precoder { w, p_t },
        trace,
        powers,
        iterations,
    })
}

/// Passive design used in the first stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Method {
    /// Projection of the SVD-optimal `V_M P_M^H`.
    UbSosup,
    /// The same projection refined by quasi-Newton ascent.
    SosupQn,
    /// Projection of `H Ĩ E^H`, `Ĩ` the K×L rectangular identity.
    HeuristicSosup,
}

impl Stage1Method {
    pub fn name(self) -> &'static str {
        match self {
            Stage1Method::UbSosup => "ub_sosup",
            Stage1Method::SosupQn => "sosup_qn",
            Stage1Method::HeuristicSosup => "heuristic_sosup",
        }
    }
}

impl std::str::FromStr for Stage1Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ub_sosup" => Ok(Stage1Method::UbSosup),
            "sosup_qn" => Ok(Stage1Method::SosupQn),
            "heuristic_sosup" => Ok(Stage1Method::HeuristicSosup),
            other => Err(Error::InvalidParameter(format!("unknown stage-1 method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStageOptions {
    pub p_t: f64,
    /// Per-user weights; all ones when empty.
    pub weights: Vec<f64>,
    pub eta: f64,
    pub p_cir: f64,
    pub fp: FpOptions,
    pub qn: QnOptions,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        Self {
            p_t: 1.0,
            weights: Vec::new(),
            eta: 1.0,
            p_cir: 1.0,
            fp: FpOptions::default(),
            qn: QnOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageResult {
    pub b: Susceptance,
    pub theta: Scattering,
    pub stage1_gain: f64,
    pub precoder: Precoder,
    pub report: UtilityReport,
    pub fp_iterations: usize,
}

/// First stage only: the passive design and its sum gain.
pub fn stage1(
    ch: &ChannelSet,
    spec: &ArchSpec,
    z0: f64,
    method: Stage1Method,
    qn: &QnOptions,
) -> Result<(Susceptance, Scattering, f64)> {
    match method {
        Stage1Method::UbSosup => {
            let d = ub_sosup(ch, spec, z0)?;
            Ok((d.projection.b, d.projection.theta, d.gain))
        }
        Stage1Method::SosupQn => {
            let d = ub_sosup(ch, spec, z0)?;
            let r = quasi_newton_gain(ch, spec, z0, &d.projection.b.vars(), qn)?;
            let b = Susceptance::from_vars(&r.b, *spec)?;
            let theta = crate::network::scattering_from_susceptance(&b, z0)?;
            Ok((b, theta, r.gain))
        }
        Stage1Method::HeuristicSosup => {
            let (k, l) = (ch.k(), ch.l());
            let rect = CMatrix::from_fn(k, l, |i, j| if i == j { c64(1.0, 0.0) } else { c64(0.0, 0.0) });
            let x = &ch.h * rect * ch.e.adjoint();
            let p = project(&x, spec, z0)?;
            let gain = sum_gain(ch, p.theta.matrix())?;
            Ok((p.b, p.theta, gain))
        }
    }
}

/// Passive design by channel-gain maximization, then the FP precoder with
/// `θ` frozen.
pub fn two_stage(
    ch: &ChannelSet,
    spec: &ArchSpec,
    z0: f64,
    method: Stage1Method,
    opts: &TwoStageOptions,
) -> Result<TwoStageResult> {
    let (b, theta, stage1_gain) = stage1(ch, spec, z0, method, &opts.qn)?;
    let weights = if opts.weights.is_empty() {
        vec![1.0; ch.k()]
    } else {
        opts.weights.clone()
    };
    let fp = fp_wsr_precoder(ch, theta.matrix(), opts.p_t, &weights, &opts.fp)?;
    let r = rates(ch, theta.matrix(), &fp.precoder)?;
    let report = utilities(&r, &weights, &fp.precoder, opts.eta, opts.p_cir)?;
    Ok(TwoStageResult {
        b,
        theta,
        stage1_gain,
        precoder: fp.precoder,
        report,
        fp_iterations: fp.iterations,
    })
}
