//! Sweep configuration, the Monte-Carlo engine and CSV output.
//!
//! A sweep runs every architecture template on every `(N, L, K)` grid point
//! for a number of channel realizations. Realization `r` always draws its
//! channels from stream `r` of the configured seed, so results do not depend
//! on scheduling, and rows are written in a fixed order.
//!
//! Output is a long-format CSV with the columns
//! `experiment,arch,n,g,q,q_g,l,k,seed,realization,method,metric,stat,value`.
//! `stat` is `sample` for per-realization rows and `mean`, `stderr` (or
//! `median` for timing) for aggregates, which leave `realization` empty.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arch::{circuit_complexity, make_arch, ArchKind, ArchParams, ArchSpec};
use crate::beamform::{two_stage, FpOptions, Stage1Method, TwoStageOptions};
use crate::chanopt::{dof, prop1_defect, upper_bound, ChannelSet, PathLoss, QnOptions, DEFAULT_NOISE_POWER};
use crate::error::Error;
use crate::exec::Execution;
use crate::network::DEFAULT_Z0;
use crate::rng::stream_rng;

/// Environment variable naming the directory for relative output paths.
pub const OUTPUT_DIR_ENV: &str = "BDRIS_OUTPUT_DIR";

pub const CSV_HEADER: &str = "experiment,arch,n,g,q,q_g,l,k,seed,realization,method,metric,stat,value";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Io { .. } | HarnessError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Complexity,
    GainVsQ,
    WsrVsQ,
    Tradeoff,
    Streams,
    Timing,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Complexity => "complexity",
            Experiment::GainVsQ => "gain_vs_q",
            Experiment::WsrVsQ => "wsr_vs_q",
            Experiment::Tradeoff => "tradeoff",
            Experiment::Streams => "streams",
            Experiment::Timing => "timing",
        }
    }
}

/// Architecture without its size `N`, instantiated per grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchTemplate {
    pub kind: ArchKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_g: Option<usize>,
}

impl ArchTemplate {
    pub fn new(kind: ArchKind) -> Self {
        Self {
            kind,
            g: None,
            q: None,
            q_g: None,
        }
    }

    pub fn instantiate(&self, n: usize) -> crate::Result<ArchSpec> {
        make_arch(
            self.kind,
            n,
            ArchParams {
                g: self.g,
                q: self.q,
                q_g: self.q_g,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub z0: f64,
    pub p_t: f64,
    pub noise_power: f64,
    pub l0: f64,
    pub d_r: f64,
    pub d_k: f64,
    pub alpha_r: f64,
    pub alpha_k: f64,
    /// Per-user weights; all ones when empty.
    pub weights: Vec<f64>,
    pub eta: f64,
    pub p_cir: f64,
}

impl Default for Physics {
    fn default() -> Self {
        let pl = PathLoss::default();
        Self {
            z0: DEFAULT_Z0,
            p_t: 1.0,
            noise_power: DEFAULT_NOISE_POWER,
            l0: pl.l0,
            d_r: pl.d_r,
            d_k: pl.d_k,
            alpha_r: pl.alpha_r,
            alpha_k: pl.alpha_k,
            weights: Vec::new(),
            eta: 1.0,
            p_cir: 1.0,
        }
    }
}

impl Physics {
    pub fn pathloss(&self) -> PathLoss {
        PathLoss {
            l0: self.l0,
            d_r: self.d_r,
            d_k: self.d_k,
            alpha_r: self.alpha_r,
            alpha_k: self.alpha_k,
        }
    }
}

fn default_grid() -> Vec<usize> {
    vec![1]
}
fn default_realizations() -> usize {
    100
}
fn default_methods() -> Vec<Stage1Method> {
    vec![Stage1Method::UbSosup]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    pub n: Vec<usize>,
    #[serde(default = "default_grid")]
    pub l: Vec<usize>,
    #[serde(default = "default_grid")]
    pub k: Vec<usize>,
    pub archs: Vec<ArchTemplate>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Stage1Method>,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub qn: QnOptions,
    #[serde(default)]
    pub fp: FpOptions,
    #[serde(default)]
    pub execution: Execution,
    pub output: PathBuf,
}

impl SweepConfig {
    /// Parses and validates a JSON configuration.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.realizations == 0 {
            return bad("realizations: must be at least 1".into());
        }
        for (name, grid) in [("n", &self.n), ("l", &self.l), ("k", &self.k)] {
            if grid.is_empty() {
                return bad(format!("{name}: grid must not be empty"));
            }
            if grid.contains(&0) {
                return bad(format!("{name}: dimensions must be positive"));
            }
        }
        if self.archs.is_empty() {
            return bad("archs: at least one architecture is required".into());
        }
        if self.methods.is_empty() {
            return bad("methods: at least one method is required".into());
        }
        if self.output.as_os_str().is_empty() {
            return bad("output: path must not be empty".into());
        }
        let p = &self.physics;
        for (name, v) in [("physics.z0", p.z0), ("physics.p_t", p.p_t), ("physics.eta", p.eta)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name}: must be positive, got {v}"));
            }
        }
        if !(p.noise_power > 0.0 && p.noise_power.is_finite()) || p.p_cir.is_nan() || p.p_cir < 0.0 {
            return bad("physics: noise_power must be positive and p_cir non-negative".into());
        }
        for &n in &self.n {
            for (i, t) in self.archs.iter().enumerate() {
                if let Err(e) = t.instantiate(n) {
                    return bad(format!("archs[{i}] at n = {n}: {e}"));
                }
            }
        }
        for &k in &self.k {
            if !p.weights.is_empty() && p.weights.len() != k {
                return bad(format!("physics.weights: {} weights for k = {k}", p.weights.len()));
            }
        }
        Ok(())
    }

    /// Output path with relative paths placed under `$BDRIS_OUTPUT_DIR` when set.
    pub fn resolved_output(&self) -> PathBuf {
        resolve_output(&self.output)
    }
}

pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// One measured value of one realization.
#[derive(Debug, Clone, PartialEq)]
struct Sample {
    arch: usize,
    method: &'static str,
    metric: &'static str,
    value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n: usize,
    pub l: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub path: PathBuf,
    pub rows: usize,
    /// Human-readable table of the aggregate means.
    pub text: String,
}

/// Runs the sweep, writes the CSV and returns a summary.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepSummary, HarnessError> {
    cfg.validate()?;
    let (csv, rows, text) = render(cfg)?;
    let path = cfg.resolved_output();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let io_err = |source| HarnessError::Io {
        path: path.clone(),
        source,
    };
    let mut f = fs::File::create(&path).map_err(io_err)?;
    f.write_all(csv.as_bytes()).map_err(io_err)?;
    Ok(SweepSummary { path, rows, text })
}

/// Runs the sweep and returns the CSV text without touching the filesystem.
pub fn sweep_csv(cfg: &SweepConfig) -> Result<String, HarnessError> {
    cfg.validate()?;
    Ok(render(cfg)?.0)
}

fn grid(cfg: &SweepConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &n in &cfg.n {
        for &l in &cfg.l {
            for &k in &cfg.k {
                out.push(GridPoint { n, l, k });
            }
        }
    }
    out
}

struct Writer {
    csv: String,
    rows: usize,
    experiment: &'static str,
    seed: u64,
}

impl Writer {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        spec: &ArchSpec,
        point: Option<&GridPoint>,
        realization: Option<usize>,
        method: &str,
        metric: &str,
        stat: &str,
        value: f64,
    ) {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let (l, k) = point.map_or((String::new(), String::new()), |p| (p.l.to_string(), p.k.to_string()));
        writeln!(
            self.csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            spec.kind(),
            spec.n(),
            opt(spec.g()),
            opt(spec.q()),
            opt(spec.q_g()),
            l,
            k,
            self.seed,
            opt(realization),
            method,
            metric,
            stat,
            value
        )
        .expect("writing to a String cannot fail");
        self.rows += 1;
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean (zero for a single value).
pub fn stderr(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn render(cfg: &SweepConfig) -> Result<(String, usize, String), HarnessError> {
    let mut w = Writer {
        csv: format!("{CSV_HEADER}\n"),
        rows: 0,
        experiment: cfg.experiment.name(),
        seed: cfg.seed,
    };
    let mut text = String::new();

    if cfg.experiment == Experiment::Complexity {
        let mut curves: Vec<Vec<(f64, f64)>> = vec![Vec::new(); cfg.archs.len()];
        for &n in &cfg.n {
            for (i, t) in cfg.archs.iter().enumerate() {
                let spec = t.instantiate(n)?;
                let c = circuit_complexity(&spec);
                w.row(&spec, None, None, "closed_form", "complexity", "value", c as f64);
                curves[i].push((n as f64, c as f64));
            }
        }
        for (t, curve) in cfg.archs.iter().zip(&curves) {
            let label = t.instantiate(cfg.n[0])?.label();
            if curve.len() >= 2 {
                let (x, y): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
                let _ = writeln!(text, "{label:<24} log-log slope {:.3}", loglog_slope(&x, &y));
            } else {
                let _ = writeln!(text, "{label:<24} complexity {}", curve[0].1);
            }
        }
        return Ok((w.csv, w.rows, text));
    }

    for point in grid(cfg) {
        let specs: Vec<ArchSpec> = cfg
            .archs
            .iter()
            .map(|t| t.instantiate(point.n))
            .collect::<crate::Result<_>>()?;
        let per_real = cfg
            .execution
            .try_map(cfg.realizations, |r| realization(cfg, &point, &specs, r as u64))?;

        // Regroup: (arch, method, metric) → values in realization order.
        let mut keys: Vec<(usize, &'static str, &'static str)> = Vec::new();
        for s in &per_real[0] {
            let key = (s.arch, s.method, s.metric);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for (arch, method, metric) in keys {
            let values: Vec<f64> = per_real
                .iter()
                .map(|samples| {
                    samples
                        .iter()
                        .find(|s| s.arch == arch && s.method == method && s.metric == metric)
                        .map(|s| s.value)
                        .expect("every realization reports the same metrics")
                })
                .collect();
            let spec = &specs[arch];
            for (r, v) in values.iter().enumerate() {
                w.row(spec, Some(&point), Some(r), method, metric, "sample", *v);
            }
            let m = mean(&values);
            let se = stderr(&values);
            w.row(spec, Some(&point), None, method, metric, "mean", m);
            w.row(spec, Some(&point), None, method, metric, "stderr", se);
            if cfg.experiment == Experiment::Timing {
                w.row(spec, Some(&point), None, method, metric, "median", median(&values));
            }
            if is_headline(cfg.experiment, metric) {
                let _ = writeln!(
                    text,
                    "N={:<4} L={:<3} K={:<3} {:<24} {:<16} {:<12} mean {:.6e} ± {:.2e}",
                    point.n,
                    point.l,
                    point.k,
                    spec.label(),
                    method,
                    metric,
                    m,
                    se
                );
            }
        }
    }
    Ok((w.csv, w.rows, text))
}

fn is_headline(exp: Experiment, metric: &str) -> bool {
    match exp {
        Experiment::GainVsQ | Experiment::Streams => metric == "gain_ratio",
        Experiment::WsrVsQ => metric == "wsr",
        Experiment::Tradeoff => metric == "wsr" || metric == "gain_ratio",
        Experiment::Timing => metric == "seconds",
        Experiment::Complexity => false,
    }
}

fn realization(cfg: &SweepConfig, point: &GridPoint, specs: &[ArchSpec], r: u64) -> Result<Vec<Sample>, HarnessError> {
    let phys = &cfg.physics;
    let mut rng = stream_rng(cfg.seed, r);
    let ch = ChannelSet::generate(&mut rng, point.n, point.l, point.k, &phys.pathloss(), phys.noise_power);
    let ub = upper_bound(&ch)?.ub_value;
    let mut out = Vec::new();

    if cfg.experiment == Experiment::Streams {
        out.push(Sample {
            arch: 0,
            method: "analysis",
            metric: "dof",
            value: dof(point.k, point.l, point.n) as f64,
        });
        out.push(Sample {
            arch: 0,
            method: "analysis",
            metric: "prop1_defect",
            value: prop1_defect(&ch)?,
        });
    }

    let two_stage_opts = TwoStageOptions {
        p_t: phys.p_t,
        weights: phys.weights.clone(),
        eta: phys.eta,
        p_cir: phys.p_cir,
        fp: cfg.fp,
        qn: cfg.qn,
    };

    for (a, spec) in specs.iter().enumerate() {
        for &method in &cfg.methods {
            let name = method.name();
            let mut push = |metric, value| {
                out.push(Sample {
                    arch: a,
                    method: name,
                    metric,
                    value,
                })
            };
            match cfg.experiment {
                Experiment::GainVsQ | Experiment::Streams => {
                    let (_, _, gain) = crate::beamform::stage1(&ch, spec, phys.z0, method, &cfg.qn)?;
                    push("gain", gain);
                    push("upper_bound", ub);
                    push("gain_ratio", gain / ub);
                }
                Experiment::WsrVsQ | Experiment::Tradeoff => {
                    let res = two_stage(&ch, spec, phys.z0, method, &two_stage_opts)?;
                    if cfg.experiment == Experiment::Tradeoff {
                        push("complexity", circuit_complexity(spec) as f64);
                        push("gain_ratio", res.stage1_gain / ub);
                    }
                    push("stage1_gain", res.stage1_gain);
                    push("wsr", res.report.wsr);
                    push("mmf", res.report.mmf);
                    push("ee", res.report.ee);
                }
                Experiment::Timing => {
                    let start = Instant::now();
                    let (_, _, gain) = crate::beamform::stage1(&ch, spec, phys.z0, method, &cfg.qn)?;
                    let secs = start.elapsed().as_secs_f64();
                    push("seconds", secs);
                    push("gain", gain);
                }
                Experiment::Complexity => unreachable!("handled without realizations"),
            }
        }
    }
    Ok(out)
}
