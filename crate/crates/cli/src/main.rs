//! `bdris` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while computing or writing results.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bdris::arch::{circuit_complexity, make_arch, ArchKind, ArchParams, ArchSpec};
use bdris::beamform::{stage1, two_stage, Stage1Method, TwoStageOptions};
use bdris::chanopt::{gen_channels, upper_bound, PathLoss, QnOptions, DEFAULT_NOISE_POWER};
use bdris::harness::{resolve_output, run_sweep, HarnessError, SweepConfig, OUTPUT_DIR_ENV};
use bdris::network::{read_matrix_csv, validate_scattering, write_complex_csv, write_real_csv, DEFAULT_Z0};
use bdris::numlin::CMatrix;
use bdris::rng::stream_rng;
use bdris::sosup::project;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bdris", version, about = "Scattering-matrix design for beyond-diagonal RIS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project a complex matrix onto an architecture's feasible scattering matrices.
    Project(ProjectArgs),
    /// Maximize the channel gain of one channel realization.
    Gain(GainArgs),
    /// Two-stage weighted sum-rate design on one channel realization.
    Wsr(WsrArgs),
    /// Print the circuit complexity of an architecture.
    Complexity(ComplexityArgs),
    /// Run a Monte-Carlo sweep from a JSON configuration.
    Sweep(SweepArgs),
    /// Check a scattering matrix for symmetry and unitarity.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Base seed for channel and input generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference impedance in ohms.
    #[arg(long, default_value_t = DEFAULT_Z0, allow_negative_numbers = true)]
    z0: f64,
    /// Output directory (or file for `sweep`); defaults to $BDRIS_OUTPUT_DIR, then the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ArchArgs {
    /// Architecture as inline JSON or a path to a JSON file, e.g. '{"kind":"stem","n":3,"q":1}'.
    #[arg(long, conflicts_with_all = ["kind", "g", "q", "q_g"])]
    arch: Option<String>,
    #[arg(long)]
    kind: Option<ArchKind>,
    /// Number of RIS elements.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    q_g: Option<usize>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Complex matrix CSV (`re,im` column pairs); a seeded complex Gaussian matrix when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    /// Transmit antennas.
    #[arg(long, default_value_t = 1)]
    l: usize,
    /// Users.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_NOISE_POWER)]
    noise_power: f64,
}

#[derive(Debug, Args)]
struct GainArgs {
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    channel: ChannelArgs,
    /// Solvers to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "ub_sosup,sosup_qn")]
    method: Vec<Stage1Method>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct WsrArgs {
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value = "ub_sosup")]
    method: Stage1Method,
    /// Transmit power budget.
    #[arg(long, default_value_t = 1.0)]
    p_t: f64,
    /// Per-user weights, comma separated; all ones when omitted.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ComplexityArgs {
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON sweep configuration.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: CommonOverrides,
}

/// Like [`Common`], but every flag overrides the configuration only when given.
#[derive(Debug, Args)]
struct CommonOverrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    z0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Scattering matrix CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<bdris::Error> for CliError {
    fn from(e: bdris::Error) -> Self {
        use bdris::Error as E;
        match e {
            E::InvalidGrouping { .. } | E::InvalidStemCount { .. } | E::InvalidArch(_) | E::InvalidParameter(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("i/o error on {}: {e}", path.display()))
}

impl ArchArgs {
    fn spec(&self) -> CliResult<ArchSpec> {
        if let Some(arch) = &self.arch {
            let text = if arch.trim_start().starts_with('{') {
                arch.clone()
            } else {
                fs::read_to_string(arch).map_err(|e| CliError::Config(format!("cannot read {arch}: {e}")))?
            };
            return serde_json::from_str(&text).map_err(|e| CliError::Config(format!("--arch: {e}")));
        }
        let (Some(kind), Some(n)) = (self.kind, self.n) else {
            return Err(CliError::Config("give --arch, or --kind together with --n".into()));
        };
        let params = ArchParams {
            g: self.g,
            q: self.q,
            q_g: self.q_g,
        };
        Ok(make_arch(kind, n, params)?)
    }
}

impl Common {
    fn check(&self) -> CliResult<()> {
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(CliError::Config(format!("--z0 must be positive, got {}", self.z0)));
        }
        Ok(())
    }

    fn out_dir(&self) -> CliResult<PathBuf> {
        let dir = match &self.out {
            Some(p) => resolve_output(p),
            None => std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
        };
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }
}

fn write_complex(path: &Path, m: &CMatrix) -> CliResult<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_complex_csv(BufWriter::new(f), m)?;
    Ok(())
}

fn write_real(path: &Path, m: &bdris::numlin::RMatrix) -> CliResult<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_real_csv(BufWriter::new(f), m)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn cmd_project(args: &ProjectArgs) -> CliResult<()> {
    args.common.check()?;
    let spec = args.arch.spec()?;
    let n = spec.n();
    let x = match &args.input {
        Some(path) => read_matrix_csv(
            File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?,
        )?,
        None => {
            let mut rng = stream_rng(args.common.seed, 0);
            bdris::rng::complex_gaussian_matrix(&mut rng, n, n)
        }
    };
    let r = project(&x, &spec, args.common.z0)?;
    let dir = args.common.out_dir()?;
    write_real(&dir.join("b.csv"), r.b.matrix())?;
    write_complex(&dir.join("theta.csv"), r.theta.matrix())?;
    let summary = format!(
        "metric,value\nlower_bound,{:e}\nachieved,{:e}\nls_residual,{:e}\ndegenerate,{}\n",
        r.lower_bound, r.achieved, r.ls_residual, r.degenerate
    );
    write_text(&dir.join("project.csv"), &summary)?;
    println!("arch         {}", spec.label());
    println!("lower_bound  {:.6e}", r.lower_bound);
    println!("achieved     {:.6e}", r.achieved);
    println!("ls_residual  {:.6e}", r.ls_residual);
    if r.degenerate {
        println!("note         symmetric part vanished; returned B = 0");
    }
    println!("wrote        {}", dir.display());
    Ok(())
}

fn cmd_gain(args: &GainArgs) -> CliResult<()> {
    args.common.check()?;
    let spec = args.arch.spec()?;
    let c = &args.channel;
    let ch = gen_channels(
        spec.n(),
        c.l,
        c.k,
        args.common.seed,
        &PathLoss::default(),
        c.noise_power,
    )?;
    let ub = upper_bound(&ch)?.ub_value;
    let dir = args.common.out_dir()?;
    let mut summary = String::from("method,metric,value\n");
    summary.push_str(&format!("bound,upper_bound,{ub:e}\n"));
    println!("upper_bound  {ub:.6e}");
    for &method in &args.method {
        let (b, theta, gain) = stage1(&ch, &spec, args.common.z0, method, &QnOptions::default())?;
        let name = method.name();
        write_real(&dir.join(format!("{name}_b.csv")), b.matrix())?;
        write_complex(&dir.join(format!("{name}_theta.csv")), theta.matrix())?;
        summary.push_str(&format!("{name},gain,{gain:e}\n{name},gain_ratio,{:e}\n", gain / ub));
        println!("{name:<16} gain {gain:.6e}  ratio {:.6}", gain / ub);
    }
    write_text(&dir.join("gain.csv"), &summary)
}

fn cmd_wsr(args: &WsrArgs) -> CliResult<()> {
    args.common.check()?;
    let spec = args.arch.spec()?;
    let c = &args.channel;
    let ch = gen_channels(
        spec.n(),
        c.l,
        c.k,
        args.common.seed,
        &PathLoss::default(),
        c.noise_power,
    )?;
    let opts = TwoStageOptions {
        p_t: args.p_t,
        weights: args.weights.clone(),
        ..TwoStageOptions::default()
    };
    let r = two_stage(&ch, &spec, args.common.z0, args.method, &opts)?;
    let dir = args.common.out_dir()?;
    write_real(&dir.join("b.csv"), r.b.matrix())?;
    write_complex(&dir.join("theta.csv"), r.theta.matrix())?;
    write_complex(&dir.join("precoder.csv"), &r.precoder.w)?;
    let mut summary = String::from("metric,value\n");
    for (k, rate) in r.report.rates.iter().enumerate() {
        summary.push_str(&format!("rate_{k},{rate:e}\n"));
    }
    summary.push_str(&format!(
        "stage1_gain,{:e}\nwsr,{:e}\nmmf,{:e}\nee,{:e}\npower,{:e}\n",
        r.stage1_gain,
        r.report.wsr,
        r.report.mmf,
        r.report.ee,
        r.precoder.power()
    ));
    write_text(&dir.join("wsr.csv"), &summary)?;
    println!("stage1_gain  {:.6e}", r.stage1_gain);
    println!("wsr          {:.6}", r.report.wsr);
    println!("mmf          {:.6}", r.report.mmf);
    println!("ee           {:.6}", r.report.ee);
    println!("fp_iters     {}", r.fp_iterations);
    Ok(())
}

fn cmd_complexity(args: &ComplexityArgs) -> CliResult<()> {
    args.common.check()?;
    let specs = if args.arch.arch.is_none() && args.arch.kind.is_none() {
        let n = args
            .arch
            .n
            .ok_or_else(|| CliError::Config("give --n (and optionally --kind)".into()))?;
        let params = ArchParams {
            g: args.arch.g,
            q: args.arch.q,
            q_g: args.arch.q_g,
        };
        ArchKind::ALL
            .iter()
            .filter_map(|&k| make_arch(k, n, params).ok())
            .collect::<Vec<_>>()
    } else {
        vec![args.arch.spec()?]
    };
    if let [spec] = specs.as_slice() {
        println!("{}", circuit_complexity(spec));
    } else {
        for spec in &specs {
            println!("{:<28} {}", spec.label(), circuit_complexity(spec));
        }
    }
    if args.common.out.is_some() {
        let dir = args.common.out_dir()?;
        let mut csv = String::from("arch,n,g,q,q_g,complexity\n");
        for spec in &specs {
            let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                spec.kind(),
                spec.n(),
                opt(spec.g()),
                opt(spec.q()),
                opt(spec.q_g()),
                circuit_complexity(spec)
            ));
        }
        write_text(&dir.join("complexity.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let path = &args.config;
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let o = &args.common;
    let cfg = if o.seed.is_none() && o.z0.is_none() && o.out.is_none() {
        SweepConfig::from_json(&text)?
    } else {
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(obj) = value.as_object_mut() {
            if let Some(seed) = o.seed {
                obj.insert("seed".into(), seed.into());
            }
            if let Some(out) = &o.out {
                obj.insert("output".into(), out.to_string_lossy().into_owned().into());
            }
            if let Some(z0) = o.z0 {
                let physics = obj.entry("physics").or_insert_with(|| serde_json::json!({}));
                if let Some(p) = physics.as_object_mut() {
                    p.insert("z0".into(), z0.into());
                }
            }
        }
        SweepConfig::from_json(&value.to_string())?
    };
    let summary = run_sweep(&cfg)?;
    print!("{}", summary.text);
    println!("wrote {} rows to {}", summary.rows, summary.path.display());
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    args.common.check()?;
    let path = &args.input;
    let theta = read_matrix_csv(
        File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?,
    )?;
    let rep = validate_scattering(&theta, args.tol)?;
    println!("unitarity_defect  {:.3e}", rep.unitarity_defect);
    println!("symmetry_defect   {:.3e}", rep.symmetry_defect);
    if args.common.out.is_some() {
        let dir = args.common.out_dir()?;
        let csv = format!(
            "metric,value\nunitarity_defect,{:e}\nsymmetry_defect,{:e}\npass,{}\n",
            rep.unitarity_defect, rep.symmetry_defect, rep.pass
        );
        write_text(&dir.join("validate.csv"), &csv)?;
    }
    if rep.pass {
        println!("PASS (tol {:e})", args.tol);
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "matrix is not a lossless reciprocal scattering matrix at tol {:e}",
            args.tol
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Project(a) => cmd_project(a),
        Command::Gain(a) => cmd_gain(a),
        Command::Wsr(a) => cmd_wsr(a),
        Command::Complexity(a) => cmd_complexity(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
