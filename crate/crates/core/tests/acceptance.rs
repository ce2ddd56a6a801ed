//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use bdris::arch::{circuit_complexity, counting_matrix, mask, transform_matrix, upper_count, vec_i, ArchSpec};
use bdris::beamform::{fp_wsr_precoder, FpOptions};
use bdris::chanopt::{
    gain_gradient, gain_objective, gen_channels, prop1_defect, quasi_newton_gain, ub_sosup, ChannelSet, PathLoss,
    QnOptions, DEFAULT_NOISE_POWER,
};
use bdris::harness::{loglog_slope, mean, run_sweep, stderr, sweep_csv, SweepConfig};
use bdris::network::{scattering_from_susceptance, validate_scattering, DEFAULT_Z0};
use bdris::numlin::{symmetry_defect, unitarity_defect, CMatrix, RMatrix};
use bdris::rng::stream_rng;
use bdris::sosup::project;
use common::{catalog, random_complex, random_susceptance};
use nalgebra::{DMatrix, DVector};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn channels(n: usize, l: usize, k: usize, seed: u64) -> ChannelSet {
    gen_channels(n, l, k, seed, &PathLoss::default(), DEFAULT_NOISE_POWER).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden_toy_example() -> Outcome {
    let spec = ArchSpec::stem(3, 1).unwrap();
    let maps = transform_matrix(&spec);
    ensure(
        maps.indicator == DMatrix::from_row_slice(3, 3, &[1, 1, 1, 1, 1, 0, 1, 0, 1]),
        || format!("indicator {}", maps.indicator),
    )?;
    ensure(
        maps.counting == DMatrix::from_row_slice(3, 3, &[1, 2, 3, 2, 4, 4, 3, 4, 5])
            && counting_matrix(&maps.indicator) == maps.counting,
        || format!("counting {}", maps.counting),
    )?;
    let b = RMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 0.0, 3.0, 0.0, 5.0]);
    let v = vec_i(&b, &spec).map_err(|e| e.to_string())?;
    ensure(v.as_slice() == [1.0, 2.0, 3.0, 4.0, 5.0], || format!("vec_i {v}"))?;
    let e = |k: usize| (0..5).map(|c| if c == k { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let zero = vec![0.0; 5];
    let rows = [e(0), e(1), e(2), e(1), e(3), zero.clone(), e(2), zero, e(4)];
    let expected = RMatrix::from_fn(9, 5, |i, j| rows[i][j]);
    ensure(maps.transform.to_dense() == expected, || {
        "transform matrix differs".into()
    })?;
    Ok("indicator, counting, vec_i and 9x5 R match".into())
}

fn scattering_contract() -> Outcome {
    let sizes = [8, 12, 16, 32];
    let mut worst = (0.0f64, 0.0f64);
    for t in 0..1000u64 {
        let n = sizes[(t as usize / 7) % sizes.len()];
        let spec = catalog(n)[t as usize % 7];
        let mut rng = stream_rng(2024, t);
        let b = random_susceptance(&mut rng, &spec, DEFAULT_Z0);
        let theta = scattering_from_susceptance(&b, DEFAULT_Z0).map_err(|e| e.to_string())?;
        let u = unitarity_defect(theta.matrix());
        let s = symmetry_defect(theta.matrix());
        worst = (worst.0.max(u), worst.1.max(s));
        ensure(u < 1e-9 && s < 1e-9, || {
            format!("trial {t} ({spec}): unitarity {u:.2e}, symmetry {s:.2e}")
        })?;
    }
    Ok(format!(
        "1000 draws, max unitarity defect {:.2e}, max symmetry defect {:.2e}",
        worst.0, worst.1
    ))
}

fn projection_soundness() -> Outcome {
    let mut worst_recovery = 0.0f64;
    for (s, spec) in catalog(16).iter().enumerate() {
        let m = mask(spec);
        for seed in 0..200u64 {
            let x = random_complex(seed, 100 + s as u64, 16, 16);
            let r = project(&x, spec, DEFAULT_Z0).map_err(|e| e.to_string())?;
            let b = r.b.matrix();
            let outside = (0..16).any(|i| (0..16).any(|j| m[(i, j)] == 0 && b[(i, j)] != 0.0));
            ensure(!outside, || format!("{spec} seed {seed}: entry outside mask"))?;
            let rep = validate_scattering(r.theta.matrix(), 1e-8).map_err(|e| e.to_string())?;
            ensure(rep.pass, || format!("{spec} seed {seed}: {rep:?}"))?;
            ensure(r.achieved >= r.lower_bound - 1e-6 * r.lower_bound.max(1.0), || {
                format!("{spec} seed {seed}: achieved {} < bound {}", r.achieved, r.lower_bound)
            })?;

            let mut rng = stream_rng(seed, 200 + s as u64);
            let b0 = random_susceptance(&mut rng, spec, DEFAULT_Z0);
            let theta0 = scattering_from_susceptance(&b0, DEFAULT_Z0).map_err(|e| e.to_string())?;
            let rf = project(theta0.matrix(), spec, DEFAULT_Z0).map_err(|e| e.to_string())?;
            let err = (rf.theta.matrix() - theta0.matrix()).norm();
            worst_recovery = worst_recovery.max(err);
            ensure(err < 1e-6, || {
                format!("{spec} seed {seed}: feasible recovery error {err:.2e}")
            })?;
        }
    }
    Ok(format!(
        "7 architectures x 200 inputs, worst feasible recovery {worst_recovery:.2e}"
    ))
}

fn bound_attainment() -> Outcome {
    let spec = ArchSpec::fully(16).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let d = ub_sosup(&channels(16, 1, 1, seed), &spec, DEFAULT_Z0).map_err(|e| e.to_string())?;
        let rel = (d.upper_bound - d.gain).abs() / d.upper_bound;
        worst = worst.max(rel);
        ensure(rel < 1e-6, || format!("M=1 seed {seed}: relative gap {rel:.2e}"))?;
    }
    let mut min_gap = f64::INFINITY;
    let mut min_defect = f64::INFINITY;
    for seed in 0..50 {
        let ch = channels(16, 2, 2, seed);
        let d = ub_sosup(&ch, &spec, DEFAULT_Z0).map_err(|e| e.to_string())?;
        let gap = (d.upper_bound - d.gain) / d.upper_bound;
        let defect = prop1_defect(&ch).map_err(|e| e.to_string())?;
        min_gap = min_gap.min(gap);
        min_defect = min_defect.min(defect);
        ensure(gap > 0.0, || format!("M=2 seed {seed}: no gap"))?;
        ensure(defect > 1e-3, || format!("M=2 seed {seed}: defect {defect:.2e}"))?;
    }
    Ok(format!(
        "M=1 worst relative gap {worst:.2e}; M=2 smallest relative gap {min_gap:.2e}, smallest defect {min_defect:.2e}"
    ))
}

fn stem_saturation() -> Outcome {
    let (n, l, seeds) = (16, 5, 20u64);
    let mut notes = Vec::new();
    for m in 1..=3usize {
        let chans: Vec<ChannelSet> = (0..seeds).map(|s| channels(n, l, m, s)).collect();
        let gains = |spec: &ArchSpec| -> Result<Vec<f64>, String> {
            chans
                .iter()
                .map(|ch| {
                    ub_sosup(ch, spec, DEFAULT_Z0)
                        .map(|d| d.gain)
                        .map_err(|e| e.to_string())
                })
                .collect()
        };
        let fully = mean(&gains(&ArchSpec::fully(n).unwrap())?);
        let q_sat = 2 * m - 1;
        let mut prev: Option<(usize, f64, f64)> = None;
        for q in 0..=(q_sat + 2).min(n - 1) {
            let g = gains(&ArchSpec::stem(n, q).unwrap())?;
            let (mu, se) = (mean(&g), stderr(&g));
            if let Some((pq, pmu, pse)) = prev {
                ensure(mu >= pmu - pse.max(se), || {
                    format!("M={m}: mean gain drops from Q={pq} ({pmu:.4e}) to Q={q} ({mu:.4e})")
                })?;
            }
            if q == q_sat {
                let ratio = mu / fully;
                ensure((ratio - 1.0).abs() <= 0.01, || {
                    format!("M={m}: stem Q={q} mean / fully mean = {ratio:.4}")
                })?;
                notes.push(format!("M={m} Q={q} ratio {ratio:.5}"));
            }
            prev = Some((q, mu, se));
        }
    }
    Ok(notes.join("; "))
}

fn complexity_formulas() -> Outcome {
    for n in 2..=64usize {
        let mut specs = vec![
            ArchSpec::single(n).unwrap(),
            ArchSpec::fully(n).unwrap(),
            ArchSpec::tree(n).unwrap(),
        ];
        specs.extend((0..n).map(|q| ArchSpec::stem(n, q).unwrap()));
        for g in (1..=n).filter(|g| n % g == 0) {
            specs.push(ArchSpec::group(n, g).unwrap());
            specs.push(ArchSpec::forest(n, g).unwrap());
            specs.extend((0..n / g).map(|q_g| ArchSpec::cluster(n, g, q_g).unwrap()));
        }
        for spec in specs {
            let (closed, brute) = (circuit_complexity(&spec), upper_count(&mask(&spec)));
            ensure(closed == brute, || {
                format!("{spec}: closed form {closed}, mask count {brute}")
            })?;
        }
    }
    let cfg = SweepConfig::from_json(
        r#"{"experiment":"complexity","n":[16,32,64,128,256],
            "archs":[{"kind":"fully"},{"kind":"group","g":4},{"kind":"single"},{"kind":"tree"},
                     {"kind":"forest","g":4},{"kind":"stem","q":7},{"kind":"cluster","g":4,"q_g":2}],
            "output":"complexity.csv"}"#,
    )
    .map_err(|e| e.to_string())?;
    let csv = sweep_csv(&cfg).map_err(|e| e.to_string())?;
    let mut slopes = Vec::new();
    for (i, (label, target)) in [
        ("fully", 2.0),
        ("group", 2.0),
        ("single", 1.0),
        ("tree", 1.0),
        ("forest", 1.0),
        ("stem", 1.0),
        ("cluster", 1.0),
    ]
    .iter()
    .enumerate()
    {
        let pts: Vec<(f64, f64)> = csv
            .lines()
            .skip(1)
            .skip(i)
            .step_by(7)
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                (f[2].parse().unwrap(), f[13].parse().unwrap())
            })
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let slope = loglog_slope(&x, &y);
        ensure((slope - target).abs() <= 0.15, || {
            format!("{label}: slope {slope:.3}, expected {target}")
        })?;
        slopes.push(format!("{label} {slope:.2}"));
    }
    Ok(format!("closed forms match for N=2..64; slopes {}", slopes.join(", ")))
}

fn gradient_check() -> Outcome {
    let specs = catalog(8);
    let mut worst = 0.0f64;
    for t in 0..20u64 {
        let spec = specs[t as usize % specs.len()];
        let ch = channels(8, 2, 3, 300 + t);
        let mut rng = stream_rng(t, 9);
        let b = random_susceptance(&mut rng, &spec, DEFAULT_Z0).vars();
        let g = gain_gradient(&b, &ch, &spec, DEFAULT_Z0).map_err(|e| e.to_string())?;
        let fd = DVector::from_fn(b.len(), |i, _| {
            let h = 1e-6 * b[i].abs().max(1.0) / DEFAULT_Z0;
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            let fp = gain_objective(&bp, &ch, &spec, DEFAULT_Z0).unwrap();
            let fm = gain_objective(&bm, &ch, &spec, DEFAULT_Z0).unwrap();
            (fp - fm) / (2.0 * h)
        });
        let rel = (&g - &fd).norm() / fd.norm();
        worst = worst.max(rel);
        ensure(rel < 1e-5, || {
            format!("instance {t} ({spec}): relative error {rel:.2e}")
        })?;
    }
    Ok(format!("20 instances, worst relative error {worst:.2e}"))
}

fn quasi_newton_dominance() -> Outcome {
    let opts = QnOptions::default();
    let mut notes = Vec::new();
    for q in [1usize, 3, 5, 7] {
        let spec = ArchSpec::stem(16, q).unwrap();
        let (mut ub_gains, mut qn_gains) = (Vec::new(), Vec::new());
        for seed in 0..20 {
            let ch = channels(16, 4, 4, seed);
            let d = ub_sosup(&ch, &spec, DEFAULT_Z0).map_err(|e| e.to_string())?;
            let r =
                quasi_newton_gain(&ch, &spec, DEFAULT_Z0, &d.projection.b.vars(), &opts).map_err(|e| e.to_string())?;
            ensure(r.gain >= d.gain, || {
                format!("Q={q} seed {seed}: quasi-Newton {} < projection {}", r.gain, d.gain)
            })?;
            ub_gains.push(d.gain);
            qn_gains.push(r.gain);
        }
        let (mu_ub, mu_qn) = (mean(&ub_gains), mean(&qn_gains));
        if q == 1 {
            ensure(mu_qn > mu_ub, || {
                format!("Q=1: mean quasi-Newton {mu_qn:.4e} not above {mu_ub:.4e}")
            })?;
        }
        notes.push(format!("Q={q} x{:.3}", mu_qn / mu_ub));
    }
    Ok(format!("mean gain ratio quasi-Newton/projection: {}", notes.join(", ")))
}

fn fp_beamformer() -> Outcome {
    let opts = FpOptions::default();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let ch = channels(16, 4, 1, seed);
        let theta = CMatrix::identity(16, 16);
        let fp = fp_wsr_precoder(&ch, &theta, 1.0, &[1.0], &opts).map_err(|e| e.to_string())?;
        let f = ch.h.adjoint() * &ch.e;
        let optimum = (1.0 + f.norm_squared() / ch.noise_power).log2();
        let rel = (fp.trace.last().unwrap() - optimum).abs() / optimum;
        worst = worst.max(rel);
        ensure(rel <= 1e-4, || {
            format!("single user seed {seed}: relative WSR error {rel:.2e}")
        })?;
    }
    for seed in 0..50 {
        let ch = channels(16, 4, 4, 500 + seed);
        let spec = ArchSpec::stem(16, 3).unwrap();
        let theta = ub_sosup(&ch, &spec, DEFAULT_Z0)
            .map_err(|e| e.to_string())?
            .projection
            .theta;
        let fp = fp_wsr_precoder(&ch, theta.matrix(), 1.0, &[1.0; 4], &opts).map_err(|e| e.to_string())?;
        ensure(fp.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9), || {
            format!("seed {seed}: WSR decreased")
        })?;
        ensure(fp.powers.iter().all(|p| *p <= 1.0 + 1e-9), || {
            format!("seed {seed}: power budget exceeded")
        })?;
    }
    Ok(format!(
        "single-user worst relative error {worst:.2e}; 50 multi-user runs monotone and feasible"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("sweep.csv");
    let cfg = SweepConfig::from_json(&format!(
        r#"{{"experiment":"wsr_vs_q","n":[8],"l":[2],"k":[2],
            "archs":[{{"kind":"stem","q":1}},{{"kind":"cluster","g":2,"q_g":1}},{{"kind":"fully"}}],
            "methods":["ub_sosup","sosup_qn","heuristic_sosup"],"realizations":6,"seed":42,"output":{:?}}}"#,
        path.to_str().unwrap()
    ))
    .map_err(|e| e.to_string())?;
    run_sweep(&cfg).map_err(|e| e.to_string())?;
    let first = std::fs::read(&path).map_err(|e| e.to_string())?;
    run_sweep(&cfg).map_err(|e| e.to_string())?;
    let second = std::fs::read(&path).map_err(|e| e.to_string())?;
    ensure(first == second, || "CSV bytes differ between runs".into())?;
    Ok(format!("{} bytes identical across reruns", first.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("golden toy example", golden_toy_example, Duration::from_secs(1)),
        ("scattering contract", scattering_contract, Duration::from_secs(30)),
        ("projection soundness", projection_soundness, Duration::from_secs(120)),
        ("upper bound attainment", bound_attainment, Duration::from_secs(60)),
        ("stem saturation", stem_saturation, Duration::from_secs(300)),
        ("complexity formulas", complexity_formulas, Duration::from_secs(30)),
        ("gradient correctness", gradient_check, Duration::from_secs(60)),
        (
            "quasi-Newton dominance",
            quasi_newton_dominance,
            Duration::from_secs(600),
        ),
        ("FP beamformer", fp_beamformer, Duration::from_secs(60)),
        ("determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > *limit => Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS {name} [{elapsed:.2?}]: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{elapsed:.2?}]: {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
