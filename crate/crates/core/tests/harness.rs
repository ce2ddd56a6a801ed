use std::collections::HashMap;

use bdris::exec::Execution;
use bdris::harness::{run_sweep, sweep_csv, HarnessError, SweepConfig, CSV_HEADER, OUTPUT_DIR_ENV};

fn config(json: &str) -> SweepConfig {
    SweepConfig::from_json(json).unwrap()
}

const GAIN: &str = r#"{
    "experiment": "gain_vs_q",
    "n": [8], "l": [2], "k": [2],
    "archs": [{"kind": "stem", "q": 1}, {"kind": "fully"}, {"kind": "cluster", "g": 2, "q_g": 1}],
    "methods": ["ub_sosup", "sosup_qn"],
    "realizations": 4,
    "seed": 7,
    "output": "gain.csv"
}"#;

#[test]
fn rerun_is_byte_identical() {
    let cfg = config(GAIN);
    assert_eq!(sweep_csv(&cfg).unwrap(), sweep_csv(&cfg).unwrap());
}

#[test]
fn sequential_and_parallel_agree() {
    let mut cfg = config(GAIN);
    cfg.execution = Execution::Sequential;
    let seq = sweep_csv(&cfg).unwrap();
    cfg.execution = Execution::Parallel;
    assert_eq!(seq, sweep_csv(&cfg).unwrap());
}

fn parse(csv: &str) -> Vec<HashMap<String, String>> {
    let mut lines = csv.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

#[test]
fn aggregates_match_samples() {
    let csv = sweep_csv(&config(GAIN)).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    let rows = parse(&csv);
    let key = |r: &HashMap<String, String>| ["arch", "q", "q_g", "method", "metric"].map(|c| r[c].clone()).join("|");
    let mut samples: HashMap<String, Vec<f64>> = HashMap::new();
    for r in rows.iter().filter(|r| r["stat"] == "sample") {
        samples.entry(key(r)).or_default().push(r["value"].parse().unwrap());
    }
    let mut checked = 0;
    for r in rows.iter().filter(|r| r["stat"] == "mean") {
        let v = &samples[&key(r)];
        assert_eq!(v.len(), 4);
        let m: f64 = v.iter().sum::<f64>() / v.len() as f64;
        let reported: f64 = r["value"].parse().unwrap();
        assert!((m - reported).abs() <= 1e-12 * m.abs().max(1e-300));
        checked += 1;
    }
    assert_eq!(checked, 3 * 2 * 3);
}

#[test]
fn realization_streams_do_not_depend_on_batch_size() {
    let mut cfg = config(GAIN);
    let full = parse(&sweep_csv(&cfg).unwrap());
    cfg.realizations = 1;
    let single = parse(&sweep_csv(&cfg).unwrap());
    let first = |rows: &[HashMap<String, String>]| -> Vec<String> {
        rows.iter()
            .filter(|r| r["stat"] == "sample" && r["realization"] == "0")
            .map(|r| r["value"].clone())
            .collect()
    };
    assert_eq!(first(&full), first(&single));
}

#[test]
fn complexity_sweep_writes_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/complexity.csv");
    let cfg = config(&format!(
        r#"{{"experiment":"complexity","n":[16,32,64],"archs":[{{"kind":"stem","q":7}},{{"kind":"fully"}}],"output":{:?}}}"#,
        out.to_str().unwrap()
    ));
    let summary = run_sweep(&cfg).unwrap();
    assert_eq!(summary.rows, 6);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("complexity,stem,64,,7,,,,0,,closed_form,complexity,value,484"));
    assert!(summary.text.contains("slope"));
}

#[test]
fn relative_output_uses_environment_directory() {
    let dir = tempfile::tempdir().unwrap();
    // Only this test touches the variable.
    std::env::set_var(OUTPUT_DIR_ENV, dir.path());
    let cfg = config(r#"{"experiment":"complexity","n":[4],"archs":[{"kind":"single"}],"output":"c.csv"}"#);
    let summary = run_sweep(&cfg).unwrap();
    std::env::remove_var(OUTPUT_DIR_ENV);
    assert_eq!(summary.path, dir.path().join("c.csv"));
    assert!(summary.path.exists());
}

#[test]
fn every_experiment_runs() {
    for exp in ["wsr_vs_q", "tradeoff", "streams", "timing"] {
        let cfg = config(&format!(
            r#"{{"experiment":"{exp}","n":[8],"l":[2],"k":[2],"archs":[{{"kind":"tree"}}],"realizations":2,"output":"x.csv"}}"#
        ));
        let csv = sweep_csv(&cfg).unwrap();
        assert!(csv.lines().count() > 3, "{exp}");
    }
}

#[test]
fn unknown_field_is_rejected_with_position() {
    let err = SweepConfig::from_json("{\n\"experiment\":\"complexity\",\n\"nn\":[4]}").unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
    assert!(err.to_string().contains("line 3"), "{err}");
}
