use std::fs;
use std::path::Path;
use std::process::Command;

use aae_cli::output::{read_records, read_sweep, ERRORS_FILE, MANIFEST_FILE, RECORDS_FILE, SWEEP_FILE, TIMINGS_FILE};
use aae_cli::{execute, parse_config, RunError};

const BIN: &str = env!("CARGO_BIN_EXE_aae");

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn aae(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("AAE_OUT_DIR").env_remove("AAE_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

#[test]
fn weights_record_for_n3() {
    let cfg = parse_config(r#"{"mode": "weights", "rule_order": 3}"#).unwrap();
    let out = execute(&cfg, Path::new("."), 1).unwrap();
    assert_eq!(out.records.len(), 1);
    let w = out.records[0].details["weights"].as_array().unwrap();
    for (got, want) in w.iter().zip([0.25, 0.75, 0.75, 0.25]) {
        assert!((got.as_f64().unwrap() - want).abs() < 1e-15);
    }
}

#[test]
fn single_qubit_aae_record() {
    let cfg = parse_config(
        r#"{"mode": "aae", "epsilon": 5e-3, "system": {"builtin": "single-qubit", "probability": 0.2},
            "prior": {"mu": 1}, "seed": 11}"#,
    )
    .unwrap();
    let out = execute(&cfg, Path::new("."), 1).unwrap();
    let rec = &out.records[0];
    assert!(rec.abs_error.unwrap() <= 5e-3);
    assert_eq!(rec.abs_error.unwrap(), (rec.estimate - rec.true_value.unwrap()).abs());
    // Record deltas agree with the oracle counters themselves.
    for (name, count) in &rec.queries {
        assert_eq!(rec.details["counters"][name].as_u64().unwrap(), *count, "{name}");
    }
    assert!(rec.total_queries() > 0);
}

#[test]
fn every_method_counts_what_it_uses() {
    for method in ["aae", "standard", "classical"] {
        for backend in ["qpe", "exact"] {
            let cfg = parse_config(&format!(
                r#"{{"mode": "aae", "epsilon": 1e-2, "method": "{method}", "backend": "{backend}",
                    "system": {{"builtin": "random", "qubits": 3, "rank": 2, "probability": 0.05}},
                    "prior": {{"upper_bound": 0.1}}, "seed": 4}}"#
            ))
            .unwrap();
            let rec = &execute(&cfg, Path::new("."), 1).unwrap().records[0];
            let counters = rec.details["counters"].as_object().unwrap();
            for (name, v) in counters {
                assert_eq!(rec.queries.get(name).copied().unwrap_or(0), v.as_u64().unwrap(), "{method} {name}");
            }
            assert!(rec.abs_error.unwrap() <= 1e-2, "{method} {backend}: {rec:?}");
        }
    }
}

#[test]
fn prior_violation_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.json",
        r#"{"mode": "aae", "epsilon": 5e-3, "system": {"builtin": "single-qubit", "probability": 0.25}, "prior": {"mu": 1}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = aae(&["aae", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let text = fs::read_to_string(out_dir.join(ERRORS_FILE)).unwrap();
    let rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(rec["kind"], "prior_violation");
    assert!(rec["details"]["estimate"].as_f64().unwrap() >= rec["details"]["p0"].as_f64().unwrap() - 1e-6);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["status"], "error");
}

#[test]
fn validation_failures_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "u.json", r#"{"mode": "weights", "rule_order": 3, "colour": "red"}"#);
    let out = aae(&["weights", "--config", unknown.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let missing = write_config(dir.path(), "m.json", r#"{"mode": "operator", "epsilon": 0.01, "system": {"hamiltonian_file": "h.txt", "operator_file": "a.txt"}}"#);
    let out = aae(&["operator", "--config", missing.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("system.hamiltonian_file") && err.contains("system.operator_file"), "{err}");

    let wrong_mode = write_config(dir.path(), "w.json", r#"{"mode": "weights", "rule_order": 3}"#);
    let out = aae(&["sweep", "--config", wrong_mode.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));

    let out = aae(&["weights"], &[]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = parse_config(r#"{"mode": "sweep", "grid": []}"#).unwrap();
    assert!(matches!(execute(&cfg, Path::new("."), 1), Err(RunError::Validation(_))));
}

#[test]
fn operator_files_and_classical_priors() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "h.txt", "2\n-1.0 -0.5\n-0.5 1.0\n");
    write_config(dir.path(), "a.txt", "2\n0.3 0.1\n0.1 -0.2\n");
    let cfg_path = write_config(
        dir.path(),
        "o.json",
        r#"{"mode": "operator", "epsilon": 1e-3, "backend": "exact",
            "system": {"hamiltonian_file": "h.txt", "operator_file": "a.txt"}, "prior": {"classical_threshold": 0.3}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = aae(&["operator", "--config", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = read_records(&out_dir.join(RECORDS_FILE)).unwrap();
    assert!(recs[0].abs_error.unwrap() <= 1e-3, "{:?}", recs[0]);

    // Explicit μ values need one entry per group.
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"mode": "operator", "epsilon": 1e-3,
            "system": {"hamiltonian_file": "h.txt", "operator_file": "a.txt"}, "prior": {"mu": [1]}}"#,
    );
    let out = aae(&["operator", "--config", bad.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prior.mu"));
}

#[test]
fn runs_are_bit_for_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"mode": "sweep", "grid": [0.0625, 0.015625, 0.00390625], "trials": 2, "seed": 5}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = aae(&["sweep", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--workers", "3"], &[]);
    assert!(out.status.success());
    // Output directory and workers from the environment.
    let out = aae(
        &["sweep", "--config", cfg.to_str().unwrap()],
        &[("AAE_OUT_DIR", b.to_str().unwrap()), ("AAE_WORKERS", "1")],
    );
    assert!(out.status.success());
    for f in [SWEEP_FILE, MANIFEST_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let rows = read_sweep(&a.join(SWEEP_FILE)).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 3);
    let header = fs::read_to_string(a.join(SWEEP_FILE)).unwrap();
    assert!(header.starts_with("epsilon,method,queries,abs_error,seed\n"));

    let single = write_config(
        dir.path(),
        "a.json",
        r#"{"mode": "aae", "epsilon": 1e-2, "system": {"builtin": "single-qubit", "probability": 0.05}, "prior": {"upper_bound": 0.1}}"#,
    );
    let c = dir.path().join("c");
    let d = dir.path().join("d");
    for o in [&c, &d] {
        let out = aae(&["aae", "--config", single.to_str().unwrap(), "--out", o.to_str().unwrap(), "--seed", "9"], &[]);
        assert!(out.status.success());
    }
    for f in [RECORDS_FILE, MANIFEST_FILE] {
        assert_eq!(fs::read(c.join(f)).unwrap(), fs::read(d.join(f)).unwrap(), "{f}");
    }
    assert!(c.join(TIMINGS_FILE).is_file());
    // A different seed changes the record.
    let e = dir.path().join("e");
    aae(&["aae", "--config", single.to_str().unwrap(), "--out", e.to_str().unwrap(), "--seed", "10"], &[]);
    assert_ne!(fs::read(c.join(RECORDS_FILE)).unwrap(), fs::read(e.join(RECORDS_FILE)).unwrap());
}

#[test]
fn backend_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.json",
        r#"{"mode": "aae", "epsilon": 1e-2, "backend": "qpe", "system": {"builtin": "single-qubit", "probability": 0.05}, "prior": {"upper_bound": 0.1}}"#,
    );
    let o = dir.path().join("o");
    let out = aae(&["aae", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap(), "--backend", "exact"], &[]);
    assert!(out.status.success());
    let recs = read_records(&o.join(RECORDS_FILE)).unwrap();
    assert_eq!(recs[0].details["backend"], "exact");
}

#[test]
fn energy_diff_on_shipped_path() {
    let cfg = parse_config(r#"{"mode": "energy-diff", "epsilon": 1e-3, "backend": "exact", "system": {"builtin": "linear2"}}"#).unwrap();
    let out = execute(&cfg, Path::new("."), 1).unwrap();
    let rec = &out.records[0];
    assert!(rec.abs_error.unwrap() <= 1e-3);
    assert!(rec.details["quantum_groups"].as_u64().unwrap() > 0);

    let cfg = parse_config(r#"{"mode": "energy-diff", "epsilon": 1e-3, "system": {"builtin": "flat"}}"#).unwrap();
    assert!(matches!(execute(&cfg, Path::new("."), 1), Err(RunError::Validation(_))));
}
