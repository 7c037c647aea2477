use std::path::Path;
use std::process::Command;

fn spikelab(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_spikelab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn spikelab");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn write_config(dir: &Path, body: &str) {
    std::fs::write(dir.join("config.json"), body).unwrap();
}

const SMALL: &str = r#"{
  "version": 1,
  "ensemble": {"m": 40, "n": 80, "spikes": [{"d": 3.0}]},
  "seed": 17,
  "trials": 3,
  "checks": {"interlacing": {}, "linear_algebra": {}}
}"#;

#[test]
fn passing_checks_exit_zero_and_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let (code, text) = spikelab(tmp.path(), &["--config", "config.json", "check", "all", "--out", "o"]);
    assert_eq!(code, 0, "{text}");
    let csv = std::fs::read_to_string(tmp.path().join("o/tables/interlacing.csv")).unwrap();
    assert!(csv.starts_with("check,trial,index,statistic,value\n"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("o/report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 2);
}

#[test]
fn failing_criterion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // No fraction can exceed one.
    write_config(
        tmp.path(),
        r#"{"version": 1, "ensemble": {"m": 30, "n": 60, "spikes": [{"d": 2.5}]}, "seed": 1, "trials": 2,
            "checks": {"outlier_detachment": {"min_fraction": 1.01}}}"#,
    );
    let (code, text) = spikelab(tmp.path(), &["--config", "config.json", "check", "outlier_detachment", "--out", "o"]);
    assert_eq!(code, 1, "{text}");
}

#[test]
fn unknown_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"{"version": 1, "ensemble": {"m": 10, "n": 20, "colour": 1}}"#);
    let (code, text) = spikelab(tmp.path(), &["--config", "config.json", "simulate"]);
    assert_eq!(code, 2);
    assert!(text.contains("colour"), "{text}");
}

#[test]
fn wrong_schema_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), r#"{"version": 99, "ensemble": {"m": 10, "n": 20}}"#);
    let (code, _) = spikelab(tmp.path(), &["--config", "config.json", "simulate"]);
    assert_eq!(code, 2);
}

#[test]
fn unknown_check_name_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let (code, _) = spikelab(tmp.path(), &["--config", "config.json", "check", "no_such_check"]);
    assert_eq!(code, 2);
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    let base = ["--config", "config.json", "check", "all"];
    spikelab(tmp.path(), &[&base[..], &["--out", "a", "--threads", "1"]].concat());
    spikelab(tmp.path(), &[&base[..], &["--out", "b", "--threads", "1"]].concat());
    spikelab(tmp.path(), &[&base[..], &["--out", "c", "--threads", "4"]].concat());
    let read = |d: &str, f: &str| std::fs::read(tmp.path().join(d).join(f)).unwrap();
    for f in ["report.json", "tables/interlacing.csv", "tables/linear_algebra.csv"] {
        assert_eq!(read("a", f), read("b", f), "{f} differs between runs");
        assert_eq!(read("a", f), read("c", f), "{f} differs between thread counts");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    write_config(tmp.path(), SMALL);
    spikelab(tmp.path(), &["--config", "config.json", "simulate", "--out", "a"]);
    spikelab(tmp.path(), &["--config", "config.json", "simulate", "--out", "b", "--seed", "18"]);
    let a = std::fs::read(tmp.path().join("a/report.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b/report.json")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn laws_runs_without_config() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = spikelab(tmp.path(), &["laws", "--out", "o"]);
    assert_eq!(code, 0, "{text}");
    assert!(tmp.path().join("o/tables/laws.csv").exists());
}

#[test]
fn infer_reads_a_spectrum_csv() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("spec.csv"), "7.2\n2.95\n2.9\n2.8\n").unwrap();
    write_config(
        tmp.path(),
        r#"{"version": 1, "seed": 0, "infer": {"input": "spec.csv", "kind": "spectrum", "m": 400, "n": 800}}"#,
    );
    let (code, text) = spikelab(tmp.path(), &["--config", "config.json", "infer", "--out", "o"]);
    assert_eq!(code, 0, "{text}");
    assert!(tmp.path().join("o/report.json").exists());
}
